"""
Subcommands of the bandlimit lab CLI.

This package binds the numerical modules into experiment pipelines, one per
subcommand. Pipelines stage their outputs and report stage timings through
the event emitter; the runner decides when files reach disk.
"""

from .pipelines import CommandTable, Pipeline, PipelineContext, commands, create_context, setup_commands

__all__ = ["CommandTable", "Pipeline", "PipelineContext", "commands", "create_context", "setup_commands"]
