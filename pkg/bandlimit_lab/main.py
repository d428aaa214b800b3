#!/usr/bin/env python3

"""
Bandlimit Lab Entry Point

This module serves as the command-line entry point of the lab. It parses the
subcommand and configuration flags, runs the matching pipeline and writes
the run manifest. A run can be started from the shell (``bandlimit-lab``) or
by importing ``run`` / ``ExperimentRunner``.

Components:
- ExperimentConfig: Configuration management and environment overrides
- EventEmitter: Stage events between pipelines and the runner
- commands: Registry of subcommand pipelines
- OutputDirectory / RunManifest: Staged output files and their provenance
"""

import argparse
import asyncio
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from . import __version__
from .commands import Pipeline, create_context, setup_commands
from .config import ExperimentConfig, field_names, get_config, load_config
from .event_handler import FILE_WRITTEN, STAGE_FAILED, STAGE_FINISHED, Event, EventEmitter
from .outputs import RunManifest, write_manifest
from .utils import EXIT_CODES, ConfigError, format_error

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """
    Runs one subcommand pipeline and records its manifest.

    This class wires the pipelines to the event emitter, collects stage
    timings from the emitted events and writes outputs only once the whole
    pipeline has succeeded.
    """

    def __init__(self, config: Optional[ExperimentConfig] = None, output_dir: Optional[Union[str, Path]] = None):
        """Initialize runner components with proper configuration."""
        self.config: ExperimentConfig = config if config is not None else get_config()
        self.output_dir = Path(output_dir if output_dir is not None else self.config.output_dir)
        self.event_emitter = EventEmitter()
        self.commands: Dict[str, Pipeline] = setup_commands({})
        self.stages: Dict[str, float] = {}
        self.written: List[str] = []
        self.running = False

        self.event_emitter.add_listener(STAGE_FINISHED, self._on_stage_finished)
        self.event_emitter.add_listener(STAGE_FAILED, self._on_stage_failed)
        self.event_emitter.add_listener(FILE_WRITTEN, self._on_file_written)
        self.event_emitter.add_error_handler(self._on_listener_error)

    async def _on_stage_finished(self, event: Event) -> None:
        stage = event.data["stage"]
        self.stages[stage] = self.stages.get(stage, 0.0) + float(event.data["seconds"])
        logger.info(f"Stage {stage} finished in {event.data['seconds']:.3f}s")

    async def _on_stage_failed(self, event: Event) -> None:
        logger.error(f"Stage {event.data['stage']} failed: {event.data['error']}")

    async def _on_file_written(self, event: Event) -> None:
        self.written.append(event.data["file"])

    async def _on_listener_error(self, event: Event) -> None:
        logger.error(f"Listener {event.data['handler']} failed: {event.data['error']}")

    async def run(self, subcommand: str) -> RunManifest:
        """
        Execute a subcommand and write its outputs plus ``manifest.json``.

        Args:
            subcommand: Name of a registered pipeline

        Returns:
            RunManifest: Provenance of the written files

        Raises:
            ConfigError: If the subcommand is unknown
            LabError: Whatever the pipeline raises; nothing is written then
        """
        if subcommand not in self.commands:
            raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {sorted(self.commands)}")

        logger.info(f"Running {subcommand} on {self.config.manifold} into {self.output_dir}")
        self.running = True
        try:
            context = create_context(self.config, self.event_emitter, str(self.output_dir))
            async with context.stage(subcommand):
                await self.commands[subcommand](context)

            files = context.output.commit()
            for name in files:
                await self.event_emitter.emit(Event(type=FILE_WRITTEN, data={"file": name}))

            manifest = RunManifest(
                subcommand=subcommand,
                version=__version__,
                config=dataclasses.asdict(self.config),
                stages=dict(self.stages),
                files=files,
            )
            write_manifest(self.output_dir, manifest)
            logger.info(f"Wrote {len(files)} files and the manifest to {self.output_dir}")
            return manifest
        finally:
            await self.shutdown()

    async def shutdown(self) -> None:
        """Detach listeners and stop the event emitter."""
        if not self.running:
            logger.debug("Runner already shut down")
            return
        self.running = False
        self.event_emitter.remove_all_listeners()
        self.event_emitter.stop()


async def run(subcommand: str, config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None) -> RunManifest:
    """Run one subcommand with a fresh runner."""
    return await ExperimentRunner(config, output_dir).run(subcommand)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser(subcommands: Sequence[str]) -> argparse.ArgumentParser:
    """
    Argument parser with one flag per configuration key.

    Flags take the same text as the config file, lists comma-separated.
    """
    codes = "\n".join(f"  {code:>2}  {name}" for name, code in sorted(EXIT_CODES.items(), key=lambda kv: kv[1]))
    parser = argparse.ArgumentParser(
        prog="bandlimit-lab",
        description="Experiments on band-limited Laplacian eigenspaces.",
        epilog=f"exit codes:\n   0  success\n{codes}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("subcommand", choices=list(subcommands))
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    for name in field_names():
        if name == "output_dir":
            continue
        parser.add_argument(_flag(name), dest=name, metavar="VALUE", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``bandlimit-lab`` command.

    Errors are printed to stderr as a JSON object and mapped to the exit
    code of their class.

    Returns:
        Process exit status
    """
    parser = build_parser(sorted(setup_commands({})))
    args = parser.parse_args(argv)
    overrides = {name: getattr(args, name) for name in field_names() if name != "output_dir"}
    overrides["output_dir"] = args.out

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        config = load_config(args.config, overrides)
        if not args.verbose:
            logging.getLogger().setLevel(config.log_level)
        asyncio.run(run(args.subcommand, config))
    except KeyboardInterrupt:
        logger.info("Run interrupted by user.")
        return 130
    except Exception as e:
        logger.error(f"Run failed: {e}")
        print(json.dumps(format_error(e), sort_keys=True), file=sys.stderr)
        return getattr(e, "exit_code", 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
