"""
Event handling for experiment runs.

This module implements an asynchronous event emitter/listener system that
pipelines use to report progress without knowing who is listening. It handles:
- Registration of event listeners per event type
- Concurrent dispatch of an event to all its listeners
- Isolation of listener failures, which are routed to error handlers

Pipelines emit the stage events named below; the experiment runner turns
them into the per-stage timings of the run manifest.
"""

import asyncio
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable, Dict, Optional, Set

from .utils import sanitize_json

logger = logging.getLogger(__name__)

STAGE_STARTED = "stage_started"
STAGE_FINISHED = "stage_finished"
STAGE_FAILED = "stage_failed"
FILE_WRITTEN = "file_written"
ERROR = "error"


@dataclass
class Event:
    """
    A single event: its type, payload and emission time.
    """

    type: str
    data: Any
    timestamp: float = field(default_factory=time.time)
    metadata: Optional[Dict[str, Any]] = None

    def to_json(self) -> str:
        """Convert event to a JSON string; numpy payloads are sanitized."""
        return json.dumps(
            sanitize_json(
                {
                    "type": self.type,
                    "data": self.data,
                    "timestamp": self.timestamp,
                    "metadata": self.metadata,
                }
            ),
            sort_keys=True,
        )


# Type hint for event handlers
EventHandler = Callable[[Event], Awaitable[None]]


class EventEmitter:
    """
    Asynchronous event emitter that manages event listeners and event emission.
    """

    def __init__(self):
        self._listeners: Dict[str, Set[EventHandler]] = {}
        self._error_handlers: Set[EventHandler] = set()
        self._running = True

    @property
    def running(self) -> bool:
        return self._running

    def listener_count(self, event_type: Optional[str] = None) -> int:
        if event_type is not None:
            return len(self._listeners.get(event_type, ()))
        return sum(len(handlers) for handlers in self._listeners.values())

    def add_listener(self, event_type: str, handler: EventHandler) -> None:
        """
        Register a handler for a specific event type.

        Args:
            event_type: Type of event to listen for
            handler: Async function to handle the event
        """
        self._listeners.setdefault(event_type, set()).add(handler)
        logger.debug(f"Added listener for event type: {event_type}")

    def remove_listener(self, event_type: str, handler: EventHandler) -> None:
        if event_type in self._listeners:
            self._listeners[event_type].discard(handler)
            if not self._listeners[event_type]:
                del self._listeners[event_type]
            logger.debug(f"Removed listener for event type: {event_type}")

    def remove_all_listeners(self) -> None:
        self._listeners.clear()

    def add_error_handler(self, handler: EventHandler) -> None:
        self._error_handlers.add(handler)

    def remove_error_handler(self, handler: EventHandler) -> None:
        self._error_handlers.discard(handler)

    async def emit(self, event: Event) -> None:
        """
        Emit an event to all registered handlers concurrently.

        Args:
            event: Event to emit

        Raises:
            RuntimeError: If the emitter has been stopped
        """
        if not self._running:
            raise RuntimeError("EventEmitter is not running")

        handlers = self._listeners.get(event.type, set())
        if not handlers:
            logger.debug(f"No handlers for event type: {event.type}")
            return

        tasks = [asyncio.create_task(self._safe_handle(handler, event)) for handler in handlers]
        await asyncio.gather(*tasks, return_exceptions=True)

    async def emit_stage(self, event_type: str, stage: str, **data: Any) -> None:
        """Shorthand for emitting a stage event with ``{"stage": stage, ...}`` as payload."""
        await self.emit(Event(type=event_type, data={"stage": stage, **data}))

    async def _safe_handle(self, handler: EventHandler, event: Event) -> None:
        """
        Execute a handler; its failure becomes an ``error`` event.

        Args:
            handler: Event handler to execute
            event: Event to handle
        """
        try:
            await handler(event)
        except Exception as e:
            error_event = Event(
                type=ERROR,
                data={
                    "original_event": event,
                    "error": str(e),
                    "handler": getattr(handler, "__name__", repr(handler)),
                },
            )
            logger.error(f"Error in event handler: {e}")

            for error_handler in self._error_handlers:
                try:
                    await error_handler(error_event)
                except Exception as inner:
                    logger.error(f"Error in error handler: {inner}")

    def stop(self) -> None:
        """Stop the event emitter."""
        self._running = False
        logger.debug("EventEmitter stopped")
