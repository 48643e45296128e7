"""Agents that answer from a recorded trace, for reproducing a run offline."""

from __future__ import annotations

from collections import deque
from typing import Iterable, Sequence

from scanloc.agents.base import AgentError, ImagePayload, LocatorError
from scanloc.geometry import PointPx
from scanloc.trace import TraceEvent


class ReplayError(AgentError):
    """The run asked something other than what the trace recorded."""


class ReplayScanner:
    def __init__(self, events: Iterable[TraceEvent]) -> None:
        self._queue = deque(e.data for e in events if e.kind == "scanner_call")

    def complete(self, prompt: str, images: Sequence[ImagePayload]) -> str:
        if not self._queue:
            raise ReplayError("trace has no more scanner calls")
        recorded = self._queue.popleft()
        if recorded["prompt"] != prompt:
            raise ReplayError("scanner prompt diverged from the trace")
        if [im.describe() for im in images] != recorded["images"]:
            raise ReplayError("scanner images diverged from the trace")
        if "error" in recorded:
            raise AgentError(recorded["error"])
        return recorded["reply"]


class ReplayLocator:
    def __init__(self, events: Iterable[TraceEvent]) -> None:
        self._queue = deque(e.data for e in events if e.kind == "locator_call")

    def ground(self, instruction: str, image: ImagePayload) -> PointPx:
        if not self._queue:
            raise ReplayError("trace has no more locator calls")
        recorded = self._queue.popleft()
        if recorded["image"] != image.describe():
            raise ReplayError("locator image diverged from the trace")
        if "error" in recorded:
            raise LocatorError(recorded["error"])
        x, y = recorded["raw_point"]
        return PointPx(x, y)
