"""Ordered decision trace for one pipeline run, exportable as JSON lines."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    stage: str
    kind: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"seq": self.seq, "stage": self.stage, "kind": self.kind, "data": self.data}

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> TraceEvent:
        return cls(int(raw["seq"]), str(raw["stage"]), str(raw["kind"]), dict(raw.get("data", {})))


class Trace:
    """Append-only event log; one instance per task run."""

    def __init__(self, events: Iterable[TraceEvent] = ()) -> None:
        self.events: list[TraceEvent] = list(events)

    def emit(self, stage: str, kind: str, **data: Any) -> TraceEvent:
        event = TraceEvent(len(self.events), stage, kind, data)
        self.events.append(event)
        return event

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> Trace:
        return cls(TraceEvent.from_dict(json.loads(line)) for line in text.splitlines() if line.strip())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> Trace:
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))
