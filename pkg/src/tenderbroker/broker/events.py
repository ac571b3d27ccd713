"""Append-only event log: one JSON object per line with seq, timestamp, kind, payload."""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator


class ReplayError(ValueError):
    def __init__(self, msg: str, position: int, offset: int):
        super().__init__(f"{msg} (record {position}, byte offset {offset})")
        self.position = position
        self.offset = offset


@dataclass(frozen=True)
class Event:
    seq: int
    timestamp: str
    kind: str
    payload: dict

    def to_line(self) -> bytes:
        record = {"seq": self.seq, "timestamp": self.timestamp, "kind": self.kind, "payload": self.payload}
        return (json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


class EventLog:
    """Event sink; kept in memory and, when ``path`` is given, appended to disk."""

    def __init__(self, path: str | Path | None = None, fsync: bool = False):
        self.path = Path(path) if path is not None else None
        self.fsync = fsync
        self.events: list[Event] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self.events = list(read_events(self.path.read_bytes()))

    @property
    def last_seq(self) -> int:
        return self.events[-1].seq if self.events else 0

    def append(self, kind: str, payload: dict, timestamp: str) -> Event:
        with self._lock:
            event = Event(self.last_seq + 1, timestamp, kind, payload)
            # Round-trip through JSON so the in-memory copy equals what replay reads.
            event = _decode(json.loads(event.to_line()), event.seq, 0)
            if self.path is not None:
                with open(self.path, "ab") as fh:
                    fh.write(event.to_line())
                    fh.flush()
                    if self.fsync:
                        os.fsync(fh.fileno())
            self.events.append(event)
            return event

    def to_bytes(self) -> bytes:
        return b"".join(e.to_line() for e in self.events)


def _decode(record, position: int, offset: int) -> Event:
    if not isinstance(record, dict) or set(record) != {"seq", "timestamp", "kind", "payload"}:
        raise ReplayError("malformed event record", position, offset)
    if not isinstance(record["seq"], int) or not isinstance(record["payload"], dict):
        raise ReplayError("malformed event record", position, offset)
    return Event(record["seq"], str(record["timestamp"]), str(record["kind"]), record["payload"])


def read_events(data: bytes) -> Iterator[Event]:
    """Decode a log, checking that sequence numbers run 1, 2, 3, ..."""
    offset = 0
    expected = 1
    for position, line in enumerate(data.splitlines(keepends=True), start=1):
        if not line.endswith(b"\n"):
            raise ReplayError("truncated final record", position, offset)
        try:
            record = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ReplayError(f"corrupt record: {exc}", position, offset) from exc
        event = _decode(record, position, offset)
        if event.seq != expected:
            raise ReplayError(f"out-of-order event: seq {event.seq}, expected {expected}", position, offset)
        expected += 1
        offset += len(line)
        yield event


def as_events(log: bytes | str | Path | Iterable) -> list[Event]:
    if isinstance(log, (bytes, bytearray)):
        return list(read_events(bytes(log)))
    if isinstance(log, (str, Path)):
        return list(read_events(Path(log).read_bytes()))
    events = []
    for position, item in enumerate(log, start=1):
        event = item if isinstance(item, Event) else _decode(item, position, 0)
        if event.seq != position:
            raise ReplayError(f"out-of-order event: seq {event.seq}, expected {position}", position, 0)
        events.append(event)
    return events
