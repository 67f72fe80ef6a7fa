"""Append-only, crash-safe event log (length-prefixed JSON records + CRC).

Record framing: 4-byte little-endian payload length, 4-byte CRC32 of the
payload, then the UTF-8 JSON payload. Replay stops at the first incomplete or
corrupt record, discarding the torn tail, so a crash mid-write never poisons
the log.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import zlib
from pathlib import Path
from typing import Any, Iterator

_HEADER = struct.Struct("<II")


class LogIntegrityError(Exception):
    pass


class EventLog:
    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = open(self.path, "ab")
        self._count: int | None = None  # lazily counted on first append

    def append(self, record: dict[str, Any]) -> int:
        """Write one record; returns its zero-based sequence number."""
        payload = json.dumps(record, separators=(",", ":")).encode("utf-8")
        frame = _HEADER.pack(len(payload), zlib.crc32(payload)) + payload
        with self._lock:
            if self._count is None:
                self._count = sum(1 for _ in replay(self.path))
            self._fh.write(frame)
            self._fh.flush()
            self._count += 1
            return self._count - 1

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def replay(path: str | Path) -> Iterator[dict[str, Any]]:
    """Yield every complete record; a torn or corrupt tail ends the stream."""
    path = Path(path)
    if not path.exists():
        return
    with open(path, "rb") as fh:
        while True:
            header = fh.read(_HEADER.size)
            if len(header) < _HEADER.size:
                return  # clean end or torn length prefix
            length, crc = _HEADER.unpack(header)
            payload = fh.read(length)
            if len(payload) < length or zlib.crc32(payload) != crc:
                return  # torn tail discarded
            try:
                yield json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                return


def write_snapshot(path: str | Path, snapshot: dict[str, Any]) -> None:
    """Atomic standalone snapshot file with an embedded checksum."""
    payload = json.dumps(snapshot, separators=(",", ":")).encode("utf-8")
    framed = _HEADER.pack(len(payload), zlib.crc32(payload)) + payload
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(framed)
    os.replace(tmp, path)


def read_snapshot(path: str | Path) -> dict[str, Any]:
    """Load a snapshot; truncation or corruption raises an integrity error."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise LogIntegrityError(f"snapshot {path} is truncated")
    length, crc = _HEADER.unpack(raw[: _HEADER.size])
    payload = raw[_HEADER.size:]
    if len(payload) != length:
        raise LogIntegrityError(f"snapshot {path} is truncated")
    if zlib.crc32(payload) != crc:
        raise LogIntegrityError(f"snapshot {path} failed its checksum")
    return json.loads(payload.decode("utf-8"))
