"""Parsing of OpTC/eCAR-style JSON Lines audit records into typed events."""

from __future__ import annotations

import io
import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from typing import IO, Iterable, Iterator

from .exceptions import CorruptInputError, IoError, ParseError, SchemaError
from .tree import UNKNOWN

logger = logging.getLogger(__name__)

MANDATORY_KEYS = ("id", "object", "action", "pid", "ppid", "actorid", "objectid", "timestamp")
_ALIASES = {
    "actor_id": "actorid",
    "object_id": "objectid",
    "hostname": "host",
    "malicious": "label",
}
_MISSING = {None, "", "nan", "NaN", "None", "null"}


class ObjectType(str, Enum):
    FILE = "FILE"
    PROCESS = "PROCESS"
    FLOW = "FLOW"
    REGISTRY = "REGISTRY"
    OTHER = "OTHER"

    @classmethod
    def coerce(cls, value) -> "ObjectType":
        try:
            return cls(str(value).upper())
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True)
class AuditEvent:
    id: str
    object: ObjectType
    action: str
    pid: int
    ppid: int
    actor_id: str
    object_id: str
    timestamp: datetime
    principal: str = ""
    file_path: str = UNKNOWN
    image_path: str = UNKNOWN
    parent_image_path: str = UNKNOWN
    host: str = ""
    label: int | None = None

    @property
    def day(self) -> date:
        return self.timestamp.date()

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "object": self.object.value,
            "action": self.action,
            "pid": self.pid,
            "ppid": self.ppid,
            "actorid": self.actor_id,
            "objectid": self.object_id,
            "principal": self.principal,
            "file_path": self.file_path,
            "image_path": self.image_path,
            "parent_image_path": self.parent_image_path,
            "timestamp": format_timestamp(self.timestamp),
            "hostname": self.host,
        }
        if self.label is not None:
            rec["label"] = self.label
        return rec


def serialize_event(event: AuditEvent) -> str:
    return json.dumps(event.to_record(), separators=(",", ":"), ensure_ascii=False)


@dataclass
class EventBatch:
    host: str
    day: date
    events: list[AuditEvent] = field(default_factory=list)

    @property
    def span(self) -> tuple[datetime, datetime] | None:
        if not self.events:
            return None
        return self.events[0].timestamp, self.events[-1].timestamp

    def __len__(self):
        return len(self.events)


@dataclass
class IngestStats:
    total: int = 0
    parsed: int = 0
    skipped: int = 0
    filtered: int = 0


_FRACTION = re.compile(r"(\d{2}:\d{2}:\d{2})\.(\d+)")


def parse_timestamp(value) -> datetime:
    """ISO-8601 instant; naive values are taken as UTC."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return datetime.fromtimestamp(value, tz=timezone.utc)
    if not isinstance(value, str):
        raise SchemaError("timestamp")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    # fromisoformat on 3.10 only accepts 3 or 6 fractional digits
    text = _FRACTION.sub(lambda m: f"{m.group(1)}.{(m.group(2) + '000000')[:6]}", text, count=1)
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise SchemaError("timestamp", f"unparseable timestamp: {value!r}") from None
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f+00:00")


def _opt_str(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return UNKNOWN
    text = str(value)
    return UNKNOWN if text in _MISSING else text


def _nonneg_int(rec: dict, key: str) -> int:
    value = rec[key]
    if isinstance(value, bool):
        raise SchemaError(key)
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise SchemaError(key, f"{key} must be an integer, got {value!r}") from None
    if out < 0 or (isinstance(value, float) and value != out):
        raise SchemaError(key, f"{key} must be a non-negative integer, got {value!r}")
    return out


def event_from_record(rec: dict) -> AuditEvent:
    rec = {_ALIASES.get(k, k): v for k, v in rec.items()}
    for key in MANDATORY_KEYS:
        if key not in rec or rec[key] is None:
            raise SchemaError(key)
    label = rec.get("label")
    if label is not None:
        if label in (0, 1, "0", "1") and not isinstance(label, float):
            label = int(label)
        elif isinstance(label, float) and label in (0.0, 1.0):
            label = int(label)
        else:
            raise SchemaError("label", f"label must be 0 or 1, got {label!r}")
    principal = rec.get("principal")
    return AuditEvent(
        id=str(rec["id"]),
        object=ObjectType.coerce(rec["object"]),
        action=str(rec["action"]).upper(),
        pid=_nonneg_int(rec, "pid"),
        ppid=_nonneg_int(rec, "ppid"),
        actor_id=str(rec["actorid"]),
        object_id=str(rec["objectid"]),
        timestamp=parse_timestamp(rec["timestamp"]),
        principal="" if principal is None else str(principal),
        file_path=_opt_str(rec.get("file_path")),
        image_path=_opt_str(rec.get("image_path")),
        parent_image_path=_opt_str(rec.get("parent_image_path")),
        host=str(rec.get("host") or ""),
        label=label,
    )


def parse_event(line: str | bytes) -> AuditEvent:
    """Parse one JSON Lines record.

    Raises :class:`ParseError` for malformed JSON (including blank lines) and
    :class:`SchemaError` for missing mandatory keys or bad values.
    """
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("invalid UTF-8", exc.start) from None
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.pos) from None
    if not isinstance(rec, dict):
        raise ParseError("record is not a JSON object", 0)
    return event_from_record(rec)


def _lines(source) -> Iterator[str]:
    if isinstance(source, (str, bytes)) and not isinstance(source, io.IOBase):
        text = source.decode("utf-8", errors="replace") if isinstance(source, bytes) else source
        yield from text.splitlines()
        return
    for raw in source:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        yield raw.rstrip("\r\n")


def iter_events(source, host_filter: str | None = None, stats: IngestStats | None = None):
    stats = stats if stats is not None else IngestStats()
    try:
        for lineno, line in enumerate(_lines(source), 1):
            stats.total += 1
            try:
                ev = parse_event(line)
            except (ParseError, SchemaError) as exc:
                stats.skipped += 1
                logger.debug("line %d skipped: %s", lineno, exc)
                continue
            if host_filter is not None and ev.host != host_filter:
                stats.filtered += 1
                continue
            stats.parsed += 1
            yield ev
    except OSError as exc:
        raise IoError(str(exc)) from exc


def batch_events(events: Iterable[AuditEvent]) -> list[EventBatch]:
    """Group events per (host, UTC day); stable timestamp sort inside a batch."""
    groups: dict[tuple[str, date], list[AuditEvent]] = {}
    for ev in events:
        groups.setdefault((ev.host, ev.day), []).append(ev)
    return [
        EventBatch(host, day, sorted(evs, key=lambda e: e.timestamp))
        for (host, day), evs in sorted(groups.items())
    ]


def load_events(
    source: IO | str | bytes | Iterable[str],
    host_filter: str | None = None,
    max_malformed: float = 0.10,
) -> tuple[list[EventBatch], IngestStats]:
    """Read newline-delimited records into per-(host, day) batches.

    Returns the batches and an :class:`IngestStats` with ``parsed + skipped +
    filtered == total``. Raises :class:`CorruptInputError` when the fraction
    of malformed lines exceeds ``max_malformed``.
    """
    stats = IngestStats()
    batches = batch_events(iter_events(source, host_filter, stats))
    if stats.total and stats.skipped / stats.total > max_malformed:
        raise CorruptInputError(
            f"{stats.skipped} of {stats.total} lines malformed "
            f"(limit {max_malformed:.0%})"
        )
    if stats.skipped:
        logger.info("skipped %d malformed line(s) of %d", stats.skipped, stats.total)
    return batches, stats


def read_events(path: str, host_filter: str | None = None, max_malformed: float = 0.10):
    """:func:`load_events` on a file path, or stdin when ``path == '-'``."""
    import sys

    if path == "-":
        return load_events(sys.stdin.buffer, host_filter, max_malformed)
    try:
        with open(path, "rb") as fh:
            return load_events(fh, host_filter, max_malformed)
    except FileNotFoundError as exc:
        raise IoError(str(exc)) from exc


def write_events(batches: Iterable[EventBatch], fh: IO[str]) -> int:
    n = 0
    for batch in batches:
        for ev in batch.events:
            fh.write(serialize_event(ev))
            fh.write("\n")
            n += 1
    return n
