"""Analyst label store: names, umbrella groups, junk flags.

Labels are the only mutable state in a run. They live in an append-only
JSONL journal; current state is a replay, history is the journal itself.
A torn final line (a crash mid-append) is dropped on load; corruption
anywhere else is an error, not something to paper over.
"""

from __future__ import annotations

import json
import os
import threading
import warnings
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

JUNK_REASONS = ("non_technical", "mixed", "trivial", "non_specific", "none")
SOFT_SUPERTOPIC_CAP = 20


@dataclass
class TopicLabelRecord:
    topic_id: int
    topic_name: str = ""
    super_topic_name: str = ""
    junk: bool = False
    junk_reason: str = "none"
    updated_at: str = ""
    author: str = ""

    def validate(self) -> None:
        if self.junk_reason not in JUNK_REASONS:
            raise ValueError(
                f"junk_reason must be one of {JUNK_REASONS}, got {self.junk_reason!r}")
        if self.junk and self.junk_reason == "none":
            raise ValueError("a junk topic needs a junk_reason other than 'none'")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "TopicLabelRecord":
        d = json.loads(line)
        return cls(
            topic_id=int(d["topic_id"]),
            topic_name=str(d.get("topic_name", "")),
            super_topic_name=str(d.get("super_topic_name", "")),
            junk=bool(d.get("junk", False)),
            junk_reason=str(d.get("junk_reason", "none")),
            updated_at=str(d.get("updated_at", "")),
            author=str(d.get("author", "")),
        )


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class LabelStore:
    """Journal-backed label state, one writer at a time."""

    def __init__(self, journal_path, clock=_utc_now):
        self.path = Path(journal_path)
        self._clock = clock
        self._lock = threading.Lock()
        self._current: dict[int, TopicLabelRecord] = {}
        self._history: list[TopicLabelRecord] = []
        self._replay()

    def _replay(self) -> None:
        # _end_offset marks the byte just past the last committed record; a
        # record commits with its newline, so an unterminated tail never
        # counts and gets truncated away by the next put
        self._end_offset = 0
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()
            return
        data = self.path.read_bytes()
        pos = 0
        lineno = 0
        while pos < len(data):
            nl = data.find(b"\n", pos)
            if nl == -1:
                break  # interrupted append; the write never committed
            lineno += 1
            raw = data[pos:nl]
            pos = nl + 1
            if not raw.strip():
                continue
            try:
                rec = TopicLabelRecord.from_json(raw.decode("utf-8"))
            except (ValueError, KeyError, UnicodeDecodeError) as e:
                if not data[pos:].strip():
                    break  # terminated garbage at the very end: same story
                raise ValueError(f"{self.path}:{lineno}: corrupt journal line") from e
            self._history.append(rec)
            self._current[rec.topic_id] = rec
            self._end_offset = pos

    def put(self, record: TopicLabelRecord) -> TopicLabelRecord:
        record.validate()
        with self._lock:
            stamped = TopicLabelRecord(**{**asdict(record), "updated_at": self._clock()})
            payload = (stamped.to_json() + "\n").encode("utf-8")
            with open(self.path, "r+b") as fh:
                # drop any torn tail so the new record starts a fresh line
                fh.truncate(self._end_offset)
                fh.seek(self._end_offset)
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            self._end_offset += len(payload)
            self._history.append(stamped)
            self._current[stamped.topic_id] = stamped
            return stamped

    def get(self, topic_id: int) -> TopicLabelRecord | None:
        return self._current.get(topic_id)

    def all_current(self) -> dict[int, TopicLabelRecord]:
        return dict(self._current)

    def history(self, topic_id: int) -> list[TopicLabelRecord]:
        return [r for r in self._history if r.topic_id == topic_id]

    def junk_topic_ids(self) -> set[int]:
        return {t for t, r in self._current.items() if r.junk}

    @property
    def version(self) -> int:
        """Bumps on every accepted write; lets caches detect staleness."""
        return len(self._history)

    def compact(self) -> None:
        """Drop history, keep only current records. Atomic via rename."""
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for tid in sorted(self._current):
                    fh.write(self._current[tid].to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
            self._end_offset = self.path.stat().st_size
            self._history = [self._current[t] for t in sorted(self._current)]


class SupertopicRegistry:
    """The controlled list of umbrella names. Small by design."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._names: list[str] = []
        if self.path.exists():
            data = json.loads(self.path.read_text(encoding="utf-8"))
            self._names = [str(n) for n in data.get("supertopics", [])]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._names

    def add(self, name: str) -> bool:
        """Register a name; returns False if already present. Warns past
        the soft cap, where the grouping stops being scannable."""
        name = name.strip()
        if not name:
            raise ValueError("supertopic name must be non-empty")
        with self._lock:
            if name in self._names:
                return False
            self._names.append(name)
            self._save()
            if len(self._names) > SOFT_SUPERTOPIC_CAP:
                warnings.warn(
                    f"supertopic list has {len(self._names)} entries, "
                    f"above the soft cap of {SOFT_SUPERTOPIC_CAP}")
            return True

    def over_cap(self) -> bool:
        return len(self._names) > SOFT_SUPERTOPIC_CAP

    def member_map(self, labels: dict) -> dict[str, list[int]]:
        """Supertopic -> member topic ids, from current label records."""
        out: dict[str, list[int]] = {}
        for tid in sorted(labels):
            name = labels[tid].super_topic_name
            if name:
                out.setdefault(name, []).append(tid)
        return out

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(json.dumps({"supertopics": self._names}), encoding="utf-8")
        os.replace(tmp, self.path)
