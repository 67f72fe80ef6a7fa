"""Control plane: persistence log, job engine, formatter, HTTP API, CLI."""

from __future__ import annotations

from .formatter import (JobFingerprint, KnowledgeBase, KnowledgeRecord, choose_strategy,
                        fingerprint_of, format_job)
from .jobs import Engine, JobError, JobSpec, JobState, UnknownJobError, apply_event, replay_job
from .log import EventLog, LogIntegrityError, read_snapshot, replay, write_snapshot

__all__ = [
    "Engine",
    "EventLog",
    "JobError",
    "JobFingerprint",
    "JobSpec",
    "JobState",
    "KnowledgeBase",
    "KnowledgeRecord",
    "LogIntegrityError",
    "UnknownJobError",
    "apply_event",
    "choose_strategy",
    "fingerprint_of",
    "format_job",
    "read_snapshot",
    "replay",
    "replay_job",
    "write_snapshot",
]
