"""Injectable time source so controllers and brokers run on simulated clocks."""

from __future__ import annotations

import time
from typing import Callable


class Clock:
    """Wall-clock time; the default everywhere."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class ManualClock(Clock):
    """Deterministic clock: ``sleep`` advances time and fires registered hooks.

    Hooks receive the new time after each advance. Registered event sources
    report the next moment something is due; ``sleep`` stops at each such
    moment, so simulated completions land at their exact finish times.
    """

    def __init__(self, start: float = 0.0) -> None:
        self._now = start
        self._hooks: list[Callable[[float], None]] = []
        self._event_sources: list[Callable[[], float | None]] = []

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance backwards")
        target = self._now + seconds
        while True:
            pending = [t for t in (fn() for fn in self._event_sources)
                       if t is not None and t > self._now]
            step_to = min(pending + [target]) if pending else target
            self._now = step_to
            for hook in list(self._hooks):
                hook(self._now)
            if step_to >= target:
                return

    def advance(self, seconds: float) -> None:
        self.sleep(seconds)

    def on_advance(self, hook: Callable[[float], None]) -> None:
        self._hooks.append(hook)

    def add_event_source(self, fn: Callable[[], float | None]) -> None:
        self._event_sources.append(fn)


REAL_CLOCK = Clock()
