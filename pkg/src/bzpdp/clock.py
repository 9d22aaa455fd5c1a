"""Injected engine clocks. All engine time is integer milliseconds."""
from __future__ import annotations

import threading
import time

SECOND = 1000
MINUTE = 60 * SECOND
HOUR = 60 * MINUTE
DAY = 24 * HOUR


class RealClock:
    mode = "real"

    def now(self) -> int:
        return int(time.time() * 1000)


class SimClock:
    """Manually driven clock; it only ever moves forward."""

    mode = "sim"

    def __init__(self, start: int = 0):
        self._now = int(start)
        self._lock = threading.Lock()

    def now(self) -> int:
        return self._now

    def advance(self, ms: int) -> int:
        if ms < 0:
            raise ValueError("simulated clock cannot move backwards")
        with self._lock:
            self._now += int(ms)
            return self._now

    def advance_to(self, ts: int) -> int:
        """Move to ``ts`` if it lies in the future; earlier values are a no-op."""
        with self._lock:
            if ts > self._now:
                self._now = int(ts)
            return self._now


def make_clock(mode: str, start: int = 0) -> RealClock | SimClock:
    if mode == "real":
        return RealClock()
    if mode == "sim":
        return SimClock(start)
    raise ValueError(f"unknown clock mode {mode!r}")
