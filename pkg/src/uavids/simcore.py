"""Deterministic event scheduler and labeled random-number streams.

Every run is a pure function of (scenario config, master seed): events execute
in strict (time, sequence) order and all randomness is drawn from per-label
streams so that enabling one subsystem never perturbs the draws of another.
"""

import hashlib
import heapq
import random

# Event kinds. Strings rather than an Enum: they end up in trace lines and
# notes, and string compare is cheap in the hot loop.
MOBILITY_TICK = "mobility-tick"
CONTROL_MSG = "control-msg"
DATA_MSG = "data-msg"
PROBE_TIMEOUT = "probe-timeout"
AUDIT_STEP = "audit-step"
METRIC_SAMPLE = "metric-sample"

EVENT_KINDS = (MOBILITY_TICK, CONTROL_MSG, DATA_MSG, PROBE_TIMEOUT, AUDIT_STEP, METRIC_SAMPLE)


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current simulation time."""


class Event:
    __slots__ = ("time", "seq", "kind", "fn", "note")

    def __init__(self, time, seq, kind, fn, note=""):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.fn = fn
        self.note = note

    def __lt__(self, other):
        return (self.time, self.seq) < (other.time, other.seq)

    def __repr__(self):
        return f"Event(t={self.time:.6f}, seq={self.seq}, kind={self.kind}, note={self.note!r})"


class Scheduler:
    """Single-threaded event loop with FIFO tie-break at equal timestamps."""

    def __init__(self, trace=False):
        self.now = 0.0
        self._seq = 0
        self._heap = []
        self._trace = hashlib.sha256() if trace else None

    def schedule(self, time, kind, fn, note=""):
        if time < self.now:
            raise SchedulingError(f"event at t={time} is before current time t={self.now}")
        ev = Event(time, self._seq, kind, fn, note)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def run_until(self, t_end):
        """Process every event with time <= t_end; returns the event count."""
        if t_end < self.now:
            raise SchedulingError(f"horizon t={t_end} is before current time t={self.now}")
        count = 0
        heap = self._heap
        trace = self._trace
        while heap and heap[0].time <= t_end:
            ev = heapq.heappop(heap)
            self.now = ev.time
            if trace is not None:
                trace.update(f"{ev.time:.9f}|{ev.seq}|{ev.kind}|{ev.note}\n".encode())
            ev.fn()
            count += 1
        self.now = t_end
        return count

    def pending(self):
        return len(self._heap)

    def trace_hash(self):
        """Digest of the executed (time, seq, kind, note) trace, if tracing."""
        return self._trace.hexdigest() if self._trace is not None else None


class RngRegistry:
    """Per-label random streams derived from one master seed.

    The same (master_seed, label) pair always yields an identical stream,
    independent of creation order and of which other labels exist.
    """

    def __init__(self, master_seed):
        self.master_seed = int(master_seed)
        self._streams = {}

    def stream(self, label):
        rng = self._streams.get(label)
        if rng is None:
            digest = hashlib.sha256(f"{self.master_seed}|{label}".encode()).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            self._streams[label] = rng
        return rng
