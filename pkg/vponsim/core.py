"""Discrete-event engine: future-event list, integer-nanosecond clock, named random streams."""

import hashlib
import heapq
import itertools
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from vponsim.decorators import guard
from vponsim.exceptions import InvariantViolation, SchedulingError, SimulationError
from vponsim.log_config import get_logger

logger = get_logger(__name__)


@dataclass
class EventRecord:
    fire_time: int
    sequence: int
    kind: str
    payload: Any = None
    cancelled: bool = False

    def __lt__(self, other: "EventRecord") -> bool:
        return (self.fire_time, self.sequence) < (other.fire_time, other.sequence)


class EventHandle:
    __slots__ = ("_record",)

    def __init__(self, record: EventRecord):
        self._record = record

    @property
    def fire_time(self) -> int:
        return self._record.fire_time

    @property
    def kind(self) -> str:
        return self._record.kind

    @property
    def cancelled(self) -> bool:
        return self._record.cancelled

    def cancel(self) -> None:
        self._record.cancelled = True

    def __repr__(self):
        return f"EventHandle({self._record.kind}@{self._record.fire_time}#{self._record.sequence})"


def stream_seed(name: str, master_seed: int) -> int:
    """
    Stable 64-bit seed for a named stream. Depends only on (master_seed, name), so
    adding a stream never shifts the others.
    """
    digest = hashlib.blake2b(f"{master_seed}/{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class RngStream:
    name: str
    seed: int
    generator: np.random.Generator = field(repr=False)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)

    def exponential(self, scale: float, size=None):
        return self.generator.exponential(scale, size)

    def poisson(self, lam: float, size=None):
        return self.generator.poisson(lam, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.generator.integers(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)


@guard(name={"length": (1, None)})
def rng_stream(name: str, master_seed: int) -> RngStream:
    seed = stream_seed(name, master_seed)
    return RngStream(name=name, seed=seed, generator=np.random.Generator(np.random.PCG64(seed)))


Handler = Callable[[EventRecord], None]


class Simulator:
    """
    Single-threaded event loop. Events at equal times run in scheduling order.
    """

    def __init__(self, master_seed: int = 0):
        self.master_seed = master_seed
        self.now = 0
        self.executed = 0
        # heap of (fire_time, sequence, record)
        self._queue: list[tuple[int, int, EventRecord]] = []
        self._sequence = itertools.count()
        self._handlers: dict[str, Handler] = {}
        self._observers: list[Handler] = []
        self._streams: dict[str, RngStream] = {}

    def on(self, kind: str, handler: Handler) -> None:
        self._handlers[kind] = handler

    def observe(self, observer: Handler) -> None:
        """Register a callback invoked after every executed event."""
        self._observers.append(observer)

    def schedule_event(self, fire_time: int, kind: str, payload: Any = None) -> EventHandle:
        if fire_time < self.now:
            raise SchedulingError(f"event '{kind}' scheduled at {fire_time} ns, before now={self.now} ns")
        record = EventRecord(int(fire_time), next(self._sequence), kind, payload)
        heapq.heappush(self._queue, (record.fire_time, record.sequence, record))
        return EventHandle(record)

    schedule = schedule_event

    def schedule_in(self, delay: int, kind: str, payload: Any = None) -> EventHandle:
        return self.schedule_event(self.now + delay, kind, payload)

    @property
    def pending(self) -> int:
        return sum(1 for _, _, record in self._queue if not record.cancelled)

    def peek(self) -> int | None:
        while self._queue and self._queue[0][2].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def run_until(self, t_end: int) -> int:
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before now={self.now}")

        count = 0
        queue = self._queue
        handlers = self._handlers
        observers = self._observers
        while queue and queue[0][0] <= t_end:
            record = heapq.heappop(queue)[2]
            if record.cancelled:
                continue
            if record.fire_time < self.now:
                raise InvariantViolation(f"clock would move back from {self.now} to {record.fire_time}")
            self.now = record.fire_time
            handler = handlers.get(record.kind)
            if handler is None:
                raise SimulationError(f"no handler registered for event kind '{record.kind}'")
            handler(record)
            count += 1
            for observer in observers:
                observer(record)
        self.now = t_end
        self.executed += count
        return count

    def stream(self, name: str) -> RngStream:
        stream = self._streams.get(name)
        if stream is None:
            stream = self._streams[name] = rng_stream(name, self.master_seed)
        return stream
