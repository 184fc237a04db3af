"""Latency samples, windowed aggregates for the controller, summaries and CSV export."""

import csv
from array import array
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from vponsim.exceptions import InvariantViolation
from vponsim.log_config import get_logger

logger = get_logger(__name__)

SAMPLES_FILE = "samples.csv"
WINDOW_MEANS_FILE = "window_means.csv"
CONTROL_EVENTS_FILE = "control_events.csv"


def format_us(ns: int) -> str:
    """Integer nanoseconds as microseconds with three decimals, without float rounding."""
    sign = "-" if ns < 0 else ""
    ns = abs(int(ns))
    return f"{sign}{ns // 1000}.{ns % 1000:03d}"


@dataclass(frozen=True)
class LatencySample:
    t_ns: int
    olt: str
    onu: str
    latency_ns: int

    @property
    def latency_us(self) -> float:
        return self.latency_ns / 1000


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean_us: float | None = None
    min_us: float | None = None
    p50_us: float | None = None
    p99_us: float | None = None
    max_us: float | None = None

    @classmethod
    def empty(cls) -> "SummaryStats":
        return cls(count=0)

    @property
    def is_empty(self) -> bool:
        return self.count == 0


@dataclass(frozen=True)
class ControlEvent:
    t_ns: int
    action: str
    onus: tuple[str, ...] = ()
    from_slice: str = ""
    to_slice: str = ""
    value_us: float | None = None

    def as_row(self) -> list[str]:
        value = "" if self.value_us is None else f"{self.value_us:.3f}"
        return [str(self.t_ns), self.action, " ".join(self.onus), self.from_slice, self.to_slice, value]


class WindowedMean:
    """
    Mean over a trailing time window ``[now - window, now]``. Entries older than the
    window are evicted as new ones arrive, so memory is bounded by the window content.
    An empty window reports the last computed mean.
    """

    def __init__(self, window_ns: int):
        if window_ns <= 0:
            raise ValueError(f"window must be positive, got {window_ns} ns")
        self.window_ns = window_ns
        self._entries: deque[tuple[int, float]] = deque()
        self._sum = 0
        self._last: float | None = None

    def __len__(self):
        return len(self._entries)

    def _evict(self, now: int) -> None:
        horizon = now - self.window_ns
        entries = self._entries
        while entries and entries[0][0] < horizon:
            self._sum -= entries.popleft()[1]

    def add(self, t_ns: int, value: float) -> None:
        self._entries.append((t_ns, value))
        self._sum += value
        self._evict(t_ns)

    def mean(self, now: int) -> float | None:
        self._evict(now)
        if self._entries:
            self._last = self._sum / len(self._entries)
        return self._last


@dataclass
class MetricsCollector:
    window_ns: int = 100_000_000
    undelivered: int = 0
    window_log: list[tuple[int, str, float]] = field(default_factory=list)
    control_events: list[ControlEvent] = field(default_factory=list)

    def __post_init__(self):
        self._t = array("q")
        self._latency = array("q")
        self._olt_index = array("l")
        self._onu_index = array("l")
        self._names: list[str] = []
        self._name_ids: dict[str, int] = {}
        self._windows: dict[str, WindowedMean] = {}

    def __len__(self):
        return len(self._t)

    def _intern(self, name: str) -> int:
        index = self._name_ids.get(name)
        if index is None:
            index = self._name_ids[name] = len(self._names)
            self._names.append(name)
        return index

    def window(self, olt: str) -> WindowedMean:
        window = self._windows.get(olt)
        if window is None:
            window = self._windows[olt] = WindowedMean(self.window_ns)
        return window

    def record_sample(self, sample: LatencySample, propagation_ns: int = 0) -> None:
        if sample.latency_ns < propagation_ns:
            raise InvariantViolation(
                f"{sample.onu} -> {sample.olt}: latency {sample.latency_ns} ns below "
                f"path propagation {propagation_ns} ns"
            )
        self._t.append(sample.t_ns)
        self._latency.append(sample.latency_ns)
        self._olt_index.append(self._intern(sample.olt))
        self._onu_index.append(self._intern(sample.onu))
        self.window(sample.olt).add(sample.t_ns, sample.latency_ns)

    def samples(self):
        names = self._names
        for t, latency, olt, onu in zip(self._t, self._latency, self._olt_index, self._onu_index):
            yield LatencySample(t, names[olt], names[onu], latency)

    def window_mean(self, olt: str, now: int) -> float | None:
        """Windowed mean latency of an OLT in microseconds."""
        value = self.window(olt).mean(now)
        return None if value is None else value / 1000

    def note_window_mean(self, t_ns: int, olt: str, value_us: float) -> None:
        self.window_log.append((t_ns, olt, value_us))

    def note_control_event(self, event: ControlEvent) -> None:
        self.control_events.append(event)

    def _mask(self, olt, onu, t_from, t_to) -> np.ndarray:
        t = np.frombuffer(self._t, dtype=np.int64) if len(self._t) else np.empty(0, dtype=np.int64)
        mask = np.ones(len(t), dtype=bool)
        if olt is not None:
            index = self._name_ids.get(olt, -1)
            mask &= np.asarray(self._olt_index) == index
        if onu is not None:
            index = self._name_ids.get(onu, -1)
            mask &= np.asarray(self._onu_index) == index
        if t_from is not None:
            mask &= t >= t_from
        if t_to is not None:
            mask &= t <= t_to
        return mask

    def latencies_us(
        self, olt: str | None = None, onu: str | None = None, t_from: int | None = None, t_to: int | None = None
    ) -> np.ndarray:
        if not len(self._latency):
            return np.empty(0)
        latency = np.frombuffer(self._latency, dtype=np.int64)
        return latency[self._mask(olt, onu, t_from, t_to)] / 1000

    def summarize(
        self, olt: str | None = None, onu: str | None = None, t_from: int | None = None, t_to: int | None = None
    ) -> SummaryStats:
        values = self.latencies_us(olt, onu, t_from, t_to)
        if values.size == 0:
            return SummaryStats.empty()
        p50, p99 = np.quantile(values, [0.5, 0.99])
        return SummaryStats(
            count=int(values.size),
            mean_us=float(values.mean()),
            min_us=float(values.min()),
            p50_us=float(p50),
            p99_us=float(p99),
            max_us=float(values.max()),
        )

    def export_timeseries(self, destination: str | Path) -> int:
        """Write the sample, windowed-mean and control-event files; return the sample row count."""
        destination = Path(destination)
        destination.mkdir(parents=True, exist_ok=True)

        count = 0
        with open(destination / SAMPLES_FILE, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["t_ns", "olt", "onu", "latency_us"])
            for sample in self.samples():
                writer.writerow([sample.t_ns, sample.olt, sample.onu, format_us(sample.latency_ns)])
                count += 1
            handle.write(f"# undelivered,{self.undelivered}\n")

        with open(destination / WINDOW_MEANS_FILE, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["t_ns", "olt", "window_mean_us"])
            for t_ns, olt, value in self.window_log:
                writer.writerow([t_ns, olt, f"{value:.3f}"])

        with open(destination / CONTROL_EVENTS_FILE, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["t_ns", "action", "onus", "from_slice", "to_slice", "value_us"])
            for event in self.control_events:
                writer.writerow(event.as_row())

        logger.info("Exported %d latency samples to %s", count, destination)
        return count
