"""Per-RU eCPRI fronthaul traffic driven by an M/M/inf session process."""

import heapq
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

from vponsim.core import RngStream
from vponsim.decorators import guard
from vponsim.metrics import WindowedMean
from vponsim.utils import NS_PER_S, ceil_div
from vponsim.wavelength import ChannelSpec, channel_capacity_per_cycle


class SplitKind(str, Enum):
    SPLIT_8 = "split8"
    SPLIT_71 = "split71"


@dataclass(frozen=True)
class SplitProfile:
    kind: SplitKind
    rate_min_mbps: float
    rate_max_mbps: float


# Fronthaul rate range for 1.4 MHz .. 20 MHz cells with two antennas
SPLIT_PROFILES = {
    SplitKind.SPLIT_8: SplitProfile(SplitKind.SPLIT_8, 153.0, 2457.0),
    SplitKind.SPLIT_71: SplitProfile(SplitKind.SPLIT_71, 110.0, 1058.0),
}


def fronthaul_rate(profile: SplitProfile, load_fraction: float) -> float:
    """Fronthaul rate in Mb/s, linear between the idle floor and the full-band rate."""
    load_fraction = min(max(load_fraction, 0.0), 1.0)
    return profile.rate_min_mbps + load_fraction * (profile.rate_max_mbps - profile.rate_min_mbps)


def payload_bytes(rate_mbps: float, tti_ns: int) -> int:
    # Mb/s x ns = 1e-3 bit; the epsilon keeps exact products from rounding up
    return math.ceil(rate_mbps * tti_ns / 8_000 - 1e-9)


def split_payload(size: int, parts: int) -> tuple[int, ...]:
    """Ceil-sized shares for all but the last part, remainder last."""
    share = ceil_div(size, parts)
    shares = []
    remaining = size
    for _ in range(parts - 1):
        taken = min(share, remaining)
        shares.append(taken)
        remaining -= taken
    shares.append(remaining)
    return tuple(shares)


class ErlangSchedule:
    """Constant offered load per RU, or a piecewise-linear ramp of (time s, Erlang) breakpoints."""

    def __init__(self, erlang: float, ramp: Sequence[Sequence[float]] = ()):
        self.erlang = float(erlang)
        self.ramp = [(int(round(t * NS_PER_S)), float(value)) for t, value in sorted(ramp)]

    def value_at(self, t_ns: int) -> float:
        if not self.ramp:
            return self.erlang
        if t_ns <= self.ramp[0][0]:
            return self.ramp[0][1]
        for (t0, v0), (t1, v1) in zip(self.ramp, self.ramp[1:]):
            if t_ns <= t1:
                if t1 == t0:
                    return v1
                return v0 + (v1 - v0) * (t_ns - t0) / (t1 - t0)
        return self.ramp[-1][1]


@dataclass
class CellLoadModel:
    arrival_rate: float
    mean_holding: float
    n_full: int = 66
    active: int = 0
    last_step_ns: int = 0
    departures: list[float] = field(default_factory=list, repr=False)

    @property
    def offered_load(self) -> float:
        return self.arrival_rate * self.mean_holding

    @property
    def load_fraction(self) -> float:
        return min(self.active / self.n_full, 1.0)

    def seed_sessions(self, count: int, holding_rng: RngStream, now: int = 0) -> None:
        """Start with ``count`` sessions in progress; residual holding times are exponential."""
        for holding in holding_rng.exponential(self.mean_holding * NS_PER_S, size=count):
            heapq.heappush(self.departures, now + float(holding))
        self.active = len(self.departures)
        self.last_step_ns = now


def step_sessions(cell: CellLoadModel, now: int, arrivals_rng: RngStream, holding_rng: RngStream) -> int:
    """Advance the birth-death process to ``now`` and return the active session count."""
    elapsed = now - cell.last_step_ns
    if elapsed > 0 and cell.arrival_rate > 0:
        arrivals = int(arrivals_rng.poisson(cell.arrival_rate * elapsed / NS_PER_S))
        if arrivals:
            offsets = arrivals_rng.uniform(0.0, elapsed, size=arrivals)
            holdings = holding_rng.exponential(cell.mean_holding * NS_PER_S, size=arrivals)
            for offset, holding in zip(offsets, holdings):
                departure = cell.last_step_ns + float(offset) + float(holding)
                if departure > now:
                    heapq.heappush(cell.departures, departure)
    cell.last_step_ns = max(cell.last_step_ns, now)
    departures = cell.departures
    while departures and departures[0] <= now:
        heapq.heappop(departures)
    cell.active = len(departures)
    return cell.active


@dataclass(eq=False)
class EcpriFrame:
    """One eCPRI message: the share of a TTI payload carried in one grant cycle."""

    ru: str
    tti_index: int
    segment: int
    cycle_index: int
    size: int
    t_generated: int
    t_ready: int
    t_enqueued: int | None = None
    t_delivered: int | None = None
    remaining: int = -1
    olt: str | None = None

    def __post_init__(self):
        if self.remaining < 0:
            self.remaining = self.size


@dataclass(eq=False)
class TtiPayload:
    ru: str
    tti_index: int
    size: int
    rate_mbps: float
    t_generated: int
    t_ready: int
    frames: list[EcpriFrame]

    @property
    def processing_delay_ns(self) -> int:
        return self.t_ready - self.t_generated


class RadioUnit:
    """Traffic source of one small cell, co-located with its ONU."""

    def __init__(
        self,
        ru_id: str,
        profile: SplitProfile,
        schedule: ErlangSchedule,
        *,
        mean_holding_s: float,
        n_full: int,
        arrivals: RngStream,
        holding: RngStream,
        processing: RngStream,
        tti_ns: int = 1_000_000,
        grants_per_tti: int = 8,
        processing_max_ns: int = 125_000,
        load_window_ns: int = 100_000_000,
    ):
        self.id = ru_id
        self.profile = profile
        self.schedule = schedule
        self.arrivals = arrivals
        self.holding = holding
        self.processing = processing
        self.tti_ns = tti_ns
        self.grants_per_tti = grants_per_tti
        self.cycle_ns = tti_ns // grants_per_tti
        self.processing_max_ns = processing_max_ns
        self.cell = CellLoadModel(
            arrival_rate=schedule.value_at(0) / mean_holding_s, mean_holding=mean_holding_s, n_full=n_full
        )
        self.load = WindowedMean(load_window_ns)
        self.generated_bytes = 0

    def start(self, now: int = 0) -> None:
        initial = int(self.arrivals.poisson(self.schedule.value_at(now)))
        self.cell.seed_sessions(initial, self.holding, now)

    def sample_load(self, now: int) -> int:
        self.cell.arrival_rate = self.schedule.value_at(now) / self.cell.mean_holding
        active = step_sessions(self.cell, now, self.arrivals, self.holding)
        self.load.add(now, active)
        return active

    def offered_load(self, now: int) -> float:
        """Mean active sessions over the trailing window."""
        value = self.load.mean(now)
        return 0.0 if value is None else value


def generate_tti_payload(ru: RadioUnit, tti_index: int, rng: RngStream) -> TtiPayload:
    """Payload of one TTI at the current cell load, split into one message per grant cycle."""
    rate = fronthaul_rate(ru.profile, ru.cell.load_fraction)
    size = payload_bytes(rate, ru.tti_ns)
    t_generated = tti_index * ru.tti_ns
    t_ready = t_generated + int(rng.uniform(0.0, ru.processing_max_ns))
    frames = []
    for segment, share in enumerate(split_payload(size, ru.grants_per_tti)):
        if share == 0:
            continue
        ready = t_ready + segment * ru.cycle_ns
        frames.append(
            EcpriFrame(
                ru=ru.id,
                tti_index=tti_index,
                segment=segment,
                cycle_index=tti_index * ru.grants_per_tti + segment,
                size=share,
                t_generated=t_generated,
                t_ready=ready,
                t_enqueued=ready,
            )
        )
    ru.generated_bytes += size
    return TtiPayload(ru.id, tti_index, size, rate, t_generated, t_ready, frames)


@dataclass(frozen=True)
class BackgroundReservation:
    """Airtime kept for residential traffic at the end of every cycle of a CO channel."""

    channel: int
    fraction: float

    def reserved_ns(self, spec: ChannelSpec, cycle_ns: int, n_bursts: int) -> int:
        payload_time = max(cycle_ns - n_bursts * spec.burst_overhead_ns, 0)
        return int(payload_time * self.fraction)

    def usable_bytes(self, spec: ChannelSpec, cycle_ns: int, n_bursts: int) -> int:
        window = cycle_ns - self.reserved_ns(spec, cycle_ns, n_bursts)
        if window <= n_bursts * spec.burst_overhead_ns:
            return 0
        return channel_capacity_per_cycle(spec, window, n_bursts)


@guard(co_channel={"gte": 1}, fraction={"gte": 0.0, "lte": 1.0})
def background_load(co_channel: int, fraction: float) -> BackgroundReservation:
    return BackgroundReservation(co_channel, float(fraction))
