"""Cooperative upstream DBA: per-cycle bandwidth maps, burst transmission and frame latency."""

from collections import deque
from dataclasses import dataclass, field

from vponsim.config import BURST_ORDERS
from vponsim.decorators import guard
from vponsim.exceptions import InvariantViolation
from vponsim.log_config import get_logger
from vponsim.traffic import BackgroundReservation, EcpriFrame, split_payload
from vponsim.utils import natural_key
from vponsim.wavelength import ChannelId, ChannelSpec, channel_capacity_per_cycle, serialization_ns

logger = get_logger(__name__)


@dataclass(frozen=True)
class SchedInfo:
    """Payload size of one RU for one TTI, passed from the DU ahead of the TTI."""

    onu: str
    tti_index: int
    payload_size: int
    received_at: int
    ready_offset_ns: int = 0


@dataclass(frozen=True)
class Grant:
    onu: str
    cycle_index: int
    start_offset: int
    size: int
    earliest: int = 0


@dataclass
class BwMap:
    olt: str
    channel: ChannelId
    cycle_index: int
    grants: list[Grant] = field(default_factory=list)
    capacity: int = 0
    window_ns: int = 0

    @property
    def total_bytes(self) -> int:
        return sum(grant.size for grant in self.grants)

    def grant_for(self, onu: str) -> Grant | None:
        return next((grant for grant in self.grants if grant.onu == onu), None)


class OnuQueue:
    """
    FIFO of eCPRI messages at one ONU. Messages are queued as soon as the DU announces
    them and become eligible for a burst once ``t_ready`` has passed.
    """

    def __init__(self, onu: str):
        self.onu = onu
        self.frames: deque[EcpriFrame] = deque()
        self.depth_bytes = 0
        self.enqueued_bytes = 0
        self.delivered_bytes = 0

    def __len__(self):
        return len(self.frames)

    def enqueue(self, frame: EcpriFrame) -> None:
        if self.frames:
            tail = self.frames[-1]
            if (frame.tti_index, frame.segment) <= (tail.tti_index, tail.segment):
                raise InvariantViolation(
                    f"{self.onu}: message {frame.tti_index}/{frame.segment} queued after "
                    f"{tail.tti_index}/{tail.segment}"
                )
        self.frames.append(frame)
        self.depth_bytes += frame.remaining
        self.enqueued_bytes += frame.size

    def pending_through(self, cycle_index: int) -> int:
        """Bytes still queued for messages of cycles up to and including ``cycle_index``."""
        return sum(frame.remaining for frame in self.frames if frame.cycle_index <= cycle_index)


@dataclass
class BurstResult:
    deliveries: list[tuple[EcpriFrame, int]]
    sent: int
    wasted: int


def transmit_burst(
    queue: OnuQueue, grant: Grant, start_ns: int, spec: ChannelSpec, propagation_ns: int
) -> BurstResult:
    """
    Send up to ``grant.size`` bytes of ready messages FIFO from ``start_ns``. Each message
    whose last byte leaves in this burst gets its arrival time at the OLT.
    """
    budget = grant.size
    sent = 0
    deliveries = []
    frames = queue.frames
    while budget > 0 and frames and frames[0].t_ready <= start_ns:
        frame = frames[0]
        taken = min(frame.remaining, budget)
        frame.remaining -= taken
        budget -= taken
        sent += taken
        if frame.remaining == 0:
            frames.popleft()
            arrival = start_ns + spec.burst_overhead_ns + serialization_ns(sent, spec.payload_rate_bps)
            deliveries.append((frame, arrival + propagation_ns))
    queue.depth_bytes -= sent
    return BurstResult(deliveries, sent, grant.size - sent)


def frame_latency(frame: EcpriFrame) -> float | None:
    """Transport latency in microseconds, ready at the ONU to last byte at the OLT."""
    if frame.t_delivered is None:
        return None
    return (frame.t_delivered - frame.t_ready) / 1000


class DbaScheduler:
    """Upstream scheduler of one OLT on one channel; one bandwidth map per grant cycle."""

    @guard(
        olt={"node_id": True},
        cycle_ns={"gt": 0},
        grants_per_tti={"gte": 1},
        burst_order={"choices": BURST_ORDERS},
    )
    def __init__(
        self,
        olt: str,
        channel: ChannelId,
        spec: ChannelSpec,
        cycle_ns: int = 125_000,
        grants_per_tti: int = 8,
        reservation: BackgroundReservation | None = None,
        burst_order: str = "ready",
    ):
        self.olt = olt
        self.channel = channel
        self.spec = spec
        self.cycle_ns = cycle_ns
        self.grants_per_tti = grants_per_tti
        self.tti_ns = cycle_ns * grants_per_tti
        self.reservation = reservation
        self.burst_order = burst_order
        self.members: set[str] = set()
        self.due: dict[str, int] = {}
        self.last_built_cycle = -1
        self._info: dict[int, dict[str, SchedInfo]] = {}

        self.late_info = 0
        self.skipped_bursts = 0
        self.wasted_bytes = 0
        self.granted_bytes = 0
        self.cycles_built = 0
        self.saturated_cycles = 0
        self.deferred_bursts = 0

    def ingest_scheduling_info(self, info: SchedInfo) -> None:
        tti_start = info.tti_index * self.tti_ns
        if info.received_at > tti_start:
            self.late_info += 1
            logger.debug(
                "%s: scheduling info of %s for TTI %d arrived late, deferred", self.olt, info.onu, info.tti_index
            )
            info = SchedInfo(info.onu, info.tti_index + 1, info.payload_size, info.received_at, info.ready_offset_ns)
        self._store(info)

    def _store(self, info: SchedInfo) -> None:
        per_onu = self._info.setdefault(info.tti_index, {})
        existing = per_onu.get(info.onu)
        if existing is not None:
            info = SchedInfo(
                info.onu,
                info.tti_index,
                existing.payload_size + info.payload_size,
                existing.received_at,
                existing.ready_offset_ns,
            )
        per_onu[info.onu] = info

    def _capacity(self, n_bursts: int) -> tuple[int, int]:
        if self.reservation is None:
            return channel_capacity_per_cycle(self.spec, self.cycle_ns, n_bursts), self.cycle_ns
        window = self.cycle_ns - self.reservation.reserved_ns(self.spec, self.cycle_ns, n_bursts)
        return self.reservation.usable_bytes(self.spec, self.cycle_ns, n_bursts), window

    def _airtime(self, size: int) -> int:
        return self.spec.burst_overhead_ns + serialization_ns(size, self.spec.payload_rate_bps)

    def build_bwmap(self, cycle_index: int) -> BwMap:
        tti_index, segment = divmod(cycle_index, self.grants_per_tti)
        announced = self._info.get(tti_index, {})

        demand, nominal, earliest = {}, {}, {}
        for onu in sorted(self.members, key=natural_key):
            info = announced.get(onu)
            nominal[onu] = split_payload(info.payload_size, self.grants_per_tti)[segment] if info else 0
            self.due[onu] = self.due.get(onu, 0) + nominal[onu]
            if self.due[onu] > 0:
                demand[onu] = self.due[onu]
                earliest[onu] = info.ready_offset_ns if nominal[onu] else 0

        if segment == self.grants_per_tti - 1:
            self._info.pop(tti_index, None)
        self.last_built_cycle = cycle_index
        self.cycles_built += 1

        bursts = len(demand)
        capacity, window = self._capacity(bursts)
        congested = sum(demand.values()) > capacity
        for onu in list(demand):
            if congested or earliest[onu] == 0 or earliest[onu] + self._airtime(demand[onu]) <= window:
                continue
            # no room after the ready phase: carried bytes go at phase 0, this cycle's share waits
            carry = demand[onu] - nominal[onu]
            if carry:
                demand[onu], earliest[onu] = carry, 0
            else:
                del demand[onu], earliest[onu]
                self.deferred_bursts += 1
        if len(demand) != bursts:
            capacity, window = self._capacity(len(demand))

        bwmap = BwMap(self.olt, self.channel, cycle_index, capacity=capacity, window_ns=window)
        if not demand:
            return bwmap

        sizes = self._scale(demand, capacity)
        bwmap.grants = self._place(cycle_index, sizes, earliest, window)
        self._check(bwmap)
        self.granted_bytes += bwmap.total_bytes
        return bwmap

    def _scale(self, demand: dict[str, int], capacity: int) -> dict[str, int]:
        total = sum(demand.values())
        if total <= capacity:
            return dict(demand)
        self.saturated_cycles += 1
        sizes = {onu: due * capacity // total for onu, due in demand.items()}
        leftover = capacity - sum(sizes.values())
        # floor leaves fewer than one byte per ONU; hand them out in id order
        for onu in sorted(sizes, key=natural_key):
            if leftover == 0:
                break
            if sizes[onu] < demand[onu]:
                sizes[onu] += 1
                leftover -= 1
        return sizes

    def _place(self, cycle_index: int, sizes: dict[str, int], earliest: dict[str, int], window: int) -> list[Grant]:
        if self.burst_order == "onu":
            order = sorted(sizes, key=natural_key)
        else:
            order = sorted(sizes, key=lambda onu: (earliest[onu], natural_key(onu)))

        offsets = []
        previous_end = 0
        for onu in order:
            offset = max(earliest[onu], previous_end)
            offsets.append(offset)
            previous_end = offset + self._airtime(sizes[onu])

        limit = window
        for position in range(len(order) - 1, -1, -1):
            airtime = self._airtime(sizes[order[position]])
            if offsets[position] + airtime <= limit:
                break
            offsets[position] = limit - airtime
            limit = offsets[position]

        return [
            Grant(onu, cycle_index, offset, sizes[onu], earliest[onu]) for onu, offset in zip(order, offsets)
        ]

    def _check(self, bwmap: BwMap) -> None:
        if bwmap.total_bytes > bwmap.capacity:
            raise InvariantViolation(
                f"{self.olt} cycle {bwmap.cycle_index}: {bwmap.total_bytes} B granted, capacity {bwmap.capacity} B"
            )
        previous_end = 0
        for grant in bwmap.grants:
            if grant.start_offset < previous_end:
                raise InvariantViolation(f"{self.olt} cycle {bwmap.cycle_index}: burst of {grant.onu} overlaps")
            previous_end = grant.start_offset + self._airtime(grant.size)
        if previous_end > bwmap.window_ns:
            raise InvariantViolation(
                f"{self.olt} cycle {bwmap.cycle_index}: bursts end at {previous_end} ns, window {bwmap.window_ns} ns"
            )

    def settle(self, onu: str, sent: int, wasted: int) -> None:
        if onu in self.due:
            self.due[onu] = max(self.due[onu] - sent, 0)
        self.wasted_bytes += wasted

    def note_skipped(self, grant: Grant) -> None:
        self.skipped_bursts += 1
        logger.debug("%s: burst of %s in cycle %d skipped", self.olt, grant.onu, grant.cycle_index)

    def release(self, onu: str) -> list[SchedInfo]:
        """Remove an ONU from this scheduler and hand back its pending scheduling info."""
        self.members.discard(onu)
        self.due.pop(onu, None)
        pending = []
        for tti_index in sorted(self._info):
            info = self._info[tti_index].pop(onu, None)
            if info is not None:
                pending.append(info)
        return pending

    def admit(self, onu: str, pending: list[SchedInfo] = (), due: int = 0) -> None:
        self.members.add(onu)
        self.due[onu] = self.due.get(onu, 0) + due
        for info in pending:
            self._store(info)

    def has_demand(self) -> bool:
        return any(self.due.values()) or any(self._info.values())

    def diagnostics(self) -> dict[str, int]:
        return {
            "cycles": self.cycles_built,
            "saturated_cycles": self.saturated_cycles,
            "granted_bytes": self.granted_bytes,
            "wasted_bytes": self.wasted_bytes,
            "late_info": self.late_info,
            "deferred_bursts": self.deferred_bursts,
            "skipped_bursts": self.skipped_bursts,
        }
