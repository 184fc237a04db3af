"""Wavelength channel plan, OLT channel assignments and ONU transceiver state."""

from dataclasses import dataclass, field
from enum import Enum

from vponsim.decorators import guard
from vponsim.exceptions import CapacityError, ChannelConflictError, TuningError
from vponsim.log_config import get_logger
from vponsim.utils import NS_PER_S, ms_to_ns, natural_key, us_to_ns

logger = get_logger(__name__)

CONTROL_CHANNEL = 1
CO_CHANNELS = (1, 2, 3, 4)
FIRST_EDGE_CHANNEL = 5


class ChannelRole(str, Enum):
    CO_CONTROL = "co-control"
    CO_DATA = "co-data"
    EDGE = "edge"


class OltKind(str, Enum):
    CO = "co"
    EDGE = "edge"


class TransceiverKind(str, Enum):
    FIXED = "fixed"
    TUNABLE = "tunable"


@dataclass(frozen=True)
class ChannelId:
    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"channel index must be >= 1, got {self.index}")

    @property
    def role(self) -> ChannelRole:
        if self.index == CONTROL_CHANNEL:
            return ChannelRole.CO_CONTROL
        if self.index in CO_CHANNELS:
            return ChannelRole.CO_DATA
        return ChannelRole.EDGE


@dataclass(frozen=True)
class ChannelSpec:
    line_rate_bps: int = 9_953_280_000
    payload_rate_bps: int = 9_000_000_000
    burst_overhead_ns: int = 1_000

    def __post_init__(self):
        if self.payload_rate_bps > self.line_rate_bps:
            raise ValueError("effective payload rate cannot exceed the line rate")
        if self.payload_rate_bps <= 0:
            raise ValueError("effective payload rate must be positive")
        if self.burst_overhead_ns < 0:
            raise ValueError("burst overhead must be non-negative")


@dataclass
class TransceiverState:
    owner: str
    kind: TransceiverKind
    current_channel: int
    tuning_until: int | None = None
    target_channel: int | None = None

    def is_tuning(self, now: int) -> bool:
        return self.tuning_until is not None and self.tuning_until > now


@dataclass(frozen=True)
class PlanUpdate:
    olt: str
    channel: ChannelId
    control: bool = False


@dataclass
class OnuOptics:
    fixed: TransceiverState
    tunable: TransceiverState | None = None


@guard(cycle_len_ns={"gt": 0}, n_bursts={"gte": 0})
def channel_capacity_per_cycle(spec: ChannelSpec, cycle_len_ns: int, n_bursts: int) -> int:
    """Payload bytes that fit in one cycle after per-burst overhead."""
    available_ns = cycle_len_ns - n_bursts * spec.burst_overhead_ns
    if available_ns < 0:
        raise CapacityError(
            f"{n_bursts} bursts x {spec.burst_overhead_ns} ns overhead exceed the {cycle_len_ns} ns cycle"
        )
    return spec.payload_rate_bps * available_ns // (8 * NS_PER_S)


def serialization_ns(n_bytes: int, rate_bps: int) -> int:
    return n_bytes * 8 * NS_PER_S // rate_bps


@dataclass
class WavelengthPlan:
    specs: dict[int, ChannelSpec] = field(default_factory=dict)
    tuning_time_ns: int = 1_000_000
    allow_sharing: bool = False
    assignments: dict[str, list[ChannelId]] = field(default_factory=dict)
    olt_kinds: dict[str, OltKind] = field(default_factory=dict)
    optics: dict[str, OnuOptics] = field(default_factory=dict)

    def spec(self, channel: int) -> ChannelSpec:
        try:
            return self.specs[channel]
        except KeyError:
            raise ChannelConflictError(f"channel {channel} is not part of the plan") from None

    @guard(olt={"node_id": True}, channel={"gte": 1})
    def assign_channel(self, olt: str, channel: int, kind: OltKind | str = OltKind.EDGE) -> PlanUpdate:
        channel_id = ChannelId(channel)
        kind = OltKind(kind)
        if kind is OltKind.EDGE and channel_id.role is not ChannelRole.EDGE:
            raise ChannelConflictError(f"edge OLT {olt} cannot operate on CO channel {channel}")
        if kind is OltKind.CO and channel_id.role is ChannelRole.EDGE:
            raise ChannelConflictError(f"CO OLT {olt} cannot operate on edge channel {channel}")
        self.spec(channel)

        holders = [other for other in self.olts_on(channel) if other != olt]
        if holders and not self.allow_sharing:
            raise ChannelConflictError(f"channel {channel} already assigned to {', '.join(holders)}")

        if kind is OltKind.EDGE:
            self.assignments[olt] = [channel_id]
        else:
            current = self.assignments.setdefault(olt, [])
            if channel_id not in current:
                current.append(channel_id)
        self.olt_kinds[olt] = kind
        update = PlanUpdate(olt, channel_id, control=channel_id.role is ChannelRole.CO_CONTROL)
        logger.debug("Assigned channel %d to %s%s", channel, olt, " (control+data)" if update.control else "")
        return update

    def channel_of(self, olt: str) -> int:
        """Operating (data) channel of an OLT: the first assigned channel."""
        return self.assignments[olt][0].index

    def olts_on(self, channel: int) -> list[str]:
        return sorted(
            (olt for olt, channels in self.assignments.items() if any(c.index == channel for c in channels)),
            key=natural_key,
        )

    def add_onu(self, onu: str, tunable_channel: int | None) -> OnuOptics:
        """Fixed transceiver on the control channel; optional tunable one for slice data."""
        optics = OnuOptics(fixed=TransceiverState(onu, TransceiverKind.FIXED, CONTROL_CHANNEL))
        if tunable_channel is not None:
            self.spec(tunable_channel)
            optics.tunable = TransceiverState(onu, TransceiverKind.TUNABLE, tunable_channel)
        self.optics[onu] = optics
        return optics

    def tunable(self, onu: str) -> TransceiverState | None:
        return self.optics[onu].tunable

    def data_channel(self, onu: str) -> int:
        optics = self.optics[onu]
        return (optics.tunable or optics.fixed).current_channel

    def tune_onu(self, onu: str, target_channel: int, t_start: int) -> int:
        transceiver = self.tunable(onu)
        if transceiver is None:
            raise TuningError(f"{onu} has no tunable transceiver")
        if transceiver.is_tuning(t_start) or transceiver.target_channel is not None:
            raise TuningError(f"{onu} is already tuning")
        self.spec(target_channel)
        completion = t_start + self.tuning_time_ns
        transceiver.tuning_until = completion
        transceiver.target_channel = target_channel
        return completion

    def complete_tuning(self, onu: str, now: int) -> None:
        transceiver = self.tunable(onu)
        if transceiver is None or transceiver.target_channel is None:
            raise TuningError(f"{onu} has no tuning in progress")
        if transceiver.tuning_until > now:
            raise TuningError(f"{onu} tuning completes at {transceiver.tuning_until}, not {now}")
        transceiver.current_channel = transceiver.target_channel
        transceiver.target_channel = None
        transceiver.tuning_until = None

    def can_transmit(self, onu: str, channel: int, now: int) -> bool:
        optics = self.optics.get(onu)
        if optics is None:
            return False
        transceiver = optics.tunable
        if transceiver is None:
            return optics.fixed.current_channel == channel
        return (
            transceiver.current_channel == channel
            and transceiver.target_channel is None
            and not transceiver.is_tuning(now)
        )


def plan_from_config(config) -> WavelengthPlan:
    """Channel plan for a resolved ``ScenarioConfig``: CO channels, edge OLTs, ONU optics."""
    wavelength = config.wavelength
    spec = ChannelSpec(
        line_rate_bps=wavelength.line_rate_bps,
        payload_rate_bps=wavelength.payload_rate_bps,
        burst_overhead_ns=us_to_ns(wavelength.burst_overhead_us),
    )
    channels = set(CO_CHANNELS) | set(wavelength.olts.values()) | set(wavelength.extra_channels)
    plan = WavelengthPlan(
        specs={channel: spec for channel in sorted(channels)},
        tuning_time_ns=ms_to_ns(wavelength.tuning_time_ms),
        allow_sharing=wavelength.allow_channel_sharing,
    )
    co_id = config.topology.co_id
    for olt in sorted(wavelength.olts, key=natural_key):
        plan.assign_channel(olt, wavelength.olts[olt], OltKind.CO if olt == co_id else OltKind.EDGE)

    home = {onu: entry.olt for entry in config.slices for onu in entry.members}
    for onu in config.topology.onus:
        if onu.kind == "residential":
            plan.add_onu(onu.id, None)
        else:
            olt = home.get(onu.id)
            plan.add_onu(onu.id, plan.channel_of(olt) if olt is not None else CONTROL_CHANNEL)
    return plan
