"""CO-resident vPON slice controller: latency monitoring, offload decisions, reconfiguration."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from vponsim.config import PolicyConfig, ScenarioConfig
from vponsim.core import EventHandle, EventRecord, Simulator
from vponsim.decorators import guard
from vponsim.exceptions import ControllerError, InvariantViolation, NoPathError
from vponsim.log_config import get_logger
from vponsim.metrics import ControlEvent, MetricsCollector
from vponsim.topology import OdnTopology
from vponsim.utils import NS_PER_MS, ms_to_ns, natural_key, us_to_ns
from vponsim.wavelength import CONTROL_CHANNEL, ChannelId, OltKind, WavelengthPlan

logger = get_logger(__name__)


class SliceState(str, Enum):
    ACTIVE = "active"
    DORMANT = "dormant"


class PolicyKind(str, Enum):
    UNBALANCED = "unbalanced"
    BALANCED = "balanced"


@dataclass
class VPonSlice:
    olt: str
    channel: ChannelId
    members: set[str] = field(default_factory=set)
    state: SliceState = SliceState.ACTIVE
    kind: OltKind = OltKind.EDGE

    @property
    def is_edge(self) -> bool:
        return self.kind is OltKind.EDGE


@dataclass(frozen=True)
class OffloadPolicy:
    kind: PolicyKind = PolicyKind.UNBALANCED
    threshold_us: float = 100.0
    trigger_fraction: float = 0.9
    window_ns: int = 100 * NS_PER_MS
    cooldown_ns: int = 200 * NS_PER_MS

    @property
    def trigger_level_us(self) -> float:
        return self.threshold_us * self.trigger_fraction

    @classmethod
    def from_config(cls, config: PolicyConfig) -> "OffloadPolicy":
        return cls(
            kind=PolicyKind(config.kind),
            threshold_us=config.threshold_us,
            trigger_fraction=config.trigger_fraction,
            window_ns=ms_to_ns(config.window_ms),
            cooldown_ns=ms_to_ns(config.cooldown_ms),
        )


@dataclass
class ReconfigPlan:
    onus_to_move: list[str]
    from_slice: str
    to_slice: str
    issue_time: int
    completions: dict[str, int | None] = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return len(self.completions) == len(self.onus_to_move) and all(
            t is not None for t in self.completions.values()
        )


class SliceFabric(Protocol):
    """Data-plane hooks the controller drives when membership changes."""

    def release_onu(self, olt: str, onu: str) -> None: ...

    def admit_onu(self, olt: str, onu: str) -> None: ...

    def start_olt(self, olt: str) -> None: ...

    def onu_load(self, onu: str, now: int) -> float: ...


def init_slices(config: ScenarioConfig, plan: WavelengthPlan) -> dict[str, VPonSlice]:
    co_id = config.topology.co_id
    cran = {onu.id for onu in config.topology.onus if onu.kind == "cran"}
    residential = sorted((onu.id for onu in config.topology.onus if onu.kind == "residential"), key=natural_key)

    slices: dict[str, VPonSlice] = {}
    seen: dict[str, str] = {}
    for entry in config.slices:
        state = SliceState(entry.state)
        kind = OltKind.CO if entry.olt == co_id else OltKind.EDGE
        if state is SliceState.DORMANT and entry.members:
            raise ControllerError(f"dormant OLT {entry.olt} cannot have members")
        for onu in entry.members:
            if onu not in cran:
                raise ControllerError(f"slice {entry.olt}: '{onu}' is not a C-RAN ONU")
            if onu in seen:
                raise ControllerError(f"{onu} is a member of both {seen[onu]} and {entry.olt}")
            if plan.tunable(onu) is None:
                raise ControllerError(f"{onu} lacks a tunable transceiver and cannot join slice {entry.olt}")
            seen[onu] = entry.olt
        slices[entry.olt] = VPonSlice(
            olt=entry.olt,
            channel=ChannelId(plan.channel_of(entry.olt)),
            members=set(entry.members),
            state=state,
            kind=kind,
        )

    if residential:
        co_slice = slices.get(co_id)
        if co_slice is None:
            co_slice = slices[co_id] = VPonSlice(co_id, ChannelId(CONTROL_CHANNEL), kind=OltKind.CO)
        co_slice.members.update(residential)
    return slices


@guard(policy={"choices": PolicyKind})
def select_onus(slice_: VPonSlice, policy: PolicyKind | str, loads: dict[str, float]) -> list[str]:
    """
    Rank members by load (highest first, lowest id on ties). Unbalanced moves the top
    ONU, balanced moves every other rank starting from the first.
    """
    if not slice_.members:
        raise ControllerError(f"slice {slice_.olt} has no members to offload")
    ranked = sorted(slice_.members, key=lambda onu: (-loads.get(onu, 0.0), natural_key(onu)))
    if PolicyKind(policy) is PolicyKind.UNBALANCED:
        return ranked[:1]
    return ranked[::2]


class SliceController:
    def __init__(
        self,
        sim: Simulator,
        slices: dict[str, VPonSlice],
        policy: OffloadPolicy,
        topology: OdnTopology,
        plan: WavelengthPlan,
        metrics: MetricsCollector,
        fabric: SliceFabric,
        *,
        cran_onus: list[str],
        co_id: str = "co",
        enabled: bool = True,
        monitor_interval_ns: int = 10 * NS_PER_MS,
        msg_proc_ns: int = 10_000,
        activation_delay_ns: int = 0,
    ):
        self.sim = sim
        self.slices = slices
        self.policy = policy
        self.topology = topology
        self.plan = plan
        self.metrics = metrics
        self.fabric = fabric
        self.cran_onus = cran_onus
        self.co_id = co_id
        self.enabled = enabled
        self.monitor_interval_ns = monitor_interval_ns
        self.msg_proc_ns = msg_proc_ns
        self.activation_delay_ns = activation_delay_ns

        self.last_reconfig: int | None = None
        self.in_flight: dict[str, ReconfigPlan] = {}
        self.plans: list[ReconfigPlan] = []
        self.deferred = 0
        self.stop_at: int | None = None
        self._activating: dict[str, EventHandle] = {}

        sim.on("tick", self._on_tick)
        sim.on("activate", self._on_activate)
        sim.on("ploam", self._on_ploam)
        sim.on("retuned", self._on_retuned)

    @classmethod
    def from_config(cls, sim, slices, config: PolicyConfig, topology, plan, metrics, fabric, cran_onus, co_id):
        return cls(
            sim,
            slices,
            OffloadPolicy.from_config(config),
            topology,
            plan,
            metrics,
            fabric,
            cran_onus=cran_onus,
            co_id=co_id,
            enabled=config.enabled,
            monitor_interval_ns=ms_to_ns(config.monitor_interval_ms),
            msg_proc_ns=us_to_ns(config.msg_proc_us),
            activation_delay_ns=ms_to_ns(config.activation_delay_ms),
        )

    def start(self, stop_at: int | None = None) -> None:
        self.stop_at = stop_at
        self.sim.schedule_event(self.sim.now + self.monitor_interval_ns, "tick")

    # ------------------------------------------------------------------ monitoring

    def monitor_latency(self, olt: str, now: int) -> float | None:
        return self.metrics.window_mean(olt, now)

    def _edge_slices(self) -> list[VPonSlice]:
        return [self.slices[olt] for olt in sorted(self.slices, key=natural_key) if self.slices[olt].is_edge]

    def find_target(self, source: str, now: int) -> VPonSlice | None:
        """Least-loaded active edge slice below the trigger level, else the first dormant one."""
        trigger = self.policy.trigger_level_us
        candidates = []
        for slice_ in self._edge_slices():
            if slice_.olt == source:
                continue
            if slice_.state is SliceState.ACTIVE or slice_.olt in self._activating:
                mean = self.monitor_latency(slice_.olt, now)
                mean = 0.0 if mean is None else mean
                if mean < trigger:
                    candidates.append((mean, natural_key(slice_.olt), slice_))
        if candidates:
            return min(candidates, key=lambda item: item[:2])[2]
        return next((s for s in self._edge_slices() if s.state is SliceState.DORMANT and s.olt != source), None)

    def should_offload(self, olt: str, now: int) -> bool:
        slice_ = self.slices[olt]
        if slice_.state is not SliceState.ACTIVE or not slice_.members:
            return False
        mean = self.monitor_latency(olt, now)
        if mean is None or mean < self.policy.trigger_level_us:
            return False
        if self.last_reconfig is not None and now < self.last_reconfig + self.policy.cooldown_ns:
            return False
        return self.find_target(olt, now) is not None

    def _on_tick(self, record: EventRecord) -> None:
        now = self.sim.now
        for slice_ in self.slices.values():
            if slice_.state is SliceState.ACTIVE:
                mean = self.monitor_latency(slice_.olt, now)
                if mean is not None:
                    self.metrics.note_window_mean(now, slice_.olt, mean)

        if self.enabled:
            for slice_ in self._edge_slices():
                if self.should_offload(slice_.olt, now):
                    self.offload(slice_.olt, now)
                    break

        next_tick = now + self.monitor_interval_ns
        if self.stop_at is None or next_tick <= self.stop_at:
            self.sim.schedule_event(next_tick, "tick")

    # ------------------------------------------------------------------ reconfiguration

    def offload(self, source: str, now: int) -> ReconfigPlan | None:
        target = self.find_target(source, now)
        if target is None:
            return None
        loads = {onu: self.fabric.onu_load(onu, now) for onu in self.slices[source].members}
        onus = select_onus(self.slices[source], self.policy.kind, loads)
        plan = ReconfigPlan(onus, source, target.olt, now)
        mean = self.monitor_latency(source, now)
        if not self.execute_reconfiguration(plan, now):
            return None
        self.metrics.note_control_event(ControlEvent(now, "offload", tuple(onus), source, target.olt, mean))
        logger.info(
            "t=%.3f s: offloading %s from %s to %s (window mean %.1f us)",
            now / 1e9,
            ", ".join(onus),
            source,
            target.olt,
            mean or 0.0,
        )
        return plan

    def execute_reconfiguration(self, plan: ReconfigPlan, now: int) -> list[EventHandle]:
        """
        Issue the per-ONU control chain: PLOAM on the control channel, rule update when
        needed, retune, and membership switch when tuning completes.
        """
        source = self.slices[plan.from_slice]
        target = self.slices[plan.to_slice]
        for onu in plan.onus_to_move:
            if onu not in source.members:
                raise ControllerError(f"{onu} is not a member of {source.olt}")
            transceiver = self.plan.tunable(onu)
            if transceiver is None:
                raise ControllerError(f"{onu} has no tunable transceiver")
            if transceiver.is_tuning(now) or transceiver.target_channel is not None:
                # retried once the cooldown expires
                self.last_reconfig = now
                self.deferred += 1
                logger.debug("Reconfiguration of %s deferred: %s is still tuning", source.olt, onu)
                return []

        ready_at = now
        if target.state is SliceState.DORMANT:
            activation = self._activating.get(target.olt) or self.activate_edge_olt(target.olt, now)
            ready_at = max(now, activation.fire_time)

        handles = []
        for onu in plan.onus_to_move:
            self.fabric.release_onu(source.olt, onu)
            source.members.discard(onu)
            self.in_flight[onu] = plan
            path = self.topology.resolve_path(self.co_id, onu, CONTROL_CHANNEL)
            arrival = ready_at + self.topology.propagation_delay_ns(path) + self.msg_proc_ns
            handles.append(self.sim.schedule_event(arrival, "ploam", (plan, onu)))

        self.plans.append(plan)
        self.last_reconfig = now
        self.check_partition()
        return handles

    @guard(olt={"node_id": True})
    def activate_edge_olt(self, olt: str, now: int) -> EventHandle:
        slice_ = self.slices.get(olt)
        if slice_ is None or not slice_.is_edge:
            raise ControllerError(f"{olt} is not an edge OLT")
        if slice_.state is SliceState.ACTIVE or olt in self._activating:
            raise ControllerError(f"edge OLT {olt} is already active")
        handle = self._activating[olt] = self.sim.schedule_event(now + self.activation_delay_ns, "activate", olt)
        return handle

    def install_slice_rules(self, olt: str) -> None:
        channel = self.slices[olt].channel.index
        home = self.topology.home_splitter(olt)
        self.topology.update_rules(home, reflect={channel}, xpass={channel})
        for neighbor in self.topology.xlink_neighbors(home):
            self.topology.update_rules(neighbor, xpass={channel})

    def _on_activate(self, record: EventRecord) -> None:
        olt = record.payload
        self.install_slice_rules(olt)
        self.slices[olt].state = SliceState.ACTIVE
        self._activating.pop(olt, None)
        self.fabric.start_olt(olt)
        self.metrics.note_control_event(ControlEvent(self.sim.now, "activate", (), "", olt))
        channel = self.slices[olt].channel.index
        logger.info("t=%.3f s: edge OLT %s activated on channel %d", self.sim.now / 1e9, olt, channel)

    def ensure_route(self, onu: str, olt: str) -> bool:
        """Install pass rules when the ONU cannot reach the OLT yet; return True if rules changed."""
        channel = self.slices[olt].channel.index
        try:
            self.topology.resolve_path(onu, olt, channel)
            return False
        except NoPathError:
            pass
        onu_home = self.topology.home_splitter(onu)
        olt_home = self.topology.home_splitter(olt)
        if onu_home == olt_home:
            self.topology.update_rules(onu_home, reflect={channel})
        else:
            self.topology.update_rules(onu_home, xpass={channel})
            self.topology.update_rules(olt_home, xpass={channel})
        self.topology.resolve_path(onu, olt, channel)
        return True

    def _on_ploam(self, record: EventRecord) -> None:
        plan, onu = record.payload
        now = self.sim.now
        if self.ensure_route(onu, plan.to_slice):
            self.metrics.note_control_event(ControlEvent(now, "rule-update", (onu,), plan.from_slice, plan.to_slice))
        channel = self.slices[plan.to_slice].channel.index
        completion = self.plan.tune_onu(onu, channel, now)
        plan.completions[onu] = None
        self.sim.schedule_event(completion, "retuned", (plan, onu))

    def _on_retuned(self, record: EventRecord) -> None:
        plan, onu = record.payload
        now = self.sim.now
        self.plan.complete_tuning(onu, now)
        target = self.slices[plan.to_slice]
        target.members.add(onu)
        del self.in_flight[onu]
        plan.completions[onu] = now
        self.fabric.admit_onu(target.olt, onu)
        self.metrics.note_control_event(ControlEvent(now, "retuned", (onu,), plan.from_slice, plan.to_slice))
        self.check_partition()

    def check_partition(self) -> None:
        """Every C-RAN ONU sits in exactly one slice or exactly one in-flight plan."""
        for onu in self.cran_onus:
            holders = sum(onu in slice_.members for slice_ in self.slices.values())
            holders += onu in self.in_flight
            if holders != 1:
                raise InvariantViolation(f"{onu} held by {holders} slices/plans")

    @property
    def offload_count(self) -> int:
        return len(self.plans)

