"""Wires topology, channel plan, traffic, schedulers and controller into one event-driven run."""

from dataclasses import dataclass, field

from vponsim.config import ScenarioConfig
from vponsim.controller import SliceController, SliceState, init_slices
from vponsim.core import EventRecord, Simulator
from vponsim.dba import DbaScheduler, OnuQueue, SchedInfo, transmit_burst
from vponsim.exceptions import InvariantViolation
from vponsim.log_config import get_logger
from vponsim.metrics import LatencySample, MetricsCollector
from vponsim.topology import build_topology
from vponsim.traffic import SPLIT_PROFILES, ErlangSchedule, RadioUnit, SplitKind, background_load, generate_tti_payload
from vponsim.utils import ceil_div, ms_to_ns, natural_key, s_to_ns, us_to_ns
from vponsim.wavelength import OltKind, plan_from_config

logger = get_logger(__name__)


@dataclass
class RunDiagnostics:
    frames_generated: int = 0
    frames_delivered: int = 0
    bytes_generated: int = 0
    bytes_delivered: int = 0
    events: int = 0
    per_olt: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def undelivered(self) -> int:
        return self.frames_generated - self.frames_delivered

    def as_dict(self) -> dict:
        return {
            "frames_generated": self.frames_generated,
            "frames_delivered": self.frames_delivered,
            "undelivered": self.undelivered,
            "bytes_generated": self.bytes_generated,
            "bytes_delivered": self.bytes_delivered,
            "events": self.events,
            "per_olt": self.per_olt,
        }


class FronthaulSimulation:
    """One scenario run. Build with a resolved config, then call :meth:`run` once."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.sim = Simulator(config.run.master_seed)
        self.topology = build_topology(config.topology)
        self.plan = plan_from_config(config)
        self.metrics = MetricsCollector(window_ns=ms_to_ns(config.policy.window_ms))
        self.slices = init_slices(config, self.plan)
        self.diagnostics = RunDiagnostics()

        traffic = config.traffic
        self.tti_ns = us_to_ns(traffic.tti_us)
        self.cycle_ns = us_to_ns(config.dba.cycle_us)
        if self.cycle_ns * config.dba.grants_per_tti != self.tti_ns:
            raise InvariantViolation(
                f"{config.dba.grants_per_tti} cycles of {self.cycle_ns} ns do not cover a {self.tti_ns} ns TTI"
            )
        self.traffic_end = s_to_ns(config.run.warmup_s + config.run.duration_s)
        self.warmup_end = s_to_ns(config.run.warmup_s)
        self.end = self.traffic_end + (s_to_ns(config.run.drain_limit_s) if config.run.drain else 0)

        self.cran_onus = sorted((o.id for o in config.topology.onus if o.kind == "cran"), key=natural_key)
        self.queues = {onu: OnuQueue(onu) for onu in self.cran_onus}
        self.radio_units = self._build_radio_units()
        self.schedulers = self._build_schedulers()
        self.home: dict[str, str] = {
            onu: olt for olt, slice_ in self.slices.items() for onu in slice_.members if onu in self.queues
        }
        self.stash: dict[str, list[SchedInfo]] = {}
        self._last_delivered: dict[str, tuple[int, int]] = {}
        self._running: set[str] = set()

        self.controller = SliceController.from_config(
            self.sim,
            self.slices,
            config.policy,
            self.topology,
            self.plan,
            self.metrics,
            self,
            cran_onus=self.cran_onus,
            co_id=config.topology.co_id,
        )
        for olt, slice_ in self.slices.items():
            if slice_.state is SliceState.ACTIVE and slice_.is_edge:
                self.controller.install_slice_rules(olt)
        for olt, slice_ in self.slices.items():
            for onu in slice_.members:
                if onu in self.queues:
                    self.controller.ensure_route(onu, olt)

        self.sim.on("tti", self._on_tti)
        self.sim.on("cycle", self._on_cycle)
        self.sim.on("burst", self._on_burst)
        self.sim.on("deliver", self._on_deliver)

    def _build_radio_units(self) -> dict[str, RadioUnit]:
        traffic = self.config.traffic
        profile = SPLIT_PROFILES[SplitKind(traffic.split)]
        schedule = ErlangSchedule(traffic.erlang, traffic.ramp)
        units = {}
        for onu in self.cran_onus:
            units[onu] = RadioUnit(
                onu,
                profile,
                schedule,
                mean_holding_s=traffic.mean_holding_s,
                n_full=traffic.n_full,
                arrivals=self.sim.stream(f"arrivals/{onu}"),
                holding=self.sim.stream(f"holding/{onu}"),
                processing=self.sim.stream(f"processing/{onu}"),
                tti_ns=self.tti_ns,
                grants_per_tti=self.config.dba.grants_per_tti,
                processing_max_ns=us_to_ns(traffic.processing_max_us),
                load_window_ns=ms_to_ns(self.config.policy.window_ms),
            )
        return units

    def _build_schedulers(self) -> dict[str, DbaScheduler]:
        schedulers = {}
        for olt, slice_ in self.slices.items():
            reservation = None
            if slice_.kind is OltKind.CO:
                reservation = background_load(slice_.channel.index, self.config.traffic.background_fraction)
            scheduler = DbaScheduler(
                olt,
                slice_.channel,
                self.plan.spec(slice_.channel.index),
                cycle_ns=self.cycle_ns,
                grants_per_tti=self.config.dba.grants_per_tti,
                reservation=reservation,
                burst_order=self.config.dba.burst_order,
            )
            scheduler.members.update(onu for onu in slice_.members if onu in self.queues)
            schedulers[olt] = scheduler
        return schedulers

    # ------------------------------------------------------------------ fabric hooks

    def release_onu(self, olt: str, onu: str) -> None:
        self.stash.setdefault(onu, []).extend(self.schedulers[olt].release(onu))
        self.home.pop(onu, None)

    def admit_onu(self, olt: str, onu: str) -> None:
        scheduler = self.schedulers[olt]
        built = scheduler.last_built_cycle
        per_tti = scheduler.grants_per_tti
        pending = [info for info in self.stash.pop(onu, []) if (info.tti_index + 1) * per_tti - 1 > built]
        scheduler.admit(onu, pending, self.queues[onu].pending_through(built))
        self.home[onu] = olt

    def start_olt(self, olt: str) -> None:
        if olt in self._running:
            return
        self._running.add(olt)
        first = ceil_div(self.sim.now, self.cycle_ns)
        self.schedulers[olt].last_built_cycle = first - 1
        self.sim.schedule_event(first * self.cycle_ns, "cycle", (olt, first))

    def onu_load(self, onu: str, now: int) -> float:
        return self.radio_units[onu].offered_load(now)

    # ------------------------------------------------------------------ event handlers

    def _announce(self, onu: str, tti_index: int) -> None:
        unit = self.radio_units[onu]
        payload = generate_tti_payload(unit, tti_index, unit.processing)
        queue = self.queues[onu]
        for frame in payload.frames:
            queue.enqueue(frame)
        self.diagnostics.frames_generated += len(payload.frames)
        self.diagnostics.bytes_generated += payload.size

        info = SchedInfo(onu, tti_index, payload.size, self.sim.now, payload.processing_delay_ns)
        olt = self.home.get(onu)
        if olt is None:
            self.stash.setdefault(onu, []).append(info)
        else:
            self.schedulers[olt].ingest_scheduling_info(info)

    def _on_tti(self, record: EventRecord) -> None:
        tti_index = record.payload
        now = self.sim.now
        upcoming = [tti_index, tti_index + 1] if tti_index == 0 else [tti_index + 1]
        for onu in self.cran_onus:
            self.radio_units[onu].sample_load(now)
            for announced in upcoming:
                if announced * self.tti_ns < self.traffic_end:
                    self._announce(onu, announced)
        if (tti_index + 2) * self.tti_ns < self.traffic_end:
            self.sim.schedule_event((tti_index + 1) * self.tti_ns, "tti", tti_index + 1)

    def _on_cycle(self, record: EventRecord) -> None:
        olt, cycle_index = record.payload
        now = self.sim.now
        scheduler = self.schedulers[olt]
        bwmap = scheduler.build_bwmap(cycle_index)
        for grant in bwmap.grants:
            self.sim.schedule_event(now + grant.start_offset, "burst", (olt, grant))

        next_start = now + self.cycle_ns
        if next_start < self.traffic_end or (next_start < self.end and self._has_backlog(scheduler)):
            self.sim.schedule_event(next_start, "cycle", (olt, cycle_index + 1))
        else:
            self._running.discard(olt)

    def _has_backlog(self, scheduler: DbaScheduler) -> bool:
        return scheduler.has_demand() or any(self.queues[onu].depth_bytes for onu in scheduler.members)

    def _on_burst(self, record: EventRecord) -> None:
        olt, grant = record.payload
        now = self.sim.now
        scheduler = self.schedulers[olt]
        channel = scheduler.channel.index
        if grant.onu not in scheduler.members or not self.plan.can_transmit(grant.onu, channel, now):
            scheduler.note_skipped(grant)
            return
        propagation = self.topology.path_delay_ns(grant.onu, olt, channel)
        result = transmit_burst(self.queues[grant.onu], grant, now, scheduler.spec, propagation)
        for frame, arrival in result.deliveries:
            frame.olt = olt
            self.sim.schedule_event(arrival, "deliver", (frame, propagation))
        scheduler.settle(grant.onu, result.sent, result.wasted)

    def _on_deliver(self, record: EventRecord) -> None:
        frame, propagation = record.payload
        now = self.sim.now
        order = (frame.tti_index, frame.segment)
        last = self._last_delivered.get(frame.ru)
        if last is not None and order <= last:
            raise InvariantViolation(f"{frame.ru}: message {order} delivered after {last}")
        self._last_delivered[frame.ru] = order
        frame.t_delivered = now
        self.metrics.record_sample(LatencySample(now, frame.olt, frame.ru, now - frame.t_ready), propagation)
        self.queues[frame.ru].delivered_bytes += frame.size
        self.diagnostics.frames_delivered += 1
        self.diagnostics.bytes_delivered += frame.size

    # ------------------------------------------------------------------ run

    def run(self) -> MetricsCollector:
        logger.info(
            "Running scenario '%s': %d C-RAN ONUs, %.1f s of traffic%s",
            self.config.name,
            len(self.cran_onus),
            self.traffic_end / 1e9,
            " + drain" if self.config.run.drain else "",
        )
        for onu in self.cran_onus:
            self.radio_units[onu].start(0)
        self.sim.schedule_event(0, "tti", 0)
        for olt, slice_ in sorted(self.slices.items(), key=lambda item: natural_key(item[0])):
            if slice_.state is SliceState.ACTIVE:
                self.start_olt(olt)
        self.controller.start(stop_at=self.traffic_end)

        self.diagnostics.events = self.sim.run_until(self.end)
        self.diagnostics.per_olt = {olt: s.diagnostics() for olt, s in sorted(self.schedulers.items())}
        self.metrics.undelivered = self.diagnostics.undelivered
        if self.diagnostics.undelivered:
            logger.info("%d messages still queued or in flight at the end of the run", self.diagnostics.undelivered)
        return self.metrics

    def conservation(self) -> dict[str, tuple[int, int]]:
        """Per-ONU (enqueued bytes, delivered bytes)."""
        return {onu: (queue.enqueued_bytes, queue.delivered_bytes) for onu, queue in self.queues.items()}
