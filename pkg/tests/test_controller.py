import dataclasses

import numpy as np
import pytest

from vponsim.config import SliceConfig
from vponsim.controller import (
    OffloadPolicy,
    PolicyKind,
    ReconfigPlan,
    SliceController,
    SliceState,
    VPonSlice,
    init_slices,
    select_onus,
)
from vponsim.core import Simulator
from vponsim.exceptions import ControllerError, GuardValidationError
from vponsim.metrics import LatencySample, MetricsCollector
from vponsim.scenario import load_scenario
from vponsim.topology import build_topology
from vponsim.wavelength import ChannelId, plan_from_config

MS = 1_000_000


class RecordingFabric:
    def __init__(self):
        self.calls = []
        self.loads = {}

    def release_onu(self, olt, onu):
        self.calls.append(("release", olt, onu))

    def admit_onu(self, olt, onu):
        self.calls.append(("admit", olt, onu))

    def start_olt(self, olt):
        self.calls.append(("start", olt))

    def onu_load(self, onu, now):
        return self.loads.get(onu, 0.0)


def build_controller(kind: str = "unbalanced", msg_proc_ns: int = 0, activation_delay_ns: int = 0):
    config = load_scenario("fig3", {"policy": kind})
    sim = Simulator(1)
    topology = build_topology(config.topology)
    plan = plan_from_config(config)
    slices = init_slices(config, plan)
    metrics = MetricsCollector(window_ns=100 * MS)
    fabric = RecordingFabric()
    controller = SliceController(
        sim,
        slices,
        OffloadPolicy(kind=PolicyKind(kind)),
        topology,
        plan,
        metrics,
        fabric,
        cran_onus=[f"onu{i}" for i in range(1, 13)],
        msg_proc_ns=msg_proc_ns,
        activation_delay_ns=activation_delay_ns,
    )
    controller.install_slice_rules("olt1")
    return controller


def feed(controller: SliceController, olt: str, latency_us: float, t_ns: int, count: int = 10) -> None:
    for i in range(count):
        controller.metrics.record_sample(LatencySample(t_ns - i, olt, "onu1", int(latency_us * 1000)))


# ============================================================================
# Selection
# ============================================================================


def make_slice(*members) -> VPonSlice:
    return VPonSlice("olt1", ChannelId(5), set(members))


LOADS = {"onu1": 10.0, "onu2": 30.0, "onu3": 20.0, "onu4": 30.0, "onu5": 5.0, "onu6": 0.0}


def test_unbalanced_moves_the_heaviest_onu():
    assert select_onus(make_slice(*LOADS), "unbalanced", LOADS) == ["onu2"]


def test_balanced_moves_every_other_rank():
    assert select_onus(make_slice(*LOADS), PolicyKind.BALANCED, LOADS) == ["onu2", "onu3", "onu5"]


def test_ties_break_on_natural_id():
    members = [f"onu{i}" for i in range(1, 13)]

    assert select_onus(make_slice(*members), "balanced", {}) == ["onu1", "onu3", "onu5", "onu7", "onu9", "onu11"]
    assert select_onus(make_slice("onu10", "onu2"), "unbalanced", {}) == ["onu2"]


def test_selection_from_empty_slice():
    with pytest.raises(ControllerError):
        select_onus(make_slice(), "unbalanced", {})


def test_unknown_policy_rejected():
    with pytest.raises(GuardValidationError):
        select_onus(make_slice("onu1"), "random", {})


# ============================================================================
# Offload trigger
# ============================================================================


def test_trigger_level():
    assert OffloadPolicy(threshold_us=100.0).trigger_level_us == pytest.approx(90.0)


def test_offload_above_trigger():
    controller = build_controller()
    feed(controller, "olt1", 92.0, 500 * MS)

    assert controller.should_offload("olt1", 500 * MS)


def test_no_offload_below_trigger():
    controller = build_controller()
    feed(controller, "olt1", 80.0, 500 * MS)

    assert not controller.should_offload("olt1", 500 * MS)


def test_no_offload_within_cooldown():
    controller = build_controller()
    feed(controller, "olt1", 92.0, 500 * MS)
    controller.last_reconfig = 400 * MS

    assert not controller.should_offload("olt1", 500 * MS)
    assert controller.should_offload("olt1", 600 * MS - 1) is False
    feed(controller, "olt1", 92.0, 600 * MS)
    assert controller.should_offload("olt1", 600 * MS)


def test_no_offload_without_samples():
    assert not build_controller().should_offload("olt1", 500 * MS)


def test_dormant_slice_is_the_fallback_target():
    controller = build_controller()

    assert controller.find_target("olt1", 0).olt == "olt2"


def test_overloaded_active_slice_is_not_a_target():
    controller = build_controller()
    controller.slices["olt2"].state = SliceState.ACTIVE
    feed(controller, "olt2", 95.0, 10 * MS)

    assert controller.find_target("olt1", 10 * MS) is None


# ============================================================================
# Reconfiguration
# ============================================================================


def test_ploam_timing_and_retune():
    controller = build_controller()
    plan = ReconfigPlan(["onu1"], "olt1", "olt2", 0)

    handles = controller.execute_reconfiguration(plan, 0)

    assert [handle.fire_time for handle in handles] == [251_500]
    assert "onu1" not in controller.slices["olt1"].members
    assert "onu1" in controller.in_flight

    controller.sim.run_until(251_500)
    assert controller.plan.tunable("onu1").tuning_until == 1_251_500
    assert controller.slices["olt2"].state is SliceState.ACTIVE
    assert not plan.done

    controller.sim.run_until(2 * MS)
    assert plan.done
    assert plan.completions["onu1"] == 1_251_500
    assert controller.slices["olt2"].members == {"onu1"}
    assert controller.plan.data_channel("onu1") == 6
    assert controller.fabric.calls == [("release", "olt1", "onu1"), ("start", "olt2"), ("admit", "olt2", "onu1")]


def test_message_processing_delay_adds_to_ploam():
    controller = build_controller(msg_proc_ns=10_000)

    handles = controller.execute_reconfiguration(ReconfigPlan(["onu7"], "olt1", "olt2", 0), 0)

    assert handles[0].fire_time == 261_500


def test_activation_precedes_ploam():
    controller = build_controller(activation_delay_ns=5 * MS)
    order = []
    controller.sim.observe(lambda record: order.append((record.kind, record.fire_time)))

    controller.execute_reconfiguration(ReconfigPlan(["onu1", "onu2"], "olt1", "olt2", 0), 0)
    controller.sim.run_until(10 * MS)

    assert order[0] == ("activate", 5 * MS)
    assert order[1:3] == [("ploam", 5 * MS + 251_500)] * 2
    assert [kind for kind, _ in order[3:]] == ["retuned", "retuned"]


def test_double_activation_rejected():
    controller = build_controller(activation_delay_ns=5 * MS)
    controller.activate_edge_olt("olt2", 0)

    with pytest.raises(ControllerError, match="already active"):
        controller.activate_edge_olt("olt2", 0)
    with pytest.raises(ControllerError):
        controller.activate_edge_olt("olt1", 0)


def test_second_offload_during_activation_does_not_reactivate():
    controller = build_controller(activation_delay_ns=5 * MS)
    controller.execute_reconfiguration(ReconfigPlan(["onu1"], "olt1", "olt2", 0), 0)
    controller.execute_reconfiguration(ReconfigPlan(["onu2"], "olt1", "olt2", 1 * MS), 1 * MS)

    controller.sim.run_until(10 * MS)

    assert controller.slices["olt2"].members == {"onu1", "onu2"}
    assert controller.fabric.calls.count(("start", "olt2")) == 1


def test_activation_installs_slice_rules():
    controller = build_controller()
    controller.activate_edge_olt("olt2", 0)
    controller.sim.run_until(0)

    topology = controller.topology
    assert 6 in topology.rules["spl-b"].reflect_set
    assert 6 in topology.rules["spl-b"].xpass_set
    assert 6 in topology.rules["spl-a"].xpass_set
    assert topology.resolve_path("onu1", "olt2", 6).total_length_km == pytest.approx(1.6)
    assert topology.resolve_path("onu7", "olt2", 6).total_length_km == pytest.approx(0.6)


def test_offload_logs_control_event():
    controller = build_controller()
    controller.fabric.loads = {"onu3": 20.0}
    feed(controller, "olt1", 92.0, 500 * MS)
    controller.sim.run_until(500 * MS)

    plan = controller.offload("olt1", 500 * MS)

    assert plan.onus_to_move == ["onu3"]
    event = controller.metrics.control_events[0]
    assert (event.action, event.onus, event.from_slice, event.to_slice) == ("offload", ("onu3",), "olt1", "olt2")
    assert event.value_us == pytest.approx(92.0)
    assert controller.last_reconfig == 500 * MS
    assert controller.offload_count == 1


def test_onu_still_tuning_defers_reconfiguration():
    controller = build_controller()
    controller.execute_reconfiguration(ReconfigPlan(["onu1"], "olt1", "olt2", 0), 0)
    controller.sim.run_until(300_000)
    controller.slices["olt1"].members.add("onu1")
    del controller.in_flight["onu1"]

    handles = controller.execute_reconfiguration(ReconfigPlan(["onu1"], "olt1", "olt2", 300_000), 300_000)

    assert handles == []
    assert controller.deferred == 1
    assert controller.last_reconfig == 300_000


def test_tick_stops_after_traffic_end():
    controller = build_controller()
    controller.start(stop_at=50 * MS)

    executed = controller.sim.run_until(200 * MS)

    assert executed == 5


def test_random_reconfigurations_keep_partition():
    controller = build_controller()
    rng = np.random.default_rng(7)
    onus = [f"onu{i}" for i in range(1, 13)]

    for step in range(120):
        now = controller.sim.now
        populated = [olt for olt in ("olt1", "olt2") if controller.slices[olt].members]
        source = populated[rng.integers(len(populated))]
        target = "olt2" if source == "olt1" else "olt1"
        members = sorted(controller.slices[source].members)
        count = int(rng.integers(1, min(3, len(members)) + 1))
        moving = [str(onu) for onu in rng.choice(members, size=count, replace=False)]
        controller.execute_reconfiguration(ReconfigPlan(moving, source, target, now), now)
        controller.sim.run_until(now + 3 * MS)

        controller.check_partition()
        assert not controller.in_flight
        assert controller.slices["olt1"].members | controller.slices["olt2"].members == set(onus)

    assert controller.offload_count == 120


# ============================================================================
# Slice initialization
# ============================================================================


def test_fig3_slices():
    controller = build_controller()
    slices = controller.slices

    assert slices["olt1"].members == {f"onu{i}" for i in range(1, 13)}
    assert slices["olt2"].state is SliceState.DORMANT
    assert slices["co"].members == {f"res{i}" for i in range(1, 13)}
    assert not slices["co"].is_edge


def _with_slices(*entries):
    config = load_scenario("fig3")
    return dataclasses.replace(config, slices=tuple(entries))


@pytest.mark.parametrize(
    ("entries", "message"),
    [
        ((SliceConfig("olt1", members=("onu1",)), SliceConfig("olt2", "dormant", ("onu2",))), "dormant"),
        ((SliceConfig("olt1", members=("res1",)),), "not a C-RAN ONU"),
        ((SliceConfig("olt1", members=("onu1",)), SliceConfig("olt2", members=("onu1",))), "both"),
    ],
)
def test_invalid_slices(entries, message):
    config = _with_slices(*entries)

    with pytest.raises(ControllerError, match=message):
        init_slices(config, plan_from_config(config))
