import pytest

from vponsim.dba import BwMap, DbaScheduler, Grant, OnuQueue, SchedInfo, frame_latency, transmit_burst
from vponsim.exceptions import GuardValidationError, InvariantViolation
from vponsim.traffic import EcpriFrame, background_load, split_payload
from vponsim.wavelength import ChannelId, ChannelSpec

CYCLE_NS = 125_000
TTI_NS = 1_000_000
SPEC = ChannelSpec()
PROPAGATION_NS = 3_000  # 0.6 km


def make_scheduler(*members, **kwargs) -> DbaScheduler:
    scheduler = DbaScheduler("olt1", ChannelId(5), SPEC, **kwargs)
    scheduler.members.update(members)
    return scheduler


def make_frames(onu: str, tti_index: int, size: int, ready_offset: int) -> list[EcpriFrame]:
    frames = []
    for segment, share in enumerate(split_payload(size, 8)):
        ready = tti_index * TTI_NS + ready_offset + segment * CYCLE_NS
        cycle = tti_index * 8 + segment
        frames.append(EcpriFrame(onu, tti_index, segment, cycle, share, tti_index * TTI_NS, ready, ready))
    return frames


def run_cycle(scheduler: DbaScheduler, queues: dict[str, OnuQueue], cycle_index: int) -> list[EcpriFrame]:
    delivered = []
    bwmap = scheduler.build_bwmap(cycle_index)
    for grant in bwmap.grants:
        start = cycle_index * CYCLE_NS + grant.start_offset
        result = transmit_burst(queues[grant.onu], grant, start, SPEC, PROPAGATION_NS)
        for frame, arrival in result.deliveries:
            frame.t_delivered = arrival
            delivered.append(frame)
        scheduler.settle(grant.onu, result.sent, result.wasted)
    return delivered


# ============================================================================
# Hand-computed schedule
# ============================================================================


def test_two_onu_schedule_over_four_ttis():
    """1,000 B and 2,000 B per cycle, ready 10 us and 20 us into each cycle."""
    scheduler = make_scheduler("onu1", "onu2")
    queues = {"onu1": OnuQueue("onu1"), "onu2": OnuQueue("onu2")}
    payloads = {"onu1": (8_000, 10_000), "onu2": (16_000, 20_000)}

    delivered = []
    for tti in range(4):
        for onu, (size, ready_offset) in payloads.items():
            scheduler.ingest_scheduling_info(SchedInfo(onu, tti, size, max(tti - 1, 0) * TTI_NS, ready_offset))
            for frame in make_frames(onu, tti, size, ready_offset):
                queues[onu].enqueue(frame)
        for cycle in range(tti * 8, tti * 8 + 8):
            delivered.extend(run_cycle(scheduler, queues, cycle))

    assert len(delivered) == 64
    for frame in delivered:
        cycle_start = frame.cycle_index * CYCLE_NS
        if frame.ru == "onu1":
            assert frame.t_delivered == cycle_start + 14_888
            assert frame_latency(frame) == pytest.approx(4.888)
        else:
            assert frame.t_delivered == cycle_start + 25_777
            assert frame_latency(frame) == pytest.approx(5.777)
    assert scheduler.wasted_bytes == 0
    assert scheduler.late_info == 0
    assert all(len(queue) == 0 for queue in queues.values())


def test_first_bwmap_layout():
    scheduler = make_scheduler("onu1", "onu2")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 0, 8_000, 0, 10_000))
    scheduler.ingest_scheduling_info(SchedInfo("onu2", 0, 16_000, 0, 20_000))

    bwmap = scheduler.build_bwmap(0)

    assert [(g.onu, g.start_offset, g.size) for g in bwmap.grants] == [("onu1", 10_000, 1_000), ("onu2", 20_000, 2_000)]
    assert bwmap.capacity == 138_375
    assert bwmap.grant_for("onu3") is None


# ============================================================================
# Saturation
# ============================================================================


def test_proportional_scaling_of_twelve_full_cells():
    onus = [f"onu{i}" for i in range(1, 13)]
    scheduler = make_scheduler(*onus)
    for onu in onus:
        scheduler.ingest_scheduling_info(SchedInfo(onu, 0, 307_125, 0, 0))

    bwmap = scheduler.build_bwmap(0)

    sizes = {grant.onu: grant.size for grant in bwmap.grants}
    assert bwmap.capacity == 127_125
    assert bwmap.total_bytes == 127_125
    assert [sizes[onu] for onu in onus] == [10_594] * 9 + [10_593] * 3
    assert scheduler.saturated_cycles == 1
    last = bwmap.grants[-1]
    assert last.start_offset + 1_000 + (last.size * 8_000 // 9_000) <= CYCLE_NS


def test_unsent_demand_carries_over():
    scheduler = make_scheduler("onu1")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 0, 8_000, 0, 0))
    first = scheduler.build_bwmap(0)
    scheduler.settle("onu1", 400, first.grants[0].size - 400)

    second = scheduler.build_bwmap(1)

    assert second.grants[0].size == 1_600
    assert second.grants[0].earliest == 0


def test_grant_of_empty_onu_is_wasted():
    queue = OnuQueue("onu1")
    for frame in make_frames("onu1", 0, 32_000, 0)[:1]:
        queue.enqueue(frame)
    grant = Grant("onu1", 0, 0, 10_000)

    result = transmit_burst(queue, grant, 0, SPEC, PROPAGATION_NS)

    assert (result.sent, result.wasted) == (4_000, 6_000)
    assert queue.depth_bytes == 0


def test_partial_frame_stays_queued():
    queue = OnuQueue("onu1")
    for frame in make_frames("onu1", 0, 32_000, 0)[:1]:
        queue.enqueue(frame)

    result = transmit_burst(queue, Grant("onu1", 0, 0, 2_500), 0, SPEC, PROPAGATION_NS)

    assert result.deliveries == []
    assert queue.frames[0].remaining == 1_500
    assert queue.depth_bytes == 1_500


def test_delivery_time_includes_burst_overhead():
    queue = OnuQueue("onu1")
    for frame in make_frames("onu1", 0, 72_000, 0)[:1]:
        queue.enqueue(frame)

    result = transmit_burst(queue, Grant("onu1", 0, 20_000, 9_000), 20_000, SPEC, PROPAGATION_NS)

    [(frame, arrival)] = result.deliveries
    # 1 us guard and preamble, then 9,000 B at 9 Gb/s
    assert arrival == 20_000 + SPEC.burst_overhead_ns + 8_000 + PROPAGATION_NS


def test_frames_not_ready_are_not_sent():
    queue = OnuQueue("onu1")
    for frame in make_frames("onu1", 0, 8_000, 50_000):
        queue.enqueue(frame)

    result = transmit_burst(queue, Grant("onu1", 0, 10_000, 1_000), 10_000, SPEC, PROPAGATION_NS)

    assert result.sent == 0
    assert result.wasted == 1_000


def test_background_share_shrinks_window():
    scheduler = make_scheduler("onu1", reservation=background_load(1, 0.3))
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 0, 307_125, 0, 0))

    bwmap = scheduler.build_bwmap(0)

    assert bwmap.window_ns == 125_000 - 37_200
    assert bwmap.total_bytes <= bwmap.capacity
    assert bwmap.grants[0].size == 38_391


# ============================================================================
# Scheduling info handling
# ============================================================================


def test_late_info_moves_to_next_tti():
    scheduler = make_scheduler("onu1")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 2, 8_000, 2 * TTI_NS + 1, 0))

    assert scheduler.late_info == 1
    for cycle in range(16, 24):
        assert scheduler.build_bwmap(cycle).grants == []
    assert scheduler.build_bwmap(24).grants[0].size == 1_000


def test_late_info_merges_with_next_tti():
    scheduler = make_scheduler("onu1")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 3, 8_000, 2 * TTI_NS, 0))
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 2, 8_000, 2 * TTI_NS + 5, 0))

    assert scheduler.build_bwmap(24).grants[0].size == 2_000


def test_zero_payload_gets_no_grant():
    scheduler = make_scheduler("onu1", "onu2")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 0, 0, 0, 0))
    scheduler.ingest_scheduling_info(SchedInfo("onu2", 0, 8_000, 0, 0))

    bwmap = scheduler.build_bwmap(0)

    assert [grant.onu for grant in bwmap.grants] == ["onu2"]


def test_burst_order_by_onu():
    scheduler = make_scheduler("onu1", "onu2", burst_order="onu")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 0, 8_000, 0, 60_000))
    scheduler.ingest_scheduling_info(SchedInfo("onu2", 0, 8_000, 0, 5_000))

    grants = scheduler.build_bwmap(0).grants

    assert [grant.onu for grant in grants] == ["onu1", "onu2"]
    assert grants[1].start_offset >= grants[0].start_offset + 1_888


def test_crowded_tail_is_fitted_backwards():
    scheduler = make_scheduler("onu1", "onu2", "onu3")
    for onu, ready in (("onu1", 100_000), ("onu2", 101_000), ("onu3", 102_000)):
        scheduler.ingest_scheduling_info(SchedInfo(onu, 0, 80_000, 0, ready))

    grants = scheduler.build_bwmap(0).grants

    assert [grant.start_offset for grant in grants] == [95_336, 105_224, 115_112]
    assert grants[-1].start_offset + 9_888 == CYCLE_NS


def test_burst_without_room_after_ready_phase_waits_a_cycle():
    scheduler = make_scheduler("onu1")
    queue = OnuQueue("onu1")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 0, 80_000, 0, 120_000))
    for frame in make_frames("onu1", 0, 80_000, 120_000):
        queue.enqueue(frame)

    assert run_cycle(scheduler, {"onu1": queue}, 0) == []
    assert scheduler.deferred_bursts == 1

    grant = scheduler.build_bwmap(1).grants[0]
    assert (grant.start_offset, grant.size, grant.earliest) == (0, 10_000, 0)
    result = transmit_burst(queue, grant, CYCLE_NS, SPEC, PROPAGATION_NS)
    scheduler.settle("onu1", result.sent, result.wasted)

    ((frame, arrival),) = result.deliveries
    assert frame.segment == 0
    assert arrival - frame.t_ready == 5_000 + 9_888 + PROPAGATION_NS
    assert scheduler.due["onu1"] == 10_000


def test_congested_cycle_grants_full_capacity():
    """A late ready phase does not hold a burst back while the cycle is oversubscribed."""
    scheduler = make_scheduler("onu1", "onu2")
    scheduler.ingest_scheduling_info(SchedInfo("onu1", 0, 480_000, 0, 0))
    scheduler.ingest_scheduling_info(SchedInfo("onu2", 0, 720_000, 0, 100_000))

    bwmap = scheduler.build_bwmap(0)

    assert bwmap.capacity == 138_375
    assert bwmap.total_bytes == bwmap.capacity
    assert [(g.onu, g.start_offset, g.size) for g in bwmap.grants] == [("onu1", 0, 55_350), ("onu2", 50_200, 83_025)]
    assert scheduler.deferred_bursts == 0


def test_release_and_admit():
    source, target = make_scheduler("onu1"), make_scheduler("onu2")
    source.ingest_scheduling_info(SchedInfo("onu1", 1, 8_000, 0, 0))
    source.build_bwmap(7)

    pending = source.release("onu1")
    target.admit("onu1", pending, due=500)

    assert "onu1" not in source.members
    assert source.build_bwmap(8).grants == []
    assert [info.tti_index for info in pending] == [1]
    grant = target.build_bwmap(8).grant_for("onu1")
    assert grant.size == 1_500


def test_unknown_burst_order_rejected():
    with pytest.raises(GuardValidationError):
        make_scheduler("onu1", burst_order="random")


# ============================================================================
# Invariants
# ============================================================================


def test_capacity_violation_raises():
    scheduler = make_scheduler("onu1")
    bwmap = BwMap("olt1", ChannelId(5), 0, [Grant("onu1", 0, 0, 200_000)], capacity=140_625, window_ns=CYCLE_NS)

    with pytest.raises(InvariantViolation, match="capacity"):
        scheduler._check(bwmap)


def test_overlap_violation_raises():
    scheduler = make_scheduler("onu1", "onu2")
    grants = [Grant("onu1", 0, 0, 9_000), Grant("onu2", 0, 5_000, 9_000)]
    bwmap = BwMap("olt1", ChannelId(5), 0, grants, capacity=140_625, window_ns=CYCLE_NS)

    with pytest.raises(InvariantViolation, match="overlaps"):
        scheduler._check(bwmap)


def test_out_of_order_enqueue_raises():
    queue = OnuQueue("onu1")
    first, second = make_frames("onu1", 0, 8_000, 0)[:2]
    queue.enqueue(second)

    with pytest.raises(InvariantViolation):
        queue.enqueue(first)


def test_pending_through():
    queue = OnuQueue("onu1")
    for frame in make_frames("onu1", 0, 8_000, 0) + make_frames("onu1", 1, 16_000, 0):
        queue.enqueue(frame)

    assert queue.pending_through(3) == 4_000
    assert queue.pending_through(9) == 8_000 + 4_000
    assert queue.depth_bytes == 24_000


def test_latency_of_undelivered_frame():
    frame = make_frames("onu1", 0, 8_000, 0)[0]

    assert frame_latency(frame) is None
