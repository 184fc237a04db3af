import numpy as np
import pytest
from scipy import stats

from vponsim.config import TrafficConfig
from vponsim.core import rng_stream
from vponsim.exceptions import GuardValidationError
from vponsim.traffic import (
    SPLIT_PROFILES,
    CellLoadModel,
    ErlangSchedule,
    RadioUnit,
    SplitKind,
    background_load,
    fronthaul_rate,
    generate_tti_payload,
    payload_bytes,
    split_payload,
    step_sessions,
)
from vponsim.wavelength import ChannelSpec

SPLIT_8 = SPLIT_PROFILES[SplitKind.SPLIT_8]
SPLIT_71 = SPLIT_PROFILES[SplitKind.SPLIT_71]
TTI_NS = 1_000_000


def make_unit(erlang: float = 12.5, seed: int = 1, **kwargs) -> RadioUnit:
    return RadioUnit(
        "onu1",
        SPLIT_8,
        ErlangSchedule(erlang),
        mean_holding_s=kwargs.pop("mean_holding_s", 0.5),
        n_full=kwargs.pop("n_full", TrafficConfig.n_full),
        arrivals=rng_stream("arrivals/onu1", seed),
        holding=rng_stream("holding/onu1", seed),
        processing=rng_stream("processing/onu1", seed),
        **kwargs,
    )


# ============================================================================
# Fronthaul rate and payload size
# ============================================================================


@pytest.mark.parametrize(("load", "rate"), [(1.0, 2457.0), (0.0, 153.0), (0.5, 1305.0)])
def test_split8_rate(load, rate):
    assert fronthaul_rate(SPLIT_8, load) == pytest.approx(rate)


def test_rate_is_clamped():
    assert fronthaul_rate(SPLIT_8, 1.7) == pytest.approx(2457.0)
    assert fronthaul_rate(SPLIT_71, -0.2) == pytest.approx(110.0)


def test_split71_below_split8_everywhere():
    for load in np.linspace(0.0, 1.0, 101):
        assert fronthaul_rate(SPLIT_71, load) < fronthaul_rate(SPLIT_8, load)


@pytest.mark.parametrize(("rate", "size"), [(2457.0, 307_125), (153.0, 19_125), (1305.0, 163_125)])
def test_payload_bytes(rate, size):
    assert payload_bytes(rate, TTI_NS) == size


def test_payload_bytes_rounds_up():
    assert payload_bytes(153.001, TTI_NS) == 19_126


def test_split_payload_over_eight_cycles():
    assert split_payload(307_125, 8) == (38_391,) * 7 + (38_388,)
    assert split_payload(8_000, 8) == (1_000,) * 8
    assert split_payload(5, 8) == (1, 1, 1, 1, 1, 0, 0, 0)
    assert split_payload(0, 8) == (0,) * 8


# ============================================================================
# Session process
# ============================================================================


def test_no_arrivals_drains_to_zero():
    cell = CellLoadModel(arrival_rate=0.0, mean_holding=0.01)
    cell.seed_sessions(20, rng_stream("holding", 1))
    arrivals, holding = rng_stream("arrivals", 1), rng_stream("holding-2", 1)

    counts = [step_sessions(cell, t * TTI_NS, arrivals, holding) for t in range(1, 500)]

    assert counts[0] <= 20
    assert counts == sorted(counts, reverse=True)
    assert counts[-1] == 0


def test_offered_load_is_rate_times_holding():
    cell = CellLoadModel(arrival_rate=25.0, mean_holding=0.5)

    assert cell.offered_load == pytest.approx(12.5)
    assert cell.load_fraction == 0.0


def test_saturation_is_rare_at_ten_erlang():
    assert stats.poisson.sf(TrafficConfig.n_full, 10.0) < 1e-4


@pytest.fixture(scope="module")
def session_trace():
    """Active-session counts of a 12.5 Erlang cell sampled every TTI for 10^6 TTIs."""
    mean_holding = 0.005
    cell = CellLoadModel(arrival_rate=12.5 / mean_holding, mean_holding=mean_holding)
    arrivals, holding = rng_stream("arrivals/cell", 11), rng_stream("holding/cell", 11)
    cell.seed_sessions(int(arrivals.poisson(12.5)), holding)
    return np.array([step_sessions(cell, t * TTI_NS, arrivals, holding) for t in range(1, 1_000_001)])


def test_stationary_mean(session_trace):
    assert session_trace.mean() == pytest.approx(12.5, rel=0.02)


def test_stationary_distribution_is_poisson(session_trace):
    # samples 50 holding times apart are effectively independent
    sample = session_trace[::50]
    edges = np.arange(6, 21)
    observed = np.concatenate(
        ([np.sum(sample <= 5)], [np.sum(sample == k) for k in edges], [np.sum(sample >= 21)])
    )
    probabilities = np.concatenate(
        ([stats.poisson.cdf(5, 12.5)], stats.poisson.pmf(edges, 12.5), [stats.poisson.sf(20, 12.5)])
    )
    _, p_value = stats.chisquare(observed, probabilities * len(sample))

    assert p_value > 0.01


# ============================================================================
# Payload generation
# ============================================================================


def test_tti_payload_messages():
    unit = make_unit()
    unit.cell.active = 24
    payload = generate_tti_payload(unit, 3, unit.processing)

    assert payload.rate_mbps == pytest.approx(1305.0)
    assert payload.size == 163_125
    assert payload.t_generated == 3 * TTI_NS
    assert 0 <= payload.processing_delay_ns < 125_000
    assert [f.cycle_index for f in payload.frames] == list(range(24, 32))
    assert sum(f.size for f in payload.frames) == payload.size
    for frame in payload.frames:
        assert frame.t_ready == payload.t_ready + frame.segment * 125_000
        assert frame.t_generated <= frame.t_ready == frame.t_enqueued
        assert frame.remaining == frame.size
        assert frame.t_delivered is None


def test_payload_is_deterministic_per_seed():
    first, second = make_unit(seed=5), make_unit(seed=5)
    for unit in (first, second):
        unit.start()
        for t in range(20):
            unit.sample_load(t * TTI_NS)

    a = generate_tti_payload(first, 20, first.processing)
    b = generate_tti_payload(second, 20, second.processing)
    assert (a.size, a.t_ready) == (b.size, b.t_ready)


def test_processing_delay_distribution():
    unit = make_unit()
    delays = np.array([generate_tti_payload(unit, k, unit.processing).processing_delay_ns for k in range(100_000)])

    assert delays.mean() / 1_000 == pytest.approx(62.5, abs=1.0)
    assert delays.max() < 125_000
    assert delays.min() >= 0


def test_generator_conserves_rate():
    unit = make_unit()
    unit.cell.active = 12
    rate = fronthaul_rate(SPLIT_8, 12 / unit.cell.n_full)
    for k in range(1_000):
        generate_tti_payload(unit, k, unit.processing)

    expected = rate * 1e6 / 8
    assert abs(unit.generated_bytes - expected) <= payload_bytes(rate, TTI_NS)


def test_offered_load_window():
    unit = make_unit(erlang=5.0, load_window_ns=10 * TTI_NS)
    unit.start()
    actives = [unit.sample_load(t * TTI_NS) for t in range(50)]

    # samples at 39 ms .. 49 ms fall inside the trailing 10 ms window
    assert unit.offered_load(49 * TTI_NS) == pytest.approx(np.mean(actives[39:]))
    assert len(unit.load) == 11


# ============================================================================
# Erlang ramps
# ============================================================================


def test_constant_schedule():
    assert ErlangSchedule(12.5).value_at(10**12) == 12.5


def test_ramp_interpolates():
    ramp = ErlangSchedule(0.0, [[0, 1], [120, 14]])

    assert ramp.value_at(0) == 1.0
    assert ramp.value_at(60 * 10**9) == pytest.approx(7.5)
    assert ramp.value_at(200 * 10**9) == 14.0


def test_ramp_step():
    ramp = ErlangSchedule(0.0, [[0, 2], [10, 2], [10, 8], [20, 8]])

    assert ramp.value_at(5 * 10**9) == 2.0
    assert ramp.value_at(15 * 10**9) == 8.0


# ============================================================================
# Background reservation
# ============================================================================


@pytest.mark.parametrize(("fraction", "usable"), [(0.0, 140_625), (0.3, 98_437), (1.0, 0)])
def test_background_reservation(fraction, usable):
    reservation = background_load(1, fraction)

    assert reservation.usable_bytes(ChannelSpec(), 125_000, 0) == usable


def test_background_fraction_bounds():
    with pytest.raises(GuardValidationError):
        background_load(1, 1.5)
    with pytest.raises(GuardValidationError):
        background_load(0, 0.3)
