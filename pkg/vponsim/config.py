"""Resolved scenario configuration. Built by ``vponsim.scenario`` from validated mappings."""

import dataclasses
from dataclasses import dataclass, field
from typing import Any

EAST_WEST_MODES = ("direct", "overlay")
DROP_BOUND_POLICIES = ("accept", "warn", "reject")
ONU_KINDS = ("cran", "residential")
SPLIT_KINDS = ("split8", "split71")
BURST_ORDERS = ("ready", "onu")
SLICE_STATES = ("active", "dormant")
POLICY_KINDS = ("unbalanced", "balanced")


@dataclass(frozen=True)
class RuleConfig:
    reflect: tuple[int, ...] = ()
    xpass: tuple[int, ...] = ()
    trunkpass: tuple[int, ...] = ()


@dataclass(frozen=True)
class SplitterConfig:
    id: str
    edge_olt: str | None = None
    trunk_km: float = 10.0
    rules: RuleConfig = field(default_factory=RuleConfig)


@dataclass(frozen=True)
class OnuConfig:
    id: str
    splitter: str
    kind: str = "cran"
    drop_km: float = 0.3


@dataclass(frozen=True)
class XlinkConfig:
    a: str
    b: str
    length_km: float | None = None


@dataclass(frozen=True)
class TopologyConfig:
    splitters: tuple[SplitterConfig, ...]
    onus: tuple[OnuConfig, ...]
    xlinks: tuple[XlinkConfig, ...] = ()
    co_id: str = "co"
    level2_id: str = "l2"
    feeder_km: float = 40.0
    direct_km: float = 1.0
    edge_olt_drop_km: float = 0.3
    max_drop_km: float = 0.5
    drop_bound: str = "accept"
    east_west_mode: str = "direct"
    propagation_us_per_km: float = 5.0


@dataclass(frozen=True)
class WavelengthConfig:
    olts: dict[str, int]
    line_rate_bps: int = 9_953_280_000
    payload_rate_bps: int = 9_000_000_000
    burst_overhead_us: float = 1.0
    tuning_time_ms: float = 1.0
    allow_channel_sharing: bool = False
    extra_channels: tuple[int, ...] = ()


@dataclass(frozen=True)
class TrafficConfig:
    erlang: float = 12.5
    ramp: tuple[tuple[float, float], ...] = ()
    split: str = "split8"
    n_full: int = 66
    mean_holding_s: float = 0.5
    background_fraction: float = 0.3
    tti_us: float = 1000.0
    processing_max_us: float = 125.0


@dataclass(frozen=True)
class DbaConfig:
    cycle_us: float = 125.0
    grants_per_tti: int = 8
    burst_order: str = "ready"


@dataclass(frozen=True)
class SliceConfig:
    olt: str
    state: str = "active"
    members: tuple[str, ...] = ()


@dataclass(frozen=True)
class PolicyConfig:
    enabled: bool = True
    kind: str = "unbalanced"
    threshold_us: float = 100.0
    trigger_fraction: float = 0.9
    window_ms: float = 100.0
    cooldown_ms: float = 200.0
    monitor_interval_ms: float = 10.0
    msg_proc_us: float = 10.0
    activation_delay_ms: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    duration_s: float = 30.0
    warmup_s: float = 2.0
    master_seed: int = 1
    drain: bool = False
    drain_limit_s: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: TopologyConfig
    wavelength: WavelengthConfig
    traffic: TrafficConfig
    dba: DbaConfig
    slices: tuple[SliceConfig, ...]
    policy: PolicyConfig
    run: RunConfig

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved mapping; parsing it again yields an equal config."""
        return _plain(dataclasses.asdict(self))

    def slice_for(self, olt: str) -> SliceConfig | None:
        return next((entry for entry in self.slices if entry.olt == olt), None)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value
