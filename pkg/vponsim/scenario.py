"""Scenario files, built-in presets and command-line overrides, validated into a ScenarioConfig."""

import copy
from pathlib import Path
from typing import Any

import yaml

from vponsim.config import (
    BURST_ORDERS,
    DROP_BOUND_POLICIES,
    EAST_WEST_MODES,
    ONU_KINDS,
    POLICY_KINDS,
    SLICE_STATES,
    SPLIT_KINDS,
    DbaConfig,
    OnuConfig,
    PolicyConfig,
    RuleConfig,
    RunConfig,
    ScenarioConfig,
    SliceConfig,
    SplitterConfig,
    TopologyConfig,
    TrafficConfig,
    WavelengthConfig,
    XlinkConfig,
)
from vponsim.exceptions import ScenarioValidationError
from vponsim.guard import Guard, LineIndex, add_error
from vponsim.log_config import get_logger

logger = get_logger(__name__)

RULES_SCHEMA = {
    "reflect": {"type": list, "default": [], "unique": True},
    "xpass": {"type": list, "default": [], "unique": True},
    "trunkpass": {"type": list, "default": [], "unique": True},
}

SPLITTER_SCHEMA = {
    "id": {"required": True, "node_id": True},
    "edge_olt": {"type": str | None, "default": None},
    "trunk_km": {"type": float, "gte": 0, "default": 10.0},
    "rules": {"type": dict, "default": {}, "fields": RULES_SCHEMA},
}

ONU_SCHEMA = {
    "id": {"required": True, "node_id": True},
    "splitter": {"required": True, "type": str},
    "kind": {"choices": ONU_KINDS, "default": "cran"},
    "drop_km": {"type": float, "gte": 0, "default": 0.3},
}

XLINK_SCHEMA = {
    "a": {"required": True, "type": str},
    "b": {"required": True, "type": str},
    "length_km": {"type": float | None, "gte": 0, "default": None},
}

TOPOLOGY_SCHEMA = {
    "co_id": {"node_id": True, "default": "co"},
    "level2_id": {"node_id": True, "default": "l2"},
    "feeder_km": {"type": float, "gte": 0, "default": 40.0},
    "direct_km": {"type": float, "gte": 0, "default": 1.0},
    "edge_olt_drop_km": {"type": float, "gte": 0, "default": 0.3},
    "max_drop_km": {"type": float, "gt": 0, "default": 0.5},
    "drop_bound": {"choices": DROP_BOUND_POLICIES, "default": "accept"},
    "east_west_mode": {"choices": EAST_WEST_MODES, "default": "direct"},
    "propagation_us_per_km": {"type": float, "gt": 0, "default": 5.0},
    "splitters": {"required": True, "type": list, "length": (1, None), "unique": "id", "items": SPLITTER_SCHEMA},
    "onus": {"required": True, "type": list, "length": (1, None), "unique": "id", "items": ONU_SCHEMA},
    "xlinks": {"type": list, "default": [], "items": XLINK_SCHEMA},
}

WAVELENGTH_SCHEMA = {
    "olts": {"required": True, "type": dict, "length": (1, None)},
    "line_rate_bps": {"type": int, "gt": 0, "default": 9_953_280_000},
    "payload_rate_bps": {"type": int, "gt": 0, "default": 9_000_000_000},
    "burst_overhead_us": {"type": float, "gte": 0, "default": 1.0},
    "tuning_time_ms": {"type": float, "gte": 0, "default": 1.0},
    "allow_channel_sharing": {"type": bool, "default": False},
    "extra_channels": {"type": list, "default": [], "unique": True},
}

TRAFFIC_SCHEMA = {
    "erlang": {"type": float, "gte": 0, "default": 12.5},
    "ramp": {"type": list, "default": []},
    "split": {"choices": SPLIT_KINDS, "default": "split8"},
    "n_full": {"type": int, "gt": 0, "default": 66},
    "mean_holding_s": {"type": float, "gt": 0, "default": 0.5},
    "background_fraction": {"type": float, "gte": 0, "lte": 1, "default": 0.3},
    "tti_us": {"type": float, "gt": 0, "default": 1000.0},
    "processing_max_us": {"type": float, "gte": 0, "default": 125.0},
}

DBA_SCHEMA = {
    "cycle_us": {"type": float, "gt": 0, "default": 125.0},
    "grants_per_tti": {"type": int, "gte": 1, "default": 8},
    "burst_order": {"choices": BURST_ORDERS, "default": "ready"},
}

SLICE_SCHEMA = {
    "olt": {"required": True, "node_id": True},
    "state": {"choices": SLICE_STATES, "default": "active"},
    "members": {"type": list, "default": [], "unique": True},
}

POLICY_SCHEMA = {
    "enabled": {"type": bool, "default": True},
    "kind": {"choices": POLICY_KINDS, "default": "unbalanced"},
    "threshold_us": {"type": float, "gt": 0, "default": 100.0},
    "trigger_fraction": {"type": float, "gt": 0, "lte": 1, "default": 0.9},
    "window_ms": {"type": float, "gt": 0, "default": 100.0},
    "cooldown_ms": {"type": float, "gte": 0, "default": 200.0},
    "monitor_interval_ms": {"type": float, "gt": 0, "default": 10.0},
    "msg_proc_us": {"type": float, "gte": 0, "default": 10.0},
    "activation_delay_ms": {"type": float, "gte": 0, "default": 0.0},
}

RUN_SCHEMA = {
    "duration_s": {"type": float, "gt": 0, "default": 30.0},
    "warmup_s": {"type": float, "gte": 0, "default": 2.0},
    "master_seed": {"type": int, "gte": 0, "default": 1},
    "drain": {"type": bool, "default": False},
    "drain_limit_s": {"type": float, "gt": 0, "default": 1.0},
}

SCENARIO_SCHEMA = {
    "name": {"type": str, "default": "scenario"},
    "topology": {"required": True, "type": dict, "fields": TOPOLOGY_SCHEMA},
    "wavelength": {"required": True, "type": dict, "fields": WAVELENGTH_SCHEMA},
    "traffic": {"type": dict, "default": {}, "fields": TRAFFIC_SCHEMA},
    "dba": {"type": dict, "default": {}, "fields": DBA_SCHEMA},
    "slices": {"required": True, "type": list, "unique": "olt", "items": SLICE_SCHEMA},
    "policy": {"type": dict, "default": {}, "fields": POLICY_SCHEMA},
    "run": {"type": dict, "default": {}, "fields": RUN_SCHEMA},
}


# ---------------------------------------------------------------------- presets

CO_CHANNEL_SET = [1, 2, 3, 4]
FIG2_SERVING = ("edge", "east-west", "co")


def _two_tree_topology(onus: list[dict]) -> dict[str, Any]:
    return {
        "splitters": [
            {"id": "spl-a", "edge_olt": "olt1", "rules": {"trunkpass": CO_CHANNEL_SET}},
            {"id": "spl-b", "edge_olt": "olt2", "rules": {"trunkpass": CO_CHANNEL_SET}},
        ],
        "onus": onus,
        "xlinks": [{"a": "spl-a", "b": "spl-b"}],
    }


def fig2_preset(slice_size: int = 4, serving: str = "edge") -> dict[str, Any]:
    """One slice of ``slice_size`` C-RAN ONUs in tree A, served at the edge, east-west or from the CO."""
    if serving not in FIG2_SERVING:
        message = f"serving must be one of {list(FIG2_SERVING)}, got {serving}"
        raise ScenarioValidationError("fig2", {"serving": [message]})
    if not 1 <= slice_size <= 12:
        raise ScenarioValidationError("fig2", {"slice-size": [f"slice-size must be within 1..12, got {slice_size}"]})
    members = [f"onu{i}" for i in range(1, slice_size + 1)]
    serving_olt = {"edge": "olt1", "east-west": "olt2", "co": "co"}[serving]
    slices = [{"olt": serving_olt, "members": members}]
    slices += [{"olt": olt, "state": "dormant"} for olt in ("olt1", "olt2") if olt != serving_olt]
    return {
        "name": f"fig2-{serving}-k{slice_size}",
        "topology": _two_tree_topology([{"id": onu, "splitter": "spl-a"} for onu in members]),
        "wavelength": {"olts": {"co": 1, "olt1": 5, "olt2": 6}},
        "traffic": {"erlang": 12.5},
        "slices": slices,
        "policy": {"enabled": False},
        "run": {"duration_s": 30.0, "warmup_s": 2.0},
    }


def _offload_preset(name: str, kind: str) -> dict[str, Any]:
    onus = [{"id": f"onu{i}", "splitter": "spl-a" if i <= 6 else "spl-b"} for i in range(1, 13)]
    onus += [
        {"id": f"res{i}", "splitter": "spl-a" if i <= 6 else "spl-b", "kind": "residential"} for i in range(1, 13)
    ]
    return {
        "name": name,
        "topology": _two_tree_topology(onus),
        "wavelength": {"olts": {"co": 1, "olt1": 5, "olt2": 6}},
        "traffic": {"ramp": [[0.0, 1.0], [120.0, 14.0]]},
        "slices": [
            {"olt": "olt1", "members": [f"onu{i}" for i in range(1, 13)]},
            {"olt": "olt2", "state": "dormant"},
        ],
        "policy": {"enabled": True, "kind": kind},
        "run": {"duration_s": 120.0, "warmup_s": 0.0},
    }


def fig3_preset() -> dict[str, Any]:
    return _offload_preset("fig3", "unbalanced")


def fig4_preset() -> dict[str, Any]:
    return _offload_preset("fig4", "balanced")


PRESETS = {"fig2": fig2_preset, "fig3": fig3_preset, "fig4": fig4_preset}
STRUCTURAL_OVERRIDES = ("slice-size", "serving")


# ---------------------------------------------------------------------- overrides


def _set(raw: dict, section: str, key: str, value: Any) -> None:
    raw.setdefault(section, {})
    if raw[section] is None:
        raw[section] = {}
    raw[section][key] = value


def _override_policy(raw: dict, value: str) -> None:
    if value == "none":
        _set(raw, "policy", "enabled", False)
    else:
        _set(raw, "policy", "kind", value)
        _set(raw, "policy", "enabled", True)


def _override_erlang(raw: dict, value: float) -> None:
    _set(raw, "traffic", "erlang", value)
    _set(raw, "traffic", "ramp", [])


OVERRIDES = {
    "seed": (int, lambda raw, v: _set(raw, "run", "master_seed", v)),
    "duration": (float, lambda raw, v: _set(raw, "run", "duration_s", v)),
    "policy": (str, _override_policy),
    "erlang": (float, _override_erlang),
    "east-west-mode": (str, lambda raw, v: _set(raw, "topology", "east_west_mode", v)),
    "split": (str, lambda raw, v: _set(raw, "traffic", "split", v)),
    "slice-size": (int, None),
    "serving": (str, None),
}


def coerce_override(name: str, value: Any) -> Any:
    if name not in OVERRIDES:
        message = f"unknown override '{name}', expected one of {list(OVERRIDES)}"
        raise ScenarioValidationError("overrides", {name: [message]})
    kind = OVERRIDES[name][0]
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ScenarioValidationError("overrides", {name: [f"{name} must be {kind.__name__}, got {value!r}"]}) from None


def apply_overrides(raw: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Return a copy of ``raw`` with the non-structural overrides applied."""
    raw = copy.deepcopy(raw)
    for name, value in overrides.items():
        if name in STRUCTURAL_OVERRIDES:
            continue
        OVERRIDES[name][1](raw, coerce_override(name, value))
    return raw


# ---------------------------------------------------------------------- parsing


def line_index(node: yaml.Node | None, path: tuple = ()) -> LineIndex:
    """Map key paths of a composed YAML document to 1-based source lines."""
    lines: LineIndex = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key_path = (*path, key_node.value)
            lines[key_path] = key_node.start_mark.line + 1
            lines.update(line_index(value_node, key_path))
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            item_path = (*path, index)
            lines[item_path] = item.start_mark.line + 1
            lines.update(line_index(item, item_path))
    return lines


def load_yaml(text: str, source: str) -> tuple[Any, LineIndex]:
    try:
        return yaml.safe_load(text), line_index(yaml.compose(text, Loader=yaml.SafeLoader))
    except yaml.YAMLError as exc:
        raise ScenarioValidationError(source, {"document": [str(exc)]}) from exc


def _cross_check(resolved: dict, errors: dict, lines: LineIndex) -> None:
    topology = resolved["topology"]
    wavelength = resolved["wavelength"]
    co_id = topology.get("co_id")
    olts = wavelength.get("olts") or {}
    edge_sites = {s.get("edge_olt") for s in topology.get("splitters") or [] if s.get("edge_olt")}
    onu_ids = {o.get("id") for o in topology.get("onus") or []}

    for olt, channel in olts.items():
        path = ("wavelength", "olts", olt)
        if not isinstance(channel, int) or isinstance(channel, bool) or channel < 1:
            add_error(errors, lines, path, f"channel of {olt} must be an integer >= 1, got {channel!r}")
        if olt != co_id and olt not in edge_sites:
            add_error(errors, lines, path, f"{olt} is neither the CO nor an edge OLT site of a splitter")

    if wavelength.get("payload_rate_bps", 0) > wavelength.get("line_rate_bps", 0):
        add_error(errors, lines, ("wavelength", "payload_rate_bps"), "effective payload rate exceeds the line rate")

    for index, entry in enumerate(resolved.get("slices") or []):
        if entry.get("olt") not in olts:
            add_error(errors, lines, ("slices", index, "olt"), f"slice OLT '{entry.get('olt')}' has no channel")
        for onu in entry.get("members") or []:
            if onu not in onu_ids:
                add_error(errors, lines, ("slices", index, "members"), f"unknown member ONU '{onu}'")

    previous = None
    for index, point in enumerate(resolved["traffic"].get("ramp") or []):
        path = ("traffic", "ramp", index)
        if not (isinstance(point, list) and len(point) == 2 and all(isinstance(v, (int, float)) for v in point)):
            add_error(errors, lines, path, f"ramp points are [time_s, erlang] pairs, got {point!r}")
            continue
        if point[0] < 0 or point[1] < 0 or (previous is not None and point[0] < previous):
            add_error(errors, lines, path, f"ramp times must be non-decreasing and values non-negative, got {point}")
        previous = point[0]

    dba, traffic = resolved["dba"], resolved["traffic"]
    if dba.get("cycle_us") and traffic.get("tti_us") and dba["cycle_us"] * dba["grants_per_tti"] != traffic["tti_us"]:
        add_error(errors, lines, ("dba", "cycle_us"), "cycle_us x grants_per_tti must equal traffic.tti_us")


def _to_config(resolved: dict) -> ScenarioConfig:
    topology = dict(resolved["topology"])
    topology["splitters"] = tuple(
        SplitterConfig(
            id=s["id"],
            edge_olt=s["edge_olt"],
            trunk_km=s["trunk_km"],
            rules=RuleConfig(**{key: tuple(value) for key, value in s["rules"].items()}),
        )
        for s in topology["splitters"]
    )
    topology["onus"] = tuple(OnuConfig(**o) for o in topology["onus"])
    topology["xlinks"] = tuple(XlinkConfig(**x) for x in topology["xlinks"])

    wavelength = dict(resolved["wavelength"])
    wavelength["extra_channels"] = tuple(wavelength["extra_channels"])
    traffic = dict(resolved["traffic"])
    traffic["ramp"] = tuple(tuple(point) for point in traffic["ramp"])

    return ScenarioConfig(
        name=resolved["name"],
        topology=TopologyConfig(**topology),
        wavelength=WavelengthConfig(**wavelength),
        traffic=TrafficConfig(**traffic),
        dba=DbaConfig(**resolved["dba"]),
        slices=tuple(SliceConfig(s["olt"], s["state"], tuple(s["members"])) for s in resolved["slices"]),
        policy=PolicyConfig(**resolved["policy"]),
        run=RunConfig(**resolved["run"]),
    )


def parse_scenario(raw: Any, source: str = "scenario", lines: LineIndex | None = None) -> ScenarioConfig:
    errors: dict[str, list[str]] = {}
    resolved = Guard.validate_mapping((), raw, SCENARIO_SCHEMA, lines, errors)
    if not errors:
        _cross_check(resolved, errors, lines or {})
    if errors:
        raise ScenarioValidationError(source, errors)
    return _to_config(resolved)


def load_scenario(scenario: str | Path, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    """Resolve a preset name or a YAML file path, apply overrides and validate."""
    overrides = dict(overrides or {})
    lines: LineIndex = {}
    name = str(scenario)
    if name in PRESETS:
        structural = {key: coerce_override(key, overrides[key]) for key in STRUCTURAL_OVERRIDES if key in overrides}
        if structural and name != "fig2":
            raise ScenarioValidationError(name, {k: [f"{k} only applies to the fig2 preset"] for k in structural})
        kwargs = {key.replace("-", "_"): value for key, value in structural.items()}
        raw = PRESETS[name](**kwargs)
        source = f"preset {name}"
    else:
        path = Path(scenario)
        if not path.is_file():
            message = f"not a preset ({', '.join(PRESETS)}) or a readable file"
            raise ScenarioValidationError(name, {"scenario": [message]})
        if any(key in overrides for key in STRUCTURAL_OVERRIDES):
            raise ScenarioValidationError(name, {"overrides": ["slice-size and serving only apply to the fig2 preset"]})
        raw, lines = load_yaml(path.read_text(), name)
        source = name
    if overrides:
        raw = apply_overrides(raw, overrides)
    config = parse_scenario(raw, source, lines)
    logger.info("Loaded scenario '%s' from %s", config.name, source)
    return config
