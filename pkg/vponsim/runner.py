"""Single runs, result bundles and parameter sweeps."""

import csv
import time
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from vponsim import __version__
from vponsim.config import ScenarioConfig
from vponsim.decorators import guard
from vponsim.exceptions import ScenarioValidationError, SimulationError
from vponsim.log_config import get_logger
from vponsim.metrics import MetricsCollector, SummaryStats
from vponsim.scenario import OVERRIDES, apply_overrides, coerce_override, load_scenario, parse_scenario
from vponsim.simulation import FronthaulSimulation
from vponsim.utils import natural_key, s_to_ns

logger = get_logger(__name__)

SUMMARY_FILE = "summary.csv"
CONFIG_FILE = "config.yaml"
MANIFEST_FILE = "manifest.yaml"
COMBINED_FILE = "sweep.csv"


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.3f}"


@dataclass
class ResultBundle:
    config: ScenarioConfig
    metrics: MetricsCollector
    summaries: dict[str, SummaryStats]
    diagnostics: dict[str, Any]
    offloads: int = 0
    overrides: dict[str, Any] = field(default_factory=dict)
    wall_time_s: float = 0.0

    @property
    def summary(self) -> SummaryStats:
        return self.summaries["all"]

    def manifest(self) -> dict[str, Any]:
        return {
            "scenario": self.config.name,
            "master_seed": self.config.run.master_seed,
            "version": __version__,
            "overrides": dict(self.overrides),
            "offload_events": self.offloads,
            "diagnostics": self.diagnostics,
            "wall_time_s": round(self.wall_time_s, 3),
        }

    def write(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / CONFIG_FILE, "w") as handle:
            yaml.safe_dump(self.config.to_dict(), handle, sort_keys=False)
        self.metrics.export_timeseries(out_dir)
        with open(out_dir / SUMMARY_FILE, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["scope", "count", "mean_us", "p50_us", "p99_us", "max_us"])
            for scope, stats in self.summaries.items():
                values = (stats.mean_us, stats.p50_us, stats.p99_us, stats.max_us)
                writer.writerow([scope, stats.count, *(_fmt(value) for value in values)])
        with open(out_dir / MANIFEST_FILE, "w") as handle:
            yaml.safe_dump(self.manifest(), handle, sort_keys=False)
        logger.info("Wrote result bundle to %s", out_dir)
        return out_dir


def resolve_config(scenario: str | Path | ScenarioConfig, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    if isinstance(scenario, ScenarioConfig):
        if not overrides:
            return scenario
        return parse_scenario(apply_overrides(scenario.to_dict(), overrides), scenario.name)
    return load_scenario(scenario, overrides)


def run_scenario(
    scenario: str | Path | ScenarioConfig, overrides: dict[str, Any] | None = None
) -> ResultBundle:
    config = resolve_config(scenario, overrides)
    started = time.perf_counter()
    simulation = FronthaulSimulation(config)
    try:
        metrics = simulation.run()
    except SimulationError:
        logger.error(
            "Scenario '%s' (seed %d) failed at t=%d ns", config.name, config.run.master_seed, simulation.sim.now
        )
        raise

    warmup_end = s_to_ns(config.run.warmup_s)
    summaries = {"all": metrics.summarize(t_from=warmup_end)}
    for olt in sorted(simulation.slices, key=natural_key):
        summaries[olt] = metrics.summarize(olt=olt, t_from=warmup_end)
    return ResultBundle(
        config=config,
        metrics=metrics,
        summaries=summaries,
        diagnostics=simulation.diagnostics.as_dict(),
        offloads=simulation.controller.offload_count,
        overrides=dict(overrides or {}),
        wall_time_s=time.perf_counter() - started,
    )


@dataclass(frozen=True)
class SweepRow:
    value: Any
    seed: int
    mean_us: float | None
    p99_us: float | None


def _sweep_point(
    scenario: str, parameter: str, value: Any, seed: int, out_dir: str | None, base: dict[str, Any]
) -> SweepRow:
    bundle = run_scenario(scenario, {**base, parameter: value, "seed": seed})
    if out_dir is not None:
        bundle.write(Path(out_dir) / f"{parameter}={value}" / f"seed={seed}")
    return SweepRow(value, seed, bundle.summary.mean_us, bundle.summary.p99_us)


def dedupe(parameter: str, values: Sequence[Any]) -> list[Any]:
    unique = []
    for value in values:
        coerced = coerce_override(parameter, value)
        if coerced in unique:
            logger.warning("Duplicate sweep value %r for %s ignored", value, parameter)
            continue
        unique.append(coerced)
    return unique


@guard(parameter={"choices": tuple(name for name in OVERRIDES if name != "seed")}, workers={"gte": 1})
def sweep(
    scenario: str,
    parameter: str,
    values: Sequence[Any],
    seeds: Sequence[int] = (1,),
    out_dir: str | Path | None = None,
    workers: int = 1,
    overrides: dict[str, Any] | None = None,
) -> list[SweepRow]:
    """
    One run per (value, seed); the combined CSV is written to ``out_dir`` when given.
    ``overrides`` apply to every run, e.g. ``{"serving": "east-west"}`` under an
    ``east-west-mode`` sweep. The swept parameter and the seed take precedence over them.
    """
    unique = dedupe(parameter, values)
    if not unique:
        raise ScenarioValidationError("sweep", {"values": ["at least one sweep value is required"]})
    try:
        seeds = list(dict.fromkeys(int(seed) for seed in seeds))
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError("sweep", {"seeds": [f"seeds must be integers: {exc}"]}) from exc
    if not seeds:
        raise ScenarioValidationError("sweep", {"seeds": ["at least one seed is required"]})
    base = {name: coerce_override(name, value) for name, value in (overrides or {}).items()}
    for name in (parameter, "seed"):
        if name in base:
            logger.warning("Base override %s=%r is replaced by the sweep", name, base.pop(name))

    target = None if out_dir is None else str(out_dir)
    points = [(str(scenario), parameter, value, seed, target, base) for value in unique for seed in seeds]
    logger.info("Sweeping %s over %d values x %d seeds", parameter, len(unique), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, *zip(*points)))
    else:
        rows = [_sweep_point(*point) for point in points]

    rows.sort(key=lambda row: (row.value, row.seed))
    if out_dir is not None:
        write_combined(rows, Path(out_dir) / COMBINED_FILE)
    return rows


def write_combined(rows: Sequence[SweepRow], destination: Path) -> Path:
    destination.parent.mkdir(parents=True, exist_ok=True)
    with open(destination, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["parameter", "seed", "mean_us", "p99_us"])
        for row in rows:
            writer.writerow([row.value, row.seed, _fmt(row.mean_us), _fmt(row.p99_us)])
    return destination
