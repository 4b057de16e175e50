"""Monte Carlo experiments: configuration, per-replicate runs and reports."""

from __future__ import annotations

import json
import logging
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .contemp import contemp_graph
from .data import TimeSeriesSystem, load_csv
from .gpsic import baseline_graph, default_schedule, gpsic_graph, gpsic_graph_auto
from .graph import CausalGraph, load_graph
from .kernels import KernelSpec, Linear, Polynomial, SquaredExponential
from .kgc import MU, kgc_graph
from .kpcr import KpcrConfig, kpcr_graph
from .lsngc import C_F, C_G, lsngc_graph
from .simulate import BenchmarkSpec, SimulationDiverged, simulate
from .stats import contemp_metrics, graph_metrics

logger = logging.getLogger(__name__)

METHODS = ("kgc", "lsngc", "kpcr", "gpsic", "gpsic_contemp", "gp_delta", "gp_glrt")

_PARAMS = {
    "kgc": {"kernel", "mu", "alpha"},
    "lsngc": {"c_f", "c_g", "alpha"},
    "kpcr": {"kernel", "mu", "C", "alpha", "nystrom_threshold", "n_inducing", "max_doublings"},
    "gpsic": {"threshold", "schedule"},
    "gpsic_contemp": {"threshold", "schedule", "chain_rule", "adjacency_rule"},
    "gp_delta": set(),
    "gp_glrt": {"alpha"},
}
MAX_REDRAWS = 1000


class ConfigError(ValueError):
    pass


def kernel_from_config(cfg) -> KernelSpec | None:
    """``{"type": "se", "lengthscale": l}``, ``{"type": "poly", "degree": d}`` or ``{"type": "linear"}``."""
    if cfg is None:
        return None
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise ConfigError("kernel must be a mapping with a 'type' key")
    kind = cfg["type"]
    rest = {k: v for k, v in cfg.items() if k != "type"}
    try:
        if kind == "se":
            return SquaredExponential(**rest)
        if kind == "poly":
            return Polynomial(**rest)
        if kind == "linear" and not rest:
            return Linear()
    except TypeError as exc:
        raise ConfigError(f"bad kernel parameters: {exc}") from exc
    raise ConfigError(f"unknown kernel {cfg!r}")


def schedule_from_config(cfg):
    """A list of omegas or ``{"start", "stop", "n_steps"}``; ``None`` keeps the default."""
    if cfg is None:
        return None
    if isinstance(cfg, dict):
        unknown = set(cfg) - {"start", "stop", "n_steps"}
        if unknown:
            raise ConfigError(f"unknown schedule keys {sorted(unknown)}")
        return default_schedule(**cfg)
    return np.asarray(cfg, dtype=float)


@dataclass
class ExperimentConfig:
    """Exactly one of ``benchmark`` and ``csv`` is set.

    ``truth`` optionally names a ground-truth graph JSON for a CSV source.
    ``m="auto"`` chooses each target's lag by leave-one-out (gpsic only),
    searching ``1..m_max``.
    """

    method: str
    benchmark: BenchmarkSpec | None = None
    csv: str | None = None
    truth: str | None = None
    m: int | str = 1
    m_max: int = 5
    mc_runs: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)
    out: str | None = None
    n_jobs: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if (self.benchmark is None) == (self.csv is None):
            raise ConfigError("set exactly one data source: benchmark or csv")
        if self.csv is not None and self.mc_runs != 1:
            raise ConfigError("a csv source allows mc_runs == 1 only")
        if self.mc_runs < 1:
            raise ConfigError("mc_runs must be >= 1")
        if self.m == "auto":
            if self.method != "gpsic":
                raise ConfigError("m='auto' is only available for gpsic")
        elif not (isinstance(self.m, int) and self.m >= 1):
            raise ConfigError(f"m must be a positive integer or 'auto', got {self.m!r}")
        unknown = set(self.params) - _PARAMS[self.method]
        if unknown:
            raise ConfigError(f"parameters {sorted(unknown)} do not apply to {self.method}")
        kernel_from_config(self.params.get("kernel"))
        schedule_from_config(self.params.get("schedule"))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        bench = d.pop("benchmark", None)
        if isinstance(bench, dict):
            try:
                bench = BenchmarkSpec(**bench)
            except TypeError as exc:
                raise ConfigError(f"bad benchmark fields: {exc}") from exc
        try:
            return cls(benchmark=bench, **d)
        except TypeError as exc:
            raise ConfigError(f"bad config fields: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        """YAML or JSON (JSON is valid YAML)."""
        try:
            d = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.benchmark is not None:
            d["benchmark"] = asdict(self.benchmark)
        return d


@dataclass
class RunRecord:
    replicate: int
    seed: int
    n_redraws: int
    graph: CausalGraph
    metrics: dict | None
    contemp: dict | None
    wall_clock: float
    lags: dict | None = None

    def to_dict(self) -> dict:
        return {
            "replicate": self.replicate,
            "seed": self.seed,
            "n_redraws": self.n_redraws,
            "graph": self.graph.to_dict(),
            "metrics": self.metrics,
            "contemp": self.contemp,
            "wall_clock": self.wall_clock,
            "lags": self.lags,
        }


def _summary(values: list[float]) -> dict:
    if not values:
        return {"mean": None, "sd": None, "median": None}
    return {
        "mean": statistics.fmean(values),
        "sd": statistics.stdev(values) if len(values) > 1 else 0.0,
        "median": statistics.median(values),
    }


@dataclass
class RunReport:
    config: ExperimentConfig
    runs: list[RunRecord]

    def f1_values(self, key: str = "f1") -> list[float]:
        return [r.metrics[key] for r in self.runs if r.metrics is not None]

    @property
    def aggregate(self) -> dict:
        """Mean, sample sd and median of the per-run summary F1."""
        return _summary(self.f1_values())

    def contemp_aggregate(self) -> dict | None:
        recs = [r.contemp for r in self.runs if r.contemp is not None]
        if not recs:
            return None
        return {
            part: _summary([rec[part]["f1"] for rec in recs])
            for part in ("lagged", "adjacency", "orientation")
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "aggregate": self.aggregate,
            "contemp_aggregate": self.contemp_aggregate(),
            "runs": [r.to_dict() for r in self.runs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        try:
            path.write_text(self.to_json(), encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot write report {path}: {exc}") from exc
        return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def replicate_seeds(base: int, mc_runs: int) -> list[int]:
    """Distinct, deterministic 63-bit seeds, one per replicate."""
    children = np.random.SeedSequence(base).spawn(mc_runs)
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in children]


def _redraw_seed(seed: int, k: int) -> int:
    if k == 0:
        return seed
    s = np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0]
    return int(s >> np.uint64(1))


def estimate_graph(
    method: str, system: TimeSeriesSystem, m, params: dict, seed: int = 0, m_max: int = 5
) -> tuple[CausalGraph, dict | None]:
    """Run ``method`` with ``params``; the second value holds per-target lags for ``m='auto'``."""
    p = dict(params)
    if method == "kgc":
        return kgc_graph(system, m, kernel_from_config(p.get("kernel")), p.get("mu", MU),
                         p.get("alpha", 0.05)), None
    if method == "lsngc":
        return lsngc_graph(system, m, p.get("c_f", C_F), p.get("c_g", C_G),
                           p.get("alpha", 0.05), seed), None
    if method == "kpcr":
        kernel = kernel_from_config(p.pop("kernel", None))
        return kpcr_graph(system, m, KpcrConfig(kernel=kernel, seed=seed, **p)), None
    schedule = schedule_from_config(p.get("schedule"))
    threshold = p.get("threshold", 50.0)
    if method == "gpsic":
        if m == "auto":
            g, lags = gpsic_graph_auto(system, m_max, threshold, seed, schedule)
            return g, {system.names[b]: v for b, v in lags.items()}
        return gpsic_graph(system, m, threshold, seed, schedule), None
    if method == "gpsic_contemp":
        g, _ = contemp_graph(system, m, seed, schedule, threshold,
                             p.get("chain_rule", "proof"), p.get("adjacency_rule", "or"))
        return g, None
    if method == "gp_delta":
        return baseline_graph(system, m, "delta", seed=seed), None
    if method == "gp_glrt":
        return baseline_graph(system, m, "glrt", p.get("alpha", 0.05), seed), None
    raise ConfigError(f"unknown method {method!r}")


def _simulate_with_redraws(spec: BenchmarkSpec, seed: int):
    for k in range(MAX_REDRAWS):
        try:
            return simulate(BenchmarkSpec(spec.system_id, spec.n, spec.burn_in,
                                          _redraw_seed(seed, k), spec.params)), k
        except SimulationDiverged:
            logger.debug("replicate seed %d redraw %d diverged", seed, k)
    raise SimulationDiverged(f"{spec.system_id}: {MAX_REDRAWS} consecutive draws diverged")


def _score(graph: CausalGraph, truth: CausalGraph | None, method: str, m):
    if truth is None:
        return None, None
    metrics = graph_metrics(graph, truth).as_dict()
    contemp = None
    if method == "gpsic_contemp" or truth.contemporaneous:
        cm = contemp_metrics(graph, truth, m if isinstance(m, int) else None)
        contemp = {k: getattr(cm, k).as_dict() for k in ("lagged", "adjacency", "orientation")}
    return metrics, contemp


def run_replicate(config: ExperimentConfig, replicate: int, seed: int) -> RunRecord:
    t0 = time.perf_counter()
    if config.benchmark is not None:
        sim, redraws = _simulate_with_redraws(config.benchmark, seed)
        system, truth = sim.system, sim.truth
    else:
        system, redraws = load_csv(config.csv), 0
        truth = load_graph(config.truth) if config.truth else None
    graph, lags = estimate_graph(config.method, system, config.m, config.params, seed, config.m_max)
    metrics, contemp = _score(graph, truth, config.method, config.m)
    return RunRecord(replicate, seed, redraws, graph, metrics, contemp,
                     time.perf_counter() - t0, lags)


def _run_one(args):
    return run_replicate(*args)


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Run every replicate; results do not depend on ``n_jobs``."""
    seeds = replicate_seeds(config.seed, config.mc_runs)
    jobs = [(config, i, s) for i, s in enumerate(seeds)]
    n_jobs = config.n_jobs or os.cpu_count() or 1
    n_jobs = min(n_jobs, len(jobs))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    report = RunReport(config, runs)
    if config.out:
        report.write(config.out)
    agg = report.aggregate
    if agg["mean"] is not None:
        logger.info("%s: mean F1 %.3f (sd %.3f) over %d runs",
                    config.method, agg["mean"], agg["sd"], len(runs))
    return report

