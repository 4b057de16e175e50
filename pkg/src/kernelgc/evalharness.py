"""Reference F1 targets and a runner that checks experiments against them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from .experiment import ExperimentConfig, run_experiment
from .simulate import BenchmarkSpec

UNREALISTIC = "unrealistic tolerance"


def default_tolerance(expected: float) -> float:
    return 0.05 if expected >= 0.9 else 0.10


@dataclass(frozen=True)
class AcceptanceTarget:
    """Expected mean F1 of ``method`` on ``system_id`` with ``n`` retained points.

    ``table`` names the reference table the value comes from (``"n250"`` or
    ``"n500"``).  ``tolerance=None`` picks :func:`default_tolerance`.
    """

    experiment_id: str
    method: str
    system_id: str
    n: int
    m: int
    expected_f1: float
    expected_sd: float | None = None
    tolerance: float | None = None
    table: str = "n250"
    params: dict = field(default_factory=dict)
    benchmark_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tolerance is None:
            object.__setattr__(self, "tolerance", default_tolerance(self.expected_f1))
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.table not in ("n250", "n500"):
            raise ValueError(f"unknown reference table {self.table!r}")

    def config(self, mc_runs: int, seed: int, n_jobs: int | None = None) -> ExperimentConfig:
        bench = BenchmarkSpec(self.system_id, n=self.n, params=dict(self.benchmark_params))
        return ExperimentConfig(self.method, benchmark=bench, m=self.m, mc_runs=mc_runs,
                                seed=seed, params=dict(self.params), n_jobs=n_jobs)


@dataclass(frozen=True)
class AcceptanceResult:
    target: AcceptanceTarget
    observed_mean: float
    observed_sd: float
    mc_runs: int
    seed: int
    n_redraws: int
    passed: bool
    flag: str = ""

    def line(self) -> str:
        t = self.target
        status = "PASS" if self.passed else "FAIL"
        flag = f" [{self.flag}]" if self.flag else ""
        return (f"{status} {t.experiment_id}: {t.method} on {t.system_id} n={t.n} "
                f"mean F1 {self.observed_mean:.3f} (sd {self.observed_sd:.3f}) vs "
                f"{t.expected_f1:.2f} +/- {t.tolerance:.2f}, mc={self.mc_runs}{flag}")


def check(target: AcceptanceTarget, observed_mean: float) -> tuple[bool, str]:
    flag = UNREALISTIC if target.tolerance == 0 else ""
    return abs(observed_mean - target.expected_f1) <= target.tolerance + 1e-12, flag


def run_acceptance(
    targets: list[AcceptanceTarget], mc_runs: int, seed: int = 0, n_jobs: int | None = None
) -> list[AcceptanceResult]:
    if not targets:
        raise ValueError("no acceptance targets given")
    results = []
    for t in targets:
        report = run_experiment(t.config(mc_runs, seed, n_jobs))
        agg = report.aggregate
        passed, flag = check(t, agg["mean"])
        redraws = sum(r.n_redraws for r in report.runs)
        results.append(
            AcceptanceResult(t, agg["mean"], agg["sd"], mc_runs, seed, redraws, passed, flag)
        )
    return results


CSV_FIELDS = (
    "experiment_id", "table", "system_id", "method", "n", "m", "mc_runs", "seed",
    "expected_f1", "expected_sd", "tolerance", "observed_mean", "observed_sd",
    "n_redraws", "passed", "flag",
)


def summary_csv(results: list[AcceptanceResult], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        t = r.target
        writer.writerow({
            "experiment_id": t.experiment_id, "table": t.table, "system_id": t.system_id,
            "method": t.method, "n": t.n, "m": t.m, "mc_runs": r.mc_runs, "seed": r.seed,
            "expected_f1": t.expected_f1, "expected_sd": t.expected_sd,
            "tolerance": t.tolerance, "observed_mean": f"{r.observed_mean:.4f}",
            "observed_sd": f"{r.observed_sd:.4f}", "n_redraws": r.n_redraws,
            "passed": r.passed, "flag": r.flag,
        })
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _t(eid, method, system, m, f1, sd, tol=None, n=250, table="n250", **bench):
    return AcceptanceTarget(eid, method, system, n, m, f1, sd, tol, table,
                            benchmark_params=bench)


# mean F1 (sd) over 100 runs; large-n_t rows use 20 runs
REFERENCE_TARGETS = (
    _t("gpsic_confounder", "gpsic", "confounder", 1, 0.97, 0.07),
    _t("gpsic_mediator", "gpsic", "mediator", 1, 0.99, 0.05),
    _t("gpsic_redundant_collider", "gpsic", "redundant_collider", 1, 0.99, 0.04),
    _t("gpsic_logistic_1way", "gpsic", "logistic_1way", 1, 0.98, 0.07),
    _t("kpcr_nonlinear_5", "kpcr", "nonlinear_5", 3, 0.99, 0.03),
    _t("kpcr_synergistic_collider", "kpcr", "synergistic_collider", 1, 0.99, 0.03),
    _t("kgc_logistic_1way", "kgc", "logistic_1way", 1, 0.99, 0.05),
    _t("kgc_confounder", "kgc", "confounder", 1, 0.97, 0.08),
    _t("lsngc_mediator", "lsngc", "mediator", 1, 0.98, 0.07),
    _t("lsngc_redundant_collider", "lsngc", "redundant_collider", 1, 0.14, 0.28, tol=0.15),
)

LARGE_TARGETS = (
    _t("gpsic_nonlinear_20", "gpsic", "random_nonlinear", 1, 0.73, 0.06, tol=0.10, n_t=20),
    _t("gpsic_nonlinear_30", "gpsic", "random_nonlinear", 1, 0.68, 0.06, tol=0.10, n_t=30),
)
