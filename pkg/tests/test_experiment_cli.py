import json
import statistics

import numpy as np
import pytest

from kernelgc.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from kernelgc.experiment import (
    ConfigError,
    ExperimentConfig,
    estimate_graph,
    kernel_from_config,
    replicate_seeds,
    run_experiment,
    schedule_from_config,
)
from kernelgc.graph import CausalGraph, load_graph
from kernelgc.kernels import Linear, Polynomial, SquaredExponential
from kernelgc.simulate import BenchmarkSpec, simulate


def bench(system="mediator", n=80, **params):
    return BenchmarkSpec(system, n=n, params=params)


class TestConfig:
    def test_valid_minimal(self):
        c = ExperimentConfig("kgc", benchmark=bench())
        assert c.m == 1 and c.mc_runs == 1

    @pytest.mark.parametrize("kwargs", [
        {"method": "pcmci", "benchmark": bench()},
        {"method": "kgc"},
        {"method": "kgc", "benchmark": bench(), "csv": "x.csv"},
        {"method": "kgc", "csv": "x.csv", "mc_runs": 2},
        {"method": "kgc", "benchmark": bench(), "mc_runs": 0},
        {"method": "kgc", "benchmark": bench(), "m": "auto"},
        {"method": "gpsic_contemp", "benchmark": bench(), "m": "auto"},
        {"method": "kgc", "benchmark": bench(), "m": 0},
        {"method": "kgc", "benchmark": bench(), "m": 1.5},
        {"method": "kgc", "benchmark": bench(), "params": {"c_f": 10}},
        {"method": "lsngc", "benchmark": bench(), "params": {"kernel": {"type": "se"}}},
        {"method": "kgc", "benchmark": bench(), "params": {"kernel": {"type": "rbf"}}},
        {"method": "kgc", "benchmark": bench(), "params": {"kernel": "se"}},
        {"method": "gpsic", "benchmark": bench(), "params": {"schedule": {"begin": 1}}},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs)

    def test_auto_lag_for_gpsic(self):
        assert ExperimentConfig("gpsic", benchmark=bench(), m="auto").m == "auto"

    def test_kernel_parsing(self):
        assert kernel_from_config(None) is None
        assert kernel_from_config({"type": "linear"}) == Linear()
        assert kernel_from_config({"type": "poly", "degree": 3}) == Polynomial(3)
        assert kernel_from_config({"type": "se", "lengthscale": 2.0}) == SquaredExponential(2.0)
        with pytest.raises(ConfigError):
            kernel_from_config({"type": "se", "width": 2.0})
        with pytest.raises(ConfigError):
            kernel_from_config({"type": "linear", "degree": 1})

    def test_schedule_parsing(self):
        assert schedule_from_config(None) is None
        np.testing.assert_array_equal(schedule_from_config([1, 2, 3]), [1.0, 2.0, 3.0])
        s = schedule_from_config({"n_steps": 4})
        assert len(s) == 4

    def test_from_file_yaml_and_json(self, tmp_path):
        y = tmp_path / "c.yaml"
        y.write_text("method: kgc\nbenchmark:\n  system_id: mediator\n  n: 60\nmc_runs: 3\n")
        c = ExperimentConfig.from_file(y)
        assert c.benchmark == BenchmarkSpec("mediator", n=60) and c.mc_runs == 3
        j = tmp_path / "c.json"
        j.write_text(json.dumps(c.to_dict()))
        assert ExperimentConfig.from_file(j) == c

    @pytest.mark.parametrize("text", ["- a\n- b\n", "method: kgc\nbenchmark: {bogus: 1}\n",
                                      "method: kgc\ncsv: a.csv\nextra: 1\n", "a: [1,\n"])
    def test_from_file_errors(self, tmp_path, text):
        p = tmp_path / "c.yaml"
        p.write_text(text)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "none.yaml")


def test_replicate_seeds_distinct_and_deterministic():
    s = replicate_seeds(7, 200)
    assert len(set(s)) == 200
    assert s == replicate_seeds(7, 200)
    assert s[:10] == replicate_seeds(7, 10)
    assert set(s).isdisjoint(replicate_seeds(8, 200))
    assert all(0 <= x < 2**63 for x in s)


@pytest.fixture(scope="module")
def report():
    return run_experiment(ExperimentConfig("kgc", benchmark=bench(), mc_runs=5, seed=3,
                                           n_jobs=1))


class TestRunExperiment:
    def test_aggregate_recomputable(self, report):
        f1 = [r.metrics["f1"] for r in report.runs]
        assert len(f1) == 5
        assert report.aggregate == {
            "mean": statistics.fmean(f1), "sd": statistics.stdev(f1),
            "median": statistics.median(f1),
        }

    def test_runs_carry_seeds_and_timing(self, report):
        assert [r.seed for r in report.runs] == replicate_seeds(3, 5)
        assert [r.replicate for r in report.runs] == list(range(5))
        assert all(r.wall_clock >= 0 and r.n_redraws == 0 for r in report.runs)

    def test_report_json_embeds_config(self, report, tmp_path):
        path = report.write(tmp_path / "r.json")
        d = json.loads(path.read_text())
        assert d["config"]["method"] == "kgc"
        assert d["config"]["benchmark"]["system_id"] == "mediator"
        assert len(d["runs"]) == 5
        assert d["aggregate"]["mean"] == pytest.approx(report.aggregate["mean"])
        assert CausalGraph.from_dict(d["runs"][0]["graph"]) == report.runs[0].graph

    def test_write_to_missing_dir(self, report, tmp_path):
        with pytest.raises(ConfigError):
            report.write(tmp_path / "missing" / "r.json")

    def test_parallel_matches_serial(self, report):
        par = run_experiment(ExperimentConfig("kgc", benchmark=bench(), mc_runs=5, seed=3,
                                              n_jobs=2))
        assert [r.graph for r in par.runs] == [r.graph for r in report.runs]
        assert par.aggregate == report.aggregate

    def test_replicate_uses_its_own_simulation(self, report):
        seed = report.runs[2].seed
        sim = simulate(BenchmarkSpec("mediator", n=80, seed=seed))
        g, _ = estimate_graph("kgc", sim.system, 1, {})
        assert g == report.runs[2].graph


def test_single_run_aggregate_has_zero_sd():
    r = run_experiment(ExperimentConfig("kgc", benchmark=bench(), n_jobs=1))
    assert r.aggregate["sd"] == 0.0
    assert r.aggregate["mean"] == r.aggregate["median"]


def test_csv_without_truth_reports_graph_only(tmp_path):
    sim = simulate(BenchmarkSpec("mediator", n=80, seed=1))
    sim.system.to_csv(tmp_path / "d.csv")
    r = run_experiment(ExperimentConfig("kgc", csv=str(tmp_path / "d.csv")))
    assert r.runs[0].metrics is None
    assert r.aggregate == {"mean": None, "sd": None, "median": None}
    assert r.contemp_aggregate() is None
    assert isinstance(r.runs[0].graph, CausalGraph)


def test_csv_with_truth_is_scored(tmp_path):
    sim = simulate(BenchmarkSpec("mediator", n=80, seed=1))
    sim.system.to_csv(tmp_path / "d.csv")
    (tmp_path / "t.json").write_text(sim.truth.to_json())
    r = run_experiment(ExperimentConfig("kgc", csv=str(tmp_path / "d.csv"),
                                        truth=str(tmp_path / "t.json")))
    assert r.runs[0].metrics is not None


def test_diverged_draws_are_redrawn():
    cfg = ExperimentConfig("kgc", benchmark=BenchmarkSpec(
        "contemporaneous_random", n=60, params={"a": 0.8}), mc_runs=6, n_jobs=1)
    r = run_experiment(cfg)
    assert sum(run.n_redraws for run in r.runs) > 0
    assert all(run.contemp is not None for run in r.runs)
    assert set(r.contemp_aggregate()) == {"lagged", "adjacency", "orientation"}


def test_method_parameters_pass_through():
    sim = simulate(BenchmarkSpec("mediator", n=80, seed=2))
    strict, _ = estimate_graph("kgc", sim.system, 1, {"alpha": 1e-300})
    assert strict.lagged == set()
    g, _ = estimate_graph("kpcr", sim.system, 1, {"kernel": {"type": "linear"}, "C": 1.0})
    assert isinstance(g, CausalGraph)


# command line


def test_cli_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run"], ["simulate", "no_such_system"],
                                  ["simulate", "mediator", "--param", "novalue"],
                                  ["run", "c.yaml", "--lag", "two"]])
def test_cli_bad_arguments_exit_one(argv, capsys):
    assert main(argv) == EXIT_INVALID


def test_cli_simulate_score_export(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "mediator", "--n", "80", "--seed", "4", "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["m_true"] == 1
    truth = load_graph(out / "mediator_truth.json")
    assert truth == simulate(BenchmarkSpec("mediator", n=80, seed=4)).truth

    assert main(["score", str(out / "mediator_truth.json"), str(out / "mediator_truth.json"),
                 "--out", str(tmp_path / "s.json")]) == 0
    scored = json.loads((tmp_path / "s.json").read_text())
    assert scored["summary"]["f1"] == 1.0

    assert main(["export", str(out / "mediator_truth.json"), "--format", "dot",
                 "--out", str(tmp_path / "g.dot")]) == 0
    assert "x2 -> x1" in (tmp_path / "g.dot").read_text()


def test_cli_simulate_params(tmp_path, capsys):
    assert main(["simulate", "contemporaneous_random", "--n", "50", "--param", "n_t=4",
                 "--param", "m=2", "--out", str(tmp_path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["m_true"] == 2
    g = load_graph(tmp_path / "contemporaneous_random_truth.json")
    assert g.n_nodes == 4


def test_cli_score_contemporaneous(tmp_path, capsys):
    g = CausalGraph(("a", "b", "c"))
    g.add_lagged(0, 1, 1)
    g.add_contemporaneous(1, 2, "->")
    (tmp_path / "g.json").write_text(g.to_json())
    assert main(["score", str(tmp_path / "g.json"), str(tmp_path / "g.json")]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["orientation"]["f1"] == 1.0 and d["adjacency"]["f1"] == 1.0


def test_cli_run_with_overrides(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("method: gpsic\nbenchmark:\n  system_id: mediator\n  n: 60\n"
                   "params:\n  threshold: 50\n")
    out = tmp_path / "r.json"
    code = main(["run", str(cfg), "--method", "kgc", "--mc-runs", "2", "--seed", "9",
                 "--out", str(out), "--n-jobs", "1"])
    assert code == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    report = json.loads(out.read_text())
    assert report["config"]["method"] == "kgc" and report["config"]["params"] == {}
    assert report["config"]["seed"] == 9
    assert printed["aggregate"] == report["aggregate"]
    assert [r["seed"] for r in report["runs"]] == replicate_seeds(9, 2)


def test_cli_run_single_prints_graph(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("method: kgc\nbenchmark:\n  system_id: mediator\n  n: 60\n")
    assert main(["run", str(cfg), "--lag", "1"]) == EXIT_OK
    assert "graph" in json.loads(capsys.readouterr().out)


def test_cli_invalid_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("method: kgc\nbenchmark:\n  system_id: mediator\nm: auto\n")
    assert main(["run", str(cfg)]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_INVALID
    assert main(["score", str(tmp_path / "a.json"), str(tmp_path / "b.json")]) == EXIT_INVALID


def test_cli_numerical_failure_exits_two(tmp_path, capsys):
    code = main(["simulate", "random_nonlinear", "--n", "200", "--param", "n_t=5",
                 "--param", "a=1.5", "--out", str(tmp_path)])
    assert code == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err
