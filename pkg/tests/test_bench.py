import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy import stats

from probitkde import bench
from probitkde.bench import (CSV_FIELDS, BenchConfig, csv_text, emit_report, ise_on_grid,
                             mise_matrix, rank_scores, run_benchmark, sample_density,
                             summary_json, svg_plot, unit_grid)
from probitkde.classic import DensityEstimate
from probitkde.densities import gaussian_copula_conditional, get_density
from probitkde.pipeline import MethodSpec, fit_method
from probitkde.probcore import SeedSpec


def small_config(**kw):
    base = dict(densities=["beta44", "bimodal"], estimators=["naive", "amended", "t1-h-lscv"],
                sample_sizes=[40], replications=3, master_seed=11)
    base.update(kw)
    return BenchConfig(**base)


class TestIse:
    def test_truth_scores_zero(self):
        d = get_density("beta44")
        g = unit_grid()
        assert ise_on_grid(DensityEstimate(g, d.pdf(g)), d) == 0.0

    def test_constant_offset(self):
        d = get_density("beta44")
        g = unit_grid()
        assert ise_on_grid(DensityEstimate(g, d.pdf(g) + 0.1), d) == pytest.approx(0.1**2 * 999 / 1000)

    def test_toy_grid(self):
        d = get_density("uniform")
        g = np.array([0.25, 0.5, 0.75])
        est = DensityEstimate(g, 1.0 + np.array([0.1, -0.2, 0.3]))
        assert ise_on_grid(est, d) == pytest.approx(0.035, rel=1e-12)

    def test_grid_mismatch(self):
        g = np.linspace(0.01, 0.99, 999)
        with pytest.raises(ValueError, match="grid"):
            ise_on_grid(DensityEstimate(g, np.ones_like(g)), get_density("uniform"))

    def test_unit_grid(self):
        g = unit_grid()
        assert g.size == 999 and g[0] == 0.001 and g[-1] == 0.999


class TestSampling:
    def test_reproducible(self):
        d = get_density("uniform")
        a = sample_density(d, 4, SeedSpec(5, 0)).values
        b = sample_density(d, 4, SeedSpec(5, 0)).values
        assert a.tobytes() == b.tobytes() and np.all((a > 0) & (a < 1))

    def test_standard_copula_is_uniform(self):
        x = sample_density(gaussian_copula_conditional(0.0, 0.5), 10_000, SeedSpec(6)).values
        assert stats.kstest(x, "uniform").statistic < 1.63 / math.sqrt(x.size)

    def test_beta_mean(self):
        x = sample_density(get_density("beta44"), 100_000, SeedSpec(7)).values
        assert abs(x.mean() - 0.5) <= 3 * math.sqrt(1 / 36 / x.size)


class TestRankScores:
    def test_clear_ordering(self):
        assert rank_scores({"a": 1.0, "b": 2.0, "c": 3.0}, {"a": 0.1, "b": 0.1, "c": 0.1}) == {"a": 1, "b": 2, "c": 3}

    def test_ties_within_two_standard_errors(self):
        r = rank_scores({"a": 1.0, "b": 1.15, "c": 3.0}, {"a": 0.1, "b": 0.1, "c": 0.1})
        assert r == {"a": 1, "b": 1, "c": 3}

    def test_permutation_consistent(self):
        mise = {"a": 0.3, "b": 0.1, "c": 0.2, "d": 0.25}
        se = {"a": 0.01, "b": 0.02, "c": 0.03, "d": 0.01}
        r = rank_scores(mise, se)
        rev = rank_scores(dict(reversed(list(mise.items()))), se)
        assert r == rev
        order = sorted(mise, key=mise.get)
        assert [r[k] for k in order] == sorted(r[k] for k in order)


@pytest.fixture(scope="module")
def result():
    return run_benchmark(small_config())


class TestRunBenchmark:
    def test_single_cell_equals_direct_call(self):
        cfg = BenchConfig(["beta25"], ["amended"], [60], replications=1, master_seed=3)
        res = run_benchmark(cfg)
        d = get_density("beta25")
        xs = d.sample(60, SeedSpec(3, 0))
        direct = ise_on_grid(fit_method(MethodSpec.parse("amended"), xs, unit_grid()).estimate, d)
        assert res.cells[0].ise == direct

    def test_mise_and_se(self, result):
        for (dn, n), block in result.summary.items():
            for e, s in block.items():
                col = result.ise_table(dn, n, e)
                assert s.mise == col.mean()
                assert s.se == pytest.approx(col.std(ddof=1) / math.sqrt(col.size), rel=1e-15)
                assert s.ok == 3 and s.failed == 0

    def test_replication_streams(self, result):
        d = get_density("bimodal")
        for c in result.cells:
            if c.density == "bimodal" and c.estimator == "naive":
                xs = d.sample(40, SeedSpec(11, c.replication))
                fit = fit_method(MethodSpec.parse("naive"), xs, unit_grid())
                assert c.ise == ise_on_grid(fit.estimate, d)

    def test_threads_give_identical_csv(self, result):
        again = run_benchmark(small_config(threads=3))
        assert csv_text(again) == csv_text(result)

    def test_csv_schema(self, result):
        lines = csv_text(result).splitlines()
        assert lines[0] == ",".join(CSV_FIELDS)
        assert len(lines) == 1 + 2 * 3 * 1 * 3

    def test_json_round_trip(self, result, tmp_path):
        emit_report(result, tmp_path, formats=("csv", "json"))
        parsed = json.loads((tmp_path / "summary.json").read_text())
        assert parsed["schemaVersion"] == 1 and parsed["seed"] == 11
        assert "threads" not in parsed["config"]
        got = mise_matrix(parsed)
        for (dn, n), block in result.summary.items():
            for e, s in block.items():
                assert got[(dn, n, e)] == (s.mise, s.se)
        assert (tmp_path / "bench.csv").read_text() == csv_text(result)

    def test_svg(self, result, tmp_path):
        paths = emit_report(result, tmp_path, formats=("svg",))
        assert len(paths) == 2
        root = ET.parse(paths[0]).getroot()
        assert root.get("width") == "800" and root.get("height") == "500"
        lines = root.findall("{http://www.w3.org/2000/svg}polyline")
        assert len(lines) == 3 + 1
        dashed = [p for p in lines if p.get("stroke-dasharray")]
        assert len(dashed) == 1 and dashed[0].get("stroke") == "black"


class TestFailures:
    def test_failure_cells_and_warning(self, monkeypatch):
        real = bench.fit_method

        def flaky(spec, xs, grid, *a, **k):
            if spec.method == "amended" and xs.values[0] < 0.2:
                raise ArithmeticError("forced")
            return real(spec, xs, grid, *a, **k)

        monkeypatch.setattr(bench, "fit_method", flaky)
        cfg = BenchConfig(["beta25"], ["naive", "amended"], [30], replications=6, master_seed=1)
        with pytest.warns(RuntimeWarning, match="amended failed"):
            res = run_benchmark(cfg)
        failed = [c for c in res.cells if c.status == "failed"]
        assert failed and all(c.estimator == "amended" and math.isnan(c.ise) for c in failed)
        assert len(res.cells) == 12
        block = res.summary[("beta25", 30)]
        assert block["amended"].rank is None and block["naive"].rank == 1
        assert summary_json(res)["failures"][0]["message"] == "ArithmeticError: forced"
        assert ",failed" in csv_text(res)


class TestConfig:
    def test_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            BenchConfig.from_dict({"densities": ["uniform"], "estimators": ["naive"],
                                   "sample_sizes": [10], "reps": 3})

    @pytest.mark.parametrize("bad", [dict(replications=0), dict(grid_points=100),
                                     dict(densities=["nope"]), dict(estimators=["t3"]),
                                     dict(sample_sizes=[1]), dict(estimators=[])])
    def test_validation(self, bad):
        with pytest.raises((ValueError, KeyError)):
            small_config(**bad)


def test_svg_without_truth_escapes_title():
    g = unit_grid(9)
    out = svg_plot(g, None, {"a<b": np.ones(9)}, "x & y")
    root = ET.fromstring(out)
    assert len(root.findall("{http://www.w3.org/2000/svg}polyline")) == 1
    assert "x &amp; y" in out
