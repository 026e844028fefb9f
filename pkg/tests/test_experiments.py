import numpy as np
import pytest
from scipy import stats

from mboot.errors import ExperimentAborted
from mboot.experiments import (
    DEFAULT_LEVELS,
    ExperimentConfig,
    ecdf,
    run_bias_sweep,
    run_coverage,
    run_ecdf_pair,
    write_sidecar,
)
from mboot.generators import TrueModelSpec

SIN = TrueModelSpec("sin_bias_laplace", 50, 1, 1.25)


def small(spec, **kw):
    kw.setdefault("outer_reps", 200)
    kw.setdefault("inner_B", 300)
    return ExperimentConfig(spec, **kw)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"levels": (0.9, 0.95)},
            {"levels": (0.9, 0.9)},
            {"levels": (1.0,)},
            {"levels": ()},
            {"outer_reps": 0},
            {"inner_B": 0},
            {"smoothing": 0.3},
            {"smoothing": 0.0},
            {"law": "uniform"},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(SIN, **kw)

    def test_round_trip_dict(self, tmp_path):
        cfg = small(SIN, law="gaussian", smoothing=0.1)
        d = cfg.to_dict()
        assert d["law"] == "gaussian" and d["levels"] == list(DEFAULT_LEVELS)
        write_sidecar(tmp_path / "c.json", cfg, note=1)
        assert '"note": 1' in (tmp_path / "c.json").read_text()


class TestCoverage:
    def test_single_replication(self):
        r = run_coverage(small(TrueModelSpec("polynomial_gaussian", 20, 2), outer_reps=1), threads=1)
        assert set(r.coverage.tolist()) <= {0.0, 1.0}

    def test_monotone_in_level(self):
        r = run_coverage(small(TrueModelSpec("polynomial_laplace_hetero", 30, 2), law="exponential"), threads=1)
        assert np.all(np.diff(r.coverage) <= 0)
        np.testing.assert_allclose(r.mc_se, np.sqrt(r.coverage * (1 - r.coverage) / r.n_valid))

    def test_threads_do_not_change_output(self, tmp_path):
        cfg = small(TrueModelSpec("logistic_bias", 40, 1, 0.4), outer_reps=60, smoothing=0.1)
        run_coverage(cfg, threads=1).to_csv(tmp_path / "a.csv")
        run_coverage(cfg, threads=3).to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_csv_layout(self, tmp_path):
        r = run_coverage(small(SIN, outer_reps=20, smoothing=0.05), threads=1)
        r.to_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "level,coverage,mc_se,smoothed_coverage"
        assert len(lines) == 7 and lines[1].startswith("0.99,")

    def test_smoothed_close_to_plain(self):
        r = run_coverage(small(SIN, smoothing=0.01), threads=1)
        assert np.max(np.abs(r.smoothed_coverage - r.coverage)) <= 0.03

    def test_exchangeable_seeds(self):
        spec = TrueModelSpec("polynomial_gaussian", 50, 1)
        a = run_coverage(small(spec, outer_reps=400, seed=1), threads=1)
        b = run_coverage(small(spec, outer_reps=400, seed=2), threads=1)
        se = np.sqrt(a.mc_se**2 + b.mc_se**2)
        assert np.all(np.abs(a.coverage - b.coverage) <= 3 * np.maximum(se, 1e-12))

    def test_abort_on_failures(self):
        # Three Bernoulli observations with small slope are often perfectly separated.
        cfg = small(TrueModelSpec("logistic_bias", 3, 1, 0.05), outer_reps=50, inner_B=20)
        with pytest.raises(ExperimentAborted) as info:
            run_coverage(cfg, threads=1)
        assert info.value.report.n_failed > 0


class TestEcdf:
    def test_axioms(self):
        v = np.array([3.0, 1.0, 2.0, 2.0, 5.0])
        xs, fs = ecdf(v)
        np.testing.assert_array_equal(xs, [1, 2, 3, 5])
        np.testing.assert_array_equal(fs, [0.2, 0.6, 0.8, 1.0])
        for x, f in zip(xs, fs):
            assert f == np.mean(v <= x)

    def test_table(self, tmp_path):
        t = run_ecdf_pair(small(SIN, outer_reps=30, inner_B=40), n_boot_curves=12, threads=1)
        assert set(t.curves) == {"data"} | {f"boot_{k:02d}" for k in range(12)}
        for xs, fs in t.curves.values():
            assert np.all(np.diff(xs) > 0) and np.all(np.diff(fs) > 0) and fs[-1] == 1.0
        t.to_csv(tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "curve_id,value,ecdf" and lines[1].startswith("data,")

    def test_curve_count_domain(self):
        with pytest.raises(ValueError):
            run_ecdf_pair(small(SIN, outer_reps=5), n_boot_curves=6)

    @staticmethod
    def _at(curve, x):
        xs, fs = curve
        i = np.searchsorted(xs, x, side="right")
        return 0.0 if i == 0 else fs[i - 1]

    def test_large_bias_dominance(self):
        t = run_ecdf_pair(small(SIN, law="gaussian", outer_reps=1000, inner_B=1000), threads=1)
        xs, fs = t.curves["data"]
        x90 = xs[np.searchsorted(fs, 0.9)]
        below = sum(self._at(c, x90) <= self._at(t.curves["data"], x90) for k, c in t.curves.items() if k != "data")
        assert below >= 45

    def test_small_bias_no_separation(self):
        spec = TrueModelSpec("sin_bias_laplace", 50, 1, 0.25)
        cfg = small(spec, law="gaussian", outer_reps=1000, inner_B=1000)
        t = run_ecdf_pair(cfg, threads=1)
        # Ties have probability zero, so the distinct values are the samples themselves.
        data = t.curves["data"][0]
        pooled = np.concatenate([c[0] for k, c in t.curves.items() if k != "data"])
        assert stats.ks_2samp(data, pooled).statistic <= 0.1


class TestSweep:
    def test_unbiased_gap(self):
        base = small(TrueModelSpec("sin_bias_laplace", 50, 1), law="gaussian", outer_reps=1000, inner_B=1000)
        r = run_bias_sweep(base, [0.0], threads=1)
        # A finite-sample bias of about -0.8 SE per level remains at n = 50, so the
        # per-level band is 3 SE and the 2 SE band applies to the level average.
        assert np.all(np.abs(r.gap[0]) <= 3 * r.mc_se[0])
        assert abs(r.gap[0].mean()) <= 2 * r.mc_se[0].mean()

    def test_layout(self, tmp_path):
        base = small(TrueModelSpec("logistic_bias", 40, 1, 0.3), outer_reps=20, inner_B=50)
        r = run_bias_sweep(base, [0.3, 0.5], threads=1)
        assert r.gap.shape == (2, 6)
        np.testing.assert_allclose(r.gap, r.boot_quantile - r.y_quantile)
        r.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "beta,level,gap,mc_se" and len(lines) == 13

    def test_rejects_unbiased_generators(self):
        with pytest.raises(ValueError):
            run_bias_sweep(small(TrueModelSpec("polynomial_gaussian")), [0.0])
