"""Monte Carlo harness: coverage tables, ECDF overlays and bias sweeps.

Replication ``r`` simulates its dataset from stream ``(seed, DATA, r)`` and its
bootstrap weights from streams keyed by ``(seed, BOOT, r, ...)``, so results are
independent of how replications are scheduled across worker threads.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng as _rng
from .bootstrap import BootstrapSample, WeightLaw, bootstrap_quantile, draw_bootstrap_sample, order_index, smoothed_bootstrap_quantile
from .errors import ExperimentAborted, MbootError, PathologicalSampleError
from .generators import TrueModelSpec
from .models import Model, log_lik
from .optimizer import fit_mle

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.99, 0.95, 0.90, 0.85, 0.80, 0.75)
BOOT = 3
MAX_FAILURE_RATE = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    spec: TrueModelSpec
    law: WeightLaw = WeightLaw.RADEMACHER_SHIFTED
    levels: tuple[float, ...] = DEFAULT_LEVELS
    outer_reps: int = 2000
    inner_B: int = 2000
    seed: int = 0
    smoothing: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "law", WeightLaw(self.law))
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels or any(not (0 < v < 1) for v in levels):
            raise ValueError("confidence levels must lie in (0, 1)")
        if any(a <= b for a, b in zip(levels, levels[1:])):
            raise ValueError("confidence levels must be strictly decreasing")
        if self.outer_reps < 1 or self.inner_B < 1:
            raise ValueError("outer_reps and inner_B must be >= 1")
        if self.smoothing is not None and not (0 < self.smoothing <= 0.22):
            raise ValueError("smoothing delta must lie in (0, 0.22]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["law"] = self.law.value
        d["levels"] = list(self.levels)
        return d


@dataclass
class _Replication:
    lr_real: float = math.nan
    quantiles: np.ndarray | None = None
    smoothed: np.ndarray | None = None
    resamples: int = 0
    failed: str | None = None
    sample: BootstrapSample | None = None


def _replicate(config: ExperimentConfig, rep: int, keep_sample: bool) -> _Replication:
    spec = config.spec
    ds = spec.simulate(_rng.stream(config.seed, _rng.DATA, rep))
    model = Model(spec.family(), ds)
    try:
        fit = fit_mle(model)
        theta_star = spec.theta_star()
        lr_real = fit.loglik_at_max - log_lik(model, theta_star)
        sample = draw_bootstrap_sample(
            model, fit.theta_hat, config.law, config.inner_B, config.seed, key=(BOOT, rep)
        )
    except MbootError as exc:
        return _Replication(failed=f"{type(exc).__name__}: {exc}")
    alphas = [1.0 - lv for lv in config.levels]
    q = np.array([bootstrap_quantile(sample, a) for a in alphas])
    sq = None
    if config.smoothing is not None:
        sq = np.array([smoothed_bootstrap_quantile(sample, a, config.smoothing) for a in alphas])
    return _Replication(lr_real, q, sq, sample.resample_count, None, sample if keep_sample else None)


def _simulate(config: ExperimentConfig, threads: int | None = None, keep_samples: int = 0) -> list[_Replication]:
    threads = threads or os.cpu_count() or 1
    reps = range(config.outer_reps)
    if threads == 1:
        return [_replicate(config, r, r < keep_samples) for r in reps]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: _replicate(config, r, r < keep_samples), reps))


def _check_failures(results, config, report=None):
    failed = [r.failed for r in results if r.failed]
    if len(failed) > MAX_FAILURE_RATE * len(results):
        raise ExperimentAborted(
            f"{len(failed)} of {len(results)} replications failed (first: {failed[0]})", report
        )
    if failed:
        log.warning("%d replications failed and were excluded", len(failed))


@dataclass
class CoverageReport:
    levels: tuple[float, ...]
    coverage: np.ndarray
    mc_se: np.ndarray
    n_valid: int
    n_failed: int
    resample_total: int
    wall_time: float
    smoothed_coverage: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def rows(self):
        for i, lv in enumerate(self.levels):
            row = [lv, float(self.coverage[i]), float(self.mc_se[i])]
            if self.smoothed_coverage is not None:
                row.append(float(self.smoothed_coverage[i]))
            yield row

    def to_csv(self, path) -> None:
        header = ["level", "coverage", "mc_se"]
        if self.smoothed_coverage is not None:
            header.append("smoothed_coverage")
        _write_csv(path, header, self.rows())

    def summary(self) -> dict:
        return {
            "n_valid": self.n_valid,
            "n_failed": self.n_failed,
            "resample_total": self.resample_total,
            "wall_time": self.wall_time,
        }


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else repr(v) for v in row) + "\n")


def write_sidecar(path, config: ExperimentConfig | dict, **extra) -> None:
    body = config.to_dict() if isinstance(config, ExperimentConfig) else dict(config)
    with open(path, "w") as fh:
        json.dump({**body, **extra}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _coverage_from(results, config, t0) -> CoverageReport:
    ok = [r for r in results if r.failed is None]
    lr = np.array([r.lr_real for r in ok])
    k = len(ok)
    if k == 0:
        cov = np.full(len(config.levels), np.nan)
        smooth = None
    else:
        q = np.vstack([r.quantiles for r in ok])
        # Counting integers keeps aggregation exact and order-free.
        hits = (lr[:, None] <= q * q / 2.0).sum(axis=0)
        cov = hits / k
        smooth = None
        if config.smoothing is not None:
            sq = np.vstack([r.smoothed for r in ok])
            smooth = (lr[:, None] <= sq * sq / 2.0).sum(axis=0) / k
    se = np.sqrt(cov * (1.0 - cov) / max(k, 1))
    return CoverageReport(
        config.levels,
        cov,
        se,
        k,
        len(results) - k,
        int(sum(r.resamples for r in ok)),
        time.perf_counter() - t0,
        smooth,
        config.to_dict(),
    )


def run_coverage(config: ExperimentConfig, threads: int | None = None) -> CoverageReport:
    """Coverage frequency of ``L(theta_hat) - L(theta*) <= z°^2 / 2`` per level."""
    t0 = time.perf_counter()
    results = _simulate(config, threads)
    report = _coverage_from(results, config, t0)
    _check_failures(results, config, report)
    return report


def ecdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Distinct sorted values and the right-continuous ECDF evaluated there."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    xs = np.unique(v)
    return xs, np.searchsorted(v, xs, side="right") / v.size


@dataclass
class EcdfTable:
    curves: dict[str, tuple[np.ndarray, np.ndarray]]
    config: dict = field(default_factory=dict)

    def records(self):
        for cid, (xs, fs) in self.curves.items():
            for x, f in zip(xs, fs):
                yield [cid, float(x), float(f)]

    def to_csv(self, path) -> None:
        _write_csv(path, ["curve_id", "value", "ecdf"], self.records())


def run_ecdf_pair(config: ExperimentConfig, n_boot_curves: int = 50, threads: int | None = None) -> EcdfTable:
    """ECDF of ``L(theta_hat) - L(theta*)`` plus conditional bootstrap ECDFs.

    Bootstrap curve ``k`` uses the dataset of replication ``k``.
    """
    if n_boot_curves < 0 or n_boot_curves > config.outer_reps:
        raise ValueError("n_boot_curves must lie in [0, outer_reps]")
    results = _simulate(config, threads, keep_samples=n_boot_curves)
    _check_failures(results, config)
    curves = {"data": ecdf([r.lr_real for r in results if r.failed is None])}
    width = len(str(max(n_boot_curves - 1, 0)))
    for k in range(n_boot_curves):
        r = results[k]
        if r.failed is not None:
            continue
        curves[f"boot_{k:0{width}d}"] = ecdf(r.sample.stats**2 / 2.0)
    return EcdfTable(curves, config.to_dict())


def empirical_quantile_se(sorted_vals: np.ndarray, alpha: float) -> float:
    """Standard error of an upper alpha order statistic.

    Half-width of the distribution-free 95% order-statistic interval, divided
    by 1.96; the rank half-width is ``1.96 sqrt(R alpha (1 - alpha))``.
    """
    R = sorted_vals.size
    m = order_index(R, alpha)
    spread = 1.96 * math.sqrt(R * alpha * (1.0 - alpha))
    lo = max(1, int(math.floor(m - spread)))
    hi = min(R, int(math.ceil(m + spread)))
    return float(sorted_vals[hi - 1] - sorted_vals[lo - 1]) / (2.0 * 1.96)


@dataclass
class SweepReport:
    betas: list[float]
    levels: tuple[float, ...]
    gap: np.ndarray  # (len(betas), len(levels))
    mc_se: np.ndarray
    boot_quantile: np.ndarray
    y_quantile: np.ndarray
    coverage: np.ndarray
    config: dict = field(default_factory=dict)

    def rows(self):
        for i, b in enumerate(self.betas):
            for j, lv in enumerate(self.levels):
                yield [float(b), lv, float(self.gap[i, j]), float(self.mc_se[i, j])]

    def to_csv(self, path) -> None:
        _write_csv(path, ["beta", "level", "gap", "mc_se"], self.rows())


def run_bias_sweep(base: ExperimentConfig, betas, threads: int | None = None) -> SweepReport:
    """Mean bootstrap quantile minus the Monte Carlo quantile of ``sqrt(2 LR)``, per beta."""
    if base.spec.kind not in ("sin_bias_laplace", "logistic_bias"):
        raise ValueError("bias sweeps need sin_bias_laplace or logistic_bias")
    betas = [float(b) for b in betas]
    L = len(base.levels)
    shape = (len(betas), L)
    gap, se, bq, yq, cov = (np.zeros(shape) for _ in range(5))
    for i, beta in enumerate(betas):
        config = replace(base, spec=replace(base.spec, beta=beta))
        t0 = time.perf_counter()
        results = _simulate(config, threads)
        rep = _coverage_from(results, config, t0)
        _check_failures(results, config, rep)
        ok = [r for r in results if r.failed is None]
        root = np.sort(np.sqrt(np.maximum(2.0 * np.array([r.lr_real for r in ok]), 0.0)))
        q = np.vstack([r.quantiles for r in ok])
        for j, lv in enumerate(base.levels):
            alpha = 1.0 - lv
            yq[i, j] = root[order_index(root.size, alpha) - 1]
            bq[i, j] = q[:, j].mean()
            gap[i, j] = bq[i, j] - yq[i, j]
            se[i, j] = math.hypot(q[:, j].std(ddof=1) / math.sqrt(len(ok)) if len(ok) > 1 else 0.0,
                                  empirical_quantile_se(root, alpha))
        cov[i] = rep.coverage
    cfg = base.to_dict()
    cfg["betas"] = betas
    return SweepReport(betas, base.levels, gap, se, bq, yq, cov, cfg)
