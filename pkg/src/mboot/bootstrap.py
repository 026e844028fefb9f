"""Multiplier weights, bootstrap LR samples and their quantiles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import rng as _rng
from .errors import PathologicalSampleError
from .models import Model
from .optimizer import bootstrap_lr_batch

DEFAULT_B = 10_000


class WeightLaw(str, Enum):
    """Multiplier laws with mean 1 and variance 1."""

    RADEMACHER_SHIFTED = "rademacher_shifted"
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"

    def draw(self, gen: np.random.Generator, size) -> np.ndarray:
        if self is WeightLaw.RADEMACHER_SHIFTED:
            return 2.0 * gen.integers(0, 2, size=size).astype(np.float64)
        if self is WeightLaw.GAUSSIAN:
            return gen.normal(1.0, 1.0, size=size)
        return gen.exponential(1.0, size=size)


def sample_weights(law: WeightLaw | str, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. multipliers; identical output for identical ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return WeightLaw(law).draw(_rng.as_generator(seed), n)


@dataclass(frozen=True, eq=False)
class BootstrapSample:
    """Sorted draws of ``sqrt(2 L°(theta°) - 2 L°(theta_hat))``."""

    stats: np.ndarray
    resample_count: int = 0
    seed: dict = field(default_factory=dict)
    law: str = ""

    def __post_init__(self):
        s = np.sort(np.asarray(self.stats, dtype=np.float64).reshape(-1))
        if s.size < 1:
            raise ValueError("a bootstrap sample needs B >= 1")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("bootstrap statistics must be finite and nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "stats", s)

    @property
    def B(self) -> int:
        return self.stats.size

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("sqrt_lr\n")
            for v in self.stats:
                fh.write(repr(float(v)) + "\n")

    def sidecar(self) -> dict:
        return {"seed": self.seed, "B": self.B, "law": self.law, "resample_count": self.resample_count}

    def write(self, csv_path, json_path) -> None:
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, csv_path, json_path=None) -> "BootstrapSample":
        with open(csv_path) as fh:
            header = fh.readline().strip()
            if header != "sqrt_lr":
                raise ValueError(f"{csv_path}: expected header 'sqrt_lr'")
            vals = [float(line) for line in fh if line.strip()]
        meta = {}
        if json_path is not None:
            with open(json_path) as fh:
                meta = json.load(fh)
        return cls(np.array(vals), meta.get("resample_count", 0), meta.get("seed", {}), meta.get("law", ""))


def _to_sqrt(stats: np.ndarray) -> np.ndarray:
    # Solver noise can leave values a hair below zero.
    return np.sqrt(np.maximum(2.0 * stats, 0.0))


def draw_bootstrap_sample(
    model: Model,
    theta_hat,
    law: WeightLaw | str,
    B: int = DEFAULT_B,
    seed: int = 0,
    *,
    key: tuple[int, ...] = (),
    unit_weights: bool = False,
) -> BootstrapSample:
    """Conditional bootstrap distribution of the square-root LR statistic.

    Draw ``b`` uses row ``b`` of the weight block generated from stream
    ``(seed, *key, WEIGHTS)``. A degenerate draw is replaced by fresh weights
    from stream ``(seed, *key, RESAMPLE, b, retry)``. ``unit_weights`` forces
    ``u = 1`` everywhere (a test hook).
    """
    law = WeightLaw(law)
    if B < 1:
        raise ValueError("B must be >= 1")
    n = model.n
    if unit_weights:
        # theta_hat already maximizes the unweighted likelihood.
        record = {"seed": int(seed), "key": [int(k) for k in key]}
        return BootstrapSample(np.zeros(B), 0, record, law.value)
    U = law.draw(_rng.stream(seed, *key, _rng.WEIGHTS), (B, n))
    stats, bad = bootstrap_lr_batch(model, U, theta_hat)
    resamples = 0
    for b in np.flatnonzero(bad):
        retry = 0
        while True:
            retry += 1
            resamples += 1
            if resamples > B:
                raise PathologicalSampleError(f"more than B={B} degenerate bootstrap draws")
            u = law.draw(_rng.stream(seed, *key, _rng.RESAMPLE, int(b), retry), (1, n))
            s, d = bootstrap_lr_batch(model, u, theta_hat)
            if not d[0]:
                stats[b] = s[0]
                break
    record = {"seed": int(seed), "key": [int(k) for k in key]}
    return BootstrapSample(_to_sqrt(stats), resamples, record, law.value)


def order_index(B: int, alpha: float) -> int:
    """1-based rank ``ceil(B (1 - alpha))`` of the upper alpha-quantile."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    # Guard against 1900.0000000000002-style products.
    m = math.ceil(round(B * (1.0 - alpha), 9))
    return min(max(m, 1), B)


def bootstrap_quantile(sample: BootstrapSample | np.ndarray, alpha: float) -> float:
    """Smallest sample value ``z`` with ``#{s_b > z} / B <= alpha``."""
    s = sample.stats if isinstance(sample, BootstrapSample) else np.sort(np.asarray(sample, dtype=np.float64))
    return float(s[order_index(s.size, alpha) - 1])


def smoothstep(t):
    """C^3 step: 0 for t <= 0, 1 for t >= 1, ``35t^4 - 84t^5 + 70t^6 - 20t^7`` between."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    # Rounding can push the polynomial a hair past 1 just below t = 1.
    return np.minimum(t**4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t))), 1.0)


def smooth_indicator(x, z: float, delta: float):
    """Smoothed ``1{x > z}``: ``g((x^2 - z^2) / (2 delta z))``."""
    if z <= 0 or delta <= 0:
        raise ValueError("z and delta must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = smoothstep((x * x - z * z) / (2.0 * delta * z))
    return float(out) if out.ndim == 0 else out


def smoothed_bootstrap_quantile(sample: BootstrapSample | np.ndarray, alpha: float, delta: float, tol: float = 1e-8) -> float:
    """Smallest ``z >= 0`` with ``mean_b g_delta(s_b, z) <= alpha``, by bisection."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    s = sample.stats if isinstance(sample, BootstrapSample) else np.asarray(sample, dtype=np.float64)
    # As z -> 0+, g_delta(x, z) -> 1{x > 0}.
    if np.mean(s > 0) <= alpha:
        return 0.0

    def mean_g(z):
        return float(np.mean(smoothstep((s * s - z * z) / (2.0 * delta * z))))

    lo, hi = 0.0, float(np.max(s))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid > 0 and mean_g(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi
