"""Datasets and quasi-log-likelihood families.

Every family here is a single-index model: the per-observation log-density
depends on the parameter only through the linear predictor ``eta_i = psi_i @ theta``.
A family therefore supplies three vectorized functions of ``(y, eta)``:
the log-density terms and their first and second derivatives in ``eta``.
Scores and Hessians of the full likelihood follow by the chain rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import InvalidModelError, UnsupportedOperationError

__all__ = [
    "Dataset",
    "GLMLink",
    "GLM_LINKS",
    "GaussianLinear",
    "BernoulliGLM",
    "CanonicalGLM",
    "Quantile",
    "Model",
    "log_lik",
    "score",
    "hessian",
    "check_loss",
]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Fixed sample: responses ``y`` (n,) and regressor rows ``psi`` (n, p)."""

    y: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        y = _frozen(self.y).reshape(-1)
        psi = _frozen(self.psi)
        if psi.ndim == 1:
            psi = _frozen(psi.reshape(-1, 1))
        if psi.ndim != 2:
            raise InvalidModelError("psi must be a 2-d array")
        if y.size < 1 or psi.shape[1] < 1:
            raise InvalidModelError("need n >= 1 and p >= 1")
        if psi.shape[0] != y.size:
            raise InvalidModelError(f"psi has {psi.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(psi))):
            raise InvalidModelError("dataset entries must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "psi", psi)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.psi.shape[1]

    def to_csv(self, path) -> None:
        header = ["y"] + [f"psi_{j}" for j in range(self.p)]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for yi, row in zip(self.y, self.psi):
                fh.write(",".join(repr(float(v)) for v in (yi, *row)) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise InvalidModelError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        expected = ["y"] + [f"psi_{j}" for j in range(len(header) - 1)]
        if header != expected or len(header) < 2:
            raise InvalidModelError(f"{path}: header must be y,psi_0,...,psi_{{p-1}}; got {header}")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
        except ValueError as exc:
            raise InvalidModelError(f"{path}: {exc}") from None
        if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
            raise InvalidModelError(f"{path}: malformed rows")
        return cls(data[:, 0], data[:, 1:])


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GLMLink:
    """Cumulant function ``d`` of a canonical exponential family and its derivatives.

    ``initial_eta`` maps the responses to a constant linear predictor inside the
    natural-parameter domain; it is used to start Newton iteration.
    """

    name: str
    d: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    initial_eta: Callable[[np.ndarray], float] = field(default=lambda y: 0.0)


def _neg_log_neg(v):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(v < 0, -np.log(np.where(v < 0, -v, 1.0)), np.inf)


def _exp_d1(v):
    with np.errstate(divide="ignore"):
        return np.where(v < 0, -1.0 / np.where(v < 0, v, -1.0), np.nan)


def _exp_d2(v):
    with np.errstate(divide="ignore"):
        return np.where(v < 0, 1.0 / np.where(v < 0, v, -1.0) ** 2, np.nan)


def _exp_init(y):
    m = float(np.mean(y))
    return -1.0 / m if m > 0 else -1.0


GLM_LINKS: dict[str, GLMLink] = {
    "normal": GLMLink("normal", lambda v: 0.5 * v * v, lambda v: v, lambda v: np.ones_like(v)),
    "exponential": GLMLink("exponential", _neg_log_neg, _exp_d1, _exp_d2, _exp_init),
    "poisson": GLMLink("poisson", np.exp, np.exp, np.exp),
    "binomial": GLMLink(
        "binomial",
        lambda v: np.logaddexp(0.0, v),
        expit,
        lambda v: expit(v) * expit(-v),
    ),
}


class _Family:
    name: str = ""
    smooth: bool = True

    def validate(self, dataset: Dataset) -> None:
        pass

    def initial_eta(self, y: np.ndarray) -> float:
        return 0.0

    def terms(self, y, eta):
        raise NotImplementedError

    def d_eta(self, y, eta):
        raise NotImplementedError

    def d2_eta(self, y, eta):
        raise UnsupportedOperationError(f"{self.name}: log-likelihood is not twice differentiable")


@dataclass(frozen=True)
class GaussianLinear(_Family):
    """``l_i = -(y_i - eta_i)^2 / 2``."""

    name = "gaussian_linear"

    def terms(self, y, eta):
        r = y - eta
        return -0.5 * r * r

    def d_eta(self, y, eta):
        return y - eta

    def d2_eta(self, y, eta):
        return -np.ones(np.broadcast_shapes(np.shape(y), np.shape(eta)))


@dataclass(frozen=True)
class CanonicalGLM(_Family):
    """``l_i = y_i eta_i - d(eta_i)`` for a convex cumulant ``d``."""

    link: GLMLink = GLM_LINKS["binomial"]

    @property
    def name(self):  # type: ignore[override]
        return f"glm_canonical[{self.link.name}]"

    def initial_eta(self, y):
        return self.link.initial_eta(y)

    def terms(self, y, eta):
        return y * eta - self.link.d(eta)

    def d_eta(self, y, eta):
        return y - self.link.d1(eta)

    def d2_eta(self, y, eta):
        return -self.link.d2(eta) * np.ones_like(y)


@dataclass(frozen=True)
class BernoulliGLM(CanonicalGLM):
    """Logistic regression; responses must be 0/1."""

    link: GLMLink = GLM_LINKS["binomial"]
    name = "bernoulli_glm"  # type: ignore[assignment]

    def validate(self, dataset):
        if not np.all((dataset.y == 0) | (dataset.y == 1)):
            raise InvalidModelError("bernoulli_glm requires every y_i in {0, 1}")


def check_loss(x, tau: float):
    """Koenker-Bassett check function ``x * (tau - 1{x < 0})``."""
    x = np.asarray(x, dtype=np.float64)
    return x * (tau - (x < 0))


@dataclass(frozen=True)
class Quantile(_Family):
    """Linear quantile regression, ``l_i = -rho_tau(y_i - eta_i)``.

    The additive constant ``log tau(1 - tau)`` of the asymmetric Laplace density
    is dropped. At the kink the subgradient uses ``1{0 < 0} = 0``.
    """

    tau: float = 0.5
    name = "quantile"
    smooth = False

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise InvalidModelError(f"quantile level tau must lie in (0, 1), got {self.tau}")

    def terms(self, y, eta):
        return -check_loss(y - eta, self.tau)

    def d_eta(self, y, eta):
        return self.tau - ((y - eta) < 0).astype(np.float64)


@dataclass(frozen=True, eq=False)
class Model:
    """A family bound to a dataset."""

    family: _Family
    dataset: Dataset

    def __post_init__(self):
        self.family.validate(self.dataset)

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def p(self) -> int:
        return self.dataset.p

    @property
    def smooth(self) -> bool:
        return self.family.smooth

    def eta(self, theta) -> np.ndarray:
        return self.dataset.psi @ self._theta(theta)

    def _theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.p:
            raise InvalidModelError(f"theta has dimension {theta.size}, model has p={self.p}")
        if not np.all(np.isfinite(theta)):
            raise InvalidModelError("theta must be finite")
        return theta

    def weighted_terms(self, theta, u=None) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            t = self.family.terms(self.dataset.y, self.eta(theta))
        return t if u is None else t * u


def log_lik(model: Model, theta, u=None) -> float:
    """``sum_i u_i l_i(theta)`` with ``u = 1`` by default."""
    value = float(np.sum(model.weighted_terms(theta, u)))
    if not np.isfinite(value):
        raise InvalidModelError(f"theta outside the admissible domain of {model.family.name}")
    return value


def score(model: Model, theta, u=None) -> np.ndarray:
    """Gradient (a subgradient for the quantile family) of the weighted log-likelihood."""
    eta = model.eta(theta)
    g = model.family.d_eta(model.dataset.y, eta)
    if u is not None:
        g = g * u
    out = model.dataset.psi.T @ g
    if not np.all(np.isfinite(out)):
        raise InvalidModelError(f"theta outside the admissible domain of {model.family.name}")
    return out


def hessian(model: Model, theta, u=None) -> np.ndarray:
    """Hessian ``sum_i u_i d2l_i psi_i psi_i^T``; symmetric by construction."""
    if not model.smooth:
        raise UnsupportedOperationError(f"{model.family.name}: Hessian undefined for a non-smooth loss")
    eta = model.eta(theta)
    w = model.family.d2_eta(model.dataset.y, eta)
    if u is not None:
        w = w * u
    psi = model.dataset.psi
    h = (psi * w[:, None]).T @ psi
    if not np.all(np.isfinite(h)):
        raise InvalidModelError(f"theta outside the admissible domain of {model.family.name}")
    return 0.5 * (h + h.T)
