"""Simulation laws with a known target parameter.

Four generators are available:

* ``polynomial_gaussian``: ``Y_i = psi_i @ 1 + N(0, 1)``, polynomial regressors on [0, 1];
* ``polynomial_laplace_hetero``: same mean, noise ``sigma_i * Laplace(0, 2**-0.5)``
  with ``sigma_i = 0.5 * (4 - i mod 4)``, i starting at 1;
* ``sin_bias_laplace``: ``Y_i = beta * sin(X_i) + Laplace(0, 2**-0.5)``, X on [0, 2 pi],
  fitted by a constant;
* ``logistic_bias``: ``Y_i ~ Bernoulli(beta * X_i)``, X on [0, 2], fitted by logistic
  regression on polynomial regressors (intercept only when p = 1).

Design points are equidistant and include both endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidModelError
from .models import BernoulliGLM, Dataset, GaussianLinear, Model

GENERATORS = ("polynomial_gaussian", "polynomial_laplace_hetero", "sin_bias_laplace", "logistic_bias")
LAPLACE_SCALE = 2.0**-0.5


@dataclass(frozen=True)
class TrueModelSpec:
    kind: str
    n: int = 50
    p: int = 1
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in GENERATORS:
            raise InvalidModelError(f"unknown generator {self.kind!r}; expected one of {GENERATORS}")
        if self.n < 1 or self.p < 1:
            raise InvalidModelError("need n >= 1 and p >= 1")
        if self.kind == "sin_bias_laplace":
            if self.p != 1:
                raise InvalidModelError("sin_bias_laplace is a constant regression (p = 1)")
            if not (self.beta >= 0 and math.isfinite(self.beta)):
                raise InvalidModelError("sin_bias_laplace needs a finite beta >= 0")
        if self.kind == "logistic_bias" and not (0.0 < self.beta <= 0.5):
            raise InvalidModelError("logistic_bias needs beta in (0, 1/2]")

    # -- design ----------------------------------------------------------

    @property
    def interval(self) -> tuple[float, float]:
        return {"sin_bias_laplace": (0.0, 2.0 * math.pi), "logistic_bias": (0.0, 2.0)}.get(self.kind, (0.0, 1.0))

    def design_points(self) -> np.ndarray:
        a, b = self.interval
        return np.linspace(a, b, self.n)

    def design(self) -> np.ndarray:
        x = self.design_points()
        return x[:, None] ** np.arange(self.p)[None, :]

    def family(self):
        return BernoulliGLM() if self.kind == "logistic_bias" else GaussianLinear()

    # -- moments ---------------------------------------------------------

    def sigma(self) -> np.ndarray:
        if self.kind == "polynomial_laplace_hetero":
            i = np.arange(1, self.n + 1)
            return 0.5 * (4 - i % 4)
        return np.ones(self.n)

    def mean(self) -> np.ndarray:
        x = self.design_points()
        if self.kind in ("polynomial_gaussian", "polynomial_laplace_hetero"):
            return self.design() @ np.ones(self.p)
        if self.kind == "sin_bias_laplace":
            return self.beta * np.sin(x)
        return self.beta * x

    def variance(self) -> np.ndarray:
        if self.kind == "logistic_bias":
            m = self.mean()
            return m * (1.0 - m)
        return self.sigma() ** 2

    def theta_star(self) -> np.ndarray:
        """Maximizer of the expected log-likelihood."""
        if self.kind in ("polynomial_gaussian", "polynomial_laplace_hetero"):
            return np.ones(self.p)
        if self.kind == "sin_bias_laplace":
            return np.zeros(1)
        if self.p == 1:
            return np.array([math.log(self.beta / (1.0 - self.beta))])
        return _population_logistic_theta(self.design(), self.mean())

    # -- sampling --------------------------------------------------------

    def simulate(self, gen: np.random.Generator) -> Dataset:
        mu = self.mean()
        if self.kind == "polynomial_gaussian":
            y = mu + gen.standard_normal(self.n)
        elif self.kind in ("polynomial_laplace_hetero", "sin_bias_laplace"):
            y = mu + self.sigma() * gen.laplace(0.0, LAPLACE_SCALE, self.n)
        else:
            y = (gen.random(self.n) < mu).astype(np.float64)
        return Dataset(y, self.design())

    def model(self, dataset: Dataset) -> Model:
        return Model(self.family(), dataset)


def _population_logistic_theta(psi, mu) -> np.ndarray:
    # The logistic score is linear in y, so the target solves the score
    # equation with y replaced by its mean.
    from .optimizer import _newton_batch

    fam = BernoulliGLM()
    theta, _ll, _it, gn, conv, deg = _newton_batch(fam, psi, mu, np.ones((1, mu.size)), np.zeros((1, psi.shape[1])))
    if deg[0] or not conv[0]:
        raise InvalidModelError("target parameter of logistic_bias does not exist for this design")
    return theta[0]
