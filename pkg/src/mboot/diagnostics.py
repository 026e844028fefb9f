"""Modelling-bias diagnostics: information matrices, the small-bias scalar, sq-Wilks residuals."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidModelError, SingularInformationError
from .generators import TrueModelSpec
from .models import CanonicalGLM, Dataset, GaussianLinear, Model, hessian, score
from .optimizer import fit_mle, lr_statistic

EIG_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class BiasDiagnostics:
    d2: np.ndarray | None
    h2: np.ndarray
    b2: np.ndarray
    smb: float
    theta_star: np.ndarray

    def to_dict(self) -> dict:
        def rows(m):
            return None if m is None else np.asarray(m).tolist()

        return {
            "d2": rows(self.d2),
            "h2": rows(self.h2),
            "b2": rows(self.b2),
            "smb": float(self.smb),
            "theta_star": np.asarray(self.theta_star).tolist(),
        }

    def to_json(self, path=None, **extra) -> str:
        text = json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def spectral_norm(m) -> float:
    """Largest absolute eigenvalue of a symmetric matrix."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T)))))


def _sym_power(m, power: float) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    top = np.max(np.abs(w))
    if top <= 0:
        raise SingularInformationError("matrix is zero")
    w = np.maximum(w, EIG_FLOOR * top)
    return (v * w**power) @ v.T


def sym_sqrt(m) -> np.ndarray:
    return _sym_power(m, 0.5)


def sym_inv_sqrt(m) -> np.ndarray:
    return _sym_power(m, -0.5)


def smb_value(h2, b2) -> float:
    """``|| H^{-1} B^2 H^{-1} ||`` with H the symmetric square root of ``h2``."""
    hi = sym_inv_sqrt(h2)
    return spectral_norm(hi @ np.atleast_2d(b2) @ hi)


def _check_nonsingular(m, what: str):
    w = np.linalg.eigvalsh(m)
    if w[-1] <= 0 or w[0] <= EIG_FLOOR * w[-1]:
        raise SingularInformationError(f"{what} is singular (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})")


def plug_in_matrices(model: Model, theta, b2=None) -> BiasDiagnostics:
    """Empirical ``H^2 = sum_i grad l_i grad l_i^T`` and ``D^2 = -hess L``.

    ``B^2`` cannot be estimated from one sample; it defaults to zero and may
    be supplied when known.
    """
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    psi, y = model.dataset.psi, model.dataset.y
    dl = model.family.d_eta(y, model.eta(theta))
    g = psi * dl[:, None]
    h2 = g.T @ g
    h2 = 0.5 * (h2 + h2.T)
    _check_nonsingular(h2, "plug-in H^2")
    d2 = -hessian(model, theta) if model.smooth else None
    b2 = np.zeros_like(h2) if b2 is None else np.atleast_2d(np.asarray(b2, dtype=np.float64))
    return BiasDiagnostics(d2, h2, b2, smb_value(h2, b2), theta)


def population_matrices(spec: TrueModelSpec, n: int | None = None) -> BiasDiagnostics:
    """Exact ``D^2, H^2, B^2`` under the generator's law at its target parameter.

    The fitted families have scores linear in ``y``, so with per-observation
    mean ``m_i = E dl_i`` and variance ``v_i = Var Y_i``:
    ``H^2 = sum (v_i + m_i^2) psi_i psi_i^T`` and ``B^2 = sum m_i^2 psi_i psi_i^T``.
    """
    if n is not None and n != spec.n:
        spec = TrueModelSpec(spec.kind, n, spec.p, spec.beta)
    psi = spec.design()
    fam = spec.family()
    theta = spec.theta_star()
    eta = psi @ theta
    m = fam.d_eta(spec.mean(), eta)
    v = spec.variance()
    d2 = -(psi * fam.d2_eta(spec.mean(), eta)[:, None]).T @ psi
    h2 = (psi * (v + m * m)[:, None]).T @ psi
    b2 = (psi * (m * m)[:, None]).T @ psi
    d2, h2, b2 = (0.5 * (a + a.T) for a in (d2, h2, b2))
    return BiasDiagnostics(d2, h2, b2, smb_value(h2, b2), theta)


def smb_closed_form(spec: TrueModelSpec) -> float:
    """Textbook closed forms for the two biased generators (p = 1)."""
    n, beta = spec.n, spec.beta
    if spec.kind == "sin_bias_laplace":
        return 1.0 - 1.0 / (beta**2 * (n - 1) / (2.0 * n) + 1.0)
    if spec.kind == "logistic_bias" and spec.p == 1:
        return beta / (1.0 - beta) * (n + 1) / (3.0 * (n - 1))
    raise InvalidModelError(f"no closed form for {spec.kind} with p={spec.p}")


def smb_threshold_met(smb: float, n: int) -> bool:
    """Whether the bias scalar sits below ``1/sqrt(n)``."""
    return smb <= n**-0.5


def _glm_mean(family, eta):
    if isinstance(family, GaussianLinear):
        return eta
    if isinstance(family, CanonicalGLM):
        return family.link.d1(eta)
    raise InvalidModelError(f"{family.name} is not a GLM")


def smb_bound_glm(model: Model, true_means, true_vars, theta_star) -> float:
    """``1 - min_i Var Y_i / (Var Y_i + (E Y_i - d'(psi_i theta*))^2)``."""
    mu = np.asarray(true_means, dtype=np.float64).reshape(-1)
    var = np.asarray(true_vars, dtype=np.float64).reshape(-1)
    if np.any(var <= 0):
        raise InvalidModelError("true variances must be positive")
    bias = mu - _glm_mean(model.family, model.eta(theta_star))
    return float(1.0 - np.min(var / (var + bias * bias)))


def smb_bound_quantile(tau: float, hit_probs) -> float:
    """Bound for linear quantile regression from ``p_i = P(Y_i < psi_i theta*)``."""
    p = np.asarray(hit_probs, dtype=np.float64).reshape(-1)
    if not (0 < tau < 1) or np.any((p <= 0) | (p >= 1)):
        raise InvalidModelError("tau and hit probabilities must lie in (0, 1)")
    var = p * (1.0 - p)
    return float(1.0 - np.min(var / (var + (tau - p) ** 2)))


def normalized_score(spec: TrueModelSpec, dataset: Dataset, diag: BiasDiagnostics | None = None) -> np.ndarray:
    """``xi = D^{-1} grad L(theta*)`` with the exact population ``D^2``."""
    diag = population_matrices(spec) if diag is None else diag
    _check_nonsingular(diag.d2, "D^2")
    model = spec.model(dataset)
    return sym_inv_sqrt(diag.d2) @ score(model, diag.theta_star)


def wilks_residual(spec: TrueModelSpec, dataset: Dataset, diag: BiasDiagnostics | None = None) -> float:
    """``| sqrt(2 (L(theta_hat) - L(theta*))) - ||xi|| |``."""
    diag = population_matrices(spec) if diag is None else diag
    model = spec.model(dataset)
    lr = lr_statistic(model, diag.theta_star, fit_mle(model))
    xi = normalized_score(spec, dataset, diag)
    return abs(np.sqrt(max(2.0 * lr, 0.0)) - float(np.linalg.norm(xi)))
