"""Quasi-MLE and multiplier-weighted MLE for smooth single-index families.

Gaussian linear models are solved in closed form. Other smooth families use a
damped Newton iteration (full step, then halving until the objective does not
decrease), vectorized over a batch of weight vectors so that a whole bootstrap
sample can be fitted in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDrawError, InvalidModelError, NonConvergenceError, UnsupportedOperationError
from .models import GaussianLinear, Model, log_lik

MAX_ITER = 200
MAX_HALVINGS = 30
THETA_BOX = 50.0
RIDGE = 1e-8


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    loglik_at_max: float
    iterations: int
    grad_norm: float
    converged: bool


def grad_tolerance(n: int) -> float:
    return 1e-10 * max(1, n)


def _require_smooth(model: Model):
    if not model.smooth:
        raise UnsupportedOperationError(f"MLE is not supported for the non-smooth {model.family.name} family")


def _outer_rows(psi: np.ndarray) -> np.ndarray:
    """Row-wise outer products flattened to (n, p*p)."""
    n, p = psi.shape
    return (psi[:, :, None] * psi[:, None, :]).reshape(n, p * p)


def _batched_solve_pd(a: np.ndarray, b: np.ndarray):
    """Solve ``a x = b`` for a batch of symmetric matrices.

    Returns ``(x, ok)`` where ``ok`` flags the positive definite members; the
    remaining rows of ``x`` are NaN.
    """
    B, p, _ = a.shape
    x = np.full((B, p), np.nan)
    try:
        c = np.linalg.cholesky(a)
        ok = np.ones(B, dtype=bool)
    except np.linalg.LinAlgError:
        c = None
    if c is None:
        ok = np.zeros(B, dtype=bool)
        for i in range(B):
            try:
                ci = np.linalg.cholesky(a[i])
            except np.linalg.LinAlgError:
                continue
            ok[i] = True
            x[i] = np.linalg.solve(ci.T, np.linalg.solve(ci, b[i]))
        return x, ok
    z = np.linalg.solve(c, b[..., None])
    x = np.linalg.solve(np.swapaxes(c, -1, -2), z)[..., 0]
    return x, ok


def _newton_batch(family, psi, y, U, theta0, *, box=THETA_BOX, max_iter=MAX_ITER):
    """Damped Newton ascent on ``sum_i U[b, i] l_i(theta_b)`` for every row b.

    Returns ``(theta, loglik, iterations, grad_norm, converged, degenerate)``.
    A row is degenerate when its information matrix is indefinite even after
    ridge damping, when it collapses (the supremum is approached only as
    ``|theta| -> inf``), or when an iterate leaves the box ``|theta|_inf <= box``.
    Rows meeting the gradient tolerance take one more polishing step.
    """
    n, p = psi.shape
    Bn = U.shape[0]
    K = _outer_rows(psi)
    tol = grad_tolerance(n)
    theta = np.array(theta0, dtype=np.float64, copy=True)
    # Scale against which a vanishing information matrix is judged.
    gram_scale = (np.abs(U) @ K).reshape(-1, p, p).trace(axis1=1, axis2=2) / p

    def objective(th, rows):
        with np.errstate(invalid="ignore", over="ignore"):
            t = U[rows] * family.terms(y, th @ psi.T)
            val = t.sum(axis=1)
            slack = 64 * np.finfo(float).eps * np.abs(t).sum(axis=1)
        val = np.where(np.isfinite(val), val, -np.inf)
        return val, slack

    ll, _ = objective(theta, np.arange(Bn))
    iters = np.zeros(Bn, dtype=int)
    gnorm = np.full(Bn, np.inf)
    converged = np.zeros(Bn, dtype=bool)
    polished = np.zeros(Bn, dtype=bool)
    degenerate = ~np.isfinite(ll)
    active = ~degenerate

    def drop(rows, mask, *arrays):
        return (rows[~mask],) + tuple(a[~mask] for a in arrays)

    for _ in range(max_iter + 2):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        th = theta[rows]
        eta = th @ psi.T
        Ur = U[rows]
        g = (Ur * family.d_eta(y, eta)) @ psi
        gn = np.linalg.norm(g, axis=1)
        gnorm[rows] = gn
        info = -((Ur * family.d2_eta(y, eta)) @ K).reshape(-1, p, p)
        info = 0.5 * (info + np.swapaxes(info, -1, -2))
        hit = gn <= tol
        if hit.any():
            lam = np.linalg.eigvalsh(info[hit])[:, 0]
            collapsed = lam <= RIDGE * gram_scale[rows[hit]]
            degenerate[rows[hit][collapsed]] = True
            converged[rows[hit][~collapsed]] = True
        done = hit & (polished[rows] | degenerate[rows])
        active[rows[done]] = False
        polished[rows[hit]] = True
        rows, th, g, info = drop(rows, done, th, g, info)
        stop = iters[rows] >= max_iter
        active[rows[stop]] = False
        rows, th, g, info = drop(rows, stop, th, g, info)
        if rows.size == 0:
            break
        step, ok = _batched_solve_pd(info, g)
        if not ok.all():
            bad = np.flatnonzero(~ok)
            tr = np.trace(info[bad], axis1=1, axis2=2)
            ridge = RIDGE * np.abs(tr) / p
            damped = info[bad] + ridge[:, None, None] * np.eye(p)
            s2, ok2 = _batched_solve_pd(damped, g[bad])
            step[bad] = s2
            ok[bad] = ok2
        if not ok.all():
            degenerate[rows[~ok]] = True
            active[rows[~ok]] = False
            rows, th, step = rows[ok], th[ok], step[ok]
            if rows.size == 0:
                break
        base = ll[rows]
        t = np.ones(rows.size)
        accepted = np.zeros(rows.size, dtype=bool)
        new_theta = th.copy()
        new_ll = base.copy()
        for _h in range(MAX_HALVINGS + 1):
            pend = np.flatnonzero(~accepted)
            if pend.size == 0:
                break
            cand = th[pend] + t[pend, None] * step[pend]
            val, slack = objective(cand, rows[pend])
            good = val >= base[pend] - slack
            idx = pend[good]
            new_theta[idx] = cand[good]
            new_ll[idx] = val[good]
            accepted[idx] = True
            t[pend[~good]] *= 0.5
        iters[rows] += 1
        # No ascent left along the Newton direction: stop these rows.
        active[rows[~accepted]] = False
        theta[rows[accepted]] = new_theta[accepted]
        ll[rows[accepted]] = new_ll[accepted]
        if box is not None:
            out = np.max(np.abs(theta[rows]), axis=1) > box
            degenerate[rows[out]] = True
            active[rows[out]] = False

    return theta, ll, iters, gnorm, converged & ~degenerate, degenerate


def _gaussian_fit(model: Model, u=None) -> FitResult:
    psi, y = model.dataset.psi, model.dataset.y
    if u is None:
        theta = np.linalg.lstsq(psi, y, rcond=None)[0]
        r = y - psi @ theta
        theta = theta + np.linalg.lstsq(psi, r, rcond=None)[0]
    else:
        u = np.asarray(u, dtype=np.float64)
        q, rr = np.linalg.qr(psi)
        G = (q * u[:, None]).T @ q
        x, ok = _batched_solve_pd(G[None], (q.T @ (u * y))[None])
        if not ok[0]:
            raise DegenerateDrawError("weighted design is not positive definite")
        theta = np.linalg.solve(rr, x[0])
    g = psi.T @ ((y - psi @ theta) * (1.0 if u is None else u))
    gn = float(np.linalg.norm(g))
    return FitResult(theta, log_lik(model, theta, u), 1, gn, gn <= grad_tolerance(model.n))


def _initial_theta(model: Model) -> np.ndarray:
    eta0 = model.family.initial_eta(model.dataset.y)
    if eta0 == 0.0:
        return np.zeros(model.p)
    return np.linalg.lstsq(model.dataset.psi, np.full(model.n, eta0), rcond=None)[0]


def fit_mle(model: Model) -> FitResult:
    """Maximize the (unweighted) log-likelihood."""
    return fit_weighted_mle(model, None)


def fit_weighted_mle(model: Model, u=None, start=None) -> FitResult:
    """Maximize ``sum_i u_i l_i(theta)``; ``u=None`` means unit weights.

    Raises ``DegenerateDrawError`` for weighted fits whose maximizer does not
    exist inside the parameter box, and ``NonConvergenceError`` otherwise.
    """
    _require_smooth(model)
    if u is not None:
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        if u.size != model.n or not np.all(np.isfinite(u)):
            raise InvalidModelError("weight vector must be finite with length n")
        if not np.any(u != 0):
            raise DegenerateDrawError("all weights are zero")
    if isinstance(model.family, GaussianLinear):
        return _gaussian_fit(model, u)
    theta0 = _initial_theta(model) if start is None else np.asarray(start, dtype=np.float64)
    U = np.ones((1, model.n)) if u is None else u[None]
    theta, ll, it, gn, conv, deg = _newton_batch(
        model.family, model.dataset.psi, model.dataset.y, U, theta0[None]
    )
    if deg[0]:
        if u is None:
            raise NonConvergenceError("maximizer lies outside the parameter box", theta[0])
        raise DegenerateDrawError("weighted likelihood has no maximizer inside the parameter box")
    if not conv[0]:
        raise NonConvergenceError(
            f"Newton stopped after {it[0]} iterations with gradient norm {gn[0]:.3e}", theta[0]
        )
    return FitResult(theta[0], float(ll[0]), int(it[0]), float(gn[0]), True)


def lr_statistic(model: Model, theta0, fit: FitResult | None = None) -> float:
    """``L(theta_hat) - L(theta0)``."""
    fit = fit_mle(model) if fit is None else fit
    return log_lik(model, fit.theta_hat) - log_lik(model, theta0)


def bootstrap_lr_statistic(model: Model, u, theta_hat) -> float:
    """``L°(theta°) - L°(theta_hat)`` for one weight vector."""
    stats, degenerate = bootstrap_lr_batch(model, np.asarray(u, dtype=np.float64)[None], theta_hat)
    if degenerate[0]:
        raise DegenerateDrawError("weighted likelihood has no maximizer")
    return float(stats[0])


def bootstrap_lr_batch(model: Model, U: np.ndarray, theta_hat):
    """Bootstrap LR statistics for every row of the weight matrix ``U`` (B, n).

    Returns ``(stats, degenerate)``; degenerate rows carry NaN.
    """
    _require_smooth(model)
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    psi, y = model.dataset.psi, model.dataset.y
    theta_hat = np.asarray(theta_hat, dtype=np.float64).reshape(-1)
    if isinstance(model.family, GaussianLinear):
        return _gaussian_boot_batch(psi, y, U, theta_hat)
    start = np.broadcast_to(theta_hat, (U.shape[0], theta_hat.size))
    theta, ll, _it, _gn, conv, deg = _newton_batch(model.family, psi, y, U, start)
    base = (U * model.family.terms(y, psi @ theta_hat)).sum(axis=1)
    stats = ll - base
    bad = deg | ~conv
    stats[bad] = np.nan
    return stats, bad


def _gaussian_boot_batch(psi, y, U, theta_hat):
    # Orthonormal coordinates leave LR values unchanged and keep G well conditioned.
    q, _ = np.linalg.qr(psi)
    p = q.shape[1]
    r = y - psi @ theta_hat
    G = (U @ _outer_rows(q)).reshape(-1, p, p)
    g = (U * r) @ q
    delta, ok = _batched_solve_pd(G, g)
    stats = 0.5 * np.einsum("bi,bi->b", g, delta)
    stats[~ok] = np.nan
    return stats, ~ok
