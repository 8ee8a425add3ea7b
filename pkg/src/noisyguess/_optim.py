"""Convex minimization over the probability simplex.

Two solvers live here:

* ``minimize_on_simplex`` -- entropic mirror descent (multiplicative updates)
  with backtracking, certified by the Frank-Wolfe gap ``g.v - min_x g_x``,
  which upper-bounds ``f(v) - min f`` for convex ``f``.
* ``min_norm_point`` -- Wolfe's active-set algorithm for the point of smallest
  Euclidean norm in the convex hull of finitely many points. It terminates
  finitely and returns exact barycentric weights, so zero residuals come out
  at round-off level instead of at the slow rate of a first-order method.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.special import xlogy

_FLOOR = 1e-300
_MAX_STEP = 1e12
_MIN_STEP = 1e-30


@dataclass
class SimplexSolution:
    v: np.ndarray
    value: float
    grad: np.ndarray
    gap: float
    iterations: int
    converged: bool


def fw_gap(v: np.ndarray, g: np.ndarray) -> float:
    return float(max(g @ v - g.min(), 0.0))


def _stable_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) for nearby positive vectors of equal mass, summed as
    ``q * phi(p/q - 1)`` with ``phi(d) = (1+d) ln(1+d) - d`` so no terms cancel."""
    d = p / q - 1.0
    small = np.abs(d) < 1e-3
    phi = np.empty_like(d)
    ds = d[small]
    phi[small] = ds * ds * (0.5 - ds * (1.0 / 6.0 - ds / 12.0))
    dl = d[~small]
    phi[~small] = xlogy(1.0 + dl, 1.0 + dl) - dl
    return float(np.sum(q * phi))


def _mirror_descent(fun, v, f, g, eta, tol, max_iters):
    it = 0
    gap = fw_gap(v, g)
    while gap > tol and it < max_iters:
        it += 1
        while True:
            z = -eta * (g - g.min())
            vn = v * np.exp(z)
            vn /= vn.sum()
            np.maximum(vn, _FLOOR, out=vn)
            vn /= vn.sum()
            fn, gn = fun(vn)
            if np.isfinite(fn) and (gn - g) @ (vn - v) <= _stable_kl(vn, v) / eta:
                break
            eta *= 0.5
            if eta < _MIN_STEP:
                return v, f, g, eta, it, True
        v, f, g = vn, fn, gn
        eta = min(eta * 2.0, _MAX_STEP)
        gap = fw_gap(v, g)
    return v, f, g, eta, it, False


def _face_newton_direction(g, H, active):
    """Newton step restricted to the face ``active``, keeping the total mass fixed."""
    idx = np.flatnonzero(active)
    k = idx.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = H[np.ix_(idx, idx)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[:k] = -g[idx]
    d = np.zeros_like(g)
    d[idx] = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
    if not g @ d < 0:
        d = np.zeros_like(g)
        d[idx] = -(g[idx] - g[idx].mean())
    return d


def _active_set_newton(fun, hess, v, f, g, tol, max_iters):
    """Projected Newton on the face of the simplex that carries ``v``'s mass.

    Coordinates that reach zero leave the face; the coordinate with the smallest
    gradient joins it once the face is optimal. Quadratic convergence on the face
    makes up for mirror descent's slow tail on ill-conditioned problems.
    """
    v = np.where(v > 1e-12, v, 0.0)
    v /= v.sum()
    f, g = fun(v)
    it = 0
    for it in range(1, max_iters + 1):
        gap = fw_gap(v, g)
        if gap <= tol:
            break
        active = v > 0
        ga = g[active]
        if ga.max() - ga.min() <= 0.5 * tol:
            j = int(np.argmin(np.where(active, np.inf, g)))
            active[j] = True
        H = hess(v)
        while True:
            d = _face_newton_direction(g, H, active)
            stuck = (v <= 0) & (d < 0) & active
            if not stuck.any():
                break
            active &= ~stuck
        neg = np.flatnonzero(d < 0)
        ratios = -v[neg] / d[neg]
        alpha_max = float(ratios.min()) if neg.size else np.inf
        alpha = min(1.0, alpha_max)
        slope = float(g @ d)
        while True:
            vn = np.maximum(v + alpha * d, 0.0)
            if alpha == alpha_max:
                vn[neg[np.argmin(ratios)]] = 0.0
            vn /= vn.sum()
            fn, gn = fun(vn)
            if np.isfinite(fn) and (fn <= f + 1e-4 * alpha * slope or fw_gap(vn, gn) < fw_gap(v, g)):
                break
            alpha *= 0.5
            if alpha < 1e-14:
                return v, f, g, it
        v, f, g = vn, fn, gn
    return v, f, g, it


def minimize_on_simplex(
    fun: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    v0: np.ndarray,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    step: float = 1.0,
    hess: Callable[[np.ndarray], np.ndarray] | None = None,
    warmup: int = 50,
) -> SimplexSolution:
    """Minimize a smooth convex ``fun`` (returning value and gradient) on the simplex.

    Mirror descent steps ``v <- v * exp(-eta * g)`` are accepted when
    ``(g' - g).(v' - v) <= KL(v' || v) / eta``. That bounds the Bregman
    divergence of ``f`` by the entropic one, so each accepted step decreases
    ``f``; unlike a test on function values it stays exact when the decrease is
    below round-off. eta doubles after an accepted step and halves after a
    rejected one. If ``hess`` is given and mirror descent has not converged
    after ``warmup`` iterations, an active-set Newton phase takes over from
    its iterate. ``v0`` must be strictly positive.
    """
    v = np.asarray(v0, dtype=float).copy()
    v /= v.sum()
    f, g = fun(v)
    eta = step
    total = 0
    budget = warmup if hess is not None else max_iters
    while True:
        v, f, g, eta, it, stalled = _mirror_descent(fun, v, f, g, eta, tol, min(budget, max_iters - total))
        total += it
        gap = fw_gap(v, g)
        if gap <= tol or total >= max_iters or hess is None:
            break
        vn, fn, gn, it = _active_set_newton(fun, hess, v, f, g, tol, min(200, max_iters - total))
        total += it
        if fw_gap(vn, gn) <= tol:
            v, f, g = vn, fn, gn
            break
        if fn < f:
            # resume mirror descent from the Newton point, kept strictly positive
            v = np.maximum(vn, _FLOOR)
            v /= v.sum()
            f, g = fun(v)
        eta = max(eta, step)
        budget = 10 * budget
    gap = fw_gap(v, g)
    return SimplexSolution(v, f, g, gap, total, gap <= tol)


@dataclass
class MinNormResult:
    point: np.ndarray
    weights: np.ndarray
    sq_norm: float
    gap: float
    iterations: int


def _affine_minimizer(P: np.ndarray):
    """Weights (summing to 1, possibly negative) of the min-norm point of aff(P rows)."""
    k = P.shape[0]
    G = P @ P.T
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = G
    A[:k, k] = 1.0
    A[k, :k] = 1.0
    b = np.zeros(k + 1)
    b[k] = 1.0
    sol = np.linalg.lstsq(A, b, rcond=None)[0]
    alpha = sol[:k]
    return alpha / alpha.sum()


def min_norm_point(points: np.ndarray, tol: float = 1e-15, max_iters: int = 10_000) -> MinNormResult:
    """Wolfe's algorithm: min ||sum_i w_i p_i|| over the simplex of weights ``w``.

    ``tol`` is relative to the largest squared norm among the points and bounds
    the Frank-Wolfe gap ``||x||^2 - min_j x.p_j`` at termination.
    """
    P = np.asarray(points, dtype=float)
    m = P.shape[0]
    scale = max(float(np.max(np.sum(P * P, axis=1))), 1e-300)
    start = int(np.argmin(np.sum(P * P, axis=1)))
    active = [start]
    lam = np.array([1.0])
    x = P[start].copy()
    gap = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        dots = P @ x
        j = int(np.argmin(dots))
        gap = float(x @ x - dots[j])
        if gap <= tol * scale or j in active:
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        while True:
            alpha = _affine_minimizer(P[active])
            if np.all(alpha > 1e-14):
                lam = alpha
                x = alpha @ P[active]
                break
            neg = alpha <= 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - alpha), np.inf)
            theta = float(min(1.0, np.min(ratios)))
            lam = (1.0 - theta) * lam + theta * alpha
            keep = lam > 1e-14
            if keep.all():
                # round-off guard: drop the most negative coordinate
                keep[int(np.argmin(alpha))] = False
            active = [a for a, k in zip(active, keep) if k]
            lam = lam[keep]
            lam /= lam.sum()
            x = lam @ P[active]
            if len(active) == 1:
                break
    weights = np.zeros(m)
    weights[active] = lam
    x = weights @ P
    return MinNormResult(x, weights, float(x @ x), max(gap, 0.0), it)
