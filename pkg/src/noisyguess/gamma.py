"""Noise-penalty functional and the type-based form of the exponent.

``gamma_pair`` is the smallest weighted divergence from the channel of any
test channel that maps ``q_x`` onto ``q_y``. ``gamma_min`` minimizes over the
input law as well, which collapses to ``min_V D(q_y || V W)``: the divergence
from ``q_y`` to the convex hull of the channel rows. ``exponent_via_types``
maximizes ``rho [H(Q) + Gamma(Q)] - D(Q || P)`` over output laws by grid
search; it is slow and exists as an independent check on ``solve_exponent``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog
from scipy.special import kl_div, logsumexp

from ._optim import minimize_on_simplex
from .errors import DimensionMismatchError, NonConvergenceError, ResourceLimitError
from .exponent import _reachable_support, hull_membership
from .simplex import (
    Channel,
    Distribution,
    GuessingProblem,
    as_channel,
    as_distribution,
    entropy,
    kl_divergence,
    type_array,
    weighted_conditional_divergence,
)

_DUAL_BLOWUP = 1e6
_MAX_DUAL_MOVE = 20.0


@dataclass(frozen=True)
class GammaOptions:
    tolerance: float = 1e-11
    max_iters: int = 20_000


@dataclass(frozen=True)
class GammaResult:
    value: float
    optimizing_conditional: Optional[Channel]
    dual_variables: np.ndarray
    q_x: Optional[Distribution] = None


def _feasible(qx: np.ndarray, qy: np.ndarray, allowed: np.ndarray) -> bool:
    """Does a coupling of qx and qy exist that only uses ``allowed`` (x, y) pairs?"""
    xs, ys = np.nonzero(allowed)
    nx, ny = allowed.shape
    a_eq = np.zeros((nx + ny, xs.size))
    a_eq[xs, np.arange(xs.size)] = 1.0
    a_eq[nx + ys, np.arange(xs.size)] = 1.0
    res = linprog(np.zeros(xs.size), A_eq=a_eq, b_eq=np.concatenate([qx, qy]), bounds=(0, None), method="highs")
    return res.status == 0


def _infinite(nx: int, ny: int) -> GammaResult:
    return GammaResult(math.inf, None, np.full(ny, np.nan))


def gamma_pair(q_x, q_y, w, opts: GammaOptions | None = None) -> GammaResult:
    """Minimize ``D(Qt || W | q_x)`` subject to ``sum_x q_x(x) Qt(y|x) = q_y(y)``.

    Solved in the dual: the minimizer has the form ``Qt(y|x) ~ W(y|x) exp(mu_y)``
    and the concave dual ``mu.q_y - sum_x q_x(x) ln sum_y W(y|x) exp(mu_y)`` is
    ascended along its Newton direction with a step that doubles on success and
    halves on failure. Infeasible constraints give ``inf``.
    """
    opts = opts or GammaOptions()
    qx = as_distribution(q_x).probs
    qy = as_distribution(q_y).probs
    rows = as_channel(w).rows
    if rows.shape != (qx.size, qy.size):
        raise DimensionMismatchError(f"channel shape {rows.shape} vs q_x {qx.size}, q_y {qy.size}")
    xs = np.flatnonzero(qx > 0)
    ys = np.flatnonzero(qy > 0)
    px, py = qx[xs], qy[ys]
    ws = rows[np.ix_(xs, ys)]
    if np.any(ws.sum(axis=1) <= 0) or (np.any(ws == 0) and not _feasible(px, py, ws > 0)):
        return _infinite(*rows.shape)

    with np.errstate(divide="ignore"):
        log_w = np.log(ws)

    def evaluate(mu):
        s = log_w + mu
        log_z = logsumexp(s, axis=1)
        cond = np.exp(s - log_z[:, None])
        return float(mu @ py - px @ log_z), cond

    mu = np.zeros(ys.size)
    dual, cond = evaluate(mu)
    step = 0.5
    it = 0
    residual = py - px @ cond
    while np.max(np.abs(residual)) > opts.tolerance:
        it += 1
        if it > opts.max_iters:
            raise NonConvergenceError(f"dual ascent did not converge in {opts.max_iters} iterations", it)
        if np.max(np.abs(mu)) > _DUAL_BLOWUP:
            return _infinite(*rows.shape)
        hess = np.zeros((ys.size, ys.size))
        for x in range(xs.size):
            c = cond[x]
            hess += px[x] * (np.diag(c) - np.outer(c, c))
        direction = np.linalg.lstsq(hess, residual, rcond=None)[0]
        largest = np.max(np.abs(direction))
        if largest > _MAX_DUAL_MOVE:
            direction *= _MAX_DUAL_MOVE / largest
        slope = float(residual @ direction)
        if not slope > 0:
            direction, slope = residual, float(residual @ residual)
        res_norm = float(np.linalg.norm(residual))
        while True:
            trial = mu + step * direction
            new_dual, new_cond = evaluate(trial)
            new_residual = py - px @ new_cond
            # near the optimum the dual increase drops below round-off; the
            # residual norm still measures progress there
            if new_dual >= dual + 1e-4 * step * slope:
                break
            if abs(new_dual - dual) <= 1e-13 * (1.0 + abs(dual)) and np.linalg.norm(new_residual) < res_norm:
                break
            step *= 0.5
            if step < 1e-14:
                raise NonConvergenceError("dual ascent line search failed", it)
        mu, dual, cond, residual = trial, new_dual, new_cond, new_residual
        step = min(2.0 * step, 1.0)

    full = rows.copy()
    full_cond = np.zeros_like(rows)
    full_cond[np.ix_(xs, ys)] = cond
    unused = np.setdiff1d(np.arange(rows.shape[0]), xs)
    full_cond[unused] = full[unused]
    mu_full = np.full(qy.size, -np.inf)
    mu_full[ys] = mu - mu.max()
    value = weighted_conditional_divergence(Channel(full_cond), rows, qx)
    return GammaResult(max(value, 0.0), Channel(full_cond), mu_full, Distribution(qx))


def _divergence_to_mixture_fun(qy: np.ndarray, rows: np.ndarray):
    supp = qy > 0
    q = qy[supp]
    w_s = rows[:, supp]
    neg_entropy = float(np.sum(q * np.log(q)))

    def fun(v):
        a = v @ w_s
        if np.any(a <= 0):
            return math.inf, np.zeros_like(v)
        return neg_entropy - float(q @ np.log(a)), -(w_s @ (q / a))

    def hess(v):
        b = w_s / (v @ w_s)
        return (b * q) @ b.T

    return fun, hess


def gamma_min(q_y, w, opts: GammaOptions | None = None) -> GammaResult:
    """``min_V D(q_y || V W)``, i.e. the penalty minimized over the input law too.

    Exactly zero when ``q_y`` lies in the convex hull of the rows of ``w``. The
    reported conditional is the test channel ``W(y|x) q_y(y) / (V W)(y)`` paired
    with ``q_x = V``, and the dual variables are ``ln(q_y / V W)``.
    """
    opts = opts or GammaOptions()
    qy = as_distribution(q_y).probs
    w = as_channel(w)
    rows = w.rows
    if qy.size != w.n_outputs:
        raise DimensionMismatchError(f"q_y has {qy.size} symbols, channel has {w.n_outputs} outputs")
    if np.any((qy > 0) & (rows.max(axis=0) <= 0)):
        return _infinite(*rows.shape)

    witness = hull_membership(qy, w)
    if witness.member:
        v = witness.v.probs
        value = 0.0
    else:
        fun, hess = _divergence_to_mixture_fun(qy, rows)
        sol = minimize_on_simplex(
            fun, np.full(w.n_inputs, 1.0 / w.n_inputs), tol=opts.tolerance, max_iters=opts.max_iters, hess=hess
        )
        if not sol.converged:
            raise NonConvergenceError(
                f"gamma_min stopped after {sol.iterations} iterations with gap {sol.gap:.3e}",
                sol.iterations,
                sol.gap,
            )
        v = sol.v
        a = v @ rows
        # sum of non-negative terms q ln(q/a) - q + a, so round-off cannot go negative
        value = float(np.sum(kl_div(qy, a)))

    a = v @ rows
    supp = qy > 0
    ratio = np.zeros_like(qy)
    ratio[supp] = qy[supp] / a[supp]
    cond = rows * ratio
    sums = cond.sum(axis=1)
    cond = np.where(sums[:, None] > 0, cond / np.where(sums > 0, sums, 1.0)[:, None], rows)
    with np.errstate(divide="ignore"):
        mu = np.where(supp, np.log(np.where(supp, ratio, 1.0)), -np.inf)
    return GammaResult(value, Channel(cond), mu, Distribution(v))


@dataclass(frozen=True)
class GridSpec:
    step: Optional[float] = None  # default depends on |Y|
    refine: bool = True
    max_alphabet: int = 4

    def resolved_step(self, k: int) -> float:
        if self.step is not None:
            return self.step
        return {1: 1.0, 2: 1 / 200, 3: 1 / 60}.get(k, 1 / 24)


def _type_objective(qy: np.ndarray, problem: GuessingProblem, opts: GammaOptions) -> float:
    g = gamma_min(qy, problem.channel, opts).value
    d = kl_divergence(qy, problem.source)
    if math.isinf(d):
        return -math.inf
    return problem.rho * (entropy(qy) + g) - d


def _golden_max(f, lo: float, hi: float, tol: float = 1e-9):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def maximize_type_objective(problem: GuessingProblem, grid: GridSpec | None = None, opts: GammaOptions | None = None):
    """Return ``(value, maximizing Q_Y)`` of ``rho [H(Q) + Gamma(Q)] - D(Q || P)``."""
    grid = grid or GridSpec()
    opts = opts or GammaOptions()
    p = problem.source.probs
    k = p.size
    if k > grid.max_alphabet:
        raise ResourceLimitError(f"grid search over |Y|={k} exceeds the limit of {grid.max_alphabet}")
    supp = _reachable_support(p, problem.channel.rows)
    idx = np.flatnonzero(supp)
    step = grid.resolved_step(idx.size)
    m = int(round(1.0 / step))
    sub = type_array(m, idx.size) / m
    points = np.zeros((sub.shape[0], k))
    points[:, idx] = sub
    values = np.array([_type_objective(q, problem, opts) for q in points])
    best = values.max()
    ties = np.flatnonzero(values == best)
    order = np.lexsort(points[ties].T[::-1])
    q_best = points[ties[order[0]]]
    if not grid.refine or idx.size < 2:
        return float(best), Distribution(q_best)

    # local golden-section search along each mass-transfer direction e_i - e_j
    for i in idx:
        for j in idx:
            if i >= j:
                continue
            lo = max(-step, -q_best[i])
            hi = min(step, q_best[j])
            if hi - lo <= 0:
                continue

            def along(t, i=i, j=j, base=q_best.copy()):
                q = base.copy()
                q[i] += t
                q[j] -= t
                return _type_objective(np.clip(q, 0.0, 1.0), problem, opts)

            t, val = _golden_max(along, lo, hi)
            if val > best:
                best = val
                q_best = q_best.copy()
                q_best[i] += t
                q_best[j] -= t
                q_best = np.clip(q_best, 0.0, 1.0)
    return float(best), Distribution(q_best)


def exponent_via_types(problem: GuessingProblem, grid: GridSpec | None = None, opts: GammaOptions | None = None) -> float:
    """``sup_Q rho [H(Q) + Gamma(Q)] - D(Q || P)`` by grid search plus local refinement.

    Accuracy is of the order of the grid step.
    """
    return maximize_type_objective(problem, grid, opts)[0]
