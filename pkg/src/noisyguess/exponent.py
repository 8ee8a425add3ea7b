"""Optimal noisy guessing exponent and its phase transition.

The exponent is computed from the convex form

    E(rho) = ln min_V sum_y P(y) / [(V W)(y)]^rho

by entropic mirror descent. Without noise the minimizer over output laws is
the tilted law ``P^{1/(1+rho)}`` (normalized); with noise the output law is
confined to the convex hull of the channel rows, and whenever the tilted law
lies in that hull the noisy exponent equals the noiseless one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._optim import min_norm_point, minimize_on_simplex
from .errors import DimensionMismatchError, InvalidDistributionError, NonConvergenceError, UnreachableError
from .simplex import (
    Distribution,
    GuessingProblem,
    as_channel,
    as_distribution,
    output_distribution,
    type_array,
)

# Exponent excess (nats) below which an instance counts as penalty-free.
FLAT_THRESHOLD = 1e-6


class ConverseAssumptionWarning(UserWarning):
    """The channel has a certain transition (``W_max = 1``)."""


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iters: int = 200_000
    grid_resolution: float = 1e-4
    hull_tolerance: float = 1e-9
    rho_max: float = 1e4
    rho_tolerance: float = 1e-6


@dataclass(frozen=True)
class ExponentResult:
    value: float
    v_star: Distribution
    q_induced: Distribution
    flat: bool
    iterations: int
    gap: float
    noiseless: float
    tilted_in_hull: bool

    @property
    def penalty(self) -> float:
        return self.value - self.noiseless


@dataclass(frozen=True)
class HullWitness:
    member: bool
    v: Distribution
    distance: float  # squared Euclidean residual ||q - vW||^2
    certificate: float = 0.0


def _reachable_support(p: np.ndarray, rows: np.ndarray):
    supp = p > 0
    unreachable = supp & (rows.max(axis=0) <= 0)
    if np.any(unreachable):
        raise UnreachableError(
            f"output symbols {np.flatnonzero(unreachable).tolist()} have positive source "
            "probability but no channel input reaches them"
        )
    return supp


def _exponent_fun(p: np.ndarray, rows: np.ndarray, rho: float):
    supp = p > 0
    log_p = np.log(p[supp])
    w_s = rows[:, supp]

    def fun(v):
        a = v @ w_s
        if np.any(a <= 0):
            return math.inf, np.zeros_like(v)
        terms = log_p - rho * np.log(a)
        f = float(logsumexp(terms))
        weights = np.exp(terms - f)
        return f, -rho * (w_s @ (weights / a))

    def hess(v):
        a = v @ w_s
        terms = log_p - rho * np.log(a)
        weights = np.exp(terms - logsumexp(terms))
        b = w_s / a
        bw = b @ weights
        return rho * (rho + 1.0) * (b * weights) @ b.T - rho * rho * np.outer(bw, bw)

    return fun, hess


def objective(v, problem: GuessingProblem) -> float:
    va = as_distribution(v).probs
    rows = problem.channel.rows
    if va.size != rows.shape[0]:
        raise DimensionMismatchError(f"V has {va.size} symbols, channel has {rows.shape[0]} inputs")
    if problem.rho == 0.0:
        return 0.0
    return _exponent_fun(problem.source.probs, rows, problem.rho)[0](va)[0]


def noiseless_exponent(p, rho: float) -> float:
    """``(1 + rho) ln sum_y P(y)^{1/(1+rho)}``: the clean-channel exponent."""
    pa = as_distribution(p).probs
    if rho < 0:
        raise ValueError("rho must be non-negative")
    nz = pa[pa > 0]
    return float((1.0 + rho) * logsumexp(np.log(nz) / (1.0 + rho)))


def tilted_distribution(p, rho: float) -> Distribution:
    pa = as_distribution(p).probs
    if rho < 0:
        raise ValueError("rho must be non-negative")
    out = np.zeros_like(pa)
    nz = pa > 0
    logs = np.log(pa[nz]) / (1.0 + rho)
    out[nz] = np.exp(logs - logsumexp(logs))
    return Distribution(out)


def hull_membership(q, w, tol: float = 1e-9) -> HullWitness:
    """Is ``q`` a mixture of the rows of ``w``?

    Projects ``q`` onto the hull in Euclidean distance with Wolfe's
    minimum-norm-point algorithm, so member instances come back with
    residuals at round-off level.
    """
    qa = as_distribution(q).probs
    rows = as_channel(w).rows
    if qa.size != rows.shape[1]:
        raise DimensionMismatchError(f"q has {qa.size} symbols, channel has {rows.shape[1]} outputs")
    res = min_norm_point(rows - qa)
    v = Distribution(res.weights)
    residual = qa - v.probs @ rows
    sq = float(residual @ residual)
    return HullWitness(sq <= tol * tol, v, sq, res.gap)


def solve_exponent(problem: GuessingProblem, opts: SolverOptions | None = None) -> ExponentResult:
    opts = opts or SolverOptions()
    p = problem.source.probs
    w = problem.channel
    rows = w.rows
    if w.has_noiseless_entry:
        warnings.warn(
            "channel has W_max = 1; the exponent is still the achievable value but the "
            "matching lower bound assumes W_max < 1",
            ConverseAssumptionWarning,
            stacklevel=2,
        )
    _reachable_support(p, rows)
    rho = problem.rho
    noiseless = noiseless_exponent(p, rho)
    in_hull = hull_membership(tilted_distribution(p, rho), w, opts.hull_tolerance).member
    v0 = np.full(w.n_inputs, 1.0 / w.n_inputs)
    if rho == 0.0:
        return ExponentResult(0.0, Distribution(v0), output_distribution(v0, w), True, 0, 0.0, 0.0, in_hull)

    fun, hess = _exponent_fun(p, rows, rho)
    sol = minimize_on_simplex(fun, v0, tol=opts.tolerance, max_iters=opts.max_iters, hess=hess)
    if not sol.converged:
        raise NonConvergenceError(
            f"mirror descent stopped after {sol.iterations} iterations with gap {sol.gap:.3e}",
            sol.iterations,
            sol.gap,
        )
    v_star = Distribution(sol.v)
    flat = in_hull or (sol.value - noiseless) <= FLAT_THRESHOLD
    return ExponentResult(
        value=sol.value,
        v_star=v_star,
        q_induced=output_distribution(v_star, w),
        flat=bool(flat),
        iterations=sol.iterations,
        gap=sol.gap,
        noiseless=noiseless,
        tilted_in_hull=in_hull,
    )


def simplex_grid(k: int, resolution: float) -> np.ndarray:
    """Points of the simplex with coordinates in multiples of ``1/round(1/resolution)``."""
    m = int(round(1.0 / resolution))
    return type_array(m, k) / m


def grid_minimize_exponent(problem: GuessingProblem, resolution: float = 1e-4):
    """Brute-force ``(value, V)`` over a simplex mesh; meant for ``|X| <= 3`` oracles."""
    k = problem.channel.n_inputs
    if k > 3:
        raise ValueError("dense grid search is only offered for |X| <= 3")
    if problem.rho == 0.0:
        return 0.0, Distribution.uniform(k)
    grid = simplex_grid(k, resolution)
    p = problem.source.probs
    supp = p > 0
    a = grid @ problem.channel.rows[:, supp]
    with np.errstate(divide="ignore"):
        terms = np.log(p[supp]) - problem.rho * np.log(a)
    vals = logsumexp(terms, axis=1)
    i = int(np.argmin(vals))
    return float(vals[i]), Distribution(grid[i])


def bsc_critical_q(p: float) -> float:
    """Crossover probability where the BSC stops being penalty-free, at ``rho = 1``.

    ``sqrt(p) / (sqrt(p) + sqrt(1-p))``, folded to ``[0, 0.5]`` so both source
    labellings give the same threshold.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    a = min(p, 1.0 - p)
    return math.sqrt(a) / (math.sqrt(a) + math.sqrt(1.0 - a))


def bsc_critical_rho(p: float, q: float) -> float:
    """``[ln((1-p)/p) / ln((1-q)/q) - 1]_+`` for a binary source through a BSC."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if not 0.0 < q <= 0.5:
        raise ValueError(f"q must lie in (0, 0.5], got {q}")
    num = abs(math.log((1.0 - p) / p))
    den = math.log((1.0 - q) / q)
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return math.inf
    return max(num / den - 1.0, 0.0)


def critical_rho_general(p, w, opts: SolverOptions | None = None) -> float:
    """Smallest rho whose tilted law lies in the hull of the channel rows.

    Bisection on membership; relies on the tilted law moving monotonically
    toward uniform as rho grows. Returns ``inf`` if even ``opts.rho_max`` fails.
    """
    opts = opts or SolverOptions()
    pa = as_distribution(p)
    w = as_channel(w)

    def inside(rho):
        return hull_membership(tilted_distribution(pa, rho), w, opts.hull_tolerance).member

    if inside(0.0):
        return 0.0
    if not inside(opts.rho_max):
        return math.inf
    lo, hi = 0.0, 1.0
    while hi < opts.rho_max and not inside(hi):
        lo, hi = hi, min(2.0 * hi, opts.rho_max)
    while hi - lo > opts.rho_tolerance:
        mid = 0.5 * (lo + hi)
        if inside(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _joint_matrix(joint) -> np.ndarray:
    j = np.array(joint, dtype=float)
    if j.ndim != 2:
        raise InvalidDistributionError("side-information joint must be a |Y| x |Z| matrix")
    Distribution(j.ravel())  # validates entries and total mass
    return j / j.sum()


def exponent_with_side_info(joint, w, rho: float, opts: SolverOptions | None = None) -> float:
    """``ln sum_z P(z) min_V sum_y P(y|z) / [(V W)(y)]^rho``.

    ``joint[y, z]`` is the joint law of the secret symbol and the side-information
    symbol; a separate input law is optimized for each ``z``.
    """
    j = _joint_matrix(joint)
    w = as_channel(w)
    if j.shape[0] != w.n_outputs:
        raise DimensionMismatchError(f"joint has {j.shape[0]} rows, channel has {w.n_outputs} outputs")
    if w.has_noiseless_entry:
        warnings.warn("channel has W_max = 1", ConverseAssumptionWarning, stacklevel=2)
    pz = j.sum(axis=0)
    logs = []
    for z in np.flatnonzero(pz > 0):
        cond = GuessingProblem(Distribution(j[:, z] / pz[z]), w, rho)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConverseAssumptionWarning)
            logs.append(math.log(pz[z]) + solve_exponent(cond, opts).value)
    return float(logsumexp(logs))
