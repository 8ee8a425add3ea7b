"""Cross-module consistency checks behind ``noisyguess verify``.

Each check compares two independent computations of the same quantity and
records the residual against a fixed tolerance.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.special import kl_div

from .exponent import (
    ConverseAssumptionWarning,
    SolverOptions,
    bsc_critical_q,
    bsc_critical_rho,
    critical_rho_general,
    grid_minimize_exponent,
    hull_membership,
    noiseless_exponent,
    solve_exponent,
)
from .gamma import GridSpec, exponent_via_types, gamma_min, gamma_pair
from .samplers import IidStrategy, UniversalSampler, UniversalStrategy, make_stream, success_probability, universal_log_prob
from .simplex import Channel, Distribution, GuessingProblem
from .simulator import exact_moment


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool
    seconds: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(self.residual):
            d["residual"] = str(self.residual)
        return d


def _check(name: str, tolerance: float, fn: Callable[[], float]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        residual = float(fn())
    except Exception as exc:  # a crashing check is a failed check
        return CheckResult(f"{name} ({type(exc).__name__}: {exc})", math.inf, tolerance, False)
    return CheckResult(name, residual, tolerance, residual <= tolerance, time.perf_counter() - t0)


def _random_binary_problem(rng: np.random.Generator, rho_max: float = 3.0) -> GuessingProblem:
    p = rng.uniform(0.05, 0.95)
    q = rng.uniform(0.01, 0.49)
    return GuessingProblem((p, 1.0 - p), Channel.bsc(q), rng.uniform(0.0, rho_max))


def brute_force_moment(problem: GuessingProblem, v, n: int) -> float:
    """Guessing moment of an i.i.d. strategy summed target by target over guess indices.

    For each target sequence the series ``sum_k k^rho s (1-s)^{k-1}`` is cut
    where ``(1-s)^k k^rho`` has fallen below ``e^-60``.
    """
    q = np.asarray(v, dtype=float) @ problem.channel.rows
    p = problem.source.probs
    rho = problem.rho
    total = 0.0
    for y in itertools.product(range(p.size), repeat=n):
        py = math.prod(p[b] for b in y)
        if py == 0.0:
            continue
        s = math.prod(q[b] for b in y)
        cut = int(math.ceil((60.0 + 2.0 * rho * math.log1p(rho / s + 1.0 / s)) / s)) + 1
        k = np.arange(1, cut + 1, dtype=float)
        total += py * math.fsum(k**rho * s * (1.0 - s) ** (k - 1.0))
    return total


def _exponent_vs_grid(rng, count: int, opts: SolverOptions) -> float:
    worst = 0.0
    for _ in range(count):
        pr = _random_binary_problem(rng)
        grid_val, _ = grid_minimize_exponent(pr, 1e-4)
        worst = max(worst, solve_exponent(pr, opts).value - grid_val)
    return worst


def _exponent_vs_types(rng, count: int, opts: SolverOptions) -> float:
    worst = 0.0
    for _ in range(count):
        pr = _random_binary_problem(rng)
        worst = max(worst, abs(exponent_via_types(pr, GridSpec()) - solve_exponent(pr, opts).value))
    return worst


def _gamma_identity(rng, count: int) -> float:
    grid = np.linspace(0.0, 1.0, 10_001)
    worst = 0.0
    for _ in range(count):
        qy = Distribution((a := rng.uniform(0.01, 0.99), 1.0 - a))
        w = Channel.bsc(rng.uniform(0.01, 0.49))
        mix = np.outer(grid, w.rows[0]) + np.outer(1.0 - grid, w.rows[1])
        brute = float(np.min(np.sum(kl_div(qy.probs, mix), axis=1)))
        g = gamma_min(qy, w).value
        worst = max(worst, abs(g - brute))
        if hull_membership(qy, w).member:
            worst = max(worst, abs(g))
    return worst


def _gamma_pair_vs_min(rng, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        w = Channel(rng.dirichlet(np.ones(3), size=2))
        qy = Distribution(rng.dirichlet(np.ones(3)))
        res = gamma_min(qy, w)
        paired = gamma_pair(res.q_x, qy, w).value
        worst = max(worst, abs(paired - res.value))
    return worst


def _universal_normalization(n_max_binary: int, n_max_ternary: int) -> float:
    worst = 0.0
    for k, n_max in ((2, n_max_binary), (3, n_max_ternary)):
        for n in range(1, n_max + 1):
            sampler = UniversalSampler.build(n, k)
            total = math.fsum(
                math.exp(universal_log_prob(sampler, x)) for x in itertools.product(range(k), repeat=n)
            )
            worst = max(worst, abs(total - 1.0))
    return worst


def _universal_success_brute(rng, n_max: int) -> float:
    """Enumerated universal success probabilities against a sum over every guess."""
    worst = 0.0
    w = Channel(rng.dirichlet(np.ones(2), size=2))
    for n in range(1, n_max + 1):
        sampler = UniversalSampler.build(n, 2)
        xs = list(itertools.product(range(2), repeat=n))
        probs = np.array([math.exp(universal_log_prob(sampler, x)) for x in xs])
        xs = np.array(xs)
        y = rng.integers(0, 2, size=n)
        lik = np.prod(w.rows[xs, y[None, :]], axis=1)
        brute = float(probs @ lik)
        fast = success_probability(UniversalStrategy(sampler), w, y)
        worst = max(worst, abs(fast - brute) / brute)
    return worst


def _moment_oracle(rng, n_max: int) -> float:
    worst = 0.0
    for n in range(1, n_max + 1):
        for _ in range(3):
            p = rng.uniform(0.05, 0.95)
            pr = GuessingProblem((p, 1.0 - p), Channel.bsc(rng.uniform(0.05, 0.45)), rng.uniform(0.0, 3.0))
            v = rng.dirichlet(np.ones(2))
            exact = exact_moment(pr, IidStrategy(v), n).value
            worst = max(worst, abs(exact - brute_force_moment(pr, v, n)) / exact)
    return worst


def _closed_forms(opts: SolverOptions) -> float:
    residuals = [
        abs(bsc_critical_q(0.25) - (math.sqrt(0.25) / (math.sqrt(0.25) + math.sqrt(0.75)))),
        abs(critical_rho_general((0.25, 0.75), Channel.bsc(0.35)) - bsc_critical_rho(0.25, 0.35)),
        abs(solve_exponent(GuessingProblem((0.25, 0.75), Channel.bsc(0.35), 1.0), opts).value
            - noiseless_exponent((0.25, 0.75), 1.0)),
        abs(solve_exponent(GuessingProblem((0.25, 0.75), Channel.bsc(0.5), 1.0), opts).value - math.log(2.0)),
    ]
    return max(residuals)


def _problem_checks(problem: GuessingProblem, opts: SolverOptions) -> List[CheckResult]:
    checks = []
    if problem.channel.n_inputs <= 3:
        checks.append(_check(
            "user problem: solver vs dense grid", 1e-7,
            lambda: solve_exponent(problem, opts).value - grid_minimize_exponent(problem, 1e-3 if problem.channel.n_inputs == 3 else 1e-4)[0],
        ))
    if problem.source.alphabet_size <= 3:
        checks.append(_check(
            "user problem: convex form vs type form", 5e-3,
            lambda: abs(exponent_via_types(problem) - solve_exponent(problem, opts).value),
        ))
    return checks


def run_checks(
    level: str = "quick",
    seed: int = 0,
    opts: Optional[SolverOptions] = None,
    problem: Optional[GuessingProblem] = None,
) -> List[CheckResult]:
    if level not in ("quick", "full"):
        raise ValueError(f"unknown level {level!r}")
    opts = opts or SolverOptions()
    full = level == "full"
    rng = make_stream(seed, 0)
    checks = [
        ("closed forms and critical thresholds", 1e-6, lambda: _closed_forms(opts)),
        ("convex form vs dense grid (binary)", 1e-8, lambda: _exponent_vs_grid(rng, 20 if full else 5, opts)),
        ("convex form vs type form (binary)", 2e-3, lambda: _exponent_vs_types(rng, 10 if full else 2, opts)),
        ("gamma_min vs grid minimum of D(Q||VW)", 1e-4, lambda: _gamma_identity(rng, 200 if full else 20)),
        ("gamma_pair at the optimal input vs gamma_min", 1e-7, lambda: _gamma_pair_vs_min(rng, 50 if full else 5)),
        ("universal law normalization", 1e-10, lambda: _universal_normalization(8 if full else 6, 5 if full else 3)),
        ("universal success vs brute force", 1e-9, lambda: _universal_success_brute(rng, 8 if full else 4)),
        ("exact moment vs brute force", 1e-9, lambda: _moment_oracle(rng, 3 if full else 2)),
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConverseAssumptionWarning)
        results = [_check(name, tol, fn) for name, tol, fn in checks]
        if problem is not None:
            results.extend(_problem_checks(problem, opts))
    return results
