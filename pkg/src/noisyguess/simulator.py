"""Moments of the number of guesses, exactly and by Monte Carlo.

With a randomized strategy every guess is drawn afresh, so given the target
``y`` the guesses hit independently with the same probability ``s(y)`` and
``G`` is geometric. The moment is therefore

    E[G^rho] = sum_y P^n(y) * E[Geom(s(y))^rho],

and ``s(y)`` depends on ``y`` only through its type, so the outer sum runs over
type classes. Deterministic lists are handled separately by
``fixed_list_moment``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional

import mpmath
import numpy as np
from scipy.special import logsumexp

from .errors import (
    DimensionMismatchError,
    HorizonTooSmallError,
    InfiniteMomentError,
    ResourceLimitError,
)
from .exponent import ConverseAssumptionWarning, SolverOptions, solve_exponent
from .samplers import (
    IidStrategy,
    ListStrategy,
    UniversalSampler,
    UniversalStrategy,
    log_success_by_type,
    make_stream,
    sample_universal,
)
from .simplex import DEFAULT_TYPE_CAP, GuessingProblem, log_multinomial, type_array

DEFAULT_EPS = 1e-10
# Above this many series terms the polylogarithm is evaluated instead.
SERIES_TERM_LIMIT = 1_000_000
BLOCK_SIZE = 4096
INNER_SAMPLES = 4096
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class MomentReport:
    n: int
    rho: float
    value: float
    log_value_per_n: float
    method: str  # "exact" or "monte-carlo"
    ci_halfwidth: float
    truncation_tail_bound: float
    trials: int
    seed: Optional[int]

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, val in d.items():
            if isinstance(val, float) and not math.isfinite(val):
                d[key] = None if math.isnan(val) else ("inf" if val > 0 else "-inf")
        return d


def _report(n, rho, value, method, ci=0.0, tail=0.0, trials=0, seed=None) -> MomentReport:
    log_per_n = math.log(value) / n if value > 0 else -math.inf
    return MomentReport(n, float(rho), float(value), log_per_n, method, float(ci), float(tail), int(trials), seed)


def _series_tail(k: int, log_t_next: float, r: float, rho: float) -> float:
    """Bound on sum_{j>k} j^rho s r^{j-1} given ln of the (k+1)-th term.

    Successive term ratios r ((j+1)/j)^rho decrease in j, so once the ratio
    at j = k+1 is below one the tail is dominated by a geometric series.
    """
    ratio = r * ((k + 2.0) / (k + 1.0)) ** rho
    if ratio >= 1.0:
        return math.inf
    return math.exp(log_t_next) / (1.0 - ratio)


def _geometric_moment_with_bound(s: float, rho: float, eps: float):
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"success probability must lie in [0, 1], got {s}")
    if rho < 0 or eps <= 0:
        raise ValueError("need rho >= 0 and eps > 0")
    if s == 0.0:
        return math.inf, 0.0
    if rho == 0.0 or s == 1.0:
        return 1.0, 0.0
    if rho == 1.0:
        return 1.0 / s, 0.0
    if rho == 2.0:
        return (2.0 - s) / (s * s), 0.0
    r = 1.0 - s
    log_r = math.log1p(-s)
    # the terms peak near k = rho / s and then decay like r^k; K solves r^K ~ eps
    estimate = (rho / s) + (rho * math.log1p(rho / s) - math.log(eps) + 10.0) / s
    if estimate > SERIES_TERM_LIMIT:
        # E[G^rho] = s / (1 - s) * Li_{-rho}(1 - s)
        with mpmath.workdps(30):
            val = mpmath.mpf(s) / mpmath.mpf(r) * mpmath.polylog(-rho, mpmath.mpf(r))
        return float(val), 0.0
    total = 0.0
    start = 1
    chunk = 4096
    while True:
        k = np.arange(start, start + chunk, dtype=float)
        log_t = rho * np.log(k) + math.log(s) + (k - 1.0) * log_r
        total += float(np.sum(np.exp(log_t)))
        last = start + chunk - 1
        tail = _series_tail(last, rho * math.log(last + 1.0) + math.log(s) + last * log_r, r, rho)
        if tail <= eps * total:
            return total, tail
        start = last + 1
        chunk *= 2


def geometric_moment(s: float, rho: float, eps: float = DEFAULT_EPS) -> float:
    """``E[G^rho]`` for ``G`` geometric on ``{1, 2, ...}`` with success probability ``s``.

    Closed forms for rho in {0, 1, 2}; otherwise the series
    ``sum_k k^rho s (1-s)^{k-1}`` is summed until the tail bound of
    ``_series_tail`` drops below ``eps`` times the partial sum. Very small ``s``
    switches to the polylogarithm identity. ``s = 0`` returns ``inf``.
    """
    return _geometric_moment_with_bound(s, rho, eps)[0]


def _check_strategy(problem: GuessingProblem, strategy, n: int):
    w = problem.channel
    if isinstance(strategy, IidStrategy):
        if strategy.v.alphabet_size != w.n_inputs:
            raise DimensionMismatchError("V does not match the channel input alphabet")
    elif isinstance(strategy, UniversalStrategy):
        if strategy.sampler.n != n or strategy.sampler.alphabet_size != w.n_inputs:
            raise DimensionMismatchError(
                f"universal sampler built for n={strategy.sampler.n}, |X|={strategy.sampler.alphabet_size}"
            )
    else:
        raise TypeError("exact and Monte Carlo moments need a randomized strategy; use fixed_list_moment for lists")


def exact_moment(problem: GuessingProblem, strategy, n: int, eps: float = DEFAULT_EPS) -> MomentReport:
    """Exact ``E[G^rho]`` for a randomized strategy, summing over target types."""
    if n < 1:
        raise ValueError("n must be positive")
    _check_strategy(problem, strategy, n)
    p = problem.source.probs
    rho = problem.rho
    types = type_array(n, p.size, DEFAULT_TYPE_CAP)
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
    log_probs = log_multinomial(types) + np.where(types > 0, types * log_p, 0.0).sum(axis=1)
    logs, tails = [], []
    for counts, lp in zip(types, log_probs):
        if lp == -math.inf:
            continue
        ls = log_success_by_type(strategy, problem.channel, counts)
        if ls == -math.inf:
            raise InfiniteMomentError(f"targets of type {tuple(counts.tolist())} can never be hit")
        val, tail = _geometric_moment_with_bound(math.exp(ls), rho, eps)
        if rho == 1.0:
            # avoid overflow of 1/s for long blocks
            logs.append(lp - ls)
        else:
            logs.append(lp + math.log(val))
        tails.append(math.exp(lp) * tail)
    # G^0 = 1 for every realization; skip the round-off of summing P^n
    log_value = 0.0 if rho == 0.0 else float(logsumexp(logs))
    return MomentReport(n, float(rho), math.exp(log_value), log_value / n, "exact", 0.0, math.fsum(tails), 0, None)


def _geometric_draws(s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws ``1 + floor(ln U / ln(1-s))`` with ``U`` uniform on (0, 1]."""
    u = 1.0 - rng.random(s.size)
    g = np.ones(s.size)
    mid = s < 1.0
    g[mid] = 1.0 + np.floor(np.log(u[mid]) / np.log1p(-s[mid]))
    return g


def _estimate_universal_success(sampler: UniversalSampler, log_w: np.ndarray, y: np.ndarray, rng, samples: int) -> float:
    """Unbiased estimate of s(y) = E_x W^n(y|x), x universal.

    The channel likelihood of each sampled guess is averaged rather than the
    channel itself being simulated, which removes one layer of noise. The
    plug-in geometric draw is then biased by O(Var(s_hat) / s^2), which shrinks
    as 1 / samples; the sample count doubles until some guess can reach y.
    """
    for _ in range(12):
        x = sample_universal(sampler, rng, samples)
        loglik = log_w[x, y[None, :]].sum(axis=1)
        est = float(np.mean(np.exp(loglik)))
        if est > 0:
            return est
        samples *= 2
    raise ResourceLimitError("inner Monte Carlo found no guess able to produce the target")


def _list_hit_probs(guesses: np.ndarray, log_w: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """``h[y, i] = W^n(y | x_i)`` for targets ``ys`` (N x n) and guesses (L x n)."""
    return np.exp(log_w[guesses[None, :, :], ys[:, None, :]].sum(axis=2))


def _list_draws(h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw G for cyclic lists, row by row of per-guess hit probabilities ``h``."""
    miss = np.prod(1.0 - h, axis=1)
    if np.any(miss >= 1.0):
        raise InfiniteMomentError("a sampled target can never be hit by the list")
    L = h.shape[1]
    u = 1.0 - rng.random(h.shape[0])
    with np.errstate(divide="ignore"):
        cycles = np.where(miss > 0, np.floor(np.log(u) / np.log(np.where(miss > 0, miss, 0.5))), 0.0)
    # position of the first hit inside a successful cycle
    survive = np.cumprod(np.hstack([np.ones((h.shape[0], 1)), 1.0 - h[:, :-1]]), axis=1)
    first = h * survive
    cdf = np.cumsum(first, axis=1) / (1.0 - miss)[:, None]
    v = rng.random(h.shape[0])
    pos = np.minimum((cdf < v[:, None]).sum(axis=1), L - 1)
    return cycles * L + pos + 1.0


def _simulate_block(problem, strategy, n, size, seed, block, exact_cache, inner_samples):
    rng = make_stream(seed, block)
    p = problem.source.probs
    ys = rng.choice(p.size, size=(size, n), p=p)
    with np.errstate(divide="ignore"):
        log_w = np.log(problem.channel.rows)
    if isinstance(strategy, ListStrategy):
        g = _list_draws(_list_hit_probs(np.asarray(strategy.guesses), log_w, ys), rng)
        return g ** problem.rho
    counts = np.stack([(ys == b).sum(axis=1) for b in range(p.size)], axis=1)
    keys, first, inverse = np.unique(counts, axis=0, return_index=True, return_inverse=True)
    s_type = np.empty(len(keys))
    for j, c in enumerate(map(tuple, keys.tolist())):
        if c in exact_cache:
            s_type[j] = exact_cache[c]
        else:
            # s(y) depends on y only through its type, so one estimate per type
            s_type[j] = _estimate_universal_success(strategy.sampler, log_w, ys[first[j]], rng, inner_samples)
    s = s_type[inverse.ravel()]
    if np.any(s == 0):
        raise InfiniteMomentError("a sampled target can never be hit")
    return _geometric_draws(s, rng) ** problem.rho


def _exact_success_cache(problem, strategy, n):
    """Exact s by target type, or None when the enumeration is over its cap."""
    try:
        types = type_array(n, problem.source.alphabet_size, DEFAULT_TYPE_CAP)
        return {
            tuple(c.tolist()): math.exp(log_success_by_type(strategy, problem.channel, c))
            for c in types
        }
    except ResourceLimitError:
        return None


def simulate_moment(
    problem: GuessingProblem,
    strategy,
    n: int,
    trials: int,
    seed: int = 0,
    workers: int = 1,
    inner_samples: int = INNER_SAMPLES,
) -> MomentReport:
    """Monte Carlo estimate of ``E[G^rho]`` with a 95% normal confidence interval.

    Trials are split into fixed blocks of ``BLOCK_SIZE``; block ``b`` draws from
    stream ``(seed, b)`` and the per-trial values are concatenated in block
    order, so the result does not depend on ``workers``. Universal strategies
    beyond the exact enumeration cap estimate ``s(y)`` by inner sampling.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if isinstance(strategy, ListStrategy):
        if any(len(g) != n for g in strategy.guesses) or not strategy.guesses:
            raise DimensionMismatchError("every listed guess must have length n")
        cache = {}
    else:
        _check_strategy(problem, strategy, n)
        cache = _exact_success_cache(problem, strategy, n) or {}
    sizes = [BLOCK_SIZE] * (trials // BLOCK_SIZE)
    if trials % BLOCK_SIZE:
        sizes.append(trials % BLOCK_SIZE)

    def run(block):
        return _simulate_block(problem, strategy, n, sizes[block], seed, block, cache, inner_samples)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    values = np.concatenate(parts)
    mean = float(np.mean(values))
    ci = _Z95 * float(np.std(values, ddof=1)) / math.sqrt(trials) if trials > 1 else math.inf
    return _report(n, problem.rho, mean, "monte-carlo", ci=ci, trials=trials, seed=seed)


def _all_sequences(k: int, n: int) -> np.ndarray:
    return np.stack(np.meshgrid(*[np.arange(k)] * n, indexing="ij"), axis=-1).reshape(-1, n)


def _cyclic_moment(a: np.ndarray, miss: np.ndarray, rho: float, horizon: int):
    """Explicit sum of k^rho P(G = k) for k <= horizon, and a bound on the rest.

    ``a[y, i]`` is the probability that the first hit within a cycle is at
    position ``i``; ``miss[y]`` is the probability a whole cycle misses. Past
    the horizon the tail is bounded cycle by cycle, charging every guess in
    cycle c the largest index ``(c+1) L``.
    """
    N, L = a.shape
    total = np.zeros(N)
    k_done = 0
    c = 0
    while k_done < horizon:
        take = min(L, horizon - k_done)
        k = c * L + np.arange(1, take + 1, dtype=float)
        total += (miss[:, None] ** c * a[:, :take] * k**rho).sum(axis=1)
        k_done += take
        c += 1
    # the remaining mass lies in cycles c0 = horizon // L onward
    c0 = horizon // L
    tail = np.zeros(N)
    live = miss > 0
    if np.any(live):
        m = miss[live]
        ratio = m * ((c0 + 2.0) / (c0 + 1.0)) ** rho
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = ((c0 + 1.0) * L) ** rho * m**c0 * (1.0 - m) / (1.0 - ratio)
        tail[live] = np.where(ratio < 1.0, bound, np.inf)
    return total, tail


def fixed_list_moment(
    problem: GuessingProblem,
    guesses,
    n: int,
    horizon: Optional[int] = None,
    eps: float = DEFAULT_EPS,
) -> MomentReport:
    """``E[G^rho]`` for a deterministic guess list, repeated cyclically after its end.

    Terms up to ``horizon`` are summed explicitly and the remainder is bounded
    analytically; a bound above ``eps`` times the value raises
    ``HorizonTooSmallError``. With ``horizon=None`` the horizon starts at the
    list length and doubles until the bound is met.
    """
    g = np.asarray(guesses.guesses if isinstance(guesses, ListStrategy) else guesses, dtype=np.int64)
    if g.ndim != 2 or g.shape[0] == 0 or g.shape[1] != n:
        raise DimensionMismatchError("guesses must be a non-empty list of length-n sequences")
    w = problem.channel
    if g.min() < 0 or g.max() >= w.n_inputs:
        raise ValueError("guess symbol outside the channel input alphabet")
    p = problem.source.probs
    k = p.size
    if k**n * g.shape[0] > DEFAULT_TYPE_CAP:
        raise ResourceLimitError(f"{k**n} targets times {g.shape[0]} guesses exceed the enumeration cap")
    ys = _all_sequences(k, n)
    with np.errstate(divide="ignore"):
        log_py = np.log(p)[ys].sum(axis=1)
        log_w = np.log(w.rows)
    keep = log_py > -np.inf
    ys, py = ys[keep], np.exp(log_py[keep])
    h = _list_hit_probs(g, log_w, ys)
    miss = np.prod(1.0 - h, axis=1)
    if np.any(miss >= 1.0):
        raise InfiniteMomentError("some target with positive probability is never hit by the list")
    survive = np.cumprod(np.hstack([np.ones((h.shape[0], 1)), 1.0 - h[:, :-1]]), axis=1)
    a = h * survive
    L = g.shape[0]
    auto = horizon is None
    hz = L if auto else int(horizon)
    if hz < 1:
        raise ValueError("horizon must be positive")
    while True:
        per_y, tail_y = _cyclic_moment(a, miss, problem.rho, hz)
        value = float(py @ per_y)
        with np.errstate(invalid="ignore"):
            tail = float(py @ tail_y)
        if tail <= eps * value:
            return _report(n, problem.rho, value, "exact", tail=tail)
        if not auto or hz > 10**8:
            raise HorizonTooSmallError(
                f"tail bound {tail:.3e} at horizon {hz} exceeds {eps:g} x value {value:.6g}"
            )
        hz *= 2


def exponent_curve(
    problem: GuessingProblem,
    strategy_family,
    rho: Optional[float] = None,
    n_values: Iterable[int] = (1, 2, 4, 8),
    mode: str = "exact",
    trials: int = 100_000,
    seed: int = 0,
    eps: float = DEFAULT_EPS,
    opts: SolverOptions | None = None,
) -> list:
    """Normalized log-moments ``(1/n) ln E[G^rho]`` over a range of block lengths.

    ``strategy_family`` is ``"iid"`` (the optimal input law, solved once),
    ``"universal"`` (sampler rebuilt for each n), an ``IidStrategy`` or a
    callable mapping n to a strategy.
    """
    if rho is not None:
        problem = GuessingProblem(problem.source, problem.channel, rho)
    ns = list(n_values)
    if ns != sorted(ns):
        raise ValueError("n_values must be ascending")
    if mode not in ("exact", "monte-carlo", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    family: Callable[[int], object]
    if strategy_family == "iid":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConverseAssumptionWarning)
            v_star = solve_exponent(problem, opts).v_star
        family = lambda n: IidStrategy(v_star)
    elif strategy_family == "universal":
        family = lambda n: UniversalStrategy.for_block(n, problem.channel.n_inputs)
    elif isinstance(strategy_family, IidStrategy):
        family = lambda n: strategy_family
    elif callable(strategy_family):
        family = strategy_family
    else:
        raise ValueError(f"unknown strategy family {strategy_family!r}")
    reports = []
    for n in ns:
        strategy = family(n)
        if mode == "exact":
            reports.append(exact_moment(problem, strategy, n, eps))
        else:
            reports.append(simulate_moment(problem, strategy, n, trials, seed))
    return reports
