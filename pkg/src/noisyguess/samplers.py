"""Randomized guessing strategies.

Two schemes draw every guess independently:

* ``IidStrategy`` -- symbols i.i.d. from an input law ``V`` (the optimal
  scheme uses the minimizer ``V*`` of the exponent objective);
* ``UniversalStrategy`` -- whole sequences from the law proportional to
  ``exp(-n * H_hat(x))``, where ``H_hat`` is the empirical entropy. It does
  not depend on the source, the channel or ``rho``.

Deterministic lists are represented by ``ListStrategy`` and evaluated in the
simulator.

All randomness comes from explicit ``numpy.random.Generator`` streams built by
``make_stream``; nothing touches global RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatchError, ResourceLimitError
from .simplex import (
    DEFAULT_TYPE_CAP,
    Channel,
    Distribution,
    TypeComposition,
    as_channel,
    as_distribution,
    count_types,
    log_multinomial,
    n_times_entropy,
    symbol_counts,
    type_array,
)

# Largest block length for exact success probabilities of the universal scheme.
UNIVERSAL_EXACT_MAX_N = 14


def make_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, stream_id)``.

    Streams with different ids are statistically independent, and a stream
    is reproduced exactly from its ``(seed, stream_id)`` pair.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream_id,))))


@dataclass(frozen=True, eq=False)
class UniversalSampler:
    n: int
    alphabet_size: int
    types: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)
    log_normalizer: float

    @classmethod
    def build(cls, n: int, alphabet_size: int, cap: int = DEFAULT_TYPE_CAP) -> "UniversalSampler":
        if n < 1:
            raise ValueError("block length must be positive")
        types = type_array(n, alphabet_size, cap)
        # ln(|T(Q)| exp(-n H(Q))): total mass of each type class before normalization
        log_weights = log_multinomial(types) - n_times_entropy(types)
        for arr in (types, log_weights):
            arr.setflags(write=False)
        return cls(n, alphabet_size, types, log_weights, float(logsumexp(log_weights)))

    @property
    def type_log_weights(self) -> dict:
        return {TypeComposition(tuple(t)): float(w) for t, w in zip(self.types.tolist(), self.log_weights)}

    @property
    def type_probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_normalizer)

    def log_prob_of_counts(self, counts) -> float:
        return float(-n_times_entropy(counts) - self.log_normalizer)


def universal_log_prob(sampler: UniversalSampler, x) -> float:
    """Natural log of the probability the universal law assigns to the sequence ``x``."""
    if len(x) != sampler.n:
        raise DimensionMismatchError(f"sequence length {len(x)} differs from sampler block length {sampler.n}")
    return sampler.log_prob_of_counts(symbol_counts(x, sampler.alphabet_size))


def sample_universal(sampler: UniversalSampler, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draw from the universal law: a type with probability proportional to its
    class mass, then a uniformly random arrangement of that type's symbols."""
    m = 1 if size is None else size
    idx = rng.choice(len(sampler.types), size=m, p=sampler.type_probabilities)
    symbols = np.arange(sampler.alphabet_size)
    pools = np.vstack([np.repeat(symbols, c) for c in sampler.types[idx]])
    order = np.argsort(rng.random((m, sampler.n)), axis=1, kind="stable")
    out = np.take_along_axis(pools, order, axis=1)
    return out[0] if size is None else out


def sample_iid(v, n: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    p = as_distribution(v).probs
    shape = (n,) if size is None else (size, n)
    return rng.choice(p.size, size=shape, p=p)


@dataclass(frozen=True)
class IidStrategy:
    v: Distribution
    kind: str = field(default="iid", init=False)

    def __post_init__(self):
        object.__setattr__(self, "v", as_distribution(self.v))


@dataclass(frozen=True)
class UniversalStrategy:
    sampler: UniversalSampler
    kind: str = field(default="universal", init=False)

    @classmethod
    def for_block(cls, n: int, alphabet_size: int) -> "UniversalStrategy":
        return cls(UniversalSampler.build(n, alphabet_size))


@dataclass(frozen=True)
class ListStrategy:
    """Explicit guess list; evaluated as repeating cyclically after its last entry."""

    guesses: tuple
    kind: str = field(default="list", init=False)

    def __post_init__(self):
        object.__setattr__(self, "guesses", tuple(tuple(int(s) for s in g) for g in self.guesses))


GuessStrategy = IidStrategy | UniversalStrategy | ListStrategy


def _log_w(w: Channel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w.rows)


def log_success_by_type(strategy, w, y_counts) -> float:
    """ln s(y) for any target with symbol counts ``y_counts``; s depends on y only through them."""
    w = as_channel(w)
    y_counts = np.asarray(y_counts, dtype=np.int64)
    if y_counts.size != w.n_outputs:
        raise DimensionMismatchError("target counts do not match the channel output alphabet")
    if isinstance(strategy, IidStrategy):
        if strategy.v.alphabet_size != w.n_inputs:
            raise DimensionMismatchError("V does not match the channel input alphabet")
        q = strategy.v.probs @ w.rows
        used = y_counts > 0
        if np.any(q[used] == 0):
            return -math.inf
        return float(np.sum(y_counts[used] * np.log(q[used])))
    if isinstance(strategy, UniversalStrategy):
        return _universal_log_success(strategy.sampler, w, y_counts)
    raise TypeError(f"no single per-guess success probability for strategy kind {strategy.kind!r}")


def _universal_log_success(sampler: UniversalSampler, w: Channel, y_counts: np.ndarray) -> float:
    """Exact ln sum_x U(x) W^n(y|x), grouping guesses by their joint type with y.

    For each output symbol b, the guess symbols at the n_b positions where
    ``y = b`` form a composition k[., b]; the number of guesses sharing the
    compositions is prod_b multinomial(n_b; k[., b]).
    """
    n = int(y_counts.sum())
    if n != sampler.n:
        raise DimensionMismatchError(f"target length {n} differs from sampler block length {sampler.n}")
    if sampler.alphabet_size != w.n_inputs:
        raise DimensionMismatchError("sampler alphabet does not match the channel input alphabet")
    if n > UNIVERSAL_EXACT_MAX_N:
        raise ResourceLimitError(f"exact universal success probability is capped at n={UNIVERSAL_EXACT_MAX_N}")
    k = w.n_inputs
    combos = math.prod(count_types(int(c), k) for c in y_counts)
    if combos > DEFAULT_TYPE_CAP:
        raise ResourceLimitError(f"{combos} joint types exceed the enumeration cap")
    log_w = _log_w(w)
    per_symbol = []
    for b, nb in enumerate(y_counts):
        comps = type_array(int(nb), k)
        with np.errstate(invalid="ignore"):
            lw = np.where(comps > 0, comps * log_w[:, b], 0.0).sum(axis=1)
        per_symbol.append((comps, log_multinomial(comps) + lw))
    grids = np.meshgrid(*[np.arange(len(c)) for c, _ in per_symbol], indexing="ij")
    grids = [g.ravel() for g in grids]
    x_counts = sum(c[g] for (c, _), g in zip(per_symbol, grids))
    log_terms = sum(t[g] for (_, t), g in zip(per_symbol, grids))
    log_terms = log_terms - n_times_entropy(x_counts) - sampler.log_normalizer
    return float(logsumexp(log_terms))


def success_probability(strategy, w, y) -> float:
    """Probability that one randomized guess, after the channel, equals the target ``y``."""
    w = as_channel(w)
    return math.exp(log_success_by_type(strategy, w, symbol_counts(y, w.n_outputs)))


def _log_universal_normalizer(m: int, alphabet_size: int) -> float:
    if m == 0:
        return 0.0
    t = type_array(m, alphabet_size)
    return float(logsumexp(log_multinomial(t) - n_times_entropy(t)))


def conditional_universal_log_prob(x, z, alphabet_size: int, z_alphabet_size: Optional[int] = None) -> float:
    """ln P(x|z) for the side-information universal law ``exp(-n H_hat(X|Z))``.

    ``n H_hat(X|Z)`` splits into the empirical entropies of the sub-sequences of
    ``x`` picked out by each side-information symbol, so the normalizer factors
    into one unconditional normalizer per z-symbol count.
    """
    xa, za = np.asarray(x), np.asarray(z)
    if xa.shape != za.shape or xa.ndim != 1:
        raise DimensionMismatchError("x and z must be sequences of equal length")
    kz = z_alphabet_size if z_alphabet_size is not None else int(za.max()) + 1
    symbol_counts(x, alphabet_size)
    z_counts = symbol_counts(z, kz)
    log_p = 0.0
    for c in range(kz):
        if z_counts[c] == 0:
            continue
        sub = symbol_counts(xa[za == c], alphabet_size)
        log_p -= float(n_times_entropy(sub)) + _log_universal_normalizer(int(z_counts[c]), alphabet_size)
    return log_p
