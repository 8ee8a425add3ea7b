"""Distributions, channels, information measures and type classes.

All information quantities are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DimensionMismatchError, InvalidDistributionError, ResourceLimitError

# Entries must sum to one within this after ingestion.
SUM_TOLERANCE = 1e-12
# Deviations up to this are renormalized away; larger ones are rejected.
RENORMALIZE_LIMIT = 1e-9
# Tiny negative entries from decimal round-off are clipped to zero.
NEGATIVE_CLIP = 1e-12

DEFAULT_TYPE_CAP = 10**7

ArrayLike = Union[Sequence[float], np.ndarray]


def _validated_probs(values, what: str = "distribution") -> np.ndarray:
    p = np.array(values, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistributionError(f"{what} must be a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidDistributionError(f"{what} has non-finite entries")
    if np.any(p < -NEGATIVE_CLIP):
        raise InvalidDistributionError(f"{what} has negative entries: {p}")
    # subnormal entries are flushed to zero: their reciprocals overflow
    p = np.where(p < np.finfo(float).tiny, 0.0, p)
    total = math.fsum(p)
    if abs(total - 1.0) > RENORMALIZE_LIMIT:
        raise InvalidDistributionError(f"{what} sums to {total!r}, not 1")
    if total != 1.0:
        p = p / total
    return p


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over a finite alphabet ``{0, ..., alphabet_size - 1}``."""

    probs: np.ndarray

    def __init__(self, probs: ArrayLike):
        p = _validated_probs(probs)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.size)

    @property
    def support(self) -> np.ndarray:
        return self.probs > 0

    def __len__(self) -> int:
        return self.alphabet_size

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.all(self.probs == other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        return f"Distribution({self.probs.tolist()})"

    @classmethod
    def uniform(cls, size: int) -> "Distribution":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point(cls, size: int, index: int) -> "Distribution":
        p = np.zeros(size)
        p[index] = 1.0
        return cls(p)


@dataclass(frozen=True, eq=False)
class Channel:
    """Row-stochastic matrix ``rows[x, y] = W(y|x)``."""

    rows: np.ndarray

    def __init__(self, rows):
        m = np.array(rows, dtype=float)
        if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
            raise InvalidDistributionError(f"channel must be a non-empty matrix, got shape {m.shape}")
        m = np.vstack([_validated_probs(r, what=f"channel row {i}") for i, r in enumerate(m)])
        m.setflags(write=False)
        object.__setattr__(self, "rows", m)

    @property
    def n_inputs(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_outputs(self) -> int:
        return int(self.rows.shape[1])

    @property
    def w_max(self) -> float:
        return float(self.rows.max())

    @property
    def has_noiseless_entry(self) -> bool:
        """True when some transition is certain, i.e. the converse's ``W_max < 1`` fails."""
        return self.w_max >= 1.0

    def __repr__(self) -> str:
        return f"Channel({self.rows.tolist()})"

    @classmethod
    def bsc(cls, q: float) -> "Channel":
        if not 0.0 <= q <= 1.0:
            raise InvalidDistributionError(f"crossover probability must lie in [0, 1], got {q}")
        return cls([[1.0 - q, q], [q, 1.0 - q]])

    @classmethod
    def identity(cls, size: int) -> "Channel":
        return cls(np.eye(size))

    def permuted(self, input_perm, output_perm) -> "Channel":
        return Channel(self.rows[np.asarray(input_perm)][:, np.asarray(output_perm)])


@dataclass(frozen=True)
class TypeComposition:
    """Symbol counts of a type class."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts) or not counts:
            raise ValueError(f"invalid composition {self.counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def alphabet_size(self) -> int:
        return len(self.counts)

    def distribution(self) -> Distribution:
        return Distribution(np.array(self.counts, dtype=float) / self.n)


@dataclass(frozen=True)
class GuessingProblem:
    """Source ``P`` over Y, channel ``W`` from X to Y, and moment order ``rho``."""

    source: Distribution
    channel: Channel
    rho: float

    def __post_init__(self):
        if not isinstance(self.source, Distribution):
            object.__setattr__(self, "source", Distribution(self.source))
        if not isinstance(self.channel, Channel):
            object.__setattr__(self, "channel", Channel(self.channel))
        if self.channel.n_outputs != self.source.alphabet_size:
            raise DimensionMismatchError(
                f"channel has {self.channel.n_outputs} outputs but source has "
                f"{self.source.alphabet_size} symbols"
            )
        rho = float(self.rho)
        if not (rho >= 0.0 and math.isfinite(rho)):
            raise ValueError(f"rho must be a finite non-negative number, got {self.rho}")
        object.__setattr__(self, "rho", rho)


def as_distribution(q) -> Distribution:
    return q if isinstance(q, Distribution) else Distribution(q)


def as_channel(w) -> Channel:
    return w if isinstance(w, Channel) else Channel(w)


def _probs(q) -> np.ndarray:
    return as_distribution(q).probs


def _check_same_size(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"alphabet sizes differ: {a.shape} vs {b.shape}")


def entropy(q) -> float:
    p = _probs(q)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def kl_divergence(q, p) -> float:
    """``D(q || p)``; ``inf`` when q puts mass where p has none."""
    qa, pa = _probs(q), _probs(p)
    _check_same_size(qa, pa)
    mask = qa > 0
    if np.any(pa[mask] == 0):
        return math.inf
    return max(0.0, float(np.sum(qa[mask] * (np.log(qa[mask]) - np.log(pa[mask])))))


def weighted_conditional_divergence(q_cond, w, q_x) -> float:
    """``sum_x q_x(x) D(q_cond(.|x) || w(.|x))``."""
    qc, wc, qx = as_channel(q_cond).rows, as_channel(w).rows, _probs(q_x)
    if qc.shape != wc.shape or qc.shape[0] != qx.size:
        raise DimensionMismatchError(f"shapes {qc.shape}, {wc.shape}, {qx.shape} do not match")
    total = 0.0
    for x in np.flatnonzero(qx > 0):
        d = kl_divergence(qc[x], wc[x])
        if math.isinf(d):
            return math.inf
        total += qx[x] * d
    return total


def output_distribution(v, w) -> Distribution:
    va, wa = _probs(v), as_channel(w).rows
    if va.size != wa.shape[0]:
        raise DimensionMismatchError(f"input law has {va.size} symbols, channel has {wa.shape[0]} inputs")
    return Distribution(va @ wa)


def count_types(n: int, alphabet_size: int) -> int:
    return math.comb(n + alphabet_size - 1, alphabet_size - 1)


def _compositions(n: int, k: int) -> Iterator[tuple]:
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def type_array(n: int, alphabet_size: int, cap: int = DEFAULT_TYPE_CAP) -> np.ndarray:
    """All compositions as an ``(count, alphabet_size)`` integer array, same order as ``enumerate_types``."""
    if n < 0 or alphabet_size < 1:
        raise ValueError(f"need n >= 0 and alphabet_size >= 1, got {n}, {alphabet_size}")
    count = count_types(n, alphabet_size)
    if count > cap:
        raise ResourceLimitError(f"{count} type classes for n={n}, |X|={alphabet_size} exceed cap {cap}")
    out = np.fromiter(
        (c for comp in _compositions(n, alphabet_size) for c in comp),
        dtype=np.int64,
        count=count * alphabet_size,
    )
    return out.reshape(count, alphabet_size)


def enumerate_types(n: int, alphabet_size: int, cap: int = DEFAULT_TYPE_CAP) -> list:
    """Every composition of ``n`` into ``alphabet_size`` parts, in lexicographic order
    starting from ``(n, 0, ..., 0)``."""
    return [TypeComposition(tuple(row)) for row in type_array(n, alphabet_size, cap).tolist()]


def log_multinomial(counts) -> np.ndarray:
    """ln(n! / prod counts!) along the last axis."""
    c = np.asarray(counts, dtype=float)
    return gammaln(c.sum(axis=-1) + 1.0) - gammaln(c + 1.0).sum(axis=-1)


def log_type_class_size(t) -> float:
    counts = t.counts if isinstance(t, TypeComposition) else t
    return float(log_multinomial(counts))


def n_times_entropy(counts) -> np.ndarray:
    """``n * H(counts / n)`` along the last axis, computed as ``n ln n - sum c ln c``.

    Depends only on the multiset of counts, so it is bit-identical for any permutation
    of a sequence.
    """
    c = np.asarray(counts, dtype=float)
    n = c.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        clogc = np.where(c > 0, c * np.log(np.where(c > 0, c, 1.0)), 0.0)
        nlogn = np.where(n > 0, n * np.log(np.where(n > 0, n, 1.0)), 0.0)
    return np.maximum(nlogn - clogc.sum(axis=-1), 0.0)


def symbol_counts(x, alphabet_size: int) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("sequence must be a non-empty 1-D sequence of symbols")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ValueError("symbols must be integers")
        arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= alphabet_size:
        raise ValueError(f"symbol outside alphabet of size {alphabet_size}")
    return np.bincount(arr, minlength=alphabet_size)


def empirical_distribution(x, alphabet_size: int) -> Distribution:
    counts = symbol_counts(x, alphabet_size)
    return Distribution(counts / counts.sum())


def log_sum_exp(values) -> float:
    return float(logsumexp(np.asarray(values, dtype=float)))
