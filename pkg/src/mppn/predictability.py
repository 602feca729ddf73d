"""Per-series predictability: discretization, entropy rate, accuracy bound.

A real-valued series is binned into Q symbols, its entropy rate is
estimated from Lempel-Ziv style match lengths, and the largest prediction
accuracy consistent with that rate and the realized alphabet is obtained by
inverting a binary-entropy inequality.

The match length at position i is the length of the shortest substring
starting at i that never occurs starting at any earlier position (earlier
occurrences may overlap i).  Match lengths are computed exactly via a
suffix array and a longest-previous-factor sweep, so the estimator scales
to datasets with tens of thousands of steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError

log = logging.getLogger(__name__)

FANO_RESIDUAL_TOL = 1e-10


@dataclass
class DiscreteSeries:
    """Integer symbol sequence over an alphabet of at most ``q`` bins."""

    symbols: np.ndarray
    q: int

    @property
    def n(self) -> int:
        return len(self.symbols)

    @property
    def distinct(self) -> int:
        return int(len(np.unique(self.symbols)))


def discretize(series, q: int, mode: str = "equal-frequency") -> DiscreteSeries:
    """Bin a real sequence into ``q`` integer symbols.

    equal-frequency uses empirical quantile boundaries with ties resolved
    toward the lower bin; equal-width splits [min, max] uniformly.  A
    constant series maps to a single symbol in either mode.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ArgumentError(f"discretize: expected a 1-d series, got shape {x.shape}")
    if q < 2:
        raise ArgumentError(f"discretize: Q must be >= 2, got {q}")
    if len(x) < 2:
        raise ArgumentError(f"discretize: series too short ({len(x)} values)")
    if np.isnan(x).any():
        raise DataError("discretize: series contains NaN")
    if not np.isfinite(x).all():
        raise DataError("discretize: series contains non-finite values")

    if mode == "equal-frequency":
        bounds = np.quantile(x, np.arange(1, q) / q)
        symbols = np.searchsorted(bounds, x, side="left")
    elif mode == "equal-width":
        lo, hi = x.min(), x.max()
        if hi == lo:
            symbols = np.zeros(len(x), dtype=np.int64)
        else:
            symbols = np.minimum((x - lo) / (hi - lo) * q, q - 1).astype(np.int64)
    else:
        raise ArgumentError(f"discretize: unknown mode '{mode}'")
    return DiscreteSeries(symbols.astype(np.int64), q)


def _suffix_array(s: np.ndarray) -> np.ndarray:
    """Suffix array by prefix doubling on integer symbols."""
    n = len(s)
    rank = np.unique(s, return_inverse=True)[1].astype(np.int64)
    k = 1
    order = np.argsort(rank, kind="stable")
    while rank[order[-1]] != n - 1 and k < n:
        second = np.full(n, -1, dtype=np.int64)
        second[: n - k] = rank[k:]
        order = np.lexsort((second, rank))
        boundary = (rank[order[1:]] != rank[order[:-1]]) | (second[order[1:]] != second[order[:-1]])
        new_rank = np.zeros(n, dtype=np.int64)
        new_rank[order[1:]] = np.cumsum(boundary)
        rank = new_rank
        k *= 2
    return order


def _lcp_array(s: np.ndarray, sa: np.ndarray) -> np.ndarray:
    """Kasai: lcp[r] = common prefix length of suffixes sa[r-1] and sa[r]."""
    n = len(s)
    rank = np.empty(n, dtype=np.int64)
    rank[sa] = np.arange(n)
    lcp = np.zeros(n, dtype=np.int64)
    h = 0
    for i in range(n):
        r = rank[i]
        if r == 0:
            h = 0
            continue
        j = sa[r - 1]
        while i + h < n and j + h < n and s[i + h] == s[j + h]:
            h += 1
        lcp[r] = h
        if h:
            h -= 1
    return lcp


def _longest_previous_factor(s: np.ndarray) -> np.ndarray:
    """lpf[i] = longest prefix of s[i:] occurring at some start j < i.

    Positions are peeled off a doubly linked list over suffix-array ranks in
    decreasing text order, so the rank neighbors of a position are always
    its best earlier-starting candidates.
    """
    n = len(s)
    sa = _suffix_array(s)
    lcp = _lcp_array(s, sa)
    rank = np.empty(n, dtype=np.int64)
    rank[sa] = np.arange(n)

    prev = np.arange(-1, n - 1, dtype=np.int64)
    nxt = np.arange(1, n + 1, dtype=np.int64)
    # left_lcp[r] = current common-prefix length between list node r and its
    # left neighbor; updated as nodes are removed.
    left_lcp = lcp.copy()

    lpf = np.zeros(n, dtype=np.int64)
    for pos in range(n - 1, -1, -1):
        r = int(rank[pos])
        left = int(prev[r])
        right = int(nxt[r])
        with_left = int(left_lcp[r]) if left >= 0 else 0
        with_right = int(left_lcp[right]) if right < n else 0
        lpf[pos] = max(with_left, with_right)
        # unlink r; the surviving pair's lcp is the min across the removed node
        if right < n:
            left_lcp[right] = min(with_left, with_right) if left >= 0 else 0
            prev[right] = left
        if left >= 0:
            nxt[left] = right
    return lpf


def lz_match_lengths(symbols: np.ndarray) -> np.ndarray:
    """Shortest-never-seen-before substring length at every position.

    The first position always scores 1; a position whose entire suffix has
    occurred before scores suffix length + 1.
    """
    s = np.asarray(symbols, dtype=np.int64)
    if len(s) < 2:
        raise ArgumentError(f"lz_match_lengths: need n >= 2, got {len(s)}")
    return _longest_previous_factor(s) + 1


def lz_entropy_rate(d: DiscreteSeries) -> float:
    """Entropy-rate estimate in bits per symbol."""
    if d.n < 2:
        raise ArgumentError(f"lz_entropy_rate: need n >= 2, got {d.n}")
    lam_sum = int(lz_match_lengths(d.symbols).sum())
    return d.n * math.log2(d.n) / lam_sum


def _fano_rhs(pi: float, n_distinct: int) -> float:
    h = 0.0
    if 0.0 < pi < 1.0:
        h = -pi * math.log2(pi) - (1.0 - pi) * math.log2(1.0 - pi)
    rest = (1.0 - pi) * math.log2(n_distinct - 1) if n_distinct > 1 else 0.0
    return h + rest


def fano_upper_bound(s_bits: float, n_distinct: int) -> float:
    """Largest accuracy consistent with entropy rate ``s_bits`` over an
    alphabet of ``n_distinct`` symbols.

    Solves s = H(pi) + (1-pi) log2(N-1) for pi in [1/N, 1] by bisection;
    the right-hand side decreases monotonically from log2(N) to 0 on that
    interval.  Out-of-range rates are clamped with a logged warning.
    """
    if n_distinct < 1:
        raise ArgumentError(f"fano_upper_bound: N must be >= 1, got {n_distinct}")
    if n_distinct == 1:
        return 1.0
    s_max = math.log2(n_distinct)
    if s_bits < 0.0 or s_bits > s_max:
        log.warning("fano_upper_bound: clamping S=%.6g into [0, %.6g]", s_bits, s_max)
        s_bits = min(max(s_bits, 0.0), s_max)
    if s_bits <= 0.0:
        return 1.0
    if s_bits >= s_max:
        return 1.0 / n_distinct

    lo, hi = 1.0 / n_distinct, 1.0
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        resid = _fano_rhs(mid, n_distinct) - s_bits
        if abs(resid) <= FANO_RESIDUAL_TOL:
            return mid
        if resid > 0.0:
            lo = mid
        else:
            hi = mid
        if lo == hi:
            break
    return mid


@dataclass
class VariatePredictability:
    name: str
    s_bits: float
    pi_max: float
    n_distinct: int


@dataclass
class PredictabilityReport:
    variates: list[VariatePredictability]
    mean_pi_max: float
    q: int
    mode: str

    def to_dict(self) -> dict:
        return {
            "variates": [
                {"name": v.name, "S_bits": v.s_bits, "pi_max": v.pi_max, "N": v.n_distinct}
                for v in self.variates
            ],
            "mean_pi_max": self.mean_pi_max,
            "Q": self.q,
            "mode": self.mode,
        }


def dataset_predictability(dataset, q: int = 10, mode: str = "equal-frequency") -> PredictabilityReport:
    """Run the discretize -> entropy-rate -> bound pipeline per variate.

    The bound for each variate uses that variate's realized alphabet size,
    and the dataset aggregate is the arithmetic mean over variates.
    """
    if dataset.values.size == 0:
        raise DataError("dataset_predictability: empty dataset")
    entries = []
    for c, name in enumerate(dataset.names):
        d = discretize(dataset.values[:, c], q, mode)
        s = lz_entropy_rate(d)
        pi = fano_upper_bound(s, d.distinct)
        entries.append(VariatePredictability(name, s, pi, d.distinct))
    mean_pi = float(np.mean([v.pi_max for v in entries]))
    return PredictabilityReport(entries, mean_pi, q, mode)
