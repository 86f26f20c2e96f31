"""Plug-in information measures on contingency tables (natural log throughout).

The chance correction follows the usual adjusted-mutual-information recipe:
expected MI under the hypergeometric model of random permutations with both
margins fixed, subtracted from the observed MI and from the normaliser.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .dataset import CategoricalSeries

NORMALIZATIONS = ("max", "mean")

_WINDOW_SDS = 15.0
_LOG_EDGE = -100.0


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise ValueError("contingency counts must be a 2-d matrix")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("contingency counts must be non-negative integers")
        c = c.astype(np.int64)
        if c.sum() < 1:
            raise ValueError("contingency table is empty")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @property
    def row_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def T(self) -> "ContingencyTable":
        return ContingencyTable(self.counts.T)


@dataclass(frozen=True)
class AmiScore:
    mi: float
    emi: float
    h_row: float
    h_col: float
    ami: float

    def to_dict(self) -> dict:
        return {"ami": self.ami, "mi": self.mi, "emi": self.emi, "h_row": self.h_row, "h_col": self.h_col}


def _codes(x) -> tuple[np.ndarray, int]:
    if isinstance(x, CategoricalSeries):
        return x.codes, x.n_categories
    arr = np.asarray(x, dtype=np.int64)
    return arr, int(arr.max()) + 1 if arr.size else 1


def contingency(x, y) -> ContingencyTable:
    """Joint counts; accepts :class:`CategoricalSeries` or integer code arrays."""
    xc, cx = _codes(x)
    yc, cy = _codes(y)
    if xc.shape != yc.shape:
        raise ValueError(f"length mismatch: {xc.size} vs {yc.size}")
    if xc.size < 1:
        raise ValueError("contingency of empty series")
    flat = np.bincount(xc * cy + yc, minlength=cx * cy)
    return ContingencyTable(flat.reshape(cx, cy))


def entropy(counts) -> float:
    c = np.asarray(counts, dtype=np.float64).ravel()
    total = c.sum()
    if total <= 0:
        raise ValueError("entropy of all-zero counts")
    p = c[c > 0] / total
    return float(-(p * np.log(p)).sum())


def mutual_information(t: ContingencyTable) -> float:
    c = t.counts
    n = float(t.n)
    a = t.row_marginals.astype(np.float64)
    b = t.col_marginals.astype(np.float64)
    i, j = np.nonzero(c)
    nij = c[i, j].astype(np.float64)
    mi = float(np.sum(nij / n * (np.log(n) + np.log(nij) - np.log(a[i]) - np.log(b[j]))))
    # rounding can leave a tiny negative value on independent tables
    return max(mi, 0.0)


@lru_cache(maxsize=8)
def _log_factorials(n: int) -> np.ndarray:
    t = gammaln(np.arange(n + 1, dtype=np.float64) + 1.0)
    t.flags.writeable = False
    return t


def expected_mi(a, b, n: int | None = None) -> float:
    """Expected MI of tables with row sums ``a`` and column sums ``b`` under random permutation.

    Each cell's hypergeometric sum is restricted to a window around the mean
    whose end points have log-probability below ``_LOG_EDGE``; the pmf is
    log-concave, so everything outside the window carries less than
    ``n * exp(_LOG_EDGE)`` mass in total.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if n is None:
        n = int(a.sum())
    if a.sum() != n or b.sum() != n or np.any(a < 0) or np.any(b < 0):
        raise ValueError("inconsistent marginals")
    a = a[a > 0]
    b = b[b > 0]
    if a.size <= 1 or b.size <= 1:
        return 0.0
    lf = _log_factorials(int(n))
    ai = np.repeat(a, b.size)
    bj = np.tile(b, a.size)
    lo = np.maximum(1, ai + bj - n)  # a zero cell contributes nothing
    hi = np.minimum(ai, bj)
    const = lf[ai] + lf[n - ai] + lf[bj] + lf[n - bj] - lf[n]

    def log_pmf(k, i):
        return const[i] - lf[k] - lf[ai[i] - k] - lf[bj[i] - k] - lf[n - ai[i] - bj[i] + k]

    mean = ai * bj / n
    sd = np.sqrt(ai * bj * (n - ai) * (n - bj) / (float(n) ** 2 * max(n - 1, 1)))
    half = np.ceil(np.maximum(10.0, _WINDOW_SDS * sd)).astype(np.int64)
    idx = np.arange(ai.size)
    while True:
        wlo = np.maximum(lo, np.floor(mean).astype(np.int64) - half)
        whi = np.minimum(hi, np.ceil(mean).astype(np.int64) + half)
        open_lo = (wlo > lo) & (log_pmf(wlo, idx) > _LOG_EDGE)
        open_hi = (whi < hi) & (log_pmf(whi, idx) > _LOG_EDGE)
        grow = open_lo | open_hi
        if not grow.any():
            break
        half = np.where(grow, 2 * half, half)
    keep = whi >= wlo
    wlo, whi, cells = wlo[keep], whi[keep], idx[keep]
    lengths = whi - wlo + 1
    cell = np.repeat(cells, lengths)
    starts = np.repeat(np.cumsum(lengths) - lengths, lengths)
    k = np.repeat(wlo, lengths) + (np.arange(cell.size) - starts)
    kf = k.astype(np.float64)
    term = kf / n * (np.log(n) + np.log(kf) - np.log(ai[cell]) - np.log(bj[cell]))
    return max(float(np.sum(term * np.exp(log_pmf(k, cell)))), 0.0)


def adjusted_mi(t: ContingencyTable, normalization: str = "max") -> AmiScore:
    """Chance-adjusted MI; ``ami`` is 1 for identical partitions and ~0 under independence.

    When neither side carries any entropy the score is defined as 0.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    mi = mutual_information(t)
    h_row = entropy(t.row_marginals)
    h_col = entropy(t.col_marginals)
    emi = expected_mi(t.row_marginals, t.col_marginals, t.n)
    norm = max(h_row, h_col) if normalization == "max" else 0.5 * (h_row + h_col)
    denom = norm - emi
    if max(h_row, h_col) == 0 or denom <= 0:
        ami = 0.0
    else:
        ami = (mi - emi) / denom
    return AmiScore(mi=mi, emi=emi, h_row=h_row, h_col=h_col, ami=float(min(ami, 1.0)))


def ami_of(x, y, normalization: str = "max") -> AmiScore:
    return adjusted_mi(contingency(x, y), normalization)


def stratified_contingency(x, y, strata) -> np.ndarray:
    """``S x C_x x C_y`` joint counts, one contingency table per stratum code."""
    xc, cx = _codes(x)
    yc, cy = _codes(y)
    sc, cs = _codes(strata)
    if not (xc.shape == yc.shape == sc.shape):
        raise ValueError("x, y and strata must have equal lengths")
    flat = np.bincount((sc * cx + xc) * cy + yc, minlength=cs * cx * cy)
    return flat.reshape(cs, cx, cy)


def conditional_adjusted_mi(tables, normalization: str = "max") -> AmiScore:
    """Chance-adjusted MI of two variables given a stratifying variable.

    ``tables`` is an ``S x C_x x C_y`` count array (see
    :func:`stratified_contingency`). Every field is the stratum-size-weighted
    average of its per-stratum value: ``mi`` is I(X;Y|S), ``emi`` its exact
    expectation when one side is permuted within strata, and ``h_row``/``h_col``
    are H(X|S) and H(Y|S). With a single stratum this is :func:`adjusted_mi`.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    tables = np.asarray(tables)
    n = tables.sum()
    if n < 1:
        raise ValueError("empty stratified table")
    mi = emi = h_row = h_col = 0.0
    for counts in tables:
        m = counts.sum()
        if m == 0:
            continue
        t = ContingencyTable(counts)
        w = m / n
        mi += w * mutual_information(t)
        emi += w * expected_mi(t.row_marginals, t.col_marginals, t.n)
        h_row += w * entropy(t.row_marginals)
        h_col += w * entropy(t.col_marginals)
    norm = max(h_row, h_col) if normalization == "max" else 0.5 * (h_row + h_col)
    denom = norm - emi
    ami = 0.0 if max(h_row, h_col) == 0 or denom <= 0 else (mi - emi) / denom
    return AmiScore(mi=float(mi), emi=float(emi), h_row=float(h_row), h_col=float(h_col), ami=float(min(ami, 1.0)))
