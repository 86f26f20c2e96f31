"""Binning of continuous columns and consolidation of rare categories."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import CategoricalSeries

MAX_BINS = 512
DEFAULT_MIN_COUNT = 100
OTHER = "other"


@dataclass(frozen=True)
class BinningSpec:
    strategy: str  # "freedman_diaconis" | "fixed_width" | "explicit_edges"
    produced_edges: tuple[float, ...]
    width: float | None = None

    def __post_init__(self):
        edges = tuple(float(e) for e in self.produced_edges)
        if len(edges) < 2:
            raise ValueError("a binning needs at least two edges")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin edges must be strictly ascending")
        if self.strategy not in ("freedman_diaconis", "fixed_width", "explicit_edges"):
            raise ValueError(f"unknown binning strategy {self.strategy!r}")
        if self.strategy == "fixed_width" and not (self.width and self.width > 0):
            raise ValueError("fixed_width binning needs a positive width")
        object.__setattr__(self, "produced_edges", edges)

    @property
    def n_bins(self) -> int:
        return len(self.produced_edges) - 1


def _finite(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("no finite values to bin")
    return v


def fd_bins(values) -> BinningSpec:
    """Freedman-Diaconis binning: width ``2 * IQR * n**(-1/3)``.

    Falls back to one bin when the IQR (or the range) is zero; the count is
    clamped to ``[1, MAX_BINS]``.
    """
    v = _finite(values)
    lo, hi = float(v.min()), float(v.max())
    q25, q75 = np.percentile(v, [25, 75])
    iqr = float(q75 - q25)
    if iqr <= 0 or hi <= lo:
        return BinningSpec("freedman_diaconis", _single_bin(lo, hi))
    h = 2.0 * iqr * v.size ** (-1.0 / 3.0)
    k = int(min(max(math.ceil((hi - lo) / h), 1), MAX_BINS))
    return BinningSpec("freedman_diaconis", tuple(np.linspace(lo, hi, k + 1)))


def _single_bin(lo: float, hi: float) -> tuple[float, float]:
    return (lo, hi) if hi > lo else (lo - 0.5, lo + 0.5)


def fixed_width_bins(values, width: float) -> BinningSpec:
    if not width > 0:
        raise ValueError("bin width must be positive")
    v = _finite(values)
    k0 = math.floor(v.min() / width)
    k1 = math.floor(v.max() / width)
    return BinningSpec("fixed_width", tuple(k * width for k in range(k0, k1 + 2)), width=float(width))


def explicit_bins(edges: Sequence[float]) -> BinningSpec:
    return BinningSpec("explicit_edges", tuple(edges))


def discretize(values, spec: BinningSpec) -> CategoricalSeries:
    """Map values to bins, clamping outliers into the end bins; empty bins are dropped."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if np.isnan(v).any():
        raise ValueError("cannot discretize missing values")
    edges = np.asarray(spec.produced_edges)
    k = spec.n_bins
    if spec.strategy == "fixed_width":
        # floor division, not edge search, so codes match floor(value / width) exactly
        raw = np.floor(v / spec.width).astype(np.int64) - int(math.floor(edges[0] / spec.width + 0.5))
    else:
        raw = np.searchsorted(edges, v, side="right") - 1
    raw = np.clip(raw, 0, k - 1)
    used, dense = np.unique(raw, return_inverse=True)
    names = []
    for b in used:
        close = "]" if b == k - 1 else ")"
        names.append(f"[{edges[b]:.6g}, {edges[b + 1]:.6g}{close}")
    return CategoricalSeries(dense.astype(np.int64), tuple(names))


def merge_rare(series: CategoricalSeries, min_count: int = DEFAULT_MIN_COUNT) -> CategoricalSeries:
    """Pool categories with fewer than ``min_count`` members into ``"other"``.

    If the pool is itself too small it is folded into the smallest surviving
    category. The result has every category at ``>= min_count`` members unless
    only one category is left. Empty categories are always dropped.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = series.counts()
    present = np.flatnonzero(counts > 0)
    keep = [int(c) for c in present if counts[c] >= min_count]
    pool = [int(c) for c in present if counts[c] < min_count]

    target = np.full(series.n_categories, -1, dtype=np.int64)
    names: list[str] = []
    for c in keep:
        target[c] = len(names)
        names.append(series.names[c])
    if pool:
        pool_count = int(counts[pool].sum())
        if not keep:
            target[pool] = 0
            names.append(OTHER if len(pool) > 1 else series.names[pool[0]])
        elif pool_count >= min_count:
            target[pool] = len(names)
            names.append(OTHER)
        else:
            smallest = min(keep, key=lambda c: (counts[c], c))
            target[pool] = target[smallest]
    return CategoricalSeries(target[series.codes], tuple(names))


def categorize(
    values: np.ndarray,
    kind: str,
    *,
    bin_width: float | None = None,
    bin_edges: Sequence[float] | None = None,
) -> tuple[CategoricalSeries, BinningSpec | None]:
    """Turn a raw (non-missing) column into categories, binning it if continuous."""
    if kind == "categorical":
        return CategoricalSeries.from_labels(values), None
    v = np.asarray(values, dtype=np.float64)
    if bin_edges is not None:
        spec = explicit_bins(bin_edges)
    elif bin_width is not None:
        spec = fixed_width_bins(v, bin_width)
    else:
        spec = fd_bins(v)
    return discretize(v, spec), spec
