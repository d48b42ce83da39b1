"""Calibrating reference budgets from p-values, and the classical bounds.

The DKW budget of a region of size ``s`` is the smallest integer ``v`` left
uncovered by the uniform deviation band on the empirical survival function of
its p-values, scanned over thresholds ``t``.  With ``C = sqrt(log(K/alpha)/2)``
each region fails with probability at most ``alpha/K``, so the whole family
holds jointly with probability ``>= 1 - alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import ForestBound, as_selection
from .errors import AlphaTooLarge, ConfigError, InputError
from .family import ReferenceFamily

METHODS = ("dkw", "gw")


def as_pvalues(values) -> np.ndarray:
    p = np.asarray(values, dtype=float)
    if p.ndim != 1:
        raise InputError("p-values must be a 1-d sequence")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InputError("p-values must be finite and lie in [0, 1]")
    return p


def dkw_constant(K: int, alpha: float) -> float:
    return math.sqrt(0.5 * math.log(K / alpha))


def _scan(region_pvalues) -> tuple[int, np.ndarray, np.ndarray]:
    # thresholds t = p_(0)=0, p_(1), ..., p_(s) with s - l p-values above p_(l);
    # order statistics equal to 1 are not admissible thresholds
    p = np.sort(np.asarray(region_pvalues, dtype=float), kind="stable")
    s = p.size
    t = np.concatenate([[0.0], p])
    above = (s - np.arange(s + 1)).astype(float)
    ok = t < 1.0
    return s, 1.0 - t[ok], above[ok]


def dkw_zeta(region_pvalues, C: float) -> int:
    """DKW budget of one region: ``s ^ min_l floor((C/(2a) + sqrt(C^2/(4a^2) + (s-l)/a))^2)``, ``a = 1 - p_(l)``.

    The floor is taken after squaring.
    """
    s, a, above = _scan(region_pvalues)
    if s == 0:
        return 0
    root = C / (2 * a) + np.sqrt(C * C / (4 * a * a) + above / a)
    return int(min(s, math.floor(float(np.min(root * root)))))


def gw_zeta(region_pvalues, C: float) -> int:
    """Budget of the earlier ``(N_t + sqrt(s) C) / (1 - t)`` band; never below :func:`dkw_zeta`."""
    s, a, above = _scan(region_pvalues)
    if s == 0:
        return 0
    val = (above + math.sqrt(s) * C) / a
    return int(min(s, math.floor(float(np.min(val)))))


@dataclass(frozen=True)
class CalibrationConfig:
    alpha: float
    K: int
    method: str = "dkw"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.alpha / self.K >= 0.5:
            raise AlphaTooLarge(f"alpha/K = {self.alpha / self.K} must be < 1/2")

    @property
    def C(self) -> float:
        return dkw_constant(self.K, self.alpha)


def _regions_of(regions) -> tuple[tuple[int, ...], ...]:
    if isinstance(regions, ReferenceFamily):
        return regions.regions
    return tuple(tuple(int(i) for i in r) for r in regions)


def calibrate_family(regions, pvalues, config: CalibrationConfig) -> ReferenceFamily:
    """Attach a budget to every region.

    ``regions`` (a list of 1-based index collections, or a family whose budgets
    are ignored) must be fixed before looking at the data.
    """
    p = as_pvalues(pvalues)
    regs = _regions_of(regions)
    if not regs:
        raise InputError("no regions to calibrate")
    if config.K != len(regs):
        raise ConfigError(f"config.K={config.K} but {len(regs)} regions were given")
    family = ReferenceFamily(p.size, regs, (None,) * len(regs))
    return family.with_zetas(calibrate_zetas(family.regions, p, config))


def calibrate_zetas(regions, p: np.ndarray, config: CalibrationConfig) -> tuple[int, ...]:
    """Budgets only, for already-validated regions and p-values."""
    zeta_fn = dkw_zeta if config.method == "dkw" else gw_zeta
    C = config.C
    return tuple(zeta_fn(p[np.asarray(r) - 1], C) for r in regions)


def calibrate(regions, pvalues, alpha: float, method: str = "dkw") -> ReferenceFamily:
    regs = _regions_of(regions)
    return calibrate_family(regs, pvalues, CalibrationConfig(alpha, max(len(regs), 1), method))


# --- classical bounds ---------------------------------------------------------


def _simes_thresholds(m: int, alpha: float) -> np.ndarray:
    return alpha * np.arange(1, m + 1) / m


def simes_bound(pvalues, S, alpha: float) -> int:
    p = as_pvalues(pvalues)
    m = p.size
    sel = as_selection(S, m)
    if sel.size == 0:
        return 0
    ps = np.sort(p[sel - 1])
    at_or_below = np.searchsorted(ps, _simes_thresholds(m, alpha), side="right")
    terms = sel.size - at_or_below + np.arange(m)
    return int(min(sel.size, max(0, int(terms.min()))))


def bonferroni_bound(pvalues, S, alpha: float) -> int:
    p = as_pvalues(pvalues)
    sel = as_selection(S, p.size)
    return int(np.count_nonzero(p[sel - 1] > alpha / p.size))


class TrivialBound:
    """``V(S) = |S|``; stands in for a side of the hybrid that gets no level."""

    def __call__(self, S) -> int:
        return len(S)

    def topk(self, order) -> np.ndarray:
        return np.arange(1, len(order) + 1, dtype=np.int64)


class SimesBound:
    def __init__(self, pvalues, alpha: float):
        self.p = as_pvalues(pvalues)
        self.alpha = alpha

    def __call__(self, S) -> int:
        return simes_bound(self.p, S, self.alpha)

    def topk(self, order) -> np.ndarray:
        """Simes bound of every top-k set at once.

        For the ``k`` smallest p-values, ``#{i in S_k: p_i <= alpha j/m} =
        min(k, n_j)`` with ``n_j`` the global count, which splits the minimum
        over ``j`` into a direct term and a prefix minimum.
        """
        m = self.p.size
        k = np.arange(1, len(order) + 1, dtype=np.int64)
        n = np.searchsorted(np.sort(self.p), _simes_thresholds(m, self.alpha), side="right")
        pos = np.searchsorted(n, k, side="left")  # first j (0-based) with n_j >= k
        big = np.iinfo(np.int64).max // 4
        direct = np.where(pos < m, pos, big)
        prefmin = np.minimum.accumulate(np.arange(1, m + 1) - n)
        spill = np.where(pos >= 1, k - 1 + prefmin[np.maximum(pos - 1, 0)], big)
        return np.clip(np.minimum(direct, spill), 0, k)


class BonferroniBound:
    def __init__(self, pvalues, alpha: float):
        self.p = as_pvalues(pvalues)
        self.alpha = alpha

    def __call__(self, S) -> int:
        return bonferroni_bound(self.p, S, self.alpha)

    def topk(self, order) -> np.ndarray:
        above = self.p[np.asarray(order, dtype=np.int64)] > self.alpha / self.p.size
        return np.cumsum(above).astype(np.int64)


class HybridBound:
    """Pointwise minimum of two post hoc bounds, each valid at its own share of the level."""

    def __init__(self, first, second):
        self.first = first
        self.second = second

    @classmethod
    def build(cls, pvalues, tree_regions, alpha: float, gamma: float, method: str = "dkw"):
        """Simes at ``(1 - gamma) alpha`` against the calibrated tree at ``gamma alpha``."""
        if not 0 <= gamma <= 1:
            raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
        p = as_pvalues(pvalues)
        simes = SimesBound(p, (1 - gamma) * alpha) if gamma < 1 else TrivialBound()
        if gamma > 0:
            tree = ForestBound(calibrate(tree_regions, p, gamma * alpha, method))
        else:
            tree = TrivialBound()
        return cls(simes, tree)

    def __call__(self, S) -> int:
        return min(self.first(S), self.second(S))

    def topk(self, order) -> np.ndarray:
        return np.minimum(self.first.topk(order), self.second.topk(order))


def hybrid_bound(pvalues, tree_regions: Sequence, S, alpha: float, gamma: float) -> int:
    p = as_pvalues(pvalues)
    sel = as_selection(S, p.size)
    return HybridBound.build(p, tree_regions, alpha, gamma)(sel)
