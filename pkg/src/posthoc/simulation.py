"""Gaussian test-bed, top-k confidence envelopes and Monte Carlo coverage.

Hypotheses ``1..m`` are cut into ``m/s`` consecutive atoms of size ``s``.  The
first ``ceil(r s)`` hypotheses of each of ``K1`` signal atoms are non-null
with ``X_i ~ N(mu, 1)``; everything else is ``N(0, 1)``; ``p_i = 1 - Phi(X_i)``.

Randomness is keyed by ``(seed, rep)`` through a counter-based Philox stream,
so a replicate's data never depends on which worker computed it or in what
order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .bounds import ForestBound
from .calibration import CalibrationConfig, HybridBound, SimesBound, TrivialBound, as_pvalues, calibrate_zetas, dkw_constant
from .errors import ConfigError, DomainError, MaskRequiredForOracle, QNotCompatible, SNotDividingM
from .family import ReferenceFamily, complete_family

BOUND_COLUMNS = ("oracle", "simes", "part", "tree", "hybrid")


@dataclass(frozen=True)
class SimulationConfig:
    """Generative model and bound settings for one experiment.

    ``q`` may be left as ``None`` when no tree is needed (e.g. a plain
    partition with ``m/s`` not a power of two); otherwise ``m = s 2^q``.
    """

    m: int = 12800
    s: int = 100
    q: int | None = 7
    K1: int = 8
    r: float = 0.9
    mu: float = 3.0
    alpha: float = 0.05
    gamma: float = 0.02
    seed: int = 0
    reps: int = 1
    scatter: bool = False

    def __post_init__(self):
        if self.m < 1 or self.s < 1:
            raise ConfigError("m and s must be positive")
        if self.m % self.s:
            raise SNotDividingM(f"s={self.s} does not divide m={self.m}")
        if self.q is not None:
            if self.q < 0 or self.m != self.s * 2 ** self.q:
                raise QNotCompatible(f"m={self.m} is not s * 2^q = {self.s} * 2^{self.q}")
        if not 0 <= self.K1 <= self.n_atoms:
            raise ConfigError(f"K1 must lie in 0..{self.n_atoms}")
        if not 0 < self.r <= 1:
            raise ConfigError(f"r must lie in (0, 1], got {self.r}")
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ConfigError("mu must be finite and >= 0")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def n_atoms(self) -> int:
        return self.m // self.s

    @property
    def signal_per_atom(self) -> int:
        return math.ceil(round(self.r * self.s, 9))

    def signal_atoms(self) -> np.ndarray:
        if self.scatter and self.K1:
            return (np.arange(self.K1) * (self.n_atoms // self.K1)).astype(np.int64)
        return np.arange(self.K1, dtype=np.int64)


def null_mask(config: SimulationConfig) -> np.ndarray:
    mask = np.ones(config.m, dtype=bool)
    for atom in config.signal_atoms():
        start = atom * config.s
        mask[start:start + config.signal_per_atom] = False
    return mask


def rng_for(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


def generate_instance(config: SimulationConfig, rep: int) -> tuple[np.ndarray, np.ndarray]:
    """p-values and the true-null mask of replicate ``rep``."""
    is_null = null_mask(config)
    x = rng_for(config.seed, rep).standard_normal(config.m)
    x[~is_null] += config.mu
    return ndtr(-x), is_null


def build_partition_regions(m: int, s: int) -> list[tuple[int, ...]]:
    if s < 1 or m % s:
        raise SNotDividingM(f"s={s} does not divide m={m}")
    return [tuple(range(1 + k * s, (k + 1) * s + 1)) for k in range(m // s)]


def build_tree_regions(m: int, q: int) -> list[tuple[int, ...]]:
    """Perfect binary tree over ``2^q`` equal leaves, root first, level by level."""
    if q < 0 or m % (2 ** q):
        raise QNotCompatible(f"2^{q} does not divide m={m}")
    regions = []
    for level in range(q + 1):
        width = m // 2 ** level
        regions.extend(tuple(range(1 + b * width, (b + 1) * width + 1)) for b in range(2 ** level))
    return regions


@dataclass(frozen=True)
class Envelope:
    """``values[k-1] = V(S_k)`` where ``S_k`` holds the ``k`` smallest p-values."""

    values: np.ndarray

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.values.size + 1)

    @property
    def true_discoveries(self) -> np.ndarray:
        return self.k - self.values


def topk_order(pvalues) -> np.ndarray:
    return np.argsort(np.asarray(pvalues), kind="stable")


def envelope(pvalues, bound, mask: np.ndarray | None = None) -> Envelope:
    """Evaluate ``bound`` on the nested top-k selections.

    ``bound`` is an evaluator (anything callable on a 1-based selection,
    optionally with a batched ``topk(order)``) or the string ``"oracle"``,
    which counts true nulls and needs ``mask``.
    """
    p = as_pvalues(pvalues)
    order = topk_order(p)
    if isinstance(bound, str):
        if bound != "oracle":
            raise ValueError(f"unknown bound {bound!r}")
        if mask is None:
            raise MaskRequiredForOracle("the oracle envelope needs the true-null mask")
        return Envelope(np.cumsum(np.asarray(mask, dtype=bool)[order]).astype(np.int64))
    if hasattr(bound, "topk"):
        return Envelope(np.asarray(bound.topk(order), dtype=np.int64))
    values = np.array([bound(order[:k] + 1) for k in range(1, p.size + 1)], dtype=np.int64)
    return Envelope(values)


class CalibratedForest:
    """A fixed forest of regions whose completed index is built once and
    re-used with fresh budgets on every replicate."""

    def __init__(self, m: int, regions: Sequence[tuple[int, ...]]):
        self.regions = [tuple(r) for r in regions]
        base = ReferenceFamily(m, tuple(self.regions), (None,) * len(self.regions))
        completed, self.index = complete_family(base)
        self.extra = completed.zetas[len(self.regions):]

    @property
    def K(self) -> int:
        return len(self.regions)

    def zetas(self, p: np.ndarray, alpha: float, method: str = "dkw") -> tuple[int, ...]:
        return calibrate_zetas(self.regions, p, CalibrationConfig(alpha, self.K, method))

    def bound(self, p: np.ndarray, alpha: float, method: str = "dkw") -> ForestBound:
        return ForestBound(index=self.index, zetas=self.zetas(p, alpha, method) + self.extra)

    def violated(self, zetas: Sequence[int], is_null: np.ndarray) -> bool:
        nulls = [int(np.count_nonzero(is_null[np.asarray(r) - 1])) for r in self.regions]
        return any(n > z for n, z in zip(nulls, zetas))


def workers_from_env(default: int | None = None) -> int:
    raw = os.environ.get("POSTHOC_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"POSTHOC_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError("POSTHOC_THREADS must be >= 1")
        return n
    return default or os.cpu_count() or 1


def map_reps(fn: Callable[[int], object], reps: int, workers: int | None = None) -> list:
    """``[fn(0), ..., fn(reps-1)]`` in rep order, whatever the worker count."""
    workers = workers or workers_from_env()
    if workers <= 1 or reps <= 1:
        return [fn(rep) for rep in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(reps)))


def jer_empirical(
    config: SimulationConfig,
    regions: Sequence[tuple[int, ...]],
    calibrator: Callable[[Sequence[tuple[int, ...]], np.ndarray], Sequence[int]] | None = None,
    workers: int | None = None,
) -> float:
    """Fraction of replicates in which some region holds more true nulls than its budget.

    By default the budgets are DKW-calibrated at ``config.alpha`` on each
    replicate; ``calibrator(regions, p)`` substitutes another rule.
    """
    if config.reps < 100:
        raise ConfigError("jer_empirical needs at least 100 replicates")
    regions = [tuple(r) for r in regions]
    if not regions:
        raise ConfigError("no regions")
    cal = CalibrationConfig(config.alpha, len(regions))
    region_idx = [np.asarray(r) - 1 for r in regions]

    def one(rep: int) -> bool:
        p, is_null = generate_instance(config, rep)
        zetas = calibrator(regions, p) if calibrator else calibrate_zetas(regions, p, cal)
        return any(int(np.count_nonzero(is_null[idx])) > z for idx, z in zip(region_idx, zetas))

    hits = map_reps(one, config.reps, workers)
    return sum(hits) / config.reps


# --- full experiment ------------------------------------------------------------


@dataclass
class ReplicateResult:
    rep: int
    envelopes: dict[str, np.ndarray]  # bound name -> V(S_k), k = 1..m
    jer_violation: bool


@dataclass
class SimulationResult:
    config: SimulationConfig
    replicates: list[ReplicateResult]
    K_part: int
    K_tree: int
    columns: tuple[str, ...] = field(default=BOUND_COLUMNS)

    @property
    def violations(self) -> int:
        return sum(r.jer_violation for r in self.replicates)

    def true_discoveries(self, name: str) -> np.ndarray:
        """``(reps, m)`` array of ``k - V(S_k)``."""
        k = np.arange(1, self.config.m + 1)
        return np.stack([k - r.envelopes[name] for r in self.replicates])

    def mean_true_discoveries(self, name: str) -> np.ndarray:
        total = np.zeros(self.config.m, dtype=np.float64)
        k = np.arange(1, self.config.m + 1)
        for r in self.replicates:  # fixed summation order
            total += k - r.envelopes[name]
        return total / len(self.replicates)


class Experiment:
    """Precomputed structures shared by every replicate of a configuration."""

    def __init__(self, config: SimulationConfig):
        if config.q is None:
            raise ConfigError("the envelope experiment needs a tree depth q")
        self.config = config
        self.part = CalibratedForest(config.m, build_partition_regions(config.m, config.s))
        self.tree = CalibratedForest(config.m, build_tree_regions(config.m, config.q))
        a, g = config.alpha, config.gamma
        for forest, level in ((self.part, a), (self.tree, a), (self.tree, g * a)):
            if level > 0:
                CalibrationConfig(level, forest.K)  # fail early on alpha/K >= 1/2

    def replicate(self, rep: int) -> ReplicateResult:
        cfg = self.config
        p, is_null = generate_instance(cfg, rep)
        order = topk_order(p)
        tree_zetas = self.tree.zetas(p, cfg.alpha)
        tree = ForestBound(index=self.tree.index, zetas=tree_zetas + self.tree.extra)
        part = self.part.bound(p, cfg.alpha)
        simes = SimesBound(p, cfg.alpha)
        hybrid = HybridBound(
            SimesBound(p, (1 - cfg.gamma) * cfg.alpha) if cfg.gamma < 1 else TrivialBound(),
            self.tree.bound(p, cfg.gamma * cfg.alpha) if cfg.gamma > 0 else TrivialBound(),
        )
        envelopes = {
            "oracle": np.cumsum(is_null[order]).astype(np.int64),
            "simes": simes.topk(order),
            "part": part.topk(order),
            "tree": tree.topk(order),
            "hybrid": hybrid.topk(order),
        }
        return ReplicateResult(rep, envelopes, self.tree.violated(tree_zetas, is_null))

    def run(self, workers: int | None = None) -> SimulationResult:
        reps = map_reps(self.replicate, self.config.reps, workers)
        return SimulationResult(self.config, reps, self.part.K, self.tree.K)


def run_simulation(config: SimulationConfig, workers: int | None = None) -> SimulationResult:
    return Experiment(config).run(workers)


# --- analytic comparison ----------------------------------------------------------

_STD = NormalDist()


def normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def normal_isf(p: float) -> float:
    """Upper-tail quantile, polished with one Newton step on :func:`normal_sf`."""
    if not 0 < p < 1:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    x = -_STD.inv_cdf(p)
    return x + (normal_sf(x) - p) / _STD.pdf(x)


@dataclass(frozen=True)
class RatioCurveInput:
    m: float
    s: float
    K: float
    r: float
    alpha: float
    mu_grid: tuple[float, ...]

    def __post_init__(self):
        if not self.mu_grid:
            raise DomainError("empty mu grid")
        if not (self.m > 0 and self.s > 0 and self.K > 0):
            raise DomainError("m, s and K must be positive")
        if not 0 <= self.r <= 1:
            raise DomainError("r must lie in [0, 1]")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not 0 < self.alpha * self.s / self.m < 1:
            raise DomainError("alpha s / m must lie in (0, 1)")
        if self.K / self.alpha <= 1:
            raise DomainError("K / alpha must exceed 1")
        if not all(math.isfinite(mu) for mu in self.mu_grid):
            raise DomainError("mu grid must be finite")


def ratio_point(inp: RatioCurveInput, mu: float) -> float:
    """Upper bound on E V_DKW(R_1) / E V_Simes(R_1) at effect size ``mu``."""
    C = dkw_constant(inp.K, inp.alpha)
    root_s = math.sqrt(inp.s)
    level = inp.alpha * inp.s / inp.m
    num = min(1.0, 1 - inp.r + 2 * inp.r * normal_sf(mu) + 4 * C / root_s * (1 + C / root_s))
    den = (1 - inp.r) * (1 - level) + inp.r * normal_sf(mu - normal_isf(level))
    if not den > 0:
        raise DomainError(f"non-positive denominator at mu={mu}")
    return num / den


def ratio_curve(inp: RatioCurveInput) -> list[tuple[float, float]]:
    return [(mu, ratio_point(inp, mu)) for mu in inp.mu_grid]


def mu_grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    if not (math.isfinite(start) and math.isfinite(stop) and math.isfinite(step)) or step <= 0 or stop < start:
        raise DomainError("grid needs finite start <= stop and step > 0")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n > 10 ** 7:
        raise DomainError("grid too large")
    return tuple(round(start + i * step, 12) for i in range(n))


def figure5_input(mu_values: Sequence[float]) -> RatioCurveInput:
    m = 1e7
    s = m ** (2 / 3)
    return RatioCurveInput(m=m, s=s, K=m / s, r=0.6, alpha=0.1, mu_grid=tuple(mu_values))
