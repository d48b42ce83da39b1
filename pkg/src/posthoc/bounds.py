"""Post hoc bounds interpolated from a reference family.

All bounds take a selection ``S`` of 1-based hypothesis indices and return an
integer upper bound on the number of true nulls in ``S``:

* :func:`v_bar` -- one region at a time,
* :func:`v_tilde_q` / :func:`v_tilde` -- combinations of at most ``q`` regions
  (exhaustive, exponential in ``K``),
* :func:`v_star_forest` -- the optimal bound on forest families by a bottom-up
  pass over depth levels, linear in ``m`` per level,
* :func:`v_star_bruteforce` -- the optimal bound by enumerating every candidate
  null set; a test oracle for ``m <= 20``.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import FamilyTooLargeForEnumeration, InputError, ProblemTooLarge
from .family import (
    ForestIndex,
    ReferenceFamily,
    build_index,
    complete_family,
    region_mask,
    validate_forest,
)

ENUMERATION_CAP = 20
BRUTEFORCE_MAX_M = 20


def as_selection(S: Iterable[int], m: int) -> np.ndarray:
    """Sorted, duplicate-free 1-based index array; rejects indices outside ``1..m``."""
    arr = np.unique(np.asarray(list(S) if not isinstance(S, np.ndarray) else S, dtype=np.int64))
    if arr.size and (arr[0] < 1 or arr[-1] > m):
        raise InputError(f"selection indices must lie in 1..{m}")
    return arr


def _intersections(family: ReferenceFamily, sel: np.ndarray) -> np.ndarray:
    smask = region_mask(sel)
    return np.array([(smask & mk).bit_count() for mk in family.masks], dtype=np.int64)


def v_bar(family: ReferenceFamily, S) -> int:
    sel = as_selection(S, family.m)
    zetas = np.asarray(family.require_zetas(), dtype=np.int64)
    size = int(sel.size)
    if not family.K:
        return size
    outside = size - _intersections(family, sel)
    return int(min(size, int((zetas + outside).min())))


def _subset_sums(values: np.ndarray) -> np.ndarray:
    # out[Q] = sum of values[k] over the bits k of Q
    out = np.zeros(1, dtype=np.int64)
    for v in values:
        out = np.concatenate([out, out + v])
    return out


def _enumerate_tilde(family: ReferenceFamily, sel: np.ndarray, q: int) -> int:
    K = family.K
    zetas = np.asarray(family.require_zetas(), dtype=np.int64)
    if sel.size == 0:
        return 0
    inter = _intersections(family, sel)
    cost = _subset_sums(np.minimum(zetas, inter))

    # count selected hypotheses by the set of members containing them, then a
    # subset-sum transform gives, for every T, how many have signature inside T
    sig = np.zeros(sel.size, dtype=np.int64)
    for k, region in enumerate(family.regions):
        sig |= np.isin(sel, region).astype(np.int64) << k
    f = np.bincount(sig, minlength=1 << K).astype(np.int64)
    for k in range(K):
        view = f.reshape(-1, 2, 1 << k)
        view[:, 1, :] += view[:, 0, :]
    uncovered = f[::-1]  # complement of Q within K bits

    Q = np.arange(1 << K, dtype=np.int64)
    allowed = np.bitwise_count(Q) <= q
    return int((cost + uncovered)[allowed].min())


def v_tilde_q(family: ReferenceFamily, S, q: int) -> int:
    """Best split of ``S`` over at most ``q`` reference regions plus the uncovered rest."""
    K = family.K
    if not 1 <= q <= max(K, 1):
        raise InputError(f"q must lie in 1..{K}")
    sel = as_selection(S, family.m)
    if K > ENUMERATION_CAP:
        # on forests every q >= d already gives the optimal bound
        if validate_forest(family).is_forest and q >= build_index(family).leaf_count:
            return v_star_forest(family, sel)
        raise FamilyTooLargeForEnumeration(
            f"K={K} exceeds the enumeration cap {ENUMERATION_CAP}"
        )
    if K == 0:
        return int(sel.size)
    return _enumerate_tilde(family, sel, q)


def v_tilde(family: ReferenceFamily, S, method: str = "auto") -> int:
    """``v_tilde_q`` with ``q = K``.

    ``method="auto"`` uses the forest algorithm when the family is a forest
    (where the two coincide) and enumeration otherwise; ``"enumerate"`` and
    ``"forest"`` force one route.
    """
    if method not in ("auto", "enumerate", "forest"):
        raise ValueError(f"unknown method {method!r}")
    if method == "forest" or (method == "auto" and validate_forest(family).is_forest):
        return v_star_forest(family, S)
    if family.K == 0:
        return int(as_selection(S, family.m).size)
    return v_tilde_q(family, S, family.K)


def _prepare_index(family: ReferenceFamily, index: ForestIndex | None) -> ForestIndex:
    if index is not None and index.family.completed:
        return index
    base = index.family if index is not None else family
    return complete_family(base)[1]


def atom_counts(index: ForestIndex, S) -> np.ndarray:
    sel = as_selection(S, index.family.m)
    return np.bincount(index.atom_of[sel - 1], minlength=index.n_atoms)


def forest_dp(index: ForestIndex, counts: np.ndarray, zetas=None) -> np.ndarray | int:
    """Bottom-up level pass on a completed index.

    ``counts`` holds per-atom selection counts, shape ``(N,)`` for one
    selection or ``(N, B)`` for ``B`` selections evaluated at once.  ``zetas``
    overrides the budgets stored in ``index.family`` (same member order).
    """
    counts = np.asarray(counts, dtype=np.int64)
    if zetas is None:
        zetas = index.family.require_zetas()
    zetas = np.asarray(zetas, dtype=np.int64)
    cum = np.concatenate([np.zeros((1,) + counts.shape[1:], dtype=np.int64), np.cumsum(counts, axis=0)])
    lo = np.array([i for i, _ in index.interval_of], dtype=np.int64)
    hi = np.array([j for _, j in index.interval_of], dtype=np.int64) + 1
    member_counts = cum[hi] - cum[lo]
    zshape = (-1,) + (1,) * (counts.ndim - 1)
    local = np.minimum(zetas.reshape(zshape), member_counts)

    H = index.max_depth
    if H == 0:
        return counts.sum(axis=0)
    V = local.copy()
    for h in range(H - 1, 0, -1):
        members = np.asarray(index.level_sets[h - 1].members, dtype=np.int64)
        succ = index.successors[h - 1]
        order = np.fromiter((k2 for row in succ for k2 in row), dtype=np.int64)
        starts = np.cumsum([0] + [len(row) for row in succ[:-1]])
        sums = np.add.reduceat(V[order], starts, axis=0)
        V[members] = np.minimum(local[members], sums)
    roots = np.asarray(index.level_sets[0].members, dtype=np.int64)
    return V[roots].sum(axis=0)


def v_star_forest(family: ReferenceFamily, S, index: ForestIndex | None = None) -> int:
    """Optimal bound on a forest family.

    ``index`` may be passed to reuse a precomputed (completed) index across
    queries; otherwise the family is completed and indexed here.
    """
    index = _prepare_index(family, index)
    return int(forest_dp(index, atom_counts(index, S)))


def v_star_bruteforce(family: ReferenceFamily, S) -> int:
    """Maximum of ``|S & A|`` over all ``A`` in ``1..m`` respecting every budget."""
    m = family.m
    if m > BRUTEFORCE_MAX_M:
        raise ProblemTooLarge(f"brute force limited to m <= {BRUTEFORCE_MAX_M}, got m={m}")
    zetas = family.require_zetas()
    sel = as_selection(S, m)
    A = np.arange(1 << m, dtype=np.uint32)
    feasible = np.ones(A.size, dtype=bool)
    for mk, z in zip(family.masks, zetas):
        feasible &= np.bitwise_count(A & np.uint32(mk)) <= z
    hits = np.bitwise_count(A[feasible] & np.uint32(region_mask(sel)))
    return int(hits.max())


def true_discoveries(bound: int, S) -> int:
    size = len(S)
    if bound > size:
        raise InputError("bound exceeds the selection size")
    return size - int(bound)


class ForestBound:
    """``S -> V*(S)`` for one calibrated forest family, with a batched top-k path."""

    chunk = 2048

    def __init__(self, family: ReferenceFamily | None = None, index: ForestIndex | None = None, zetas=None):
        """Either a calibrated ``family``, or a completed ``index`` plus the
        budgets ``zetas`` for its members (lets many calibrations share one index)."""
        self.index = _prepare_index(family, index)
        if zetas is None:
            zetas = self.index.family.require_zetas()
        if len(zetas) != self.index.family.K:
            raise InputError("one budget per member of the completed family is required")
        self.zetas = np.asarray(zetas, dtype=np.int64)

    def __call__(self, S) -> int:
        return int(forest_dp(self.index, atom_counts(self.index, S), self.zetas))

    def topk(self, order: np.ndarray) -> np.ndarray:
        """``V(S_k)`` for ``S_k = order[:k]`` (0-based hypotheses), ``k = 1..len(order)``."""
        atoms = self.index.atom_of[np.asarray(order, dtype=np.int64)]
        N = self.index.n_atoms
        base = np.zeros(N, dtype=np.int64)
        out = np.empty(atoms.size, dtype=np.int64)
        for k0 in range(0, atoms.size, self.chunk):
            block = atoms[k0:k0 + self.chunk]
            onehot = np.zeros((N, block.size), dtype=np.int64)
            onehot[block, np.arange(block.size)] = 1
            counts = np.cumsum(onehot, axis=1) + base[:, None]
            out[k0:k0 + block.size] = forest_dp(self.index, counts, self.zetas)
            base = counts[:, -1]
        return out
