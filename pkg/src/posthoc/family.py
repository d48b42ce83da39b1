"""Reference families and their forest index.

A reference family is a list of regions ``R_k`` (sets of 1-based hypothesis
indices) each carrying an integer budget ``zeta_k``: the claim that ``R_k``
holds at most ``zeta_k`` true nulls.  Families whose regions are pairwise
disjoint or nested are *forests*; for those we compute a partition into
consecutive atoms so that every region becomes an interval of atoms, which is
what the fast optimal bound in :mod:`posthoc.bounds` runs on.

Conventions: hypotheses are 1-based at the API boundary (as in the JSON file
format), member positions and atom positions are 0-based Python indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import FamilyError, HNotInRange, InputError, NotAForest, PosthocError


def region_mask(indices: Iterable[int]) -> int:
    """Bitset of a region: bit ``i - 1`` set for hypothesis ``i``."""
    idx = np.fromiter(indices, dtype=np.int64)
    if idx.size == 0:
        return 0
    bits = np.zeros(int(idx.max()), dtype=np.uint8)
    bits[idx - 1] = 1
    return int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")


def _normalize_region(indices, m: int) -> tuple[int, ...]:
    out = []
    for i in indices:
        if isinstance(i, bool) or not isinstance(i, (int, np.integer)):
            raise FamilyError(f"hypothesis index {i!r} is not an integer")
        i = int(i)
        if not 1 <= i <= m:
            raise FamilyError(f"hypothesis index {i} outside 1..{m}")
        out.append(i)
    region = tuple(sorted(set(out)))
    if len(region) != len(out):
        raise FamilyError("region contains duplicate indices")
    if not region:
        raise FamilyError("regions must be non-empty")
    return region


@dataclass(frozen=True)
class ReferenceFamily:
    """Immutable list of ``(region, zeta)`` members over hypotheses ``1..m``.

    ``zeta`` may be ``None`` for uncalibrated regions.  Budgets larger than the
    region are clamped to its size; negative budgets and repeated regions are
    rejected.
    """

    m: int
    regions: tuple[tuple[int, ...], ...]
    zetas: tuple[int | None, ...]
    completed: bool = False
    masks: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.m, bool) or not isinstance(self.m, (int, np.integer)) or self.m < 1:
            raise FamilyError(f"m must be a positive integer, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        if len(self.regions) != len(self.zetas):
            raise FamilyError("regions and zetas differ in length")
        regions = tuple(_normalize_region(r, self.m) for r in self.regions)
        if len(set(regions)) != len(regions):
            raise FamilyError("reference regions must be pairwise distinct")
        zetas = []
        for region, z in zip(regions, self.zetas):
            if z is None:
                zetas.append(None)
                continue
            if isinstance(z, bool) or not isinstance(z, (int, np.integer)):
                raise FamilyError(f"zeta {z!r} is not an integer")
            if z < 0:
                raise FamilyError(f"zeta must be >= 0, got {z}")
            zetas.append(min(int(z), len(region)))
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "zetas", tuple(zetas))
        object.__setattr__(self, "masks", tuple(region_mask(r) for r in regions))

    @classmethod
    def from_members(cls, m: int, members: Iterable[tuple[Iterable[int], int | None]]):
        members = list(members)
        return cls(m, tuple(tuple(r) for r, _ in members), tuple(z for _, z in members))

    @property
    def K(self) -> int:
        return len(self.regions)

    def __len__(self) -> int:
        return len(self.regions)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.regions)

    @property
    def has_zetas(self) -> bool:
        return all(z is not None for z in self.zetas)

    def require_zetas(self) -> tuple[int, ...]:
        from .errors import MissingZeta

        missing = [k for k, z in enumerate(self.zetas) if z is None]
        if missing:
            raise MissingZeta(f"members {[k + 1 for k in missing]} have no zeta")
        return self.zetas  # type: ignore[return-value]

    def with_zetas(self, zetas: Sequence[int | None]) -> "ReferenceFamily":
        return ReferenceFamily(self.m, self.regions, tuple(zetas), self.completed)


@dataclass(frozen=True)
class ForestReport:
    is_forest: bool
    witness: tuple[int, int] | None = None


def validate_forest(family: ReferenceFamily) -> ForestReport:
    """Check that every pair of regions is disjoint or nested.

    The first offending pair in lexicographic ``(k, k')`` order is returned as
    the witness (0-based member positions).
    """
    masks = family.masks
    for a in range(len(masks)):
        ma = masks[a]
        for b in range(a + 1, len(masks)):
            inter = ma & masks[b]
            if inter and inter != ma and inter != masks[b]:
                return ForestReport(False, (a, b))
    return ForestReport(True, None)


def _require_forest(family: ReferenceFamily) -> None:
    report = validate_forest(family)
    if not report.is_forest:
        raise NotAForest(report.witness)


def _depths(masks: Sequence[int]) -> list[int]:
    # 1 + number of strict supersets
    out = []
    for mk in masks:
        n = 0
        for other in masks:
            if other != mk and other & mk == mk:
                n += 1
        out.append(1 + n)
    return out


def _atoms_from_masks(m: int, masks: Sequence[int], depth: Sequence[int]) -> list[int]:
    # level sweep: split each current block by the depth-h members inside it,
    # members first in family order, leftover piece last
    full = (1 << m) - 1
    atoms = [full]
    H = max(depth, default=0)
    for h in range(1, H + 1):
        at_h = [k for k, d in enumerate(depth) if d == h]
        new = []
        for block in atoms:
            covered = 0
            for k in at_h:
                mk = masks[k]
                if mk & block == mk:
                    new.append(mk)
                    covered |= mk
            rest = block & ~covered
            if rest:
                new.append(rest)
        atoms = new
    return atoms


def _mask_to_region(mask: int) -> tuple[int, ...]:
    nbytes = max(1, (mask.bit_length() + 7) // 8)
    bits = np.unpackbits(np.frombuffer(mask.to_bytes(nbytes, "little"), dtype=np.uint8), bitorder="little")
    return tuple(int(i) + 1 for i in np.flatnonzero(bits))


def compute_atoms(family: ReferenceFamily) -> list[tuple[int, ...]]:
    """Partition ``1..m`` into atoms such that each region is a run of consecutive atoms."""
    _require_forest(family)
    atoms = _atoms_from_masks(family.m, family.masks, _depths(family.masks))
    return [_mask_to_region(a) for a in atoms]


@dataclass(frozen=True, eq=False)
class ForestIndex:
    """Atom/interval representation of a forest family.

    ``interval_of[k] = (i, j)`` means region ``k`` is the union of atoms
    ``i..j`` (inclusive, 0-based).  ``atom_of`` maps each 0-based hypothesis to
    its atom.
    """

    family: ReferenceFamily
    atoms: tuple[tuple[int, ...], ...]
    atom_of: np.ndarray
    interval_of: tuple[tuple[int, int], ...]
    depth_of: tuple[int, ...]
    children_of: tuple[tuple[int, ...], ...]
    roots: tuple[int, ...]
    leaf_count: int

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def max_depth(self) -> int:
        return max(self.depth_of, default=0)

    @property
    def atom_sizes(self) -> np.ndarray:
        return np.array([len(a) for a in self.atoms], dtype=np.int64)

    def is_atom(self, k: int) -> bool:
        i, j = self.interval_of[k]
        return i == j

    @cached_property
    def level_sets(self) -> tuple["LevelSet", ...]:
        return tuple(level_set(self, h) for h in range(1, self.max_depth + 1))

    @cached_property
    def successors(self) -> tuple[tuple[tuple[int, ...], ...], ...]:
        """``successors[h-1][n]``: members of level ``h+1`` inside the ``n``-th member of level ``h``."""
        out = []
        for h in range(1, self.max_depth):
            nxt = self.level_sets[h].members
            row = []
            for k in self.level_sets[h - 1].members:
                i, j = self.interval_of[k]
                row.append(tuple(
                    k2 for k2 in nxt
                    if i <= self.interval_of[k2][0] and self.interval_of[k2][1] <= j
                ))
            out.append(tuple(row))
        return tuple(out)


def build_index(family: ReferenceFamily, atoms: Sequence[tuple[int, ...]] | None = None) -> ForestIndex:
    _require_forest(family)
    masks = family.masks
    depth = _depths(masks)
    if atoms is None:
        atom_masks = _atoms_from_masks(family.m, masks, depth)
        atoms = [_mask_to_region(a) for a in atom_masks]
    atoms = tuple(tuple(a) for a in atoms)

    atom_of = np.empty(family.m, dtype=np.int64)
    for n, atom in enumerate(atoms):
        atom_of[np.asarray(atom, dtype=np.int64) - 1] = n

    sizes = [len(a) for a in atoms]
    interval_of = []
    for k, region in enumerate(family.regions):
        ids = np.unique(atom_of[np.asarray(region) - 1])
        i, j = int(ids[0]), int(ids[-1])
        if len(ids) != j - i + 1 or sum(sizes[i:j + 1]) != len(region):
            raise PosthocError(f"region {k} is not a run of consecutive atoms")
        interval_of.append((i, j))

    # parent = deepest strict superset; supersets of a forest member form a chain
    children: list[list[int]] = [[] for _ in masks]
    roots = []
    for k, mk in enumerate(masks):
        parent, best = None, 0
        for k2, m2 in enumerate(masks):
            if k2 != k and m2 & mk == mk and depth[k2] > best:
                parent, best = k2, depth[k2]
        if parent is None:
            roots.append(k)
        else:
            children[parent].append(k)

    leaf_count = sum(1 for c in children if not c)
    return ForestIndex(
        family=family,
        atoms=atoms,
        atom_of=atom_of,
        interval_of=tuple(interval_of),
        depth_of=tuple(depth),
        children_of=tuple(tuple(c) for c in children),
        roots=tuple(roots),
        leaf_count=leaf_count,
    )


def complete_family(family: ReferenceFamily) -> tuple[ReferenceFamily, ForestIndex]:
    """Add every atom that is not already a member, with the trivial budget ``|P|``.

    Returns the completed family (tagged ``completed=True``) and its index.
    Atom order is preserved, so intervals of original members are unchanged.
    """
    if family.completed:
        return family, build_index(family)
    _require_forest(family)
    atoms = compute_atoms(family)
    present = set(family.regions)
    extra = [a for a in atoms if a not in present]
    regions = family.regions + tuple(extra)
    zetas = family.zetas + tuple(len(a) for a in extra)
    completed = ReferenceFamily(family.m, regions, zetas, completed=True)
    return completed, build_index(completed, atoms)


@dataclass(frozen=True)
class LevelSet:
    h: int
    members: tuple[int, ...]


def level_set(index: ForestIndex, h: int) -> LevelSet:
    """Members of depth ``h`` plus the atoms of smaller depth."""
    if not index.family.completed:
        raise PosthocError("level sets are defined on a completed family")
    if not 1 <= h <= index.max_depth:
        raise HNotInRange(f"h={h} outside 1..{index.max_depth}")
    members = tuple(
        k
        for k, d in enumerate(index.depth_of)
        if d == h or (index.is_atom(k) and d <= h)
    )
    return LevelSet(h, members)


# --- JSON ---------------------------------------------------------------------


MAX_JSON_M = 10 ** 7


def family_from_json(obj) -> ReferenceFamily:
    if not isinstance(obj, dict):
        raise FamilyError("family JSON must be an object")
    if "m" not in obj or "members" not in obj:
        raise FamilyError("family JSON needs 'm' and 'members'")
    m = obj["m"]
    if isinstance(m, int) and not isinstance(m, bool) and m > MAX_JSON_M:
        raise FamilyError(f"m={m} exceeds the supported maximum {MAX_JSON_M}")
    members = obj["members"]
    if not isinstance(members, list):
        raise FamilyError("'members' must be a list")
    regions, zetas = [], []
    for mem in members:
        if not isinstance(mem, dict) or "indices" not in mem:
            raise FamilyError("each member needs an 'indices' list")
        idx = mem["indices"]
        if not isinstance(idx, list):
            raise FamilyError("'indices' must be a list")
        regions.append(tuple(idx))
        zetas.append(mem.get("zeta"))
    return ReferenceFamily(m, tuple(regions), tuple(zetas))


def family_to_json(family: ReferenceFamily) -> dict:
    return {
        "m": family.m,
        "members": [
            {"indices": list(r), "zeta": z} for r, z in zip(family.regions, family.zetas)
        ],
    }


def load_family(path) -> ReferenceFamily:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, RecursionError) as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc
    return family_from_json(obj)


def dump_family(family: ReferenceFamily) -> str:
    return json.dumps(family_to_json(family), separators=(", ", ": "))
