"""Forest of Morton-ordered quad/octrees over an axis-aligned brick macro-mesh.

The leaf array is kept sorted by (tree id, Morton key); refinement and
coarsening splice children / merged parents in place, which preserves the
z-order without re-sorting.  Neighbor queries locate the leaf containing a
lattice point one step across a face, which on a 2:1-balanced forest is
enough to classify the full face neighborhood.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from amrfv import morton
from amrfv.errors import ConfigError, ContractError

__all__ = [
    "KEEP",
    "REFINE",
    "COARSEN",
    "Connectivity",
    "Forest",
    "RefineMap",
    "CoarsenMap",
    "FaceList",
    "FaceIncidence",
    "Boundary",
    "SameOrCoarser",
    "Finer",
    "new_uniform",
]

# per-leaf adaptation tags
KEEP, REFINE, COARSEN = 0, 1, 2


@dataclass(frozen=True)
class Connectivity:
    """Brick of trees with identical coordinate frames and optional periodicity."""

    dim: int
    tree_dims: tuple[int, ...]
    periodic: tuple[bool, ...]
    tree_extent: float = 1.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if len(self.tree_dims) != self.dim or len(self.periodic) != self.dim:
            raise ConfigError("tree_dims/periodic length must match dim")
        if any(t < 1 for t in self.tree_dims):
            raise ConfigError("tree_dims must be positive")
        if self.tree_extent <= 0:
            raise ConfigError("tree_extent must be positive")

    @property
    def ntrees(self) -> int:
        n = 1
        for t in self.tree_dims:
            n *= t
        return n

    @property
    def domain_extents(self) -> tuple[float, ...]:
        return tuple(t * self.tree_extent for t in self.tree_dims)

    def tree_coords_many(self, tids: np.ndarray) -> np.ndarray:
        """Brick coordinates of tree ids (x fastest)."""
        tids = np.asarray(tids, dtype=np.int64)
        out = np.empty(tids.shape + (self.dim,), dtype=np.int64)
        rem = tids
        for a in range(self.dim):
            out[..., a] = rem % self.tree_dims[a]
            rem = rem // self.tree_dims[a]
        return out

    def tree_ids_many(self, tcoords: np.ndarray) -> np.ndarray:
        tcoords = np.asarray(tcoords, dtype=np.int64)
        out = np.zeros(tcoords.shape[:-1], dtype=np.int64)
        for a in reversed(range(self.dim)):
            out = out * self.tree_dims[a] + tcoords[..., a]
        return out


@dataclass(frozen=True)
class RefineMap:
    """Old leaf i expands to new leaves [starts[i], starts[i+1])."""

    starts: np.ndarray  # (N_old + 1,) cumulative

    @property
    def n_old(self) -> int:
        return len(self.starts) - 1

    @property
    def n_new(self) -> int:
        return int(self.starts[-1])

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.starts)

    def project(self, u: np.ndarray) -> np.ndarray:
        """Children copy the parent value; unchanged leaves copy through."""
        return np.repeat(u, self.counts, axis=0)

    def compose(self, later: "RefineMap") -> "RefineMap":
        """Map through a subsequent refinement of the output array."""
        return RefineMap(later.starts[self.starts])

    @staticmethod
    def identity(n: int) -> "RefineMap":
        return RefineMap(np.arange(n + 1, dtype=np.int64))


@dataclass(frozen=True)
class CoarsenMap:
    """New leaf j gathers old leaves [starts[j], starts[j+1])."""

    starts: np.ndarray  # (N_new + 1,) cumulative

    @property
    def n_new(self) -> int:
        return len(self.starts) - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.starts)

    def project(self, u: np.ndarray) -> np.ndarray:
        """Merged parents take the mean of their (equal-volume) children."""
        counts = self.counts
        out = np.add.reduceat(np.asarray(u, dtype=np.float64), self.starts[:-1], axis=0)
        shape = (len(counts),) + (1,) * (out.ndim - 1)
        return out / counts.reshape(shape)


@dataclass(frozen=True)
class FaceList:
    """All unique faces of one sweep axis.

    Interior faces join ``lo`` (lower coordinate side) to ``hi``; hanging
    faces appear once per fine sub-face.  Domain-boundary faces carry the
    owning cell and which side of it the boundary sits on.
    """

    axis: int
    lo: np.ndarray
    hi: np.ndarray
    area: np.ndarray
    dist: np.ndarray  # center-to-center distance along axis
    bc_cell: np.ndarray
    bc_side: np.ndarray  # 0 = low face of the cell, 1 = high face
    bc_area: np.ndarray


@dataclass(frozen=True)
class FaceIncidence:
    """Face slots of one axis grouped by incident cell, for segment reductions.

    ``order`` permutes the concatenated (lo, hi) face-slot array so equal
    cells are contiguous; group g covers order[seg_starts[g]:seg_starts[g+1]]
    and belongs to ``cells[g]``.
    """

    order: np.ndarray
    cells: np.ndarray
    seg_starts: np.ndarray


@dataclass(frozen=True)
class Boundary:
    axis: int
    side: int


@dataclass(frozen=True)
class SameOrCoarser:
    index: int
    level: int
    area: float
    dist: float


@dataclass(frozen=True)
class Finer:
    indices: tuple[int, ...]
    level: int
    area: float  # per sub-face
    dist: float


class Forest:
    """Immutable macro-mesh plus z-order-sorted leaf arrays."""

    def __init__(self, conn, b, min_level, tree, level, coords, validate=True):
        self.conn = conn
        self.b = int(b)
        self.min_level = int(min_level)
        self.tree = np.asarray(tree, dtype=np.int64)
        self.level = np.asarray(level, dtype=np.int64)
        self.coords = np.asarray(coords, dtype=np.int64)
        self.keys = morton.encode_many(self.coords)
        self._face_lists: dict[int, FaceList] = {}
        self._face_incidence: dict[int, FaceIncidence] = {}
        self._aux_cache: dict = {}  # consumer-owned (e.g. per-partition face splits)
        self._balanced: bool | None = None

        if not 0 <= self.b <= morton.MAX_B[conn.dim]:
            raise ConfigError(f"b={b} outside [0, {morton.MAX_B[conn.dim]}]")
        if not 0 <= self.min_level <= self.b:
            raise ConfigError("min_level must lie in [0, b]")
        # z-order invariant is load-bearing for every query; always verify
        order = (self.tree[:-1] < self.tree[1:]) | (
            (self.tree[:-1] == self.tree[1:]) & (self.keys[:-1] < self.keys[1:])
        )
        if not np.all(order):
            raise ContractError("leaf array is not strictly (tree, z-order) sorted")
        if validate:
            self._validate()

    def _validate(self):
        if np.any((self.level < 0) | (self.level > self.b)):
            raise ConfigError("leaf level outside [0, b]")
        size = self.sizes
        if np.any(self.coords % size[:, None] != 0):
            raise ConfigError("leaf coords not anchored to their level lattice")
        if np.any((self.coords < 0) | (self.coords + size[:, None] > (1 << self.b))):
            raise ConfigError("leaf coords outside the reference cube")
        if np.any((self.tree < 0) | (self.tree >= self.conn.ntrees)):
            raise ConfigError("tree id out of range")

    # -- basic queries -------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.conn.dim

    @property
    def nleaves(self) -> int:
        return len(self.level)

    @cached_property
    def sizes(self) -> np.ndarray:
        """Leaf edge length on the level-b lattice."""
        return np.int64(1) << (self.b - self.level)

    @cached_property
    def _tree_starts(self) -> np.ndarray:
        return np.searchsorted(self.tree, np.arange(self.conn.ntrees + 1))

    @cached_property
    def dx(self) -> np.ndarray:
        return self.conn.tree_extent * (self.sizes / float(1 << self.b))

    @cached_property
    def volumes(self) -> np.ndarray:
        return self.dx**self.dim

    @cached_property
    def centers(self) -> np.ndarray:
        origin = self.conn.tree_coords_many(self.tree) * self.conn.tree_extent
        scale = self.conn.tree_extent / float(1 << self.b)
        return origin + (self.coords + 0.5 * self.sizes[:, None]) * scale

    def octant(self, i: int) -> morton.Octant:
        return morton.Octant(int(self.tree[i]), int(self.level[i]), tuple(int(c) for c in self.coords[i]))

    def cell_geometry(self, i: int) -> tuple[np.ndarray, float, float]:
        """(center, dx, volume) of leaf i in physical units."""
        return self.centers[i].copy(), float(self.dx[i]), float(self.volumes[i])

    def dump_leaves(self) -> str:
        """One text line per leaf: ``tree level x y [z] key``."""
        lines = []
        for t, lvl, c, k in zip(self.tree, self.level, self.coords, self.keys):
            lines.append(" ".join(str(int(v)) for v in (t, lvl, *c, k)))
        return "\n".join(lines) + "\n"

    # -- point location ------------------------------------------------------

    def locate(self, tree_ids: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Index of the leaf containing each lattice point of its tree."""
        keys = morton.encode_many(points)
        tree_ids = np.asarray(tree_ids, dtype=np.int64)
        out = np.empty(keys.shape, dtype=np.int64)
        for t in np.unique(tree_ids):
            sel = tree_ids == t
            i0, i1 = self._tree_starts[t], self._tree_starts[t + 1]
            out[sel] = i0 + np.searchsorted(self.keys[i0:i1], keys[sel], side="right") - 1
        return out

    def _adjacent_points(self, axis: int, side: int):
        """One lattice point just across each leaf's (axis, side) face.

        Returns (tree_ids, points, interior) where ``interior`` is False on
        non-periodic domain faces; entries there are left unusable.
        """
        n = np.int64(1) << self.b
        pts = self.coords.copy()
        if side == 1:
            pts[:, axis] += self.sizes
        else:
            pts[:, axis] -= 1
        ntree = self.tree.copy()
        inside = (pts[:, axis] >= 0) & (pts[:, axis] < n)
        cross = np.flatnonzero(~inside)
        interior = np.ones(self.nleaves, dtype=bool)
        if len(cross):
            step = 1 if side == 1 else -1
            tc = self.conn.tree_coords_many(self.tree[cross])
            tc[:, axis] += step
            dims_ax = self.conn.tree_dims[axis]
            if self.conn.periodic[axis]:
                tc[:, axis] %= dims_ax
                ok = np.ones(len(cross), dtype=bool)
            else:
                ok = (tc[:, axis] >= 0) & (tc[:, axis] < dims_ax)
            tc[:, axis] = np.clip(tc[:, axis], 0, dims_ax - 1)
            ntree[cross] = self.conn.tree_ids_many(tc)
            pts[cross, axis] -= step * n
            interior[cross] = ok
            # keep unusable rows in-lattice so encode_many stays happy
            bad = cross[~ok]
            pts[bad, axis] = 0
        return ntree, pts, interior

    # -- adaptation ----------------------------------------------------------

    def refine(self, marks: np.ndarray) -> tuple["Forest", RefineMap]:
        """Replace each Refine-marked leaf below level b by its 2^d children."""
        marks = np.asarray(marks)
        if len(marks) != self.nleaves:
            raise ContractError("marks not aligned with leaves")
        return self._apply_refine((marks == REFINE) & (self.level < self.b))

    def _apply_refine(self, do: np.ndarray) -> tuple["Forest", RefineMap]:
        m = 1 << self.dim
        counts = np.where(do, m, 1).astype(np.int64)
        starts = np.zeros(self.nleaves + 1, dtype=np.int64)
        np.cumsum(counts, out=starts[1:])
        src = np.repeat(np.arange(self.nleaves), counts)
        pos = np.arange(starts[-1], dtype=np.int64) - starts[src]
        new_level = self.level[src] + do[src]
        h = np.where(do[src], np.int64(1) << (self.b - new_level), 0)
        offs = ((pos[:, None] >> np.arange(self.dim)[None, :]) & 1) * h[:, None]
        f = Forest(
            self.conn,
            self.b,
            self.min_level,
            self.tree[src],
            new_level,
            self.coords[src] + offs,
            validate=False,
        )
        return f, RefineMap(starts)

    def coarsen(self, marks: np.ndarray) -> tuple["Forest", CoarsenMap]:
        """Merge complete sibling groups where all children are marked Coarsen."""
        marks = np.asarray(marks)
        if len(marks) != self.nleaves:
            raise ContractError("marks not aligned with leaves")
        m = 1 << self.dim
        n = self.nleaves
        elig = (marks == COARSEN) & (self.level > self.min_level)
        lowbit = (self.coords >> (self.b - self.level)[:, None]) & 1
        cid = (lowbit << np.arange(self.dim)[None, :]).sum(axis=1)
        pkey = self.keys & ~np.left_shift(np.int64(m - 1), self.dim * (self.b - self.level))
        cand = np.flatnonzero(elig & (cid == 0) & (np.arange(n) + m <= n))
        good = np.ones(len(cand), dtype=bool)
        for j in range(1, m):
            idx = cand + j
            good &= (
                elig[idx]
                & (self.tree[idx] == self.tree[cand])
                & (self.level[idx] == self.level[cand])
                & (pkey[idx] == pkey[cand])
            )
        sel = cand[good]
        in_group = np.zeros(n, dtype=bool)
        for j in range(m):
            in_group[sel + j] = True
        is_start = np.zeros(n, dtype=bool)
        is_start[sel] = True
        keep = ~in_group | is_start
        # child 0 shares the parent anchor, so coords pass through unchanged
        f = Forest(
            self.conn,
            self.b,
            self.min_level,
            self.tree[keep],
            self.level[keep] - is_start[keep],
            self.coords[keep],
            validate=False,
        )
        counts_new = np.where(is_start[keep], m, 1).astype(np.int64)
        ostarts = np.zeros(f.nleaves + 1, dtype=np.int64)
        np.cumsum(counts_new, out=ostarts[1:])
        return f, CoarsenMap(ostarts)

    # -- 2:1 balancing -------------------------------------------------------

    def _balance_violations(self) -> np.ndarray | None:
        """Refine mask for leaves with a face neighbor 2+ levels finer."""
        marks = np.zeros(self.nleaves, dtype=bool)
        for axis in range(self.dim):
            for side in (0, 1):
                ntree, pts, interior = self._adjacent_points(axis, side)
                ii = np.flatnonzero(interior)
                if not len(ii):
                    continue
                nb = self.locate(ntree[ii], pts[ii])
                viol = self.level[nb] <= self.level[ii] - 2
                marks[nb[viol]] = True
        return marks if marks.any() else None

    def balance(self) -> tuple["Forest", RefineMap]:
        """Minimal refinement enforcing the face 2:1 constraint; idempotent."""
        f = self
        total = RefineMap.identity(self.nleaves)
        while True:
            viol = f._balance_violations()
            if viol is None:
                break
            f, rmap = f._apply_refine(viol)
            total = total.compose(rmap)
        f._balanced = True
        return f, total

    @property
    def balanced(self) -> bool:
        if self._balanced is None:
            self._balanced = self._balance_violations() is None
        return self._balanced

    # -- neighbor queries ----------------------------------------------------

    def _transverse_offsets(self, axis: int, h: int) -> np.ndarray:
        """Sub-face anchor offsets {0, h} on the axes transverse to ``axis``."""
        taxes = [a for a in range(self.dim) if a != axis]
        k = len(taxes)
        offs = np.zeros((1 << k, self.dim), dtype=np.int64)
        for j in range(1 << k):
            for p, a in enumerate(taxes):
                offs[j, a] = ((j >> p) & 1) * h
        return offs

    def leaf_neighbors(self, i: int, axis: int, side: int):
        """Face neighborhood of leaf i: Boundary, SameOrCoarser, or Finer."""
        if not self.balanced:
            raise ContractError("leaf_neighbors requires a 2:1-balanced forest")
        ntree, pts, interior = self._adjacent_points(axis, side)
        if not interior[i]:
            return Boundary(axis, side)
        j = int(self.locate(ntree[i : i + 1], pts[i : i + 1])[0])
        li, lj = int(self.level[i]), int(self.level[j])
        dxi = float(self.dx[i])
        if lj == li or lj == li - 1:
            dist = 0.5 * (dxi + float(self.dx[j]))
            return SameOrCoarser(j, lj, dxi ** (self.dim - 1), dist)
        if lj == li + 1:
            h = int(self.sizes[i]) // 2
            offs = self._transverse_offsets(axis, h)
            sub_pts = pts[i][None, :] + offs
            sub_tree = np.full(len(offs), ntree[i])
            idx = self.locate(sub_tree, sub_pts)
            if np.any(self.level[idx] != li + 1):
                raise ContractError("unbalanced neighborhood in leaf_neighbors")
            area = (0.5 * dxi) ** (self.dim - 1)
            return Finer(tuple(int(v) for v in idx), li + 1, area, 0.75 * dxi)
        raise ContractError(
            f"leaf {i} and neighbor {j} differ by more than one level"
        )

    # -- face lists for sweeps -----------------------------------------------

    def face_list(self, axis: int) -> FaceList:
        """All unique faces along ``axis`` (cached)."""
        if axis not in self._face_lists:
            self._face_lists[axis] = self._build_face_list(axis)
        return self._face_lists[axis]

    def face_incidence(self, axis: int) -> FaceIncidence:
        """Cell-grouped view of the axis face slots (cached)."""
        if axis not in self._face_incidence:
            fl = self.face_list(axis)
            slots = np.concatenate([fl.lo, fl.hi])
            order = np.argsort(slots, kind="stable")
            cells_sorted = slots[order]
            if len(cells_sorted):
                changes = np.flatnonzero(np.diff(cells_sorted)) + 1
                seg_starts = np.concatenate([[0], changes])
                cells = cells_sorted[seg_starts]
            else:
                seg_starts = np.empty(0, dtype=np.int64)
                cells = np.empty(0, dtype=np.int64)
            self._face_incidence[axis] = FaceIncidence(order, cells, seg_starts)
        return self._face_incidence[axis]

    def _build_face_list(self, axis: int) -> FaceList:
        dim = self.dim
        ntree, pts, interior = self._adjacent_points(axis, 1)
        ii = np.flatnonzero(interior)
        nb = self.locate(ntree[ii], pts[ii])
        dlvl = self.level[nb] - self.level[ii]
        if np.any(np.abs(dlvl) > 1):
            raise ContractError("face list requires a 2:1-balanced forest")

        flat = dlvl <= 0  # same-size or coarser neighbor: one full face
        lo = [ii[flat]]
        hi = [nb[flat]]
        area = [self.dx[ii[flat]] ** (dim - 1)]

        fin = np.flatnonzero(dlvl == 1)
        if len(fin):
            src = ii[fin]
            h = self.sizes[src] // 2
            offs = self._transverse_offsets(axis, 1)  # unit pattern, scaled below
            k = len(offs)
            sub_pts = pts[src][:, None, :] + offs[None, :, :] * h[:, None, None]
            sub_tree = np.repeat(ntree[src], k)
            idx = self.locate(sub_tree, sub_pts.reshape(-1, dim))
            if np.any(self.level[idx] != np.repeat(self.level[src] + 1, k)):
                raise ContractError("face list requires a 2:1-balanced forest")
            lo.append(np.repeat(src, k))
            hi.append(idx)
            area.append((0.5 * self.dx[src].repeat(k)) ** (dim - 1))

        lo = np.concatenate(lo)
        hi = np.concatenate(hi)
        area = np.concatenate(area)
        dist = 0.5 * (self.dx[lo] + self.dx[hi])

        # non-periodic domain faces on both sides
        bc_cell, bc_side = [], []
        for side in (0, 1):
            _, _, inter = self._adjacent_points(axis, side)
            cells = np.flatnonzero(~inter)
            bc_cell.append(cells)
            bc_side.append(np.full(len(cells), side, dtype=np.int64))
        bc_cell = np.concatenate(bc_cell)
        bc_side = np.concatenate(bc_side)
        bc_area = self.dx[bc_cell] ** (dim - 1)
        return FaceList(axis, lo, hi, area, dist, bc_cell, bc_side, bc_area)


def new_uniform(conn: Connectivity, level: int, b: int, min_level: int = 0) -> Forest:
    """Forest with every tree uniformly refined to ``level``."""
    if not 0 <= min_level <= level <= b:
        raise ConfigError(
            f"need 0 <= min_level({min_level}) <= level({level}) <= b({b})"
        )
    dim = conn.dim
    per_tree = 1 << (dim * level)
    keys = np.arange(per_tree, dtype=np.int64) << (dim * (b - level))
    coords = morton.decode_many(keys, dim)
    tree = np.repeat(np.arange(conn.ntrees, dtype=np.int64), per_tree)
    return Forest(
        conn,
        b,
        min_level,
        tree,
        np.full(conn.ntrees * per_tree, level, dtype=np.int64),
        np.tile(coords, (conn.ntrees, 1)),
    )
