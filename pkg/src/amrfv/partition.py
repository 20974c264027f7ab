"""Contiguous z-order partitioning into simulated ranks, ghosts and metrics.

Ranks are index ranges over the global leaf array.  "Communication" is the
construction of read-only ghost snapshots between sweep phases; within a
sweep each rank reads its owned cells plus ghosts and writes owned cells
only, so results are independent of the rank count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from amrfv.errors import ConfigError
from amrfv.forest import Forest

__all__ = ["PartitionMap", "GhostLayer", "partition", "ghost_layer", "balance_metrics", "RankMetrics", "metrics_csv"]


@dataclass(frozen=True)
class PartitionMap:
    """P+1 ascending offsets; rank r owns leaves [offsets[r], offsets[r+1])."""

    offsets: tuple[int, ...]

    @property
    def P(self) -> int:
        return len(self.offsets) - 1

    def range(self, rank: int) -> tuple[int, int]:
        return self.offsets[rank], self.offsets[rank + 1]

    def owner_of(self, leaves: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.offsets), leaves, side="right") - 1


@dataclass(frozen=True)
class GhostLayer:
    """Sorted indices of non-owned leaves face-adjacent to a rank's cells."""

    rank: int
    indices: np.ndarray


def partition(f: Forest, P: int) -> PartitionMap:
    """Equal split of the leaf array; range sizes differ by at most one."""
    n = f.nleaves
    if P < 1:
        raise ConfigError(f"rank count must be >= 1, got {P}")
    if P > n:
        raise ConfigError(f"cannot split {n} leaves over {P} ranks")
    base, extra = divmod(n, P)
    sizes = [base + 1 if r < extra else base for r in range(P)]
    offsets = [0]
    for s in sizes:
        offsets.append(offsets[-1] + s)
    return PartitionMap(tuple(offsets))


def _adjacency(f: Forest) -> tuple[np.ndarray, np.ndarray]:
    """All face-adjacent leaf pairs (lo, hi), one entry per face."""
    los, his = [], []
    for axis in range(f.dim):
        fl = f.face_list(axis)
        los.append(fl.lo)
        his.append(fl.hi)
    return np.concatenate(los), np.concatenate(his)


def ghost_layer(f: Forest, pm: PartitionMap, rank: int) -> GhostLayer:
    """Leaves outside the rank's range that neighbor an owned leaf."""
    lo_idx, hi_idx = pm.range(rank)
    a, b = _adjacency(f)
    own_a = (a >= lo_idx) & (a < hi_idx)
    own_b = (b >= lo_idx) & (b < hi_idx)
    ghosts = np.concatenate([b[own_a & ~own_b], a[own_b & ~own_a]])
    return GhostLayer(rank, np.unique(ghosts))


@dataclass(frozen=True)
class RankMetrics:
    rank: int
    leaves: int
    frontier: int
    ratio: float
    components: int


def _component_count(f: Forest, lo_idx: int, hi_idx: int, a: np.ndarray, b: np.ndarray) -> int:
    """Connected components of the rank's region under face adjacency."""
    n = hi_idx - lo_idx
    if n <= 0:
        return 0
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    both = (a >= lo_idx) & (a < hi_idx) & (b >= lo_idx) & (b < hi_idx)
    for x, y in zip((a[both] - lo_idx).tolist(), (b[both] - lo_idx).tolist()):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry
    return len({find(x) for x in range(n)})


def balance_metrics(f: Forest, pm: PartitionMap) -> list[RankMetrics]:
    """Per-rank load, frontier-cell count and ratio, component count."""
    a, b = _adjacency(f)
    owner_a = pm.owner_of(a)
    owner_b = pm.owner_of(b)
    out = []
    for r in range(pm.P):
        lo_idx, hi_idx = pm.range(r)
        n = hi_idx - lo_idx
        frontier_cells = np.concatenate(
            [a[(owner_a == r) & (owner_b != r)], b[(owner_b == r) & (owner_a != r)]]
        )
        frontier = len(np.unique(frontier_cells))
        comps = _component_count(f, lo_idx, hi_idx, a, b)
        out.append(RankMetrics(r, n, frontier, frontier / n if n else 0.0, comps))
    return out


def metrics_csv(metrics: list[RankMetrics]) -> str:
    lines = ["rank,leaves,frontier,ratio,components"]
    for m in metrics:
        lines.append(f"{m.rank},{m.leaves},{m.frontier},{m.ratio!r},{m.components}")
    return "\n".join(lines) + "\n"
