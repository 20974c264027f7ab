"""Morton (z-order) keys and octant arithmetic for linear quad/octrees.

An octant is anchored at its lower corner on the integer lattice
``[0, 2**b)**d`` of the reference cube, where ``b`` is the maximum
refinement level.  Anchors of level-``l`` octants are multiples of
``2**(b - l)`` on every axis.  Keys interleave coordinate bits with
x in the lowest position (bit ``d*i`` of the key is bit ``i`` of x),
so sorting by key traverses leaves along the z-order curve.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "MAX_B",
    "DomainError",
    "Octant",
    "OutsideTree",
    "MortonKey",
    "encode",
    "decode",
    "encode_many",
    "decode_many",
    "octant_key",
    "parent",
    "children",
    "face_neighbor",
]

# 64-bit keys: d*b must stay below 63 bits so keys fit a signed int64.
MAX_B = {2: 31, 3: 21}


class DomainError(ValueError):
    """Coordinate or key outside the lattice addressable with the given b."""


@dataclass(frozen=True)
class Octant:
    """One tree cell: owning tree, refinement level, lower-corner coords."""

    tree: int
    level: int
    coords: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class OutsideTree:
    """Face-neighbor result beyond the tree boundary; carries the exit face."""

    axis: int
    side: int  # 0 = low face, 1 = high face


class MortonKey(NamedTuple):
    """(key, level) pair; tuple order puts ancestors before descendants."""

    key: int
    level: int


def _check_dim_b(dim: int, b: int) -> None:
    if dim not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {dim}")
    if not 0 <= b <= MAX_B[dim]:
        raise DomainError(f"max level b={b} outside [0, {MAX_B[dim]}] for {dim}D")


def encode(coords: Sequence[int], b: int) -> int:
    """Interleave coordinate bits into a Morton key (x bits lowest)."""
    dim = len(coords)
    _check_dim_b(dim, b)
    key = 0
    for axis, c in enumerate(coords):
        c = int(c)
        if not 0 <= c < (1 << b):
            raise DomainError(f"coordinate {c} outside [0, 2^{b}) on axis {axis}")
        for i in range(b):
            key |= ((c >> i) & 1) << (dim * i + axis)
    return key


def decode(key: int, dim: int, b: int) -> tuple[int, ...]:
    """Inverse of :func:`encode`."""
    _check_dim_b(dim, b)
    key = int(key)
    if not 0 <= key < (1 << (dim * b)):
        raise DomainError(f"key {key} exceeds {dim}*{b} bits")
    coords = [0] * dim
    for i in range(b):
        for axis in range(dim):
            coords[axis] |= ((key >> (dim * i + axis)) & 1) << i
    return tuple(coords)


def octant_key(o: Octant, b: int) -> MortonKey:
    return MortonKey(encode(o.coords, b), o.level)


def parent(o: Octant, b: int) -> Octant:
    """Parent octant; clears bit (b - level) of each coordinate."""
    if o.level < 1:
        raise DomainError("root octant has no parent")
    mask = ~(1 << (b - o.level))
    return Octant(o.tree, o.level - 1, tuple(c & mask for c in o.coords))


def children(o: Octant, b: int) -> list[Octant]:
    """The 2^d children in ascending Morton order."""
    if o.level >= b:
        raise DomainError(f"octant at max level {b} cannot be refined")
    h = 1 << (b - o.level - 1)
    dim = o.dim
    out = []
    for j in range(1 << dim):
        off = tuple(((j >> a) & 1) * h for a in range(dim))
        out.append(Octant(o.tree, o.level + 1, tuple(c + d for c, d in zip(o.coords, off))))
    return out


def face_neighbor(o: Octant, b: int, axis: int, side: int) -> Octant | OutsideTree:
    """Same-level neighbor across a face, or OutsideTree at the tree boundary."""
    h = 1 << (b - o.level)
    c = o.coords[axis] + (h if side else -h)
    if c < 0 or c >= (1 << b):
        return OutsideTree(axis, side)
    coords = list(o.coords)
    coords[axis] = c
    return Octant(o.tree, o.level, tuple(coords))


# ---------------------------------------------------------------------------
# Vectorized encode/decode via magic-bit spreading on int64 arrays.

def _spread2(v: np.ndarray) -> np.ndarray:
    # inserts one zero bit between the low 32 bits of v
    v = v & 0xFFFFFFFF
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    v = (v | (v << 1)) & 0x5555555555555555
    return v


def _compact2(v: np.ndarray) -> np.ndarray:
    v = v & 0x5555555555555555
    v = (v ^ (v >> 1)) & 0x3333333333333333
    v = (v ^ (v >> 2)) & 0x0F0F0F0F0F0F0F0F
    v = (v ^ (v >> 4)) & 0x00FF00FF00FF00FF
    v = (v ^ (v >> 8)) & 0x0000FFFF0000FFFF
    v = (v ^ (v >> 16)) & 0x00000000FFFFFFFF
    return v


def _spread3(v: np.ndarray) -> np.ndarray:
    # inserts two zero bits between the low 21 bits of v
    v = v & 0x1FFFFF
    v = (v | (v << 32)) & 0x1F00000000FFFF
    v = (v | (v << 16)) & 0x1F0000FF0000FF
    v = (v | (v << 8)) & 0x100F00F00F00F00F
    v = (v | (v << 4)) & 0x10C30C30C30C30C3
    v = (v | (v << 2)) & 0x1249249249249249
    return v


def _compact3(v: np.ndarray) -> np.ndarray:
    v = v & 0x1249249249249249
    v = (v ^ (v >> 2)) & 0x10C30C30C30C30C3
    v = (v ^ (v >> 4)) & 0x100F00F00F00F00F
    v = (v ^ (v >> 8)) & 0x1F0000FF0000FF
    v = (v ^ (v >> 16)) & 0x1F00000000FFFF
    v = (v ^ (v >> 32)) & 0x1FFFFF
    return v


def encode_many(coords: np.ndarray) -> np.ndarray:
    """Morton keys for an (N, d) int array of lattice coordinates."""
    coords = np.asarray(coords, dtype=np.int64)
    dim = coords.shape[-1]
    if dim == 2:
        return _spread2(coords[..., 0]) | (_spread2(coords[..., 1]) << 1)
    if dim == 3:
        return (
            _spread3(coords[..., 0])
            | (_spread3(coords[..., 1]) << 1)
            | (_spread3(coords[..., 2]) << 2)
        )
    raise DomainError(f"dimension must be 2 or 3, got {dim}")


def decode_many(keys: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`encode_many`; returns an (N, d) int64 array."""
    keys = np.asarray(keys, dtype=np.int64)
    if dim == 2:
        return np.stack([_compact2(keys), _compact2(keys >> 1)], axis=-1)
    if dim == 3:
        return np.stack(
            [_compact3(keys), _compact3(keys >> 1), _compact3(keys >> 2)], axis=-1
        )
    raise DomainError(f"dimension must be 2 or 3, got {dim}")
