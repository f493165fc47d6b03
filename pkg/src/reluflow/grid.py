"""Scaled standard triangulation of R^d (Kuhn/Freudenthal subdivision).

Every lattice cell ``h*[k, k+1]^d`` splits into d! simplices, one per
permutation of the coordinates: the simplex for permutation ``perm``
contains the points whose local offsets satisfy
``0 <= y[perm[0]] <= ... <= y[perm[d-1]] <= 1``.  The triangulation is
implicit and infinite; vertices are plain integer tuples (world position
= cell_size * coords) so they can serve as exact dictionary keys.

All functions are pure and the grid descriptor is immutable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Vertex",
    "SimplexRef",
    "KuhnGrid",
    "locate",
    "simplex_vertices",
    "vertex_position",
    "barycentric",
    "simplex_contains",
    "neighborhood",
    "omega_zero_contains",
]

Vertex = tuple  # integer lattice coordinates


class SimplexRef(NamedTuple):
    """A simplex, addressed by its lattice cell corner and a permutation.

    ``perm`` is 0-based: perm[0] is the coordinate with the smallest local
    offset inside the cell, perm[-1] the one with the largest.
    """

    cell: tuple
    perm: tuple


@dataclass(frozen=True)
class KuhnGrid:
    """Descriptor of the standard triangulation scaled by ``cell_size``."""

    dim: int
    cell_size: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("grid dimension must be positive")
        h = float(self.cell_size)
        if not (h > 0.0 and math.isfinite(h)):
            raise ValueError("cell size must be a positive finite real")
        object.__setattr__(self, "cell_size", h)

    @property
    def fineness(self) -> float:
        """Largest simplex diameter: cell_size * sqrt(dim)."""
        return self.cell_size * math.sqrt(self.dim)

    @property
    def simplices_per_vertex(self) -> int:
        """Number of simplices meeting at any vertex: (dim+1)!."""
        return math.factorial(self.dim + 1)


def locate(grid: KuhnGrid, x) -> tuple[SimplexRef, np.ndarray]:
    """Find a simplex containing ``x`` and the local cell offsets.

    The cell is floor(x / h); the permutation sorts the fractional parts
    ascending, with ties broken by coordinate index so that points on
    shared faces resolve deterministically.
    """
    u = np.asarray(x, dtype=np.float64) / grid.cell_size
    cell = np.floor(u)
    local = u - cell
    order = np.argsort(local, kind="stable")
    return SimplexRef(tuple(int(c) for c in cell), tuple(int(i) for i in order)), local


def simplex_vertices(grid: KuhnGrid, s: SimplexRef) -> list:
    """The d+1 lattice vertices, walking from the cell corner.

    Successive vertices add the unit vectors in reverse permutation
    order, so the corner comes first and the opposite corner last.
    """
    base = np.asarray(s.cell, dtype=np.int64)
    verts = [tuple(int(c) for c in base)]
    current = base.copy()
    for idx in reversed(s.perm):
        current[idx] += 1
        verts.append(tuple(int(c) for c in current))
    return verts


def vertex_position(grid: KuhnGrid, v) -> np.ndarray:
    """World coordinates of a lattice vertex."""
    return grid.cell_size * np.asarray(v, dtype=np.float64)


def barycentric(grid: KuhnGrid, s: SimplexRef, x, tol: float = 1e-9) -> np.ndarray:
    """Convex weights of ``x`` w.r.t. simplex_vertices(grid, s).

    Uses the closed form for the sorted local offsets: with
    y_(1) <= ... <= y_(d) the weights are (1 - y_(d), y_(d) - y_(d-1),
    ..., y_(2) - y_(1), y_(1)); they telescope to 1.  Rejects points
    outside the simplex beyond ``tol`` (measured in cell units, i.e.
    tol * cell_size in world distance).
    """
    y = np.asarray(x, dtype=np.float64) / grid.cell_size - np.asarray(s.cell, dtype=np.float64)
    ys = y[list(s.perm)]
    weights = np.empty(grid.dim + 1)
    weights[0] = 1.0 - ys[-1]
    weights[1:-1] = ys[:0:-1] - ys[-2::-1]
    weights[-1] = ys[0]
    if np.any(weights < -tol):
        raise ValueError(
            f"point {np.asarray(x)} lies outside simplex {s} "
            f"(weight deficit {float(weights.min()):.3e})"
        )
    return weights


def simplex_contains(grid: KuhnGrid, s: SimplexRef, x, tol: float = 1e-9) -> bool:
    """Barycentric feasibility test; never raises."""
    try:
        barycentric(grid, s, x, tol=tol)
    except ValueError:
        return False
    return True


def neighborhood(grid: KuhnGrid, v) -> list[SimplexRef]:
    """All simplices containing vertex ``v``; always (dim+1)! of them.

    A simplex (cell, perm) contains v exactly when b = v - cell is a 0/1
    vector whose support occupies the trailing positions of perm, so the
    enumeration runs over the 2^d incident cells and the compatible
    permutations (zeros in any order, then ones in any order).
    """
    d = grid.dim
    v = tuple(int(c) for c in v)
    if len(v) != d:
        raise ValueError(f"vertex has {len(v)} coordinates, grid has {d}")
    out = []
    for bits in itertools.product((0, 1), repeat=d):
        cell = tuple(v[i] - bits[i] for i in range(d))
        zeros = [i for i in range(d) if bits[i] == 0]
        ones = [i for i in range(d) if bits[i] == 1]
        for low in itertools.permutations(zeros):
            for high in itertools.permutations(ones):
                out.append(SimplexRef(cell, low + high))
    return out


def omega_zero_contains(z) -> bool:
    """Membership in the union of unit-grid simplices around the origin.

    That union equals {z in [-1,1]^d : z_i <= z_j + 1 for all i, j},
    i.e. the box intersected with max(z) - min(z) <= 1.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if np.any(np.abs(z) > 1.0):
        return False
    return bool(z.max() - z.min() <= 1.0)
