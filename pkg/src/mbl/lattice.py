"""Two-dimensional Bravais lattice geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLattice

TWO_PI = 2.0 * np.pi


def wedge(u, v) -> float:
    """Planar cross product ``u1*v2 - u2*v1``.

    Broadcasts over leading axes, so ``wedge(points, v)`` works for an
    ``(n, 2)`` array of points.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


@dataclass(frozen=True)
class Lattice:
    """Lattice generated by ``e1, e2`` together with its dual basis.

    The dual basis satisfies ``<dual_j, e_k> = 2*pi*delta_jk``.
    """

    e1: np.ndarray
    e2: np.ndarray
    dual1: np.ndarray
    dual2: np.ndarray
    cell_area: float
    dual_cell_area: float

    @property
    def basis(self) -> np.ndarray:
        """Rows are ``e1`` and ``e2``."""
        return np.stack([self.e1, self.e2])

    @property
    def dual_basis(self) -> np.ndarray:
        return np.stack([self.dual1, self.dual2])

    @property
    def orientation(self) -> float:
        """Sign of ``e1 ^ e2``."""
        return float(np.sign(wedge(self.e1, self.e2)))

    def position(self, index) -> np.ndarray:
        """Cartesian position of integer index/indices ``(n1, n2)``."""
        index = np.asarray(index, dtype=float)
        # elementwise n1*e1 + n2*e2, so positions are the exact integer combination
        return index[..., 0, None] * self.e1 + index[..., 1, None] * self.e2

    def dual_vector(self, g) -> np.ndarray:
        """Cartesian dual-lattice vector ``g1*dual1 + g2*dual2``."""
        g = np.asarray(g, dtype=float)
        return g @ self.dual_basis

    def to_lattice_coords(self, x) -> np.ndarray:
        """Real coordinates ``s`` with ``x = s1*e1 + s2*e2``."""
        x = np.asarray(x, dtype=float)
        return x @ self.dual_basis.T / TWO_PI

    def to_dual_coords(self, theta) -> np.ndarray:
        """Real coordinates ``t`` with ``theta = t1*dual1 + t2*dual2``."""
        theta = np.asarray(theta, dtype=float)
        return theta @ self.basis.T / TWO_PI

    def reduce_to_bz(self, theta) -> np.ndarray:
        """Fold momenta into E*, i.e. dual coordinates in ``[-1/2, 1/2)``."""
        t = self.to_dual_coords(theta)
        t = t - np.floor(t + 0.5)
        return t @ self.dual_basis

    @property
    def lattice_constant(self) -> float:
        return float(min(np.linalg.norm(self.e1), np.linalg.norm(self.e2)))


def make_lattice(e1, e2) -> Lattice:
    """Build a :class:`Lattice` from two generators.

    Raises
    ------
    DegenerateLattice
        If ``|e1 ^ e2| < 1e-12 |e1| |e2|``.
    """
    e1 = np.asarray(e1, dtype=float).reshape(2)
    e2 = np.asarray(e2, dtype=float).reshape(2)
    area = float(wedge(e1, e2))
    scale = np.linalg.norm(e1) * np.linalg.norm(e2)
    if not scale > 0 or abs(area) < 1e-12 * scale:
        raise DegenerateLattice(f"generators {e1}, {e2} are (nearly) colinear")
    basis = np.stack([e1, e2])
    # rows of the dual satisfy dual @ basis.T = 2*pi*I
    dual = TWO_PI * np.linalg.inv(basis).T
    cell_area = abs(area)
    return Lattice(
        e1=e1,
        e2=e2,
        dual1=dual[0].copy(),
        dual2=dual[1].copy(),
        cell_area=cell_area,
        dual_cell_area=TWO_PI**2 / cell_area,
    )


@dataclass(frozen=True)
class LatticeSite:
    index: tuple[int, int]
    position: np.ndarray


def enumerate_sites(lat: Lattice, radius: float) -> list[LatticeSite]:
    """All sites with ``|position| <= radius``, sorted lexicographically by index."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    # bound the index box by the dual vectors: |n_j| = |<dual_j, x>|/(2 pi) <= |dual_j| r / (2 pi)
    n1 = int(np.ceil(radius * np.linalg.norm(lat.dual1) / TWO_PI)) + 1
    n2 = int(np.ceil(radius * np.linalg.norm(lat.dual2) / TWO_PI)) + 1
    i, j = np.meshgrid(np.arange(-n1, n1 + 1), np.arange(-n2, n2 + 1), indexing="ij")
    idx = np.stack([i.ravel(), j.ravel()], axis=1)
    pos = lat.position(idx)
    # tiny relative slack so that sites exactly on the circle are kept
    keep = np.linalg.norm(pos, axis=1) <= radius * (1 + 1e-12)
    idx = idx[keep]
    pos = pos[keep]
    order = np.lexsort((idx[:, 1], idx[:, 0]))
    return [LatticeSite((int(a), int(b)), p) for (a, b), p in zip(idx[order], pos[order])]


def site_arrays(sites) -> tuple[np.ndarray, np.ndarray]:
    """Stack a site sequence into ``(indices, positions)`` arrays."""
    idx = np.array([s.index for s in sites], dtype=int).reshape(-1, 2)
    pos = np.array([s.position for s in sites], dtype=float).reshape(-1, 2)
    return idx, pos
