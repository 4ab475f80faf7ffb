"""Effective Peierls matrices ``E(alpha, beta) = Lambda(alpha, beta) h(alpha - beta)``.

Two finite realizations of the lattice operator are provided:

* ``Ball``: all sites within a radius, phases from the transverse plus
  Poincare gauge (any eps, kappa);
* ``Torus``: a ``q x q`` periodic patch at rational flux ``2 pi p / q`` per
  cell and kappa = 0, in the Landau gauge ``A = Phi s1 ds2`` (lattice
  coordinates ``s``).  That gauge makes the matrix invariant under unit
  translations along ``e2``, so its spectrum splits into ``q`` blocks of size
  ``q``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .bloch import HarmonicData, band_minimum_hessian, bz_grid
from .errors import ComplexQuasiBloch, IrrationalFluxOnTorus, KappaOnTorus
from .lattice import Lattice, enumerate_sites, site_arrays, wedge
from .phase import FieldSpec, peierls_phase
from .wannier import HoppingSet

# ---------------------------------------------------------------------------
# geometries


@dataclass(frozen=True)
class Ball:
    radius: float
    kind: str = field(default="Ball", init=False)


@dataclass(frozen=True)
class Torus:
    q: int
    kind: str = field(default="Torus", init=False)

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 1:
            raise ValueError("torus size q must be a positive integer")


def flux_per_cell(lat: Lattice, fld: FieldSpec, eps: float) -> float:
    """Signed constant-field flux ``eps * B0 * (e1 ^ e2)`` through one cell."""
    return eps * fld.B0 * float(wedge(lat.e1, lat.e2))


def torus_flux_numerator(lat: Lattice, fld: FieldSpec, eps: float, q: int, tol: float = 1e-9) -> int:
    """Integer ``p`` with ``flux_per_cell = 2 pi p / q``.

    Raises
    ------
    IrrationalFluxOnTorus
        If no integer ``p`` matches within ``tol``.
    """
    p = flux_per_cell(lat, fld, eps) * q / (2 * np.pi)
    if abs(p - round(p)) > tol * max(1.0, abs(p)):
        raise IrrationalFluxOnTorus(f"flux per cell * q / 2pi = {p:.12g} is not an integer for q={q}")
    return int(round(p))


def commensurate_torus_size(lat: Lattice, fld: FieldSpec, eps: float, max_q: int = 4096, tol: float = 1e-9) -> int:
    """Smallest ``q`` for which the flux per cell is ``2 pi p / q``."""
    frac = Fraction(flux_per_cell(lat, fld, eps) / (2 * np.pi)).limit_denominator(max_q)
    q = frac.denominator
    torus_flux_numerator(lat, fld, eps, q, tol)
    return q


def default_ball_radius(lat: Lattice, fld: FieldSpec, eps: float, lengths: float = 10.0) -> float:
    """Radius holding ``lengths`` magnetic lengths ``1/sqrt(eps B0)`` (per unit cell area)."""
    b = eps * fld.B0 * lat.cell_area
    return lengths * lat.lattice_constant / np.sqrt(b)


# ---------------------------------------------------------------------------
# matrices


@dataclass(frozen=True)
class PeierlsMatrix:
    """Finite effective matrix with its site labels.

    For a torus ``blocks`` holds the ``q`` Bloch blocks along ``e2``; their
    union of spectra is the spectrum of ``M``.
    """

    sites: np.ndarray  # (n, 2) integer indices
    positions: np.ndarray  # (n, 2)
    M: sp.csr_matrix
    epsilon: float
    kappa: float
    geometry: Ball | Torus
    hoppings: HoppingSet
    blocks: tuple[np.ndarray, ...] | None = None

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def hermitian_defect(self) -> float:
        d = self.M - self.M.conj().T
        return float(np.max(np.abs(d.data), initial=0.0))

    def spectrum(self) -> np.ndarray:
        """All eigenvalues, ascending (block route on a torus)."""
        if self.blocks is not None:
            return np.sort(np.concatenate([np.linalg.eigvalsh(b) for b in self.blocks]))
        return np.linalg.eigvalsh(self.M.toarray())

    def gauge_transformed(self, chi) -> "PeierlsMatrix":
        """Conjugate by ``diag(exp(-i chi))``; the spectrum is unchanged."""
        d = sp.diags(np.exp(-1j * np.asarray(chi, dtype=float)))
        m = (d @ self.M @ d.conj()).tocsr()
        return PeierlsMatrix(self.sites, self.positions, m, self.epsilon, self.kappa, self.geometry, self.hoppings, None)

    def to_coordinate_csv(self, path) -> Path:
        path = Path(path)
        coo = self.M.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["row", "col", "re", "im"])
            for k in order:
                v = coo.data[k]
                wr.writerow([int(coo.row[k]), int(coo.col[k]), f"{v.real:.17g}", f"{v.imag:.17g}"])
        return path


def _ball_matrix(h: HoppingSet, lat: Lattice, fld: FieldSpec, eps: float, kappa: float, radius: float):
    sites = enumerate_sites(lat, radius)
    idx, pos = site_arrays(sites)
    lo = idx.min(axis=0)
    span = idx.max(axis=0) - lo + 1
    table = -np.ones(span, dtype=int)
    table[idx[:, 0] - lo[0], idx[:, 1] - lo[1]] = np.arange(len(idx))
    rows, cols, amps = [], [], []
    gam, amp = h.arrays()
    for g, a in zip(gam, amp):
        if a == 0:
            continue
        # pairs with alpha - beta = g
        b = idx - g - lo
        ok = np.all((b >= 0) & (b < span), axis=1)
        r = np.flatnonzero(ok)
        c = table[b[ok, 0], b[ok, 1]]
        keep = c >= 0
        rows.append(r[keep])
        cols.append(c[keep])
        amps.append(np.full(int(keep.sum()), a))
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    amps = np.concatenate(amps).astype(complex) if amps else np.zeros(0, dtype=complex)
    phase = peierls_phase(fld, pos[rows], pos[cols], eps, kappa) if rows.size else np.ones(0)
    n = len(idx)
    m = sp.csr_matrix((amps * phase, (rows, cols)), shape=(n, n))
    m = (0.5 * (m + m.conj().T)).tocsr()
    return idx, pos, m


def _landau_phase(phi: float, a1, a2, b1, b2):
    """``exp(-i Phi (a1 + b1)(b2 - a2) / 2)``: segment integral of ``Phi s1 ds2``."""
    return np.exp(-0.5j * phi * (a1 + b1) * (b2 - a2))


def _torus_matrix(h: HoppingSet, lat: Lattice, fld: FieldSpec, eps: float, q: int):
    p = torus_flux_numerator(lat, fld, eps, q)
    phi = 2 * np.pi * p / q
    n1, n2 = np.meshgrid(np.arange(q), np.arange(q), indexing="ij")
    idx = np.stack([n1.ravel(), n2.ravel()], axis=1)
    pos = lat.position(idx)
    gam, amp = h.arrays()
    rows, cols, vals = [], [], []
    for (g1, g2), a in zip(gam.tolist(), amp):
        if a == 0:
            continue
        # beta = alpha - gamma taken in the infinite lattice, folded onto the torus
        b1 = idx[:, 0] - g1
        b2 = idx[:, 1] - g2
        ph = _landau_phase(phi, idx[:, 0], idx[:, 1], b1, b2)
        r = np.arange(len(idx))
        c = (b1 % q) * q + (b2 % q)
        rows.append(r)
        cols.append(c)
        vals.append(a * ph)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(q * q, q * q))
    m.sum_duplicates()
    m = (0.5 * (m + m.conj().T)).tocsr()

    # Bloch blocks along e2: H_k[a1, b1] = sum_d M((a1, 0), (b1, d)) exp(i k d), k = 2 pi j / q
    blocks = []
    d = np.arange(q)
    rows0 = idx[:, 1] == 0
    sub = m[np.flatnonzero(rows0)].toarray().reshape(q, q, q)  # [a1, b1, b2]
    for j in range(q):
        k = 2 * np.pi * j / q
        blk = sub @ np.exp(1j * k * d)
        blocks.append(0.5 * (blk + blk.conj().T))
    return idx, pos, m, tuple(blocks)


def build_effective_matrix(
    h: HoppingSet,
    lat: Lattice,
    fld: FieldSpec,
    eps: float,
    kappa: float,
    geom: Ball | Torus,
) -> PeierlsMatrix:
    """Assemble ``E(alpha, beta) = Lambda(alpha, beta) h(alpha - beta)`` on a finite geometry.

    Raises
    ------
    KappaOnTorus
        For ``kappa != 0`` on a torus.
    IrrationalFluxOnTorus
        When the flux per cell is not ``2 pi p / q``.
    """
    if isinstance(geom, Torus):
        if kappa != 0.0:
            raise KappaOnTorus("the slowly varying profile is incommensurate with a finite torus")
        idx, pos, m, blocks = _torus_matrix(h, lat, fld, eps, int(geom.q))
        return PeierlsMatrix(idx, pos, m, float(eps), 0.0, geom, h, blocks)
    if isinstance(geom, Ball):
        idx, pos, m = _ball_matrix(h, lat, fld, eps, kappa, geom.radius)
        return PeierlsMatrix(idx, pos, m, float(eps), float(kappa), geom, h, None)
    raise TypeError(f"unknown geometry {geom!r}")


# ---------------------------------------------------------------------------
# quasi-Bloch function and Landau prediction


@dataclass(frozen=True)
class QuasiBlochData:
    thetas: np.ndarray
    values: np.ndarray
    harmonic: HarmonicData
    rho: np.ndarray | None = None


def quasi_bloch(
    h: HoppingSet,
    lat: Lattice,
    grid_n: int,
    *,
    reference: np.ndarray | None = None,
    eps: float | None = None,
    offset: float = 0.0,
) -> QuasiBlochData:
    """``lambda(theta) = sum_gamma h(gamma) exp(-i <theta, gamma>)`` on the E* grid.

    With ``reference`` (the unperturbed band on the same grid) and ``eps``,
    ``rho = (lambda - reference) / eps`` is returned as well.

    Raises
    ------
    ComplexQuasiBloch
        If ``max |Im lambda| > 1e-6``.
    """
    thetas, _ = bz_grid(lat, grid_n, offset)
    vals = h.evaluate(lat, thetas)
    im = float(np.max(np.abs(vals.imag)))
    if im > 1e-6:
        raise ComplexQuasiBloch(f"quasi-Bloch function has imaginary part {im:.2e}; hoppings are not Hermitian")
    vals = vals.real
    hd = band_minimum_hessian(vals, lat, thetas=thetas, hoppings=h)
    rho = None
    if reference is not None:
        if not eps:
            raise ValueError("eps is required with a reference band")
        rho = (vals - np.asarray(reference, dtype=float)) / eps
    return QuasiBlochData(thetas, vals, hd, rho)


def harmonic_data(q: QuasiBlochData) -> HarmonicData:
    return q.harmonic


def landau_prediction(hd: HarmonicData, B0: float, eps: float, N: int) -> list[float]:
    """Landau-level centers ``min_value + (2n + 1) eps m B0`` for ``n = 0..N``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    return [hd.min_value + (2 * n + 1) * eps * hd.m * B0 for n in range(N + 1)]


def landau_spacing(hd: HarmonicData, B0: float, eps: float) -> float:
    return 2.0 * eps * hd.m * B0
