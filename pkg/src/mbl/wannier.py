"""Wannier functions, hoppings and their magnetic (Loewdin-orthonormalized) versions.

Real-space data live on a regular grid with ``M`` points per lattice cell in
each direction.  Grid node ``(j1, j2)`` sits at lattice coordinates
``s = ((j1 - J/2)/M, (j2 - J/2)/M)`` with ``J = N*M``, i.e. the window is the
``N x N`` supercell centered at the origin, ``N`` being the quasi-momentum
grid size.  Lattice translations are index shifts by ``M``.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .bloch import BandStructure, PotentialSpec
from .errors import (
    GridTooCoarse,
    NearSingularGramian,
    NormLoss,
    QuadratureOverlapTruncated,
)
from .lattice import Lattice, LatticeSite, make_lattice, site_arrays
from .phase import FieldSpec, peierls_phase

# ---------------------------------------------------------------------------
# Wannier synthesis


@dataclass(frozen=True)
class WannierFunction:
    """Principal Wannier function sampled on the supercell window.

    ``values[j1, j2]`` is the amplitude at ``positions[j1, j2]``.  ``radius`` is
    the analysis disk used for the decay fit and truncation checks.
    """

    lattice: Lattice
    points_per_cell: int
    ncells: int
    offset: float
    values: np.ndarray
    center: np.ndarray
    radius: float
    decay_rate: float
    fit_prefactor: float
    fit_residual: float
    band0: np.ndarray | None = None
    potential: PotentialSpec | None = None

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def lattice_coords(self) -> np.ndarray:
        """Lattice coordinates of the nodes along one axis."""
        j = np.arange(self.size)
        return (j - self.size // 2) / self.points_per_cell

    @property
    def positions(self) -> np.ndarray:
        s = self.lattice_coords
        s1, s2 = np.meshgrid(s, s, indexing="ij")
        return np.stack([s1, s2], axis=-1) @ self.lattice.basis

    @property
    def cell_element(self) -> float:
        """Area attached to one grid node."""
        return self.lattice.cell_area / self.points_per_cell**2

    def norm(self, within: float | None = None) -> float:
        dens = np.abs(self.values) ** 2
        if within is not None:
            dens = dens * (np.linalg.norm(self.positions - self.center, axis=-1) <= within)
        return float(np.sqrt(np.sum(dens) * self.cell_element))

    def shifted(self, gamma) -> np.ndarray:
        """Values of ``x -> phi(x - gamma)`` for a lattice index ``gamma``.

        Exact on the window: the synthesized function is quasi-periodic over
        the supercell with multiplier ``exp(2 pi i offset)`` per period.
        """
        out = self.values
        mult = np.exp(2j * np.pi * self.offset)
        for axis, n in enumerate(np.asarray(gamma, dtype=int)):
            k = int(n) * self.points_per_cell
            if k == 0:
                continue
            if abs(k) >= self.size:
                raise ValueError("shift exceeds the synthesized window")
            out = np.roll(out, k, axis=axis)
            # wrapped nodes come from the neighbouring period
            idx = [slice(None), slice(None)]
            if k > 0:
                idx[axis] = slice(0, k)
                out[tuple(idx)] /= mult
            else:
                idx[axis] = slice(self.size + k, None)
                out[tuple(idx)] *= mult
        return out


def _fine_grid_coefficients(bs: BandStructure, m: int) -> np.ndarray:
    """Scatter every ``c_g(theta_k)`` onto the fine reciprocal grid of size ``N*M``.

    Wave vector ``theta_k + G_g`` has dual coordinates ``(q + offset)/N`` with
    ``q = k - N/2 + N g``; ``q`` is folded modulo ``N*M``.
    """
    n = bs.grid_n
    size = n * m
    k = np.arange(n)
    q1 = (k[:, None] - n // 2 + n * bs.gvecs[None, :, 0])  # (N, D)
    q2 = (k[:, None] - n // 2 + n * bs.gvecs[None, :, 1])
    acc = np.zeros((size, size), dtype=complex)
    i1 = np.broadcast_to(q1[:, None, :], (n, n, len(bs.gvecs)))
    i2 = np.broadcast_to(q2[None, :, :], (n, n, len(bs.gvecs)))
    # (-1)^q centers the output window on the origin
    sign = np.where((i1 + i2) % 2 == 0, 1.0, -1.0)
    np.add.at(acc, (i1 % size, i2 % size), sign * bs.vectors)
    return acc


def _decay_fit(values: np.ndarray, positions: np.ndarray, center, radius: float, shell: float, window: float):
    """Fit ``log max|phi|`` per radial shell to ``c - rate * r``.

    Shells stop at the numerical floor: ``1e-13`` of the peak or ten times the
    largest amplitude in the outer quarter of the window, whichever is larger.
    Returns ``(rate, prefactor, residual)`` where the prefactor bounds every
    fitted shell maximum and ``residual = sqrt(1 - R^2)`` of the log fit.
    """
    r = np.linalg.norm(positions - center, axis=-1)
    amp = np.abs(values)
    top = float(np.max(amp))
    outer = amp[r > 0.75 * window]
    floor = max(1e-13 * top, 10.0 * float(np.max(outer, initial=0.0)))
    edges = np.arange(0.0, radius + 1e-12, shell)
    rs, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (r >= lo) & (r < hi)
        if not np.any(sel):
            continue
        ymax = float(np.max(amp[sel]))
        if ymax <= floor:
            break
        rs.append(float(np.max(r[sel][amp[sel] == ymax])))
        ys.append(np.log(ymax))
    if len(rs) < 3:
        return float("nan"), float("nan"), float("nan")
    rs = np.array(rs)
    ys = np.array(ys)
    slope, intercept = np.polyfit(rs, ys, 1)
    res = ys - (intercept + slope * rs)
    spread = np.sum((ys - ys.mean()) ** 2)
    residual = float(np.sqrt(np.sum(res**2) / spread)) if spread > 0 else 0.0
    return float(-slope), float(np.exp(intercept + res.max())), residual


def synthesize_wannier(
    bs: BandStructure,
    lat: Lattice | None = None,
    R_w: float | None = None,
    spacing: float | None = None,
    *,
    norm_tol: float = 1e-3,
    shell: float | None = None,
) -> WannierFunction:
    """Principal Wannier function ``phi0 = (1/N^2) sum_k exp(i<theta_k, x>) u(theta_k, x)``.

    ``u(theta, .)`` is the gauge-fixed periodic Bloch factor normalized in
    ``L2`` of one cell, so that ``phi0`` is the Riemann sum of the normalized
    inverse Bloch-Floquet transform.  Evaluation is a single inverse FFT.

    Parameters
    ----------
    R_w : float
        Analysis radius, default 6 lattice constants.
    spacing : float
        Target real-space spacing, default lattice constant / 16.  The number
        of nodes per cell is ``ceil(lattice constant / spacing)``.
    shell : float
        Radial shell width of the decay fit, default half a lattice constant.

    Raises
    ------
    NormLoss
        If the grid quadrature of ``|phi0|^2`` deviates from 1 by more than
        ``norm_tol``, which happens when the real-space grid under-resolves
        the plane-wave content.
    """
    if bs.vectors is None:
        raise ValueError("band structure carries no eigenvectors")
    lat = lat or bs.lattice
    a = lat.lattice_constant
    R_w = 6.0 * a if R_w is None else float(R_w)
    spacing = a / 16 if spacing is None else float(spacing)
    m = max(2, int(np.ceil(a / spacing - 1e-9)))
    n = bs.grid_n
    size = n * m
    acc = _fine_grid_coefficients(bs, m)
    vals = np.fft.ifft2(acc) * size * size
    # quasi-momentum offset of the grid: exp(2 pi i offset * s / N) per axis
    s = (np.arange(size) - size // 2) / m
    ph = np.exp(2j * np.pi * bs.offset * s / n)
    vals = vals * ph[:, None] * ph[None, :]
    vals /= n * n * np.sqrt(lat.cell_area)
    center = np.asarray(bs.gauge.get("center", np.zeros(2)), dtype=float)

    s1, s2 = np.meshgrid(s, s, indexing="ij")
    pos = np.stack([s1, s2], axis=-1) @ lat.basis
    norm2 = float(np.sum(np.abs(vals) ** 2) * lat.cell_area / m**2)
    if abs(norm2 - 1.0) > norm_tol:
        raise NormLoss(f"quadrature norm^2 {norm2:.6f} with {m} nodes per cell; refine the spacing")
    half_window = 0.5 * n * min(np.linalg.norm(lat.e1), np.linalg.norm(lat.e2))
    fit_radius = min(R_w, half_window)
    rate, pref, resid = _decay_fit(vals, pos, center, fit_radius, 0.5 * a if shell is None else shell, half_window)
    return WannierFunction(
        lattice=lat,
        points_per_cell=m,
        ncells=n,
        offset=bs.offset,
        values=vals,
        center=center,
        radius=R_w,
        decay_rate=rate,
        fit_prefactor=pref,
        fit_residual=resid,
        band0=bs.bands[..., 0].copy(),
        potential=bs.potential,
    )


def wannier_overlaps(w: WannierFunction, gammas) -> np.ndarray:
    """``<phi0, tau_{-gamma} phi0>`` for each lattice index ``gamma``."""
    return np.array([np.vdot(w.values, w.shifted(g)) * w.cell_element for g in gammas])


# ---------------------------------------------------------------------------
# hoppings


@dataclass(frozen=True)
class HoppingSet:
    """Hopping amplitudes ``h(gamma)`` keyed by lattice index."""

    entries: Mapping[tuple[int, int], complex]
    trunc_radius: float = float("inf")
    trunc_tol: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "entries", {(int(g[0]), int(g[1])): complex(v) for g, v in sorted(self.entries.items())}
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        keys = list(self.entries)
        return np.array(keys, dtype=int).reshape(-1, 2), np.array([self.entries[k] for k in keys], dtype=complex)

    def __getitem__(self, gamma) -> complex:
        return self.entries.get((int(gamma[0]), int(gamma[1])), 0.0j)

    def hermitian_defect(self) -> float:
        return max(
            (abs(v - np.conj(self[(-g[0], -g[1])])) for g, v in self.entries.items()),
            default=0.0,
        )

    def symmetrized(self) -> "HoppingSet":
        keys = set(self.entries) | {(-g[0], -g[1]) for g in self.entries}
        sym = {g: 0.5 * (self[g] + np.conj(self[(-g[0], -g[1])])) for g in keys}
        return HoppingSet(sym, self.trunc_radius, self.trunc_tol)

    def evaluate(self, lat: Lattice, thetas) -> np.ndarray:
        """``sum_gamma h(gamma) exp(-i <theta, gamma>)`` (complex)."""
        gam, amp = self.arrays()
        pos = lat.position(gam)
        thetas = np.asarray(thetas, dtype=float)
        return np.exp(-1j * (thetas @ pos.T)) @ amp

    def to_records(self) -> list[dict]:
        return [{"gamma": [g[0], g[1]], "re": v.real, "im": v.imag} for g, v in self.entries.items()]

    @classmethod
    def from_records(cls, records, trunc_radius: float = float("inf"), trunc_tol: float = 0.0) -> "HoppingSet":
        return cls({tuple(r["gamma"]): complex(r["re"], r.get("im", 0.0)) for r in records}, trunc_radius, trunc_tol)


def harper_hoppings(t: float = 1.0) -> HoppingSet:
    """Nearest-neighbour hoppings ``h(+-e_j) = -t``, band ``-2t(cos th1 + cos th2)``."""
    return HoppingSet({(1, 0): -t, (-1, 0): -t, (0, 1): -t, (0, -1): -t})


def band_fourier_coefficients(band0: np.ndarray, offset: float = 0.0) -> dict[tuple[int, int], complex]:
    """All DFT coefficients ``h(n) = (1/N^2) sum_k band(theta_k) exp(i <theta_k, n>)``.

    Indices run over ``-N/2 <= n_j <= N/2``.  On the half-open grid the
    Nyquist coefficient is split evenly between ``+-N/2``, which keeps the
    set Hermitian and the grid round trip exact; on shifted grids the Nyquist
    row is dropped.
    """
    band0 = np.asarray(band0, dtype=float)
    n = band0.shape[0]
    raw = np.fft.ifft2(band0)  # (1/N^2) sum_k band exp(2 pi i k n / N)
    half = n // 2
    out = {}
    rng = range(-half, half + 1)
    for n1 in rng:
        for n2 in rng:
            w = 1.0
            if abs(n1) == half:
                if offset != 0.0:
                    continue
                w *= 0.5
            if abs(n2) == half:
                if offset != 0.0:
                    continue
                w *= 0.5
            # theta_k = -1/2 + (k + offset)/N in dual coordinates
            ph = (-1.0) ** (n1 + n2) * np.exp(2j * np.pi * offset * (n1 + n2) / n)
            out[(n1, n2)] = w * ph * raw[n1 % n, n2 % n]
    return out


def hoppings_from_band(band0, lat: Lattice, trunc_tol: float = 1e-10, *, offset: float = 0.0) -> HoppingSet:
    """Fourier coefficients of a sampled band, truncated to a disk.

    ``trunc_tol`` is relative to ``max |h|``: the radius is the largest
    ``|gamma|`` carrying ``|h| >= trunc_tol * max|h|`` and every coefficient
    inside that disk is kept.
    """
    coeffs = band_fourier_coefficients(band0, offset)
    top = max(abs(v) for v in coeffs.values())
    thresh = trunc_tol * top
    radius = 0.0
    for g, v in coeffs.items():
        if abs(v) >= thresh:
            radius = max(radius, float(np.linalg.norm(lat.position(g))))
    kept = {g: v for g, v in coeffs.items() if np.linalg.norm(lat.position(g)) <= radius * (1 + 1e-12)}
    return HoppingSet(kept, radius, trunc_tol)


# ---------------------------------------------------------------------------
# magnetic Gramian and Loewdin orthonormalization


@dataclass(frozen=True)
class GramianData:
    sites: tuple[LatticeSite, ...]
    G: np.ndarray
    F: np.ndarray
    epsilon: float
    kappa: float

    def index_of(self, index) -> int:
        idx = [s.index for s in self.sites]
        return idx.index((int(index[0]), int(index[1])))


def loewdin_inverse_sqrt(G: np.ndarray, min_eig: float = 1e-10) -> np.ndarray:
    """``G^{-1/2}`` by spectral decomposition."""
    G = 0.5 * (G + G.conj().T)
    w, v = np.linalg.eigh(G)
    if w[0] <= min_eig:
        raise NearSingularGramian(f"smallest Gramian eigenvalue {w[0]:.3e}")
    F = (v / np.sqrt(w)) @ v.conj().T
    return 0.5 * (F + F.conj().T)


@dataclass(frozen=True)
class _Patch:
    """Zero-padded box of grid nodes large enough to hold every shifted copy."""

    lo: int  # first window index kept
    size: int
    positions: np.ndarray


def _patch(w: WannierFunction, reach_cells: int) -> _Patch:
    m = w.points_per_cell
    half = int(np.ceil(w.radius / w.lattice.lattice_constant)) + reach_cells
    half_nodes = half * m
    if half_nodes > w.size // 2:
        raise QuadratureOverlapTruncated(
            f"overlap box of {half} cells exceeds the {w.ncells // 2}-cell half window; use a finer theta grid"
        )
    lo = w.size // 2 - half_nodes
    size = 2 * half_nodes
    return _Patch(lo, size, w.positions[lo : lo + size, lo : lo + size])


def _check_tail(w: WannierFunction, tol: float):
    r = np.linalg.norm(w.positions - w.center, axis=-1)
    outside = np.abs(w.values[r > w.radius])
    if outside.size and outside.max() > tol * np.abs(w.values).max():
        raise QuadratureOverlapTruncated(
            f"|phi0| outside the R_w={w.radius:.3g} disk reaches {outside.max() / np.abs(w.values).max():.2e} of its peak"
        )


def _placed(w: WannierFunction, patch: _Patch, alpha) -> np.ndarray:
    """``phi0(x - alpha)`` on the patch, restricted to the R_w disk around the shifted center."""
    vals = w.shifted(alpha)[patch.lo : patch.lo + patch.size, patch.lo : patch.lo + patch.size]
    ctr = w.center + w.lattice.position(alpha)
    return np.where(np.linalg.norm(patch.positions - ctr, axis=-1) <= w.radius, vals, 0.0)


def _site_orbitals(w: WannierFunction, patch: _Patch, fld: FieldSpec, sites, eps: float, kappa: float) -> np.ndarray:
    """Rows ``Lambda(x, alpha) phi0(x - alpha)`` flattened over the patch."""
    x = patch.positions.reshape(-1, 2)
    out = np.empty((len(sites), x.shape[0]), dtype=complex)
    for i, s in enumerate(sites):
        orb = _placed(w, patch, s.index).ravel()
        if eps != 0.0 or kappa != 0.0:
            nz = orb != 0
            ph = np.ones_like(orb)
            ph[nz] = peierls_phase(fld, x[nz], np.broadcast_to(s.position, (int(nz.sum()), 2)), eps, kappa)
            orb = orb * ph
        out[i] = orb
    return out


def magnetic_gramian(
    w: WannierFunction,
    sites,
    eps: float,
    kappa: float = 0.0,
    fld: FieldSpec | None = None,
    *,
    tail_tol: float = 1e-8,
) -> GramianData:
    """Overlaps of the magnetic almost-Wannier functions ``Lambda(., alpha) phi0(. - alpha)``.

    Integrals are grid sums over a box holding every shifted copy of the
    ``R_w`` disk.

    Raises
    ------
    QuadratureOverlapTruncated
        When ``phi0`` is not negligible outside its disk or the box exceeds
        the synthesized window.
    """
    if fld is None:
        if eps != 0.0 or kappa != 0.0:
            raise ValueError("a field is required for nonzero eps or kappa")
        fld = FieldSpec(1.0)
    sites = tuple(sites)
    _check_tail(w, tail_tol)
    idx, pos = site_arrays(sites)
    reach = int(np.ceil(np.max(np.linalg.norm(pos, axis=1), initial=0.0) / w.lattice.lattice_constant)) + 1
    patch = _patch(w, reach)
    orbs = _site_orbitals(w, patch, fld, sites, eps, kappa)
    G = (orbs.conj() @ orbs.T) * w.cell_element
    G = 0.5 * (G + G.conj().T)
    return GramianData(sites, G, loewdin_inverse_sqrt(G), float(eps), float(kappa))


# ---------------------------------------------------------------------------
# magnetic Hamiltonian on a patch


def apply_magnetic_hamiltonian(
    psi: np.ndarray,
    positions: np.ndarray,
    lat: Lattice,
    m: int,
    pot: PotentialSpec,
    b: float,
    method: str = "spectral",
) -> np.ndarray:
    """``((-i grad - a)^2 + V) psi`` with ``a = (b/2)(-x2, x1)`` on a lattice-aligned grid.

    ``psi`` must vanish near the patch edges.  ``method='spectral'`` uses FFT
    derivatives (exact for band-limited data), ``'fd4'`` the fourth-order
    central stencil.  Both keep the operator Hermitian on the grid.
    """
    n1, n2 = psi.shape
    # d/dx_c = sum_j (dual_j[c] / 2 pi) d/ds_j
    jac = lat.dual_basis / (2 * np.pi)  # jac[j, c] = d s_j / d x_c
    h = 1.0 / m

    if method == "spectral":
        k1 = 2j * np.pi * np.fft.fftfreq(n1, d=h)
        k2 = 2j * np.pi * np.fft.fftfreq(n2, d=h)

        def ds(f, axis):
            k = k1 if axis == 0 else k2
            shape = (-1, 1) if axis == 0 else (1, -1)
            return np.fft.ifft(np.fft.fft(f, axis=axis) * k.reshape(shape), axis=axis)
    elif method == "fd4":
        def ds(f, axis):
            return (
                -np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis) - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)
            ) / (12 * h)
    else:
        raise ValueError(f"unknown derivative method {method!r}")

    a = 0.5 * b * np.stack([-positions[..., 1], positions[..., 0]], axis=-1)

    def pi_c(f, c):
        # (-i d/dx_c - a_c) f
        d = jac[0, c] * ds(f, 0) + jac[1, c] * ds(f, 1)
        return -1j * d - a[..., c] * f

    out = pot(lat, positions) * psi
    for c in range(2):
        out = out + pi_c(pi_c(psi, c), c)
    return out


def _shift_patch(arr: np.ndarray, k: tuple[int, int]) -> np.ndarray:
    """``out[j] = arr[j - k]`` with zero fill."""
    out = np.zeros_like(arr)
    n1, n2 = arr.shape
    a, b = k
    src1 = slice(max(0, -a), min(n1, n1 - a))
    dst1 = slice(max(0, a), min(n1, n1 + a))
    src2 = slice(max(0, -b), min(n2, n2 - b))
    dst2 = slice(max(0, b), min(n2, n2 + b))
    out[dst1, dst2] = arr[src1, src2]
    return out


@dataclass(frozen=True)
class MagneticHoppingResult:
    hoppings: HoppingSet
    psi: np.ndarray = field(repr=False)
    gramian: GramianData = field(repr=False)


def magnetic_hoppings(
    w: WannierFunction,
    gram: GramianData,
    pot: PotentialSpec,
    lat: Lattice,
    eps: float,
    fld: FieldSpec | None = None,
    *,
    hop_radius: float | None = None,
    method: str = "spectral",
    check_limit: bool = True,
    limit_tol: float = 1e-4,
    full: bool = False,
    symmetrize: bool = True,
):
    """Hoppings ``h_eps(gamma) = <psi, Lambda(., gamma) (H_eps psi)(. - gamma)>``.

    ``psi = sum_alpha F[alpha, 0] Lambda(., alpha) phi0(. - alpha)`` is the
    Loewdin-orthonormalized magnetic Wannier function at the origin and
    ``H_eps = (-i grad - eps A0)^2 + V``.  The result is Hermitian-symmetrized
    unless ``symmetrize=False``.

    Raises
    ------
    GridTooCoarse
        If, with ``check_limit``, the same quadrature at ``eps=0`` differs from
        the Fourier coefficients of the sampled band by more than ``limit_tol``.
    """
    if gram.kappa != 0.0:
        raise ValueError("magnetic hoppings are defined at constant field (kappa=0)")
    if fld is None:
        fld = FieldSpec(1.0)
        if eps != 0.0:
            raise ValueError("a field is required for nonzero eps")
    if hop_radius is None:
        hop_radius = 3.0 * lat.lattice_constant
    sites = gram.sites
    idx, pos = site_arrays(sites)
    reach = int(np.ceil((np.max(np.linalg.norm(pos, axis=1), initial=0.0) + hop_radius) / lat.lattice_constant)) + 1
    patch = _patch(w, reach)
    m = w.points_per_cell
    x = patch.positions.reshape(-1, 2)
    orbs = _site_orbitals(w, patch, fld, sites, eps, 0.0)
    i0 = gram.index_of((0, 0))
    psi = (gram.F[:, i0] @ orbs).reshape(patch.size, patch.size)
    hpsi = apply_magnetic_hamiltonian(psi, patch.positions, lat, m, pot, eps * fld.B0, method)

    gammas = [s.index for s in _disk_indices(lat, hop_radius)]
    vals = {}
    for g in gammas:
        shifted = _shift_patch(hpsi, (g[0] * m, g[1] * m)).ravel()
        gpos = lat.position(g)
        ph = peierls_phase(fld, x, np.broadcast_to(gpos, x.shape), eps, 0.0) if eps != 0.0 else 1.0
        vals[g] = np.vdot(psi.ravel(), ph * shifted) * w.cell_element
    hs = HoppingSet(vals, hop_radius, 0.0)
    if symmetrize:
        hs = hs.symmetrized()

    if check_limit and w.band0 is not None:
        if eps == 0.0:
            h_zero = hs
        else:
            g0 = magnetic_gramian(w, sites, 0.0)
            h_zero = magnetic_hoppings(w, g0, pot, lat, 0.0, hop_radius=hop_radius, method=method, check_limit=False)
        ref = band_fourier_coefficients(w.band0, w.offset)
        err = max(abs(v - ref.get(g, 0.0)) for g, v in h_zero.entries.items())
        if err > limit_tol:
            raise GridTooCoarse(f"eps=0 hoppings differ from the band Fourier coefficients by {err:.2e}")
    if full:
        return MagneticHoppingResult(hs, psi, gram)
    return hs


def _disk_indices(lat: Lattice, radius: float):
    from .lattice import enumerate_sites

    return enumerate_sites(lat, radius)


# ---------------------------------------------------------------------------
# portable cache: CSV of (x1, x2, Re, Im) plus a JSON sidecar


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_wannier(w: WannierFunction, directory, config_hash: str = "") -> Path:
    directory = Path(directory)
    pos = w.positions.reshape(-1, 2)
    vals = w.values.ravel()
    rows = np.column_stack([pos, vals.real, vals.imag])
    lines = ["x1,x2,re,im"] + [",".join(f"{v:.17g}" for v in row) for row in rows]
    body = "\n".join(lines) + "\n"
    _atomic_write(directory / "wannier.csv", body)
    meta = {
        "e1": w.lattice.e1.tolist(),
        "e2": w.lattice.e2.tolist(),
        "points_per_cell": w.points_per_cell,
        "ncells": w.ncells,
        "offset": w.offset,
        "center": w.center.tolist(),
        "radius": w.radius,
        "decay_rate": w.decay_rate,
        "fit_prefactor": w.fit_prefactor,
        "fit_residual": w.fit_residual,
        "band0": None if w.band0 is None else w.band0.tolist(),
        "potential": None if w.potential is None else w.potential.to_records(),
        "config_hash": config_hash,
        "data_sha256": hashlib.sha256(body.encode()).hexdigest(),
    }
    _atomic_write(directory / "wannier.json", json.dumps(meta, indent=1, allow_nan=True))
    return directory / "wannier.json"


def load_wannier(directory) -> tuple[WannierFunction, str]:
    directory = Path(directory)
    meta = json.loads((directory / "wannier.json").read_text())
    body = (directory / "wannier.csv").read_text()
    if hashlib.sha256(body.encode()).hexdigest() != meta["data_sha256"]:
        raise ValueError("wannier.csv does not match its sidecar hash")
    data = np.loadtxt(directory / "wannier.csv", delimiter=",", skiprows=1)
    size = meta["points_per_cell"] * meta["ncells"]
    vals = (data[:, 2] + 1j * data[:, 3]).reshape(size, size)
    lat = make_lattice(meta["e1"], meta["e2"])
    w = WannierFunction(
        lattice=lat,
        points_per_cell=meta["points_per_cell"],
        ncells=meta["ncells"],
        offset=meta["offset"],
        values=vals,
        center=np.array(meta["center"]),
        radius=meta["radius"],
        decay_rate=meta["decay_rate"],
        fit_prefactor=meta["fit_prefactor"],
        fit_residual=meta["fit_residual"],
        band0=None if meta["band0"] is None else np.array(meta["band0"]),
        potential=None if meta["potential"] is None else PotentialSpec.from_records(meta["potential"]),
    )
    return w, meta["config_hash"]
