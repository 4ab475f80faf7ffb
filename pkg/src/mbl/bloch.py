"""Plane-wave Bloch bands of a periodic Schrodinger operator.

The fiber operator at quasi-momentum ``theta`` acts on ``L2`` of the torus and
is discretized in the plane-wave basis ``exp(i <G_g, x>)`` with
``G_g = g1*dual1 + g2*dual2`` and ``|g|_inf <= cutoff``::

    H(theta)[g, g'] = |theta + G_g|^2 delta_{g g'} + V_hat(g - g')

so that ``exp(i <theta, x>) * u(x)`` is a Bloch solution of ``-Laplace + V``
whenever ``u`` is an eigenvector.  Because ``V`` is a trigonometric polynomial
the discretization is exact up to the cutoff.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping

import numpy as np
import scipy.linalg as sla

from .errors import (
    CutoffTooSmall,
    GaugeReferenceDegenerate,
    MinimumOnGridBoundaryUnresolved,
    NonPositiveHessian,
    SignChangeInGroundState,
)
from .lattice import Lattice

# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialSpec:
    """Real trigonometric polynomial ``V(x) = sum_g V_hat(g) exp(i <G_g, x>)``."""

    coefficients: Mapping[tuple[int, int], complex]

    def __post_init__(self):
        coeffs = {(int(g[0]), int(g[1])): complex(v) for g, v in self.coefficients.items()}
        scale = max([abs(v) for v in coeffs.values()] + [1.0])
        for g, v in coeffs.items():
            partner = coeffs.get((-g[0], -g[1]), 0.0)
            if abs(partner - np.conj(v)) > 1e-12 * scale:
                raise ValueError(f"potential is not real: V({g}) and V({(-g[0], -g[1])}) are not conjugate")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def support_radius(self) -> int:
        """Largest ``|g|_inf`` among nonzero coefficients."""
        radii = [max(abs(g[0]), abs(g[1])) for g, v in self.coefficients.items() if v != 0]
        return max(radii, default=0)

    @property
    def is_real_symmetric(self) -> bool:
        """True when every coefficient is real, i.e. ``V`` is even about the origin."""
        return all(abs(v.imag) == 0.0 for v in self.coefficients.values())

    def __call__(self, lat: Lattice, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for g, v in self.coefficients.items():
            phase = x @ lat.dual_vector(g)
            out = out + (v * np.exp(1j * phase)).real
        return out

    @classmethod
    def from_records(cls, records) -> "PotentialSpec":
        """Build from ``[{"g": [g1, g2], "re": .., "im": ..}, ...]``."""
        coeffs = {}
        for rec in records:
            g = tuple(int(c) for c in rec["g"])
            coeffs[g] = coeffs.get(g, 0.0) + complex(rec.get("re", 0.0), rec.get("im", 0.0))
        return cls(coeffs)

    def to_records(self) -> list[dict]:
        return [
            {"g": [g[0], g[1]], "re": v.real, "im": v.imag}
            for g, v in sorted(self.coefficients.items())
        ]


def cosine_potential(amplitude: float) -> PotentialSpec:
    """``V = 2 A (cos x1 + cos x2)`` written in dual-lattice harmonics."""
    a = float(amplitude)
    return PotentialSpec({(1, 0): a, (-1, 0): a, (0, 1): a, (0, -1): a})


def free_potential() -> PotentialSpec:
    return PotentialSpec({})


# ---------------------------------------------------------------------------
# fiber Hamiltonians


def plane_wave_indices(cutoff: int) -> np.ndarray:
    """Integer labels ``g`` with ``|g|_inf <= cutoff``, lexicographic, shape ``(D, 2)``."""
    r = np.arange(-cutoff, cutoff + 1)
    i, j = np.meshgrid(r, r, indexing="ij")
    return np.stack([i.ravel(), j.ravel()], axis=1)


def potential_matrix(pot: PotentialSpec, cutoff: int) -> np.ndarray:
    """The theta-independent part ``V_hat(g - g')`` of every fiber matrix."""
    if cutoff < 2 * pot.support_radius:
        raise CutoffTooSmall(f"cutoff {cutoff} < 2 * support radius {pot.support_radius}")
    gs = plane_wave_indices(cutoff)
    dim = len(gs)
    vmat = np.zeros((dim, dim), dtype=complex)
    diff = gs[:, None, :] - gs[None, :, :]
    for g, v in pot.coefficients.items():
        mask = (diff[..., 0] == g[0]) & (diff[..., 1] == g[1])
        vmat[mask] += v
    return vmat


@dataclass(frozen=True)
class FiberHamiltonian:
    theta: np.ndarray
    cutoff: int
    gvecs: np.ndarray
    matrix: np.ndarray


def build_fiber_hamiltonian(theta, pot: PotentialSpec, lat: Lattice, cutoff: int) -> FiberHamiltonian:
    theta = np.asarray(theta, dtype=float).reshape(2)
    vmat = potential_matrix(pot, cutoff)
    gs = plane_wave_indices(cutoff)
    kin = np.sum((theta + lat.dual_vector(gs)) ** 2, axis=1)
    mat = vmat.copy()
    mat[np.diag_indices_from(mat)] += kin
    return FiberHamiltonian(theta=theta, cutoff=cutoff, gvecs=gs, matrix=mat)


def _lowest(mat: np.ndarray, nbands: int, vectors: bool):
    if np.iscomplexobj(mat) and not np.any(mat.imag):
        mat = mat.real
    if vectors:
        w, v = sla.eigh(mat, subset_by_index=[0, nbands - 1], driver="evr")
        return w, v
    return sla.eigh(mat, subset_by_index=[0, nbands - 1], driver="evr", eigvals_only=True), None


def fiber_eigensystem(theta, pot: PotentialSpec, lat: Lattice, cutoff: int, nbands: int):
    """Lowest ``nbands`` eigenpairs at one quasi-momentum (vectors as columns)."""
    fh = build_fiber_hamiltonian(theta, pot, lat, cutoff)
    return _lowest(fh.matrix, nbands, True)


# ---------------------------------------------------------------------------
# band structure


def bz_grid(lat: Lattice, n: int, offset: float = 0.0):
    """Uniform ``n x n`` sampling of E*.

    Dual coordinates are ``t_k = -1/2 + (k + offset)/n``.  ``offset=0`` is the
    half-open grid that contains ``theta=0`` (for even ``n``) and the zone
    boundary; ``offset=0.5`` is the centered (midpoint) grid.

    Returns ``(thetas, tcoords)`` with shapes ``(n, n, 2)``.
    """
    t = -0.5 + (np.arange(n) + offset) / n
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    tc = np.stack([t1, t2], axis=-1)
    return tc @ lat.dual_basis, tc


@dataclass(frozen=True)
class BandStructure:
    lattice: Lattice
    cutoff: int
    grid_n: int
    offset: float
    thetas: np.ndarray  # (N, N, 2)
    bands: np.ndarray  # (N, N, nbands)
    gvecs: np.ndarray  # (D, 2)
    vectors: np.ndarray | None  # (N, N, D) band-0 plane-wave coefficients
    potential: PotentialSpec | None = None
    gauge: dict = field(default_factory=dict)

    @property
    def nbands(self) -> int:
        return self.bands.shape[-1]

    def band(self, j: int = 0) -> np.ndarray:
        return self.bands[..., j]


def solve_bands(
    pot: PotentialSpec,
    lat: Lattice,
    grid_n: int,
    nbands: int,
    cutoff: int,
    *,
    offset: float = 0.0,
    vectors: bool = True,
    workers: int | None = None,
) -> BandStructure:
    """Diagonalize every fiber on the ``grid_n x grid_n`` grid of E*."""
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    if nbands < 2:
        raise ValueError("nbands must be at least 2")
    vmat = potential_matrix(pot, cutoff)
    if pot.is_real_symmetric:
        vmat = vmat.real
    gs = plane_wave_indices(cutoff)
    gcart = lat.dual_vector(gs)
    thetas, _ = bz_grid(lat, grid_n, offset)
    flat = thetas.reshape(-1, 2)
    dim = len(gs)
    diag = np.diag_indices(dim)

    def solve(k):
        mat = vmat.copy()
        mat[diag] += np.sum((flat[k] + gcart) ** 2, axis=1)
        return _lowest(mat, nbands, vectors)

    npts = len(flat)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, range(npts)))
    else:
        results = [solve(k) for k in range(npts)]

    bands = np.array([r[0] for r in results]).reshape(grid_n, grid_n, nbands)
    vecs = None
    if vectors:
        vecs = np.array([r[1][:, 0] for r in results], dtype=complex).reshape(grid_n, grid_n, dim)
    return BandStructure(
        lattice=lat,
        cutoff=cutoff,
        grid_n=grid_n,
        offset=offset,
        thetas=thetas,
        bands=bands,
        gvecs=gs,
        vectors=vecs,
        potential=pot,
    )


# ---------------------------------------------------------------------------
# classification


class Hypothesis(str, Enum):
    GAP = "Gap"
    OVERLAP = "Overlap"
    CROSSING = "Crossing"


def classify_hypothesis(bs: BandStructure, tol: float | None = None) -> Hypothesis:
    """Gap / Overlap / Crossing classification of the two lowest bands."""
    l0 = bs.bands[..., 0]
    l1 = bs.bands[..., 1]
    if tol is None:
        scale = max(1.0, float(np.max(l1) - np.min(l0)))
        tol = 1e-9 * scale
    if np.max(l0) < np.min(l1) - tol:
        return Hypothesis.GAP
    if np.min(l1 - l0) <= tol:
        return Hypothesis.CROSSING
    return Hypothesis.OVERLAP


# ---------------------------------------------------------------------------
# harmonic data at the band minimum


@dataclass(frozen=True)
class HarmonicData:
    """Quadratic approximation ``min_value + (theta - theta_min)^T Q (theta - theta_min)``.

    ``quad_form`` holds the coefficients ``Q`` of the quadratic form, i.e. half
    the Hessian, so the free band ``|theta|^2`` has ``Q = I`` and ``m = 1``.
    """

    theta_min: np.ndarray
    quad_form: np.ndarray
    m1: float
    m2: float
    m: float
    min_value: float


def _harmonic_from_form(theta_min, quad, min_value) -> HarmonicData:
    quad = 0.5 * (quad + quad.T)
    m1, m2 = np.linalg.eigvalsh(quad)
    if m1 <= 0:
        raise NonPositiveHessian(f"quadratic form has eigenvalues {m1:.3e}, {m2:.3e}")
    return HarmonicData(
        theta_min=np.asarray(theta_min, dtype=float),
        quad_form=quad,
        m1=float(m1),
        m2=float(m2),
        m=float(np.sqrt(m1 * m2)),
        min_value=float(min_value),
    )


def _stencil_fit(values: np.ndarray, thetas: np.ndarray, lat: Lattice, periodic: bool):
    n1, n2 = values.shape
    i0, j0 = np.unravel_index(np.argmin(values), values.shape)
    if not periodic and (i0 in (0, n1 - 1) or j0 in (0, n2 - 1)):
        raise MinimumOnGridBoundaryUnresolved(f"grid minimum at index {(i0, j0)} lies on the sampling boundary")
    center = thetas[i0, j0]
    rows, rhs = [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            i, j = i0 + di, j0 + dj
            th = thetas[i % n1, j % n2].copy()
            if periodic:
                # unwrap across the zone boundary
                th = th + (i // n1) * lat.dual1 + (j // n2) * lat.dual2
            d = th - center
            rows.append([1.0, d[0], d[1], d[0] ** 2, d[0] * d[1], d[1] ** 2])
            rhs.append(values[i % n1, j % n2])
    c = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)[0]
    quad = np.array([[c[3], 0.5 * c[4]], [0.5 * c[4], c[5]]])
    grad = c[1:3]
    try:
        shift = -0.5 * np.linalg.solve(quad, grad)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveHessian("singular quadratic fit") from exc
    value = c[0] + grad @ shift + shift @ quad @ shift
    return center + shift, quad, value


def band_minimum_hessian(
    band,
    lat: Lattice,
    *,
    thetas: np.ndarray | None = None,
    periodic: bool = True,
    hoppings=None,
) -> HarmonicData:
    """Locate the band minimum and the quadratic form there.

    Parameters
    ----------
    band : array (N, N)
        Band sampled on ``thetas`` (defaults to the half-open grid of E*).
    hoppings : HoppingSet, optional
        When the band is given by Fourier coefficients the grid estimate is
        refined by Newton iteration on the trigonometric series, which is exact
        for trigonometric polynomials.
    periodic : bool
        Treat the samples as periodic on E* (wrap the fit stencil).
    """
    band = np.asarray(band, dtype=float)
    if thetas is None:
        thetas, _ = bz_grid(lat, band.shape[0])
    theta_min, quad, value = _stencil_fit(band, thetas, lat, periodic)
    if hoppings is not None:
        theta_min, quad, value = _newton_on_series(hoppings, lat, theta_min)
    return _harmonic_from_form(theta_min, quad, value)


def _newton_on_series(hoppings, lat: Lattice, theta0, iters: int = 50):
    gam, amp = hoppings.arrays()
    pos = lat.position(gam)

    def derivs(th):
        ph = np.exp(-1j * (pos @ th))
        val = np.sum(amp * ph).real
        grad = np.sum((-1j * pos) * (amp * ph)[:, None], axis=0).real
        hess = -np.einsum("k,ki,kj->ij", amp * ph, pos, pos).real
        return val, grad, hess

    th = np.asarray(theta0, dtype=float).copy()
    for _ in range(iters):
        val, grad, hess = derivs(th)
        step = np.linalg.solve(hess, grad)
        th = th - step
        if np.linalg.norm(step) < 1e-14 * (1 + np.linalg.norm(th)):
            break
    val, grad, hess = derivs(th)
    return th, 0.5 * hess, val


# ---------------------------------------------------------------------------
# real-space synthesis of periodic functions


def synthesize_periodic(coeffs: np.ndarray, gvecs: np.ndarray, lat: Lattice, points_per_cell: int) -> np.ndarray:
    """Evaluate ``sum_g c_g exp(i <G_g, x>)`` on ``x = (i/M) e1 + (j/M) e2``, ``0 <= i, j < M``.

    Returns an ``(M, M)`` array (not normalized).
    """
    m = int(points_per_cell)
    cutoff = int(np.max(np.abs(gvecs)))
    if m < 2 * cutoff + 1:
        raise ValueError(f"points_per_cell {m} too small for cutoff {cutoff}")
    grid = np.zeros((m, m), dtype=complex)
    np.add.at(grid, (gvecs[:, 0] % m, gvecs[:, 1] % m), coeffs)
    # exp(i <G_g, x>) = exp(2 pi i (g1 i + g2 j) / M)
    return np.fft.ifft2(grid) * m * m


def ground_state(pot: PotentialSpec, lat: Lattice, cutoff: int, points_per_cell: int | None = None):
    """Positive ``theta=0`` ground state on one cell.

    Returns ``(lambda0, coeffs, u)`` where ``u`` is the real, phase-fixed,
    L2(torus)-normalized ground state sampled on an ``M x M`` grid of the
    cell spanned by ``e1, e2`` (origin at index ``(0, 0)``).
    """
    w, v = fiber_eigensystem(np.zeros(2), pot, lat, cutoff, 2)
    gs = plane_wave_indices(cutoff)
    m = points_per_cell or max(64, 4 * (2 * cutoff + 1))
    u = synthesize_periodic(v[:, 0], gs, lat, m) / np.sqrt(lat.cell_area)
    k = np.argmax(np.abs(u))
    phase = u.flat[k] / abs(u.flat[k])
    u = u / phase
    coeffs = v[:, 0] / phase
    if np.max(np.abs(u.imag)) > 1e-8 * np.max(np.abs(u)):
        raise SignChangeInGroundState("ground state is not real after phase fixing")
    return float(w[0]), coeffs, u.real


def ground_state_bound_check(pot: PotentialSpec, lat: Lattice, bs: BandStructure, cutoff: int):
    """Check ``lambda0(theta) - lambda0(0) >= C |theta|^2`` on the band grid.

    ``C = (min u0 / max u0)^2`` with ``u0`` the positive periodic ground state.

    Returns ``(C, holds, margin)`` where ``margin`` is the smallest value of
    ``lambda0(theta) - lambda0(0) - C |theta|^2`` over the grid.
    """
    lam0, _, u = ground_state(pot, lat, cutoff)
    umax = float(np.max(u))
    umin = float(np.min(u))
    if umin <= 0:
        raise SignChangeInGroundState(f"ground state changes sign (min/max = {umin / umax:.3e}); increase cutoff")
    c = (umin / umax) ** 2
    th = lat.reduce_to_bz(bs.thetas)
    excess = bs.bands[..., 0] - lam0 - c * np.sum(th**2, axis=-1)
    margin = float(np.min(excess))
    scale = max(1.0, float(np.max(np.abs(bs.bands[..., 0]))))
    return c, bool(margin >= -1e-10 * scale), margin


# ---------------------------------------------------------------------------
# gauge fixing


def trial_orbital_center(pot: PotentialSpec, lat: Lattice, cutoff: int) -> np.ndarray:
    """Position of the maximum of the positive ground state (a potential well).

    Ties (for instance a constant potential) resolve to the candidate closest
    to the origin, taken over the cell centered at the origin.
    """
    _, _, u = ground_state(pot, lat, cutoff)
    m = u.shape[0]
    s = (np.arange(m) / m + 0.5) % 1.0 - 0.5
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    x = np.stack([s1, s2], axis=-1) @ lat.basis
    cand = u >= np.max(u) * (1 - 1e-9)
    xs = x[cand]
    return xs[np.argmin(np.linalg.norm(xs, axis=1))]


def gauge_reference(theta, gvecs, lat: Lattice, center, width) -> np.ndarray:
    """Plane-wave coefficients of a Gaussian trial orbital seen from fiber ``theta``.

    The overlap ``ref^H c`` equals (up to a positive constant) the inner
    product of the Bloch function with a Gaussian of width ``width`` centered
    at ``center``; it is invariant under ``theta -> theta + G`` combined with
    the matching index shift, so the fixed gauge is periodic in ``theta``.
    """
    k = np.asarray(theta, dtype=float) + lat.dual_vector(gvecs)
    return np.exp(-1j * (k @ np.asarray(center, dtype=float))) * np.exp(-0.5 * width**2 * np.sum(k**2, axis=1))


def gauge_fix_vector(theta, vec, gvecs, lat: Lattice, center, width, tol: float = 1e-6):
    ref = gauge_reference(theta, gvecs, lat, center, width)
    ov = np.vdot(ref, vec)
    if abs(ov) < tol * np.linalg.norm(ref) * np.linalg.norm(vec):
        raise GaugeReferenceDegenerate(f"overlap with the trial orbital vanishes at theta={theta}")
    return vec * (np.conj(ov) / abs(ov))


def fix_gauge(
    bs: BandStructure,
    *,
    center=None,
    width: float | None = None,
    transport_fallback: bool = False,
) -> BandStructure:
    """Rephase the band-0 vectors so their overlap with a localized trial orbital is positive.

    ``center`` defaults to the maximum of the positive ground state and
    ``width`` to a fifth of the lattice constant.  With
    ``transport_fallback=True`` points where that overlap vanishes are fixed
    by maximizing the overlap with an already fixed grid neighbour
    (parallel transport along grid rows) instead of raising.
    """
    if bs.vectors is None:
        raise ValueError("band structure carries no eigenvectors")
    lat = bs.lattice
    if center is None:
        if bs.potential is None:
            center = np.zeros(2)
        else:
            center = trial_orbital_center(bs.potential, lat, bs.cutoff)
    center = np.asarray(center, dtype=float)
    if width is None:
        width = 0.2 * lat.lattice_constant
    n = bs.grid_n
    out = np.empty_like(bs.vectors)
    pending = []
    for i in range(n):
        for j in range(n):
            try:
                out[i, j] = gauge_fix_vector(bs.thetas[i, j], bs.vectors[i, j], bs.gvecs, lat, center, width)
            except GaugeReferenceDegenerate:
                if not transport_fallback:
                    raise
                pending.append((i, j))
    for i, j in pending:
        # neighbours along the row first, then the column; fixed points only
        for di, dj in ((0, -1), (-1, 0), (0, 1), (1, 0)):
            ni, nj = (i + di) % n, (j + dj) % n
            if (ni, nj) not in pending:
                ov = np.vdot(out[ni, nj], bs.vectors[i, j])
                out[i, j] = bs.vectors[i, j] * (np.conj(ov) / abs(ov))
                break
        else:
            raise GaugeReferenceDegenerate("no gauge-fixed neighbour available for transport")
    gauge = {"center": center.tolist(), "width": float(width)}
    return replace(bs, vectors=out, gauge=gauge)


# ---------------------------------------------------------------------------
# one-dimensional oracle


def bands_1d(theta: float, coeffs: Mapping[int, complex], period: float, cutoff: int, nbands: int) -> np.ndarray:
    """Lowest eigenvalues of ``-d^2/dx^2 + V(x)`` on a ``period``-periodic line.

    Independent plane-wave solver used to check separable 2D potentials.
    """
    k0 = 2 * np.pi / period
    n = np.arange(-cutoff, cutoff + 1)
    mat = np.diag((theta + k0 * n) ** 2).astype(complex)
    for g, v in coeffs.items():
        mat += v * np.eye(len(n), k=-g)
    return np.linalg.eigvalsh(mat)[:nbands]


