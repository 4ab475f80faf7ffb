"""Eigensolvers, island/gap detection, bulk filtering and scaling fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ClustersUnresolvable,
    ConvergenceFailure,
    EmptyWindow,
    IslandCountMismatch,
)

# ---------------------------------------------------------------------------
# eigensolvers


def eigens(M, k: int | None = None, *, vectors: bool = False, dense_limit: int = 2500, tol: float = 0.0):
    """Ascending eigenvalues (and optionally vectors as columns) of a Hermitian matrix.

    ``k=None`` returns everything.  For ``k`` smaller than the dimension of a
    matrix above ``dense_limit`` the ``k`` smallest are found by shift-invert
    Lanczos at a shift below the spectrum (Gershgorin bound).

    Raises
    ------
    ConvergenceFailure
        If the iterative solver does not converge.
    """
    n = M.shape[0]
    if k is None or k >= n or n <= dense_limit:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M)
        if k is None or k >= n:
            out = np.linalg.eigh(dense) if vectors else (np.linalg.eigvalsh(dense), None)
        else:
            res = sla.eigh(dense, subset_by_index=[0, k - 1], eigvals_only=not vectors, driver="evr")
            out = res if vectors else (res, None)
        w, v = out
        return (w, v) if vectors else w
    A = sp.csc_matrix(M) if sp.issparse(M) else np.asarray(M)
    if sp.issparse(A):
        absrow = np.asarray(abs(A).sum(axis=1)).ravel()
        diag = A.diagonal().real
    else:
        absrow = np.abs(A).sum(axis=1)
        diag = np.diag(A).real
    sigma = float(np.min(2 * diag - absrow)) - 1e-3 * max(1.0, float(np.max(absrow)))
    try:
        w, v = spla.eigsh(A, k=k, sigma=sigma, which="LM", tol=tol)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(w)
    w = w[order]
    v = v[:, order]
    return (w, v) if vectors else w


# ---------------------------------------------------------------------------
# islands and gaps


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    islands: list[tuple[float, float]]
    gaps: list[tuple[float, float]]
    window: tuple[float, float]
    filtered_out: int = 0

    @property
    def centers(self) -> list[float]:
        return [0.5 * (a + b) for a, b in self.islands]

    @property
    def widths(self) -> list[float]:
        return [b - a for a, b in self.islands]

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "filteredOut": int(self.filtered_out),
            "islands": [{"a": a, "b": b, "center": 0.5 * (a + b), "width": b - a} for a, b in self.islands],
            "gaps": [{"lo": lo, "hi": hi, "length": hi - lo} for lo, hi in self.gaps],
        }


def detect_islands(eigs, gap_threshold: float, window=None, filtered_out: int = 0) -> SpectrumReport:
    """Cluster sorted eigenvalues; a new island starts where the spacing exceeds ``gap_threshold``.

    Raises
    ------
    EmptyWindow
        If no eigenvalue lies in ``window``.
    """
    if not gap_threshold > 0:
        raise ValueError("gap_threshold must be positive")
    eigs = np.sort(np.asarray(eigs, dtype=float))
    if window is None:
        window = (-math.inf, math.inf)
    lo, hi = window
    sel = eigs[(eigs >= lo) & (eigs <= hi)]
    if sel.size == 0:
        raise EmptyWindow(f"no eigenvalue in [{lo}, {hi}]")
    breaks = np.flatnonzero(np.diff(sel) > gap_threshold)
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [sel.size - 1]])
    islands = [(float(sel[s]), float(sel[e])) for s, e in zip(starts, ends)]
    gaps = [(islands[i][1], islands[i + 1][0]) for i in range(len(islands) - 1)]
    return SpectrumReport(sel, islands, gaps, (float(lo), float(hi)), int(filtered_out))


def boundary_weights(vecs: np.ndarray, positions: np.ndarray, radius: float, boundary_frac: float) -> np.ndarray:
    """Squared amplitude of each column on sites with ``|x| > (1 - boundary_frac) radius``."""
    outer = np.linalg.norm(positions, axis=1) > (1.0 - boundary_frac) * radius
    dens = np.abs(vecs) ** 2
    return dens[outer].sum(axis=0) / dens.sum(axis=0)


def bulk_filter(
    eigs,
    vecs,
    positions,
    radius: float,
    boundary_frac: float = 0.15,
    weight_tol: float = 0.1,
    *,
    matrix=None,
    degenerate_tol: float | None = None,
):
    """Keep states whose weight on the outer annulus is at most ``weight_tol``.

    Eigenvectors of a numerically degenerate cluster are an arbitrary basis
    of its eigenspace, so with ``degenerate_tol`` consecutive eigenvalues
    closer than that are grouped and each group is rotated to diagonalize the
    outer-annulus weight; the retained energies of a rotated group are the
    Rayleigh quotients with ``matrix`` (within the group's spread of its
    eigenvalues).

    Returns ``(retained eigenvalues, keep mask)``; the mask refers to the
    (possibly rotated) basis in the original order.
    """
    eigs = np.asarray(eigs, dtype=float)
    vecs = np.asarray(vecs)
    positions = np.asarray(positions)
    if degenerate_tol is None:
        w = boundary_weights(vecs, positions, radius, boundary_frac)
        keep = w <= weight_tol
        return eigs[keep], keep
    if matrix is None:
        raise ValueError("matrix is required to rotate degenerate groups")
    outer = np.linalg.norm(positions, axis=1) > (1.0 - boundary_frac) * radius
    order = np.argsort(eigs)
    energies = eigs.copy()
    weights = np.empty(eigs.size)
    breaks = np.flatnonzero(np.diff(eigs[order]) > degenerate_tol) + 1
    for grp in np.split(order, breaks):
        v = vecs[:, grp]
        if grp.size == 1:
            weights[grp] = np.sum(np.abs(v[outer]) ** 2) / np.sum(np.abs(v) ** 2)
            continue
        vo = v[outer]
        wmat = vo.conj().T @ vo
        wv, rot = np.linalg.eigh(0.5 * (wmat + wmat.conj().T))
        u = v @ rot
        weights[grp] = np.clip(wv, 0.0, None)
        mu = matrix @ u
        energies[grp] = np.real(np.sum(u.conj() * mu, axis=0)) / np.real(np.sum(u.conj() * u, axis=0))
    keep = weights <= weight_tol
    return energies[keep], keep


def hausdorff(A, B, window=None) -> float:
    """Hausdorff distance of ``A`` and ``B`` restricted to ``window``.

    Returns 0 when both restrictions are empty and ``inf`` (the sentinel) when
    exactly one is.
    """
    A = np.sort(np.asarray(A, dtype=float).ravel())
    B = np.sort(np.asarray(B, dtype=float).ravel())
    if window is not None:
        lo, hi = window
        A = A[(A >= lo) & (A <= hi)]
        B = B[(B >= lo) & (B <= hi)]
    if A.size == 0 and B.size == 0:
        return 0.0
    if A.size == 0 or B.size == 0:
        return math.inf
    return max(_directed(A, B), _directed(B, A))


def _directed(A: np.ndarray, B: np.ndarray) -> float:
    """``max_a min_b |a - b|`` for sorted ``B``."""
    pos = np.searchsorted(B, A)
    left = B[np.clip(pos - 1, 0, B.size - 1)]
    right = B[np.clip(pos, 0, B.size - 1)]
    return float(np.max(np.minimum(np.abs(A - left), np.abs(A - right))))


def landau_cluster_check(report: SpectrumReport, predicted, spacing: float) -> np.ndarray:
    """``|midpoint(island_n) - predicted_n| / spacing`` for the bottom islands.

    Raises
    ------
    IslandCountMismatch
        If fewer islands than predicted centers were found.
    """
    predicted = np.asarray(predicted, dtype=float)
    if len(report.islands) < predicted.size:
        raise IslandCountMismatch(f"{len(report.islands)} islands for {predicted.size} predicted levels")
    mids = np.array(report.centers[: predicted.size])
    return np.abs(mids - predicted) / spacing


# ---------------------------------------------------------------------------
# scaling fits


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares fit ``y = prefactor * x**exponent`` on log-log data."""

    law: str
    x: np.ndarray
    y: np.ndarray
    exponent: float
    prefactor: float
    residual: float

    def to_dict(self) -> dict:
        return {
            "law": self.law,
            "x": [float(v) for v in self.x],
            "y": [float(v) for v in self.y],
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "residual": self.residual,
        }


def fit_power_law(x, y, law: str = "") -> ScalingFit:
    """Fit ``log y = log c + p log x``; ``residual`` is the RMS of the log residuals."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return ScalingFit(law, x, y, math.nan, math.nan, math.nan)
    lx, ly = np.log(x[ok]), np.log(y[ok])
    p, c = np.polyfit(lx, ly, 1)
    res = ly - (c + p * lx)
    return ScalingFit(law, x, y, float(p), float(np.exp(c)), float(np.sqrt(np.mean(res**2))))


# ---------------------------------------------------------------------------
# perturbed Landau levels


@dataclass(frozen=True)
class ClusterMeasurement:
    """Bottom clusters of a bulk-filtered spectrum, one per predicted level."""

    centers: np.ndarray
    widths: np.ndarray
    counts: np.ndarray
    retained: np.ndarray
    filtered_out: int


def measure_clusters(eigs, predicted, spacing: float, half_width: float = 0.25) -> ClusterMeasurement:
    """Group eigenvalues within ``half_width * spacing`` of each predicted center.

    Raises
    ------
    ClustersUnresolvable
        If a level captures no eigenvalue or eigenvalues fall between the
        capture windows below the top level (islands have merged or drifted).
    """
    eigs = np.sort(np.asarray(eigs, dtype=float))
    predicted = np.asarray(predicted, dtype=float)
    centers, widths, counts = [], [], []
    assigned = np.zeros(eigs.size, dtype=bool)
    for c in predicted:
        sel = np.abs(eigs - c) <= half_width * spacing
        if not np.any(sel):
            raise ClustersUnresolvable(f"no eigenvalue within {half_width} spacing of level {c:.6g}")
        assigned |= sel
        lo, hi = eigs[sel].min(), eigs[sel].max()
        centers.append(0.5 * (lo + hi))
        widths.append(hi - lo)
        counts.append(int(sel.sum()))
    top = predicted.max() + half_width * spacing
    stray = (~assigned) & (eigs <= top)
    if np.any(stray):
        raise ClustersUnresolvable(f"{int(stray.sum())} eigenvalues lie between the predicted levels")
    return ClusterMeasurement(np.array(centers), np.array(widths), np.array(counts), eigs, 0)


@dataclass(frozen=True)
class PerturbedLandauResult:
    betas: np.ndarray
    widths: np.ndarray  # (n_beta, n_levels)
    centers: np.ndarray  # (n_beta, n_levels)
    predicted: np.ndarray
    spacing: float
    fit: ScalingFit
    center_drift: float = field(default=math.nan)


def perturbed_landau_check(
    spectra_by_beta,
    predicted,
    spacing: float,
    *,
    half_width: float = 0.25,
) -> PerturbedLandauResult:
    """Fit the width of the bottom clusters against the profile amplitude ``beta``.

    ``spectra_by_beta`` maps ``beta`` to bulk-filtered eigenvalues.  The fit
    uses the widest cluster per ``beta``; ``beta = 0`` entries are reported
    but excluded from the log-log fit.
    """
    betas = np.array(sorted(spectra_by_beta), dtype=float)
    widths, centers = [], []
    for b in betas:
        cm = measure_clusters(spectra_by_beta[b], predicted, spacing, half_width)
        widths.append(cm.widths)
        centers.append(cm.centers)
    widths = np.array(widths)
    centers = np.array(centers)
    pos = betas > 0
    fit = fit_power_law(betas[pos], widths[pos].max(axis=1), "cluster width vs beta")
    drift = float(np.max(np.abs(centers - np.asarray(predicted)[None, :])) / spacing)
    return PerturbedLandauResult(betas, widths, centers, np.asarray(predicted, dtype=float), spacing, fit, drift)


# ---------------------------------------------------------------------------
# (eps, kappa) scaling sweep


@dataclass(frozen=True)
class SweepSettings:
    """Analysis knobs of :func:`scaling_sweep`.

    ``kappa_epsilon`` is the fixed ``eps`` of the kappa sweep (default: the
    median of the eps list).  Torus sides are ``torus_multiple`` times the
    smallest commensurate size, so each block samples several magnetic
    Bloch momenta and island widths are resolved.
    """

    landau_n: int = 2
    gap_threshold_frac: float = 0.25
    boundary_frac: float = 0.15
    weight_tol: float = 1e-8
    degenerate_tol_frac: float = 1e-9
    torus_multiple: int = 2
    ball_lengths: float = 10.0
    kappa_epsilon: float | None = None
    workers: int = 1


@dataclass
class SweepCell:
    epsilon: float
    kappa: float
    geometry: str
    status: str = "ok"
    error_kind: str | None = None
    error: str | None = None
    eigenvalues: np.ndarray | None = None
    report: SpectrumReport | None = None
    predicted: list[float] | None = None
    spacing: float = math.nan
    min_gap: float = math.nan
    max_width: float = math.nan
    hausdorff: float = math.nan

    @property
    def label(self) -> str:
        return f"eps={self.epsilon:.17g};kappa={self.kappa:.17g};{self.geometry}"

    def to_dict(self) -> dict:
        out = {
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "geometry": self.geometry,
            "status": self.status,
        }
        if self.status != "ok":
            out["errorKind"] = self.error_kind
            out["error"] = self.error
            return out
        out.update(self.report.to_dict() if self.report is not None else {"islands": [], "gaps": []})
        out["landau"] = {
            "predicted": list(self.predicted or []),
            "spacing": self.spacing,
        }
        out["minGap"] = self.min_gap
        out["maxWidth"] = self.max_width
        out["hausdorff"] = self.hausdorff
        return out


@dataclass
class SweepResult:
    cells: list[SweepCell]
    fits: dict[str, ScalingFit]
    implied_c2: dict[float, float]

    def to_dict(self) -> dict:
        return {
            "cells": [c.to_dict() for c in self.cells],
            "fits": [self.fits[k].to_dict() for k in sorted(self.fits)],
            "impliedC2": [{"epsilon": e, "C2": c} for e, c in sorted(self.implied_c2.items())],
        }


def _hoppings_for(h, eps):
    return h(eps) if callable(h) else h


def _torus_cell(h, lat, fld, eps, st: SweepSettings) -> SweepCell:
    from .effective import Torus, build_effective_matrix, commensurate_torus_size, landau_prediction, landau_spacing, quasi_bloch

    hop = _hoppings_for(h, eps)
    q = commensurate_torus_size(lat, fld, eps) * st.torus_multiple
    cell = SweepCell(float(eps), 0.0, f"Torus({q})")
    hd = quasi_bloch(hop, lat, 64).harmonic
    pred = landau_prediction(hd, fld.B0, eps, st.landau_n)
    sp_ = landau_spacing(hd, fld.B0, eps)
    eigs = build_effective_matrix(hop, lat, fld, eps, 0.0, Torus(q)).spectrum()
    win = (-math.inf, pred[-1] + 0.5 * sp_)
    rep = detect_islands(eigs, st.gap_threshold_frac * sp_, win)
    landau_cluster_check(rep, pred, sp_)
    bottom = rep.islands[: len(pred)]
    cell.eigenvalues = eigs
    cell.report = rep
    cell.predicted = [float(p) for p in pred]
    cell.spacing = float(sp_)
    cell.max_width = float(max(b - a for a, b in bottom))
    cell.min_gap = float(min(rep.islands[i + 1][0] - rep.islands[i][1] for i in range(len(pred) - 1))) if len(pred) > 1 else math.nan
    return cell


def _ball_cell(h, lat, fld, eps, kappa, st: SweepSettings) -> SweepCell:
    from .effective import Ball, build_effective_matrix, default_ball_radius, landau_prediction, landau_spacing, quasi_bloch

    hop = _hoppings_for(h, eps)
    radius = default_ball_radius(lat, fld, eps, st.ball_lengths)
    cell = SweepCell(float(eps), float(kappa), f"Ball({radius:.17g})")
    hd = quasi_bloch(hop, lat, 64).harmonic
    pred = landau_prediction(hd, fld.B0, eps, st.landau_n)
    sp_ = landau_spacing(hd, fld.B0, eps)
    pm = build_effective_matrix(hop, lat, fld, eps, kappa, Ball(radius))
    w, v = eigens(pm.M, vectors=True)
    e, keep = bulk_filter(
        w, v, pm.positions, radius, st.boundary_frac, st.weight_tol,
        matrix=pm.M, degenerate_tol=st.degenerate_tol_frac * sp_,
    )
    e = np.sort(e)
    win = (-math.inf, pred[-1] + 0.5 * sp_)
    cm = measure_clusters(e, pred, sp_)
    rep = detect_islands(e, st.gap_threshold_frac * sp_, win, filtered_out=int((~keep).sum()))
    cell.eigenvalues = e
    cell.report = rep
    cell.predicted = [float(p) for p in pred]
    cell.spacing = float(sp_)
    cell.max_width = float(cm.widths.max())
    return cell


def _run_cell(job, h, lat, fld, st):
    kind, eps, kappa = job
    try:
        if kind == "torus":
            return _torus_cell(h, lat, fld, eps, st)
        return _ball_cell(h, lat, fld, eps, kappa, st)
    except Exception as exc:  # recorded per cell, the sweep continues
        geom = "Torus" if kind == "torus" else "Ball"
        return SweepCell(float(eps), float(kappa), geom, "failed", getattr(exc, "kind", type(exc).__name__), str(exc))


def scaling_sweep(h, lat, fld, epsilons, kappas, settings: SweepSettings | None = None) -> SweepResult:
    """Run the island/gap measurements over an eps list and a kappa list.

    ``h`` is a :class:`HoppingSet` or a callable ``eps -> HoppingSet``.

    * kappa = 0 cells on a rational-flux torus, one per eps: minimum gap and
      maximum width of the bottom ``landau_n + 1`` islands;
    * cells on a ball at ``settings.kappa_epsilon`` for every kappa (0
      included as the reference): cluster widths and the Hausdorff distance
      to the kappa = 0 bulk spectrum in the bottom window.

    Fits: ``gap_law`` (min gap vs eps, implied ``C2 = eps / min gap``),
    ``width_kappa0`` (torus width vs eps), ``width_kappa`` and ``hausdorff``
    (vs kappa > 0).  Failed cells are kept with their error kind.
    """
    from concurrent.futures import ThreadPoolExecutor

    st = settings or SweepSettings()
    epsilons = [float(e) for e in epsilons]
    kappas = sorted({float(k) for k in kappas})
    keps = st.kappa_epsilon if st.kappa_epsilon is not None else (float(np.median(epsilons)) if epsilons else None)
    jobs = [("torus", e, 0.0) for e in epsilons]
    if kappas and keps is not None:
        jobs += [("ball", keps, k) for k in sorted(set(kappas) | {0.0})]
    if st.workers > 1:
        with ThreadPoolExecutor(max_workers=st.workers) as pool:
            cells = list(pool.map(lambda j: _run_cell(j, h, lat, fld, st), jobs))
    else:
        cells = [_run_cell(j, h, lat, fld, st) for j in jobs]

    torus = [c for c in cells if c.geometry.startswith("Torus") and c.status == "ok"]
    balls = {c.kappa: c for c in cells if c.geometry.startswith("Ball") and c.status == "ok"}
    ref = balls.get(0.0)
    for c in balls.values():
        if ref is not None and c.report is not None:
            c.hausdorff = hausdorff(c.report.eigenvalues, ref.report.eigenvalues, c.report.window)

    fits: dict[str, ScalingFit] = {}
    implied: dict[float, float] = {}
    if torus:
        ex = [c.epsilon for c in torus]
        fits["gap_law"] = fit_power_law(ex, [c.min_gap for c in torus], "min gap vs eps")
        fits["width_kappa0"] = fit_power_law(ex, [c.max_width for c in torus], "kappa=0 island width vs eps")
        implied = {c.epsilon: c.epsilon / c.min_gap for c in torus if c.min_gap > 0}
    pos = [k for k in sorted(balls) if k > 0]
    if pos:
        fits["width_kappa"] = fit_power_law(pos, [balls[k].max_width for k in pos], "island width vs kappa")
        fits["hausdorff"] = fit_power_law(pos, [balls[k].hausdorff for k in pos], "Hausdorff distance vs kappa")
    return SweepResult(cells, fits, implied)
