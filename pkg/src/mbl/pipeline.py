"""Stage orchestration: bands -> wannier -> hoppings -> effective -> analyze, and sweeps.

Each stage has a cache entry under ``<out>/cache/<stage>/<hash>`` keyed by the
content hash of the config blocks it depends on.  Report payloads contain no
timestamps or cache information; those live in ``manifest.json`` only.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bloch import (
    BandStructure,
    Hypothesis,
    bz_grid,
    PotentialSpec,
    classify_hypothesis,
    fix_gauge,
    solve_bands,
)
from .config import RunConfig, hash_payload
from .effective import (
    Ball,
    Torus,
    build_effective_matrix,
    commensurate_torus_size,
    default_ball_radius,
    landau_prediction,
    landau_spacing,
    quasi_bloch,
)
from .errors import CrossingBandRefused, IslandCountMismatch, MBLError, StageFailure
from .lattice import enumerate_sites, make_lattice
from .phase import FieldSpec
from .report import emit_report, write_csv, write_json
from .spectral import (
    SweepSettings,
    bulk_filter,
    detect_islands,
    eigens,
    landau_cluster_check,
    scaling_sweep,
)
from .wannier import (
    HoppingSet,
    hoppings_from_band,
    load_wannier,
    magnetic_gramian,
    magnetic_hoppings,
    save_wannier,
    synthesize_wannier,
    wannier_overlaps,
)

SUBCOMMANDS = ("bands", "wannier", "effective", "analyze", "sweep")

# config blocks each stage depends on
_DEPENDS = {
    "bands": ("lattice", "potential", "solver"),
    "wannier": ("lattice", "potential", "solver", "wannier"),
    "hoppings": ("lattice", "potential", "solver", "wannier", "effective", "field"),
}


@dataclass
class RunContext:
    config: RunConfig
    out: Path
    use_cache: bool = True
    threads: int = 1
    timings: dict = field(default_factory=dict)
    cache_hits: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)

    def cache_dir(self, stage: str, key: str) -> Path:
        return self.out / "cache" / stage / key


@dataclass(frozen=True)
class RunOutcome:
    exit_code: int
    out: Path
    error: dict | None = None


# ---------------------------------------------------------------------------
# domain objects from the config


def lattice_of(cfg: RunConfig):
    return make_lattice(cfg.lattice["e1"], cfg.lattice["e2"])


def potential_of(cfg: RunConfig) -> PotentialSpec:
    return PotentialSpec.from_records(cfg.potential)


def field_of(cfg: RunConfig) -> FieldSpec:
    return FieldSpec.from_dict(cfg.field)


# ---------------------------------------------------------------------------
# stages


def _timed(ctx: RunContext, stage: str, fn):
    t0 = time.perf_counter()
    try:
        return fn()
    finally:
        ctx.timings[stage] = ctx.timings.get(stage, 0.0) + time.perf_counter() - t0


def stage_bands(ctx: RunContext) -> BandStructure:
    cfg = ctx.config
    lat, pot = lattice_of(cfg), potential_of(cfg)
    key = cfg.content_hash(*_DEPENDS["bands"])
    path = ctx.cache_dir("bands", key) / "bands.npz"
    if ctx.use_cache and path.exists():
        data = np.load(path)
        ctx.cache_hits["bands"] = True
        return BandStructure(
            lattice=lat,
            cutoff=cfg.solver.cutoff,
            grid_n=cfg.solver.gridN,
            offset=0.0,
            thetas=data["thetas"],
            bands=data["bands"],
            gvecs=data["gvecs"],
            vectors=data["vectors"],
            potential=pot,
        )
    ctx.cache_hits["bands"] = False
    bs = _timed(
        ctx,
        "bands",
        lambda: solve_bands(pot, lat, cfg.solver.gridN, cfg.solver.nbands, cfg.solver.cutoff, workers=ctx.threads),
    )
    if ctx.use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name("bands.tmp.npz")
        np.savez(tmp, thetas=bs.thetas, bands=bs.bands, gvecs=bs.gvecs, vectors=bs.vectors)
        tmp.replace(path)
    return bs


def stage_wannier(ctx: RunContext, bs: BandStructure):
    cfg = ctx.config
    if classify_hypothesis(bs) is Hypothesis.CROSSING:
        raise CrossingBandRefused("band 0 touches band 1; the crossing case is not supported")
    key = cfg.content_hash(*_DEPENDS["wannier"])
    d = ctx.cache_dir("wannier", key)
    if ctx.use_cache and (d / "wannier.json").exists():
        w, stored = load_wannier(d)
        if stored == key:
            ctx.cache_hits["wannier"] = True
            return w
    ctx.cache_hits["wannier"] = False

    def run():
        fixed = fix_gauge(bs, transport_fallback=True)
        return synthesize_wannier(fixed, R_w=cfg.wannier.R_w, spacing=cfg.wannier.spacing)

    w = _timed(ctx, "wannier", run)
    if ctx.use_cache:
        save_wannier(w, d, key)
    return w


def stage_hoppings(ctx: RunContext, bs: BandStructure, eps: float | None = None) -> HoppingSet:
    """Band hoppings ``h0`` or magnetic hoppings ``h_eps`` per ``effective.hoppingSource``."""
    cfg = ctx.config
    lat = lattice_of(cfg)
    if classify_hypothesis(bs) is Hypothesis.CROSSING:
        raise CrossingBandRefused("band 0 touches band 1; the crossing case is not supported")
    eps = cfg.effective.epsilon if eps is None else eps
    if cfg.effective.hoppingSource == "band":
        return hoppings_from_band(bs.band(0), lat, cfg.wannier.truncTol, offset=bs.offset)
    slice_ = {"deps": cfg.slice(*_DEPENDS["hoppings"]), "epsilon": eps}
    key = hash_payload(slice_)
    path = ctx.cache_dir("hoppings", key) / "hoppings.json"
    if ctx.use_cache and path.exists():
        ctx.cache_hits[f"hoppings[{eps!r}]"] = True
        return HoppingSet.from_records(json.loads(path.read_text()))
    ctx.cache_hits[f"hoppings[{eps!r}]"] = False
    w = stage_wannier(ctx, bs)

    def run():
        a = lat.lattice_constant
        hop_r = cfg.effective.hopRadius * a
        sites = enumerate_sites(lat, hop_r + 2 * a)
        gram = magnetic_gramian(w, sites, eps, 0.0, field_of(cfg))
        return magnetic_hoppings(w, gram, potential_of(cfg), lat, eps, field_of(cfg), hop_radius=hop_r)

    h = _timed(ctx, "hoppings", run)
    if ctx.use_cache:
        write_json(path, h.to_records())
    return h


def geometry_for(cfg: RunConfig, lat, fld: FieldSpec, eps: float, kappa: float):
    g = cfg.effective.geometry
    if g is None:
        if kappa == 0.0:
            return Torus(commensurate_torus_size(lat, fld, eps) * cfg.effective.torusMultiple)
        return Ball(default_ball_radius(lat, fld, eps))
    if g["kind"] == "Torus":
        return Torus(g["q"])
    return Ball(g["radius"])


def _harmonic_dict(hd) -> dict:
    return {
        "thetaMin": hd.theta_min,
        "quadForm": hd.quad_form,
        "m1": hd.m1,
        "m2": hd.m2,
        "m": hd.m,
        "minValue": hd.min_value,
    }


def stage_effective(ctx: RunContext, bs: BandStructure):
    cfg = ctx.config
    lat, fld = lattice_of(cfg), field_of(cfg)
    eps, kappa = cfg.effective.epsilon, cfg.effective.kappa
    h = stage_hoppings(ctx, bs, eps)
    qb = quasi_bloch(h, lat, 64)
    geom = geometry_for(cfg, lat, fld, eps, kappa)
    pm = _timed(ctx, "effective", lambda: build_effective_matrix(h, lat, fld, eps, kappa, geom))
    return h, qb.harmonic, pm


def stage_analyze(ctx: RunContext, bs: BandStructure):
    cfg = ctx.config
    h, hd, pm = stage_effective(ctx, bs)
    fld = field_of(cfg)
    eps = cfg.effective.epsilon
    pred = landau_prediction(hd, fld.B0, eps, cfg.analysis.landauN)
    spacing = landau_spacing(hd, fld.B0, eps)

    def run():
        if isinstance(pm.geometry, Torus):
            return pm.spectrum(), 0
        w, v = eigens(pm.M, vectors=True)
        e, keep = bulk_filter(
            w, v, pm.positions, pm.geometry.radius, cfg.analysis.boundaryFrac, cfg.analysis.weightTol,
            matrix=pm.M, degenerate_tol=1e-9 * spacing,
        )
        return np.sort(e), int((~keep).sum())

    eigs, removed = _timed(ctx, "analyze", run)
    if cfg.analysis.window is not None:
        window = tuple(cfg.analysis.window)
    else:
        window = (-math.inf, pred[-1] + 0.5 * spacing)
    rep = detect_islands(eigs, cfg.analysis.gapThresholdFrac * spacing, window, removed)
    try:
        dev = landau_cluster_check(rep, pred, spacing).tolist()
        landau_err = None
    except IslandCountMismatch as exc:
        dev, landau_err = [], exc.kind
    return h, hd, pm, eigs, rep, pred, spacing, dev, landau_err


# ---------------------------------------------------------------------------
# report assembly


def _meta(ctx: RunContext, sub: str) -> dict:
    return {"subcommand": sub, "configHash": ctx.config.content_hash(), "toolkitVersion": __version__}


def _run_bands(ctx: RunContext) -> dict:
    bs = stage_bands(ctx)
    lat = lattice_of(ctx.config)
    hyp = classify_hypothesis(bs)
    band0 = bs.band(0)
    harmonic = None
    if hyp is not Hypothesis.CROSSING:
        h = hoppings_from_band(band0, lat, ctx.config.wannier.truncTol, offset=bs.offset)
        harmonic = _harmonic_dict(quasi_bloch(h, lat, 64).harmonic)
    n = bs.grid_n
    thetas, tcoords = bz_grid(lat, n, bs.offset)
    payload = {
        "meta": _meta(ctx, "bands"),
        "hypothesis": hyp.value,
        "gridN": n,
        "nbands": bs.nbands,
        "cutoff": bs.cutoff,
        "bandMin": bs.bands.min(axis=(0, 1)).tolist(),
        "bandMax": bs.bands.max(axis=(0, 1)).tolist(),
        "harmonic": harmonic,
    }
    write_json(ctx.out / "bands.json", payload)
    cols = [tcoords[..., 0].ravel(), tcoords[..., 1].ravel(), thetas[..., 0].ravel(), thetas[..., 1].ravel()]
    cols += [bs.bands[..., j].ravel() for j in range(bs.nbands)]
    header = ["t1", "t2", "theta1", "theta2"] + [f"lambda{j}" for j in range(bs.nbands)]
    write_csv(ctx.out / "bands.csv", header, cols)
    write_csv(ctx.out / "spectra.csv", [f"lambda{j}" for j in range(bs.nbands)], [bs.bands[..., j].ravel() for j in range(bs.nbands)])
    return emit_report({"meta": payload["meta"], "bands": {k: payload[k] for k in ("hypothesis", "bandMin", "bandMax", "harmonic")}})


def _run_wannier(ctx: RunContext) -> dict:
    bs = stage_bands(ctx)
    w = stage_wannier(ctx, bs)
    lat = lattice_of(ctx.config)
    gammas = [(0, 0), (1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2)]
    ov = wannier_overlaps(w, gammas)
    defect = float(max(abs(ov[0] - 1.0), *(abs(v) for v in ov[1:])))
    h = hoppings_from_band(bs.band(0), lat, ctx.config.wannier.truncTol, offset=bs.offset)
    section = {
        "decayRate": w.decay_rate,
        "fitPrefactor": w.fit_prefactor,
        "fitResidual": w.fit_residual,
        "norm": w.norm(),
        "orthonormalityDefect": defect,
        "hoppings": [{"gamma": list(g), "re": complex(v).real, "im": complex(v).imag} for g, v in sorted(h.entries.items())],
    }
    return emit_report({"meta": _meta(ctx, "wannier"), "wannier": section})


def _run_effective(ctx: RunContext) -> dict:
    bs = stage_bands(ctx)
    h, hd, pm = stage_effective(ctx, bs)
    pm.to_coordinate_csv(ctx.out / "matrix.csv")
    fld = field_of(ctx.config)
    eps = ctx.config.effective.epsilon
    section = {
        "geometry": {"kind": pm.geometry.kind, **({"q": pm.geometry.q} if isinstance(pm.geometry, Torus) else {"radius": pm.geometry.radius})},
        "dim": pm.dim,
        "hermitianDefect": pm.hermitian_defect(),
        "harmonic": _harmonic_dict(hd),
    }
    landau = {
        "predicted": landau_prediction(hd, fld.B0, eps, ctx.config.analysis.landauN),
        "spacing": landau_spacing(hd, fld.B0, eps),
        "deviations": [],
    }
    return emit_report({"meta": _meta(ctx, "effective"), "landau": landau, "effective": section})


def _run_analyze(ctx: RunContext) -> dict:
    bs = stage_bands(ctx)
    h, hd, pm, eigs, rep, pred, spacing, dev, landau_err = stage_analyze(ctx, bs)
    write_csv(ctx.out / "spectra.csv", [f"eps={pm.epsilon:.17g};kappa={pm.kappa:.17g};{pm.geometry.kind}"], [eigs])
    d = rep.to_dict()
    landau = {"predicted": pred, "spacing": spacing, "deviations": dev}
    if landau_err:
        landau["error"] = landau_err
    return emit_report(
        {
            "meta": _meta(ctx, "analyze"),
            "islands": d["islands"],
            "gaps": d["gaps"],
            "landau": landau,
            "window": d["window"],
            "filteredOut": d["filteredOut"],
            "harmonic": _harmonic_dict(hd),
        }
    )


def _run_sweep(ctx: RunContext) -> dict:
    cfg = ctx.config
    if not cfg.sweep.epsilon and not cfg.sweep.kappa:
        raise StageFailure("sweep block lists no epsilon and no kappa values")
    bs = stage_bands(ctx)
    lat, fld = lattice_of(cfg), field_of(cfg)
    if cfg.effective.hoppingSource == "band":
        h = stage_hoppings(ctx, bs)
    else:
        # magnetic hoppings are computed up front so sweep workers only read them
        eps_all = sorted(set(cfg.sweep.epsilon) | ({cfg.sweep.kappaEpsilon} if cfg.sweep.kappaEpsilon else set()))
        if cfg.sweep.kappa and cfg.sweep.kappaEpsilon is None and cfg.sweep.epsilon:
            eps_all = sorted(set(eps_all) | {float(np.median(cfg.sweep.epsilon))})
        table = {e: stage_hoppings(ctx, bs, e) for e in eps_all}
        h = table.__getitem__
    st = SweepSettings(
        landau_n=cfg.analysis.landauN,
        gap_threshold_frac=cfg.analysis.gapThresholdFrac,
        boundary_frac=cfg.analysis.boundaryFrac,
        weight_tol=cfg.analysis.weightTol,
        torus_multiple=cfg.effective.torusMultiple,
        kappa_epsilon=cfg.sweep.kappaEpsilon,
        workers=ctx.threads,
    )
    res = _timed(ctx, "sweep", lambda: scaling_sweep(h, lat, fld, cfg.sweep.epsilon, cfg.sweep.kappa, st))
    ctx.cells = [{"cell": c.label, "status": c.status, **({"errorKind": c.error_kind} if c.error_kind else {})} for c in res.cells]
    ok = [c for c in res.cells if c.status == "ok"]
    write_csv(ctx.out / "spectra.csv", [c.label for c in ok], [c.eigenvalues for c in ok])
    d = res.to_dict()
    first = next((c for c in ok if c.report is not None), None)
    return emit_report(
        {
            "meta": _meta(ctx, "sweep"),
            "islands": first.report.to_dict()["islands"] if first else [],
            "gaps": first.report.to_dict()["gaps"] if first else [],
            "landau": {"predicted": first.predicted if first else [], "deviations": []},
            "fits": d["fits"],
            "impliedC2": d["impliedC2"],
            "cells": d["cells"],
        }
    )


_RUNNERS = {
    "bands": _run_bands,
    "wannier": _run_wannier,
    "effective": _run_effective,
    "analyze": _run_analyze,
    "sweep": _run_sweep,
}


def _write_manifest(ctx: RunContext, sub: str, status: str, error: dict | None):
    manifest = {
        "configHash": ctx.config.content_hash(),
        "toolkitVersion": __version__,
        "subcommand": sub,
        "status": status,
        "finishedAt": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "threads": ctx.threads,
        "stageTimings": dict(sorted(ctx.timings.items())),
        "cacheHits": dict(sorted(ctx.cache_hits.items())),
        "cells": ctx.cells,
    }
    if error:
        manifest["error"] = error
    write_json(ctx.out / "manifest.json", manifest)


def run_pipeline(cfg: RunConfig, subcommand: str, *, out=None, use_cache: bool | None = None, threads: int = 1) -> RunOutcome:
    """Run ``subcommand`` and its prerequisites, writing reports and the manifest.

    Returns the exit code: 0 on success, 1 on a stage failure (including a
    refused crossing band).  The error record is also written to
    ``error.json`` and ``manifest.json``.
    """
    if subcommand not in _RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    out = Path(out if out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, out, cfg.cache if use_cache is None else use_cache, max(1, int(threads)))
    try:
        report = _RUNNERS[subcommand](ctx)
    except MBLError as exc:
        error = {"kind": exc.kind, "message": str(exc), "stage": subcommand}
        if subcommand == "sweep":
            ctx.cells.append({"cell": "sweep", "status": "failed", "errorKind": exc.kind})
        write_json(out / "error.json", error)
        _write_manifest(ctx, subcommand, "failed", error)
        return RunOutcome(1, out, error)
    write_json(out / "report.json", report)
    stale = out / "error.json"
    if stale.exists():
        stale.unlink()
    _write_manifest(ctx, subcommand, "ok", None)
    return RunOutcome(0, out, None)


