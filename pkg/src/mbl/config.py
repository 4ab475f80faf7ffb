"""Run configuration: strict JSON loader and content hashing.

Units: lengths in the units of the lattice vectors, energies in the units of
the potential amplitudes (the kinetic term is ``|p|^2`` without prefactor),
fields as ``B0`` with the small parameter ``epsilon`` applied on top.

Every block rejects unknown keys.  Optional fields left at ``null`` are
filled by the pipeline from the documented defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigInvalid


def _check_keys(d: Any, allowed: set[str], where: str, required: set[str] = frozenset()):
    if not isinstance(d, dict):
        raise ConfigInvalid(f"{where}: expected an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigInvalid(f"{where}: unknown keys {sorted(extra)}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigInvalid(f"{where}: missing keys {sorted(missing)}")


def _num(v, where: str, *, lo=None, hi=None, lo_open=False, integer=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigInvalid(f"{where}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigInvalid(f"{where}: must be finite")
    if integer:
        if int(v) != v:
            raise ConfigInvalid(f"{where}: expected an integer")
        v = int(v)
    else:
        v = float(v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigInvalid(f"{where}: {v} below the allowed range")
    if hi is not None and v > hi:
        raise ConfigInvalid(f"{where}: {v} above the allowed range")
    return v


def _vec2(v, where: str):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigInvalid(f"{where}: expected a 2-vector")
    return [_num(x, where) for x in v]


@dataclass(frozen=True)
class SolverBlock:
    cutoff: int = 8
    gridN: int = 32
    nbands: int = 4


@dataclass(frozen=True)
class WannierBlock:
    R_w: float | None = None  # default 6 lattice constants
    spacing: float | None = None  # default lattice constant / 16
    truncTol: float = 1e-10


@dataclass(frozen=True)
class EffectiveBlock:
    epsilon: float = 0.01
    kappa: float = 0.0
    geometry: dict | None = None  # {"kind": "Torus", "q": int} | {"kind": "Ball", "radius": float}; None = automatic
    hopRadius: float = 3.0  # lattice constants
    hoppingSource: str = "band"  # "band" (h0) or "magnetic" (h_eps)
    torusMultiple: int = 2


@dataclass(frozen=True)
class AnalysisBlock:
    gapThresholdFrac: float = 0.25
    boundaryFrac: float = 0.15
    weightTol: float = 1e-8
    landauN: int = 2
    window: list[float] | None = None


@dataclass(frozen=True)
class SweepBlock:
    epsilon: list[float] = field(default_factory=list)
    kappa: list[float] = field(default_factory=list)
    kappaEpsilon: float | None = None


@dataclass(frozen=True)
class RunConfig:
    lattice: dict
    potential: list[dict]
    field: dict
    solver: SolverBlock = SolverBlock()
    wannier: WannierBlock = WannierBlock()
    effective: EffectiveBlock = EffectiveBlock()
    analysis: AnalysisBlock = AnalysisBlock()
    sweep: SweepBlock = SweepBlock()
    output: str = "out"
    cache: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    def slice(self, *keys: str) -> dict:
        d = self.to_dict()
        return {k: d[k] for k in keys}

    def content_hash(self, *keys: str) -> str:
        """SHA-256 of the canonical JSON of the given blocks (all science blocks if none)."""
        keys = keys or ("lattice", "potential", "field", "solver", "wannier", "effective", "analysis", "sweep")
        return hash_payload(self.slice(*keys))


def hash_payload(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


_TOP = {"lattice", "potential", "field", "solver", "wannier", "effective", "analysis", "sweep", "output", "cache"}


def parse_config(d: dict) -> RunConfig:
    """Validate a decoded JSON object.

    Raises
    ------
    ConfigInvalid
        On unknown keys, missing required keys, wrong types or out-of-range values.
    """
    _check_keys(d, _TOP, "config", {"lattice", "potential", "field"})

    lat = d["lattice"]
    _check_keys(lat, {"e1", "e2"}, "lattice", {"e1", "e2"})
    lattice = {"e1": _vec2(lat["e1"], "lattice.e1"), "e2": _vec2(lat["e2"], "lattice.e2")}

    pot = d["potential"]
    if not isinstance(pot, list):
        raise ConfigInvalid("potential: expected a list of {g, re, im}")
    potential = []
    for i, rec in enumerate(pot):
        _check_keys(rec, {"g", "re", "im"}, f"potential[{i}]", {"g"})
        g = rec["g"]
        if not isinstance(g, list) or len(g) != 2:
            raise ConfigInvalid(f"potential[{i}].g: expected two integers")
        potential.append({
            "g": [_num(x, f"potential[{i}].g", integer=True) for x in g],
            "re": _num(rec.get("re", 0.0), f"potential[{i}].re"),
            "im": _num(rec.get("im", 0.0), f"potential[{i}].im"),
        })

    fld = d["field"]
    _check_keys(fld, {"B0", "profile"}, "field", {"B0"})
    profile = []
    for i, t in enumerate(fld.get("profile", [])):
        _check_keys(t, {"k", "amp", "phase"}, f"field.profile[{i}]", {"k", "amp"})
        profile.append({
            "k": _vec2(t["k"], f"field.profile[{i}].k"),
            "amp": _num(t["amp"], f"field.profile[{i}].amp"),
            "phase": _num(t.get("phase", 0.0), f"field.profile[{i}].phase"),
        })
    field_ = {"B0": _num(fld["B0"], "field.B0", lo=0.0, lo_open=True), "profile": profile}

    s = d.get("solver", {})
    _check_keys(s, {"cutoff", "gridN", "nbands"}, "solver")
    solver = SolverBlock(
        cutoff=_num(s.get("cutoff", 8), "solver.cutoff", lo=1, hi=64, integer=True),
        gridN=_num(s.get("gridN", 32), "solver.gridN", lo=8, hi=512, integer=True),
        nbands=_num(s.get("nbands", 4), "solver.nbands", lo=2, hi=64, integer=True),
    )

    w = d.get("wannier", {})
    _check_keys(w, {"R_w", "spacing", "truncTol"}, "wannier")
    wannier = WannierBlock(
        R_w=_num(w.get("R_w"), "wannier.R_w", lo=0.0, lo_open=True, allow_none=True),
        spacing=_num(w.get("spacing"), "wannier.spacing", lo=0.0, lo_open=True, allow_none=True),
        truncTol=_num(w.get("truncTol", 1e-10), "wannier.truncTol", lo=0.0, hi=1.0),
    )

    e = d.get("effective", {})
    _check_keys(e, {"epsilon", "kappa", "geometry", "hopRadius", "hoppingSource", "torusMultiple"}, "effective")
    geom = e.get("geometry")
    if geom is not None:
        _check_keys(geom, {"kind", "q", "radius"}, "effective.geometry", {"kind"})
        if geom["kind"] == "Torus":
            _check_keys(geom, {"kind", "q"}, "effective.geometry", {"q"})
            geom = {"kind": "Torus", "q": _num(geom["q"], "effective.geometry.q", lo=1, integer=True)}
        elif geom["kind"] == "Ball":
            _check_keys(geom, {"kind", "radius"}, "effective.geometry", {"radius"})
            geom = {"kind": "Ball", "radius": _num(geom["radius"], "effective.geometry.radius", lo=0.0, lo_open=True)}
        else:
            raise ConfigInvalid(f"effective.geometry.kind: expected Torus or Ball, got {geom['kind']!r}")
    source = e.get("hoppingSource", "band")
    if source not in ("band", "magnetic"):
        raise ConfigInvalid(f"effective.hoppingSource: expected 'band' or 'magnetic', got {source!r}")
    effective = EffectiveBlock(
        epsilon=_num(e.get("epsilon", 0.01), "effective.epsilon", lo=0.0, hi=1.0),
        kappa=_num(e.get("kappa", 0.0), "effective.kappa", lo=0.0),
        geometry=geom,
        hopRadius=_num(e.get("hopRadius", 3.0), "effective.hopRadius", lo=0.0, lo_open=True),
        hoppingSource=source,
        torusMultiple=_num(e.get("torusMultiple", 2), "effective.torusMultiple", lo=1, hi=16, integer=True),
    )

    a = d.get("analysis", {})
    _check_keys(a, {"gapThresholdFrac", "boundaryFrac", "weightTol", "landauN", "window"}, "analysis")
    window = a.get("window")
    if window is not None:
        window = _vec2(window, "analysis.window")
        if window[0] >= window[1]:
            raise ConfigInvalid("analysis.window: lower end must be below the upper end")
    analysis = AnalysisBlock(
        gapThresholdFrac=_num(a.get("gapThresholdFrac", 0.25), "analysis.gapThresholdFrac", lo=0.0, lo_open=True, hi=1.0),
        boundaryFrac=_num(a.get("boundaryFrac", 0.15), "analysis.boundaryFrac", lo=0.0, lo_open=True, hi=1.0),
        weightTol=_num(a.get("weightTol", 1e-8), "analysis.weightTol", lo=0.0, hi=1.0),
        landauN=_num(a.get("landauN", 2), "analysis.landauN", lo=0, hi=50, integer=True),
        window=window,
    )

    sw = d.get("sweep", {})
    _check_keys(sw, {"epsilon", "kappa", "kappaEpsilon"}, "sweep")
    for key in ("epsilon", "kappa"):
        if not isinstance(sw.get(key, []), list):
            raise ConfigInvalid(f"sweep.{key}: expected a list")
    sweep = SweepBlock(
        epsilon=[_num(x, "sweep.epsilon", lo=0.0, lo_open=True, hi=1.0) for x in sw.get("epsilon", [])],
        kappa=[_num(x, "sweep.kappa", lo=0.0) for x in sw.get("kappa", [])],
        kappaEpsilon=_num(sw.get("kappaEpsilon"), "sweep.kappaEpsilon", lo=0.0, lo_open=True, hi=1.0, allow_none=True),
    )

    output = d.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigInvalid("output: expected a non-empty path string")
    cache = d.get("cache", True)
    if not isinstance(cache, bool):
        raise ConfigInvalid("cache: expected true or false")
    return RunConfig(lattice, potential, field_, solver, wannier, effective, analysis, sweep, output, cache)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigInvalid(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(d)
