"""Vector potentials, Peierls phases and triangle fluxes for the two-scale field.

The field is ``B_eps_kappa(x) = eps*B0 + kappa*eps*B(eps*x)`` with a constant
part in the transverse gauge ``A0(x) = (B0/2)(-x2, x1)`` and a slowly varying
profile ``B(x) = sum amp*cos(<k, x> + phase)`` in the Poincare gauge
``A(x) = (int_0^1 s B(s x) ds) (-x2, x1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import wedge


@dataclass(frozen=True)
class ProfileTerm:
    k: tuple[float, float]
    amp: float
    phase: float = 0.0


@dataclass(frozen=True)
class FieldSpec:
    B0: float
    profile: tuple[ProfileTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.B0 > 0:
            raise ValueError("B0 must be positive")
        terms = tuple(
            t if isinstance(t, ProfileTerm) else ProfileTerm(tuple(t["k"]), t["amp"], t.get("phase", 0.0))
            for t in self.profile
        )
        object.__setattr__(self, "profile", terms)

    @property
    def sup_norm(self) -> float:
        """Upper bound for ``sup |B(x)|`` of the profile."""
        return float(sum(abs(t.amp) for t in self.profile))

    def profile_value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for t in self.profile:
            out = out + t.amp * np.cos(x @ np.asarray(t.k, dtype=float) + t.phase)
        return out

    def total_field(self, x, eps: float, kappa: float) -> np.ndarray:
        """``eps*B0 + kappa*eps*B(eps*x)``."""
        x = np.asarray(x, dtype=float)
        return eps * self.B0 + kappa * eps * self.profile_value(eps * x)

    def scaled(self, factor: float) -> "FieldSpec":
        """Same shape with profile amplitudes multiplied by ``factor``."""
        return FieldSpec(self.B0, tuple(ProfileTerm(t.k, t.amp * factor, t.phase) for t in self.profile))

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        return cls(float(d["B0"]), tuple(ProfileTerm(tuple(p["k"]), float(p["amp"]), float(p.get("phase", 0.0))) for p in d.get("profile", [])))

    def to_dict(self) -> dict:
        return {
            "B0": self.B0,
            "profile": [{"k": list(t.k), "amp": t.amp, "phase": t.phase} for t in self.profile],
        }


# ---------------------------------------------------------------------------
# vector potentials


def _s_cos_moment(a, phi):
    """``int_0^1 s cos(a s + phi) ds`` with a series near ``a = 0``."""
    a = np.asarray(a, dtype=float)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), a.shape)
    out = np.empty(a.shape)
    small = np.abs(a) < 0.05
    big = ~small
    ab = a[big]
    pb = phi[big]
    out[big] = np.sin(ab + pb) / ab + (np.cos(ab + pb) - np.cos(pb)) / ab**2
    if np.any(small):
        as_ = a[small]
        ps = phi[small]
        # cos(as+phi) = cos(phi) cos(as) - sin(phi) sin(as), integrated against s termwise
        c_term = np.zeros_like(as_)
        s_term = np.zeros_like(as_)
        fact = 1.0
        for n in range(8):
            c_term += (-1) ** n * as_ ** (2 * n) / fact / (2 * n + 2)
            fact *= (2 * n + 1)
            s_term += (-1) ** n * as_ ** (2 * n + 1) / fact / (2 * n + 3)
            fact *= (2 * n + 2)
        out[small] = np.cos(ps) * c_term - np.sin(ps) * s_term
    return out


def radial_moment(fld: FieldSpec, x) -> np.ndarray:
    """``int_0^1 s B(s x) ds`` for the profile, vectorized over ``x[..., 2]``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for t in fld.profile:
        a = x @ np.asarray(t.k, dtype=float)
        out = out + t.amp * _s_cos_moment(a, t.phase)
    return out


def poincare_gauge_potential(fld: FieldSpec, x) -> np.ndarray:
    """Poincare-gauge vector potential of the profile ``B`` at ``x``."""
    x = np.asarray(x, dtype=float)
    r = radial_moment(fld, x)
    return np.stack([-r * x[..., 1], r * x[..., 0]], axis=-1)


def transverse_gauge_potential(B0: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 0.5 * B0 * np.stack([-x[..., 1], x[..., 0]], axis=-1)


# ---------------------------------------------------------------------------
# line integrals and phases


def _gauss_legendre(order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def profile_line_integral(fld: FieldSpec, x, y, eps: float, tol: float = 1e-10, max_order: int = 256) -> np.ndarray:
    """``int_[x,y] A(eps * .)`` for the Poincare-gauge profile potential.

    Along ``r(t) = x + t (y - x)`` the integrand is
    ``radial_moment(eps r) * (eps r) ^ (y - x) = eps (x ^ y) radial_moment(eps r)``,
    integrated by Gauss-Legendre with the order doubled from 8 until two
    successive results agree to ``tol``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    if not fld.profile or eps == 0.0:
        return np.zeros(x.shape[:-1])
    d = y - x
    pref = eps * wedge(x, y)

    def integrate(order):
        t, w = _gauss_legendre(order)
        pts = x[..., None, :] + t[:, None] * d[..., None, :]
        return pref * np.sum(w * radial_moment(fld, eps * pts), axis=-1)

    order = 8
    prev = integrate(order)
    while order < max_order:
        order *= 2
        cur = integrate(order)
        if np.max(np.abs(cur - prev), initial=0.0) < tol:
            return cur
        prev = cur
    return prev


def peierls_phase(fld: FieldSpec, x, y, eps: float, kappa: float) -> np.ndarray:
    """``exp(-i int_[x,y] A_eps_kappa)`` with ``A_eps_kappa(x) = eps*A0(x) + kappa*A(eps*x)``.

    The constant-field segment integral is exact: ``(B0/2) x ^ y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    flux = eps * 0.5 * fld.B0 * wedge(x, y)
    if kappa != 0.0:
        flux = flux + kappa * profile_line_integral(fld, x, y, eps)
    return np.exp(-1j * flux)


def constant_field_phase(b: float, x, y) -> np.ndarray:
    """``exp(-i (b/2) x ^ y)``: Peierls phase of a constant field ``b`` in transverse gauge."""
    return np.exp(-0.5j * b * wedge(x, y))


# ---------------------------------------------------------------------------
# triangle fluxes

# degree-5 symmetric 7-point rule on the reference triangle (weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_TRI_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
_TRI_W = np.array([0.225, *(3 * [0.132394152788506]), *(3 * [0.125939180544827])])


def _triangle_rule(f, a, b, c, levels: int):
    """Integrate ``f`` over triangle ``abc`` (arrays ``(..., 2)``), splitting ``levels`` times into 4."""
    tris = [(a, b, c)]
    for _ in range(levels):
        nxt = []
        for p, q, r in tris:
            pq, qr, rp = 0.5 * (p + q), 0.5 * (q + r), 0.5 * (r + p)
            nxt += [(p, pq, rp), (pq, q, qr), (rp, qr, r), (pq, qr, rp)]
        tris = nxt
    total = 0.0
    for p, q, r in tris:
        area = 0.5 * wedge(q - p, r - p)
        pts = _TRI_BARY[:, 0, None] * p[..., None, :] + _TRI_BARY[:, 1, None] * q[..., None, :] + _TRI_BARY[:, 2, None] * r[..., None, :]
        total = total + area * np.sum(_TRI_W * f(pts), axis=-1)
    return total


def signed_area(x, y, z) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 0.5 * wedge(np.asarray(y) - x, np.asarray(z) - x)


def triangle_flux(fld: FieldSpec, x, y, z, eps: float, kappa: float, levels: int | None = None, tol: float = 1e-13):
    """``exp(-i Phi)`` with ``Phi`` the flux of ``B_eps_kappa`` through the oriented triangle ``xyz``.

    The profile part is integrated with the 7-point rule; ``levels=None``
    refines (starting from one level) until successive results agree to ``tol``.
    """
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    x, y, z = np.broadcast_arrays(x, y, z)
    phi = eps * fld.B0 * signed_area(x, y, z)
    if kappa != 0.0 and fld.profile:
        def f(u):
            return fld.profile_value(eps * u)

        if levels is None:
            prev = _triangle_rule(f, x, y, z, 1)
            for lv in range(2, 7):
                cur = _triangle_rule(f, x, y, z, lv)
                if np.max(np.abs(cur - prev), initial=0.0) < tol * max(1.0, float(np.max(np.abs(cur), initial=0.0))):
                    break
                prev = cur
            integral = cur
        else:
            integral = _triangle_rule(f, x, y, z, levels)
        phi = phi + kappa * eps * integral
    return np.exp(-1j * phi)
