import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbl.bloch import bz_grid, cosine_potential
from mbl.effective import (
    Ball,
    QuasiBlochData,
    Torus,
    build_effective_matrix,
    commensurate_torus_size,
    harmonic_data,
    landau_prediction,
    landau_spacing,
    quasi_bloch,
    torus_flux_numerator,
)
from mbl.errors import ComplexQuasiBloch, IrrationalFluxOnTorus, KappaOnTorus
from mbl.lattice import enumerate_sites
from mbl.phase import FieldSpec, peierls_phase
from mbl.spectral import bulk_filter, detect_islands, eigens, hausdorff
from mbl.wannier import HoppingSet, harper_hoppings, hoppings_from_band, magnetic_gramian, magnetic_hoppings
from oracles import harper_torus_dense

TWO_PI = 2 * np.pi
HALF_COS = HoppingSet({(0, 0): 2.0, (1, 0): -0.5, (-1, 0): -0.5, (0, 1): -0.5, (0, -1): -0.5})


def test_zero_field_torus_is_circulant(unit_lattice):
    pm = build_effective_matrix(HALF_COS, unit_lattice, FieldSpec(1.0), 0.0, 0.0, Torus(16))
    k = TWO_PI * np.arange(16) / 16
    ref = np.sort((2 - 0.5 * (2 * np.cos(k)[:, None] + 2 * np.cos(k)[None, :])).ravel())
    np.testing.assert_allclose(pm.spectrum(), ref, atol=1e-10)
    np.testing.assert_allclose(np.linalg.eigvalsh(pm.M.toarray()), ref, atol=1e-10)


def test_torus_matches_independent_harper_matrix(unit_lattice):
    L, p = 12, 1
    fld = FieldSpec(TWO_PI * p / L)
    pm = build_effective_matrix(harper_hoppings(), unit_lattice, fld, 1.0, 0.0, Torus(L))
    ref = np.linalg.eigvalsh(harper_torus_dense(L, p))
    np.testing.assert_allclose(pm.spectrum(), ref, atol=1e-12)


def test_torus_plaquette_flux(unit_lattice):
    L, p = 10, 3
    fld = FieldSpec(TWO_PI * p / L)
    M = build_effective_matrix(harper_hoppings(), unit_lattice, fld, 1.0, 0.0, Torus(L)).M.toarray()

    def s(a, b):
        return (a % L) * L + (b % L)

    target = np.exp(1j * TWO_PI * p / L)
    for a in range(L):
        for b in range(L):
            # hop alpha <- beta carries M[alpha, beta]; loop counterclockwise around the plaquette
            loop = M[s(a + 1, b), s(a, b)] * M[s(a + 1, b + 1), s(a + 1, b)] * M[s(a, b + 1), s(a + 1, b + 1)] * M[s(a, b), s(a, b + 1)]
            assert loop == pytest.approx(target, abs=1e-12)


def test_ball_entries_are_peierls_times_hopping(unit_lattice):
    fld = FieldSpec(2.0, ({"k": (1.0, 0.3), "amp": 0.5},))
    h = HoppingSet({(1, 0): -1, (-1, 0): -1, (1, 1): 0.2 + 0.1j, (-1, -1): 0.2 - 0.1j})
    eps, kappa = 0.1, 0.7
    pm = build_effective_matrix(h, unit_lattice, fld, eps, kappa, Ball(4.0))
    M = pm.M.toarray()
    for i in range(pm.dim):
        for j in range(pm.dim):
            g = tuple(pm.sites[i] - pm.sites[j])
            expect = peierls_phase(fld, pm.positions[i], pm.positions[j], eps, kappa) * h[g]
            assert M[i, j] == pytest.approx(expect, abs=1e-12)


def test_torus_rejects_kappa_and_irrational_flux(unit_lattice):
    with pytest.raises(KappaOnTorus):
        build_effective_matrix(harper_hoppings(), unit_lattice, FieldSpec(TWO_PI / 8), 1.0, 0.1, Torus(8))
    with pytest.raises(IrrationalFluxOnTorus):
        build_effective_matrix(harper_hoppings(), unit_lattice, FieldSpec(1.0), 1.0, 0.0, Torus(8))


def test_commensurate_size(unit_lattice):
    fld = FieldSpec(10 * np.pi)
    assert commensurate_torus_size(unit_lattice, fld, 0.01) == 20
    assert torus_flux_numerator(unit_lattice, fld, 0.01, 40) == 2


@st.composite
def hermitian_hoppings(draw):
    d = {(0, 0): complex(draw(st.floats(-2, 2)), 0.0)}
    for g in [(1, 0), (0, 1), (1, 1), (2, -1)]:
        v = complex(draw(st.floats(-1, 1)), draw(st.floats(-1, 1)))
        d[g] = v
        d[(-g[0], -g[1])] = np.conj(v)
    return HoppingSet(d)


@settings(max_examples=15, deadline=None)
@given(hermitian_hoppings(), st.floats(0.0, 0.3), st.floats(0.0, 1.0))
def test_ball_hermitian_random_hoppings(h, eps, kappa):
    from mbl.lattice import make_lattice

    lat = make_lattice((1.0, 0.0), (0.3, 0.9))
    fld = FieldSpec(1.5, ({"k": (0.7, -0.2), "amp": 1.0, "phase": 0.4},))
    pm = build_effective_matrix(h, lat, fld, eps, kappa, Ball(3.5))
    assert pm.hermitian_defect() <= 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gauge_invariance(seed):
    from mbl.lattice import make_lattice

    lat = make_lattice((1.0, 0.0), (0.0, 1.0))
    rng = np.random.default_rng(seed)
    fld = FieldSpec(3.0, ({"k": (1.0, 0.5), "amp": 0.8},))
    pm = build_effective_matrix(harper_hoppings(), lat, fld, 0.2, 0.5, Ball(5.0))
    chi = rng.uniform(0, TWO_PI, pm.dim)
    a = np.linalg.eigvalsh(pm.M.toarray())
    b = np.linalg.eigvalsh(pm.gauge_transformed(chi).M.toarray())
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_coordinate_csv(unit_lattice, tmp_path):
    pm = build_effective_matrix(harper_hoppings(), unit_lattice, FieldSpec(TWO_PI / 4), 1.0, 0.0, Torus(4))
    path = pm.to_coordinate_csv(tmp_path / "m.csv")
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    M = np.zeros((pm.dim, pm.dim), dtype=complex)
    M[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2] + 1j * rows[:, 3]
    np.testing.assert_array_equal(M, pm.M.toarray())


# quasi-Bloch function and harmonic data

def test_quasi_bloch_cosine(unit_lattice):
    q = quasi_bloch(HALF_COS, unit_lattice, 32)
    th, _ = bz_grid(unit_lattice, 32)
    np.testing.assert_allclose(q.values, 2 - np.cos(th[..., 0]) - np.cos(th[..., 1]), atol=1e-12)
    hd = harmonic_data(q)
    assert hd.m == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(hd.theta_min, 0, atol=1e-12)


def test_harmonic_data_anisotropic(unit_lattice):
    h = HoppingSet({(0, 0): 5.0, (1, 0): -2.0, (-1, 0): -2.0, (0, 1): -0.5, (0, -1): -0.5})
    hd = harmonic_data(quasi_bloch(h, unit_lattice, 32))
    assert (hd.m1, hd.m2) == pytest.approx((0.5, 2.0), abs=1e-12)
    assert hd.m == pytest.approx(1.0, abs=1e-12)


def test_harmonic_data_shifted_minimum(unit_lattice):
    # lambda = 2 - cos(th1 - 0.1) - cos(th2) with lambda(theta) = sum_g h(g) exp(-i theta.g)
    h = HoppingSet({(0, 0): 2.0, (1, 0): -0.5 * np.exp(0.1j), (-1, 0): -0.5 * np.exp(-0.1j), (0, 1): -0.5, (0, -1): -0.5})
    hd = harmonic_data(quasi_bloch(h, unit_lattice, 32))
    np.testing.assert_allclose(hd.theta_min, [0.1, 0.0], atol=1e-12)


def test_complex_quasi_bloch_rejected(unit_lattice):
    with pytest.raises(ComplexQuasiBloch):
        quasi_bloch(HoppingSet({(1, 0): 1.0}), unit_lattice, 16)


def test_quasi_bloch_round_trip_and_evenness(cosine_bands, lat2pi):
    h = hoppings_from_band(cosine_bands.band(0), lat2pi)
    q = quasi_bloch(h, lat2pi, 32)
    np.testing.assert_allclose(q.values, cosine_bands.band(0), atol=1e-10)
    n = 32
    rev = q.values[(-np.arange(n)) % n][:, (-np.arange(n)) % n]
    np.testing.assert_allclose(q.values, rev, atol=1e-8)


def test_rho_stable_under_eps_halving(cosine_wannier, cosine_bands, lat2pi):
    sites = enumerate_sites(lat2pi, 5 * TWO_PI)
    fld = FieldSpec(0.02)
    norms = []
    for eps in (0.02, 0.01):
        gram = magnetic_gramian(cosine_wannier, sites, eps, 0.0, fld)
        h = magnetic_hoppings(cosine_wannier, gram, cosine_potential(1.0), lat2pi, eps, fld)
        q = quasi_bloch(h, lat2pi, 32, reference=cosine_bands.band(0), eps=eps)
        norms.append(np.max(np.abs(q.rho)))
    assert np.all(np.isfinite(norms))
    assert norms[0] / norms[1] == pytest.approx(1.0, abs=0.25)


def test_quasi_bloch_data_type():
    q = QuasiBlochData(np.zeros((1, 1, 2)), np.zeros((1, 1)), None)
    assert q.rho is None


# Landau prediction

def test_landau_prediction_formula():
    from mbl.bloch import HarmonicData

    hd = HarmonicData(np.zeros(2), np.eye(2), 1.0, 1.0, 1.0, 0.0)
    assert landau_prediction(hd, 1.0, 0.01, 2) == pytest.approx([0.01, 0.03, 0.05], abs=1e-15)
    hd2 = HarmonicData(np.zeros(2), 0.5 * np.eye(2), 0.5, 0.5, 0.5, -4.0)
    assert landau_prediction(hd2, 1.0, 0.02, 1) == pytest.approx([-3.99, -3.97], abs=1e-15)
    assert landau_prediction(hd2, 1.0, 0.0, 3) == [-4.0] * 4
    assert landau_spacing(hd, 1.0, 0.01) == pytest.approx(0.02)


def test_ball_torus_consistency(unit_lattice):
    h = harper_hoppings()
    fld = FieldSpec(10 * np.pi)
    eps, R = 0.01, 18.0
    hd = quasi_bloch(h, unit_lattice, 64).harmonic
    sp = landau_spacing(hd, fld.B0, eps)
    top = landau_prediction(hd, fld.B0, eps, 2)[-1] + 0.5 * sp
    et = build_effective_matrix(h, unit_lattice, fld, eps, 0.0, Torus(2 * commensurate_torus_size(unit_lattice, fld, eps))).spectrum()
    pm = build_effective_matrix(h, unit_lattice, fld, eps, 0.0, Ball(R))
    w, v = eigens(pm.M, vectors=True)
    e, _ = bulk_filter(w, v, pm.positions, R, 0.15, 1e-8, matrix=pm.M, degenerate_tol=1e-9 * sp)
    window = (-np.inf, top)
    width = max(detect_islands(et, 0.25 * sp, window).widths)
    assert hausdorff(e, et, window) <= 5 * width
