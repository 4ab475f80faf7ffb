import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbl.bloch import (
    PotentialSpec,
    bz_grid,
    cosine_potential,
    fiber_eigensystem,
    fix_gauge,
    free_potential,
    gauge_fix_vector,
    plane_wave_indices,
    solve_bands,
)
from mbl.errors import NearSingularGramian, NormLoss, QuadratureOverlapTruncated
from mbl.lattice import enumerate_sites, make_lattice
from mbl.phase import FieldSpec, peierls_phase
from mbl.wannier import (
    HoppingSet,
    band_fourier_coefficients,
    hoppings_from_band,
    load_wannier,
    loewdin_inverse_sqrt,
    magnetic_gramian,
    magnetic_hoppings,
    save_wannier,
    synthesize_wannier,
    wannier_overlaps,
)
from oracles import free_wannier_continuum, free_wannier_discrete

TWO_PI = 2 * np.pi
# V = 2cos x1 + 2cos x2 + 2c sin(x1 + x2): no inversion centre, so the Gramian has a first-order term
NONCENTRO = PotentialSpec({(1, 0): 1, (-1, 0): 1, (0, 1): 1, (0, -1): 1, (1, 1): -0.5j, (-1, -1): 0.5j})


# gauge fixing

def test_constant_potential_gauge_is_single_positive_coefficient(lat2pi):
    pot = PotentialSpec({(0, 0): 0.7})
    bs = fix_gauge(solve_bands(pot, lat2pi, 8, 2, 2, offset=0.5))
    for v in bs.vectors.reshape(-1, bs.vectors.shape[-1]):
        k = np.argmax(np.abs(v))
        assert abs(v[k] - 1.0) < 1e-12
        assert np.sum(np.abs(np.delete(v, k))) < 1e-12


def test_gauge_fix_removes_injected_phases(cosine_bands):
    rng = np.random.default_rng(7)
    noisy = cosine_bands.vectors * np.exp(2j * np.pi * rng.random(cosine_bands.vectors.shape[:2]))[..., None]
    refixed = fix_gauge(dataclasses.replace(cosine_bands, vectors=noisy), center=cosine_bands.gauge["center"], width=cosine_bands.gauge["width"])
    np.testing.assert_allclose(refixed.vectors, cosine_bands.vectors, atol=1e-10)


def test_gauge_fix_idempotent(cosine_bands):
    again = fix_gauge(cosine_bands, center=cosine_bands.gauge["center"], width=cosine_bands.gauge["width"])
    np.testing.assert_allclose(again.vectors, cosine_bands.vectors, atol=1e-12)


def test_gauge_adjacent_overlaps(cosine_bands):
    v = cosine_bands.vectors
    for axis in (0, 1):
        nb = np.roll(v, -1, axis=axis)
        ov = np.abs(np.sum(v.conj() * nb, axis=-1))
        # the last row wraps across the zone where the index shift applies, skip it
        ov = np.delete(ov, -1, axis=axis)
        assert ov.min() >= 0.9


def test_gauge_quasi_periodicity(lat2pi, cosine_bands):
    pot = cosine_potential(1.0)
    cutoff = 8
    gs = plane_wave_indices(cutoff)
    th = np.array([0.17, -0.23])
    ctr, wd = cosine_bands.gauge["center"], cosine_bands.gauge["width"]
    a = gauge_fix_vector(th, fiber_eigensystem(th, pot, lat2pi, cutoff, 1)[1][:, 0], gs, lat2pi, ctr, wd)
    b = gauge_fix_vector(th + lat2pi.dual1, fiber_eigensystem(th + lat2pi.dual1, pot, lat2pi, cutoff, 1)[1][:, 0], gs, lat2pi, ctr, wd)
    lookup = {tuple(g): i for i, g in enumerate(gs)}
    # v(theta + G_(1,0))[g] = v(theta)[g + (1, 0)] on indices away from the cutoff edge
    pairs = [(lookup[tuple(g)], lookup[(g[0] + 1, g[1])]) for g in gs if max(abs(g[0] + 1), abs(g[0]), abs(g[1])) <= cutoff - 2]
    ib, ia = np.array(pairs).T
    scal = np.vdot(a[ia], b[ib])
    assert abs(abs(scal) - 1.0) < 1e-8
    np.testing.assert_allclose(b[ib], scal * a[ia], atol=1e-8)


# synthesis

@pytest.fixture(scope="module")
def free_wannier(lat2pi):
    bs = fix_gauge(solve_bands(free_potential(), lat2pi, 32, 2, 2, offset=0.5))
    return synthesize_wannier(bs)


def test_free_wannier_matches_discrete_sum(free_wannier):
    ref = free_wannier_discrete(free_wannier.positions, 32)
    np.testing.assert_allclose(free_wannier.values, ref, atol=1e-6)


def test_free_wannier_matches_sinc_near_origin(free_wannier):
    # the theta-grid Riemann sum equals the closed-form integral only for |x| much smaller than N
    x = free_wannier.positions
    near = np.linalg.norm(x, axis=-1) < 0.3
    np.testing.assert_allclose(free_wannier.values[near], free_wannier_continuum(x[near]), atol=1e-6)


def test_wannier_normalized(cosine_wannier):
    assert cosine_wannier.norm() == pytest.approx(1.0, abs=1e-6)


def test_wannier_orthonormal(cosine_wannier):
    gammas = [(i, j) for i in range(-2, 3) for j in range(-2, 3) if i * i + j * j <= 4]
    ov = wannier_overlaps(cosine_wannier, gammas)
    target = np.array([1.0 if g == (0, 0) else 0.0 for g in gammas])
    np.testing.assert_allclose(ov, target, atol=1e-6)


def test_wannier_decay_fit(cosine_wannier):
    assert cosine_wannier.decay_rate > 0
    assert cosine_wannier.fit_residual < 0.1


def test_deep_potential_decay(lat2pi):
    bs = fix_gauge(solve_bands(cosine_potential(10.0), lat2pi, 16, 2, 14))
    w = synthesize_wannier(bs)
    assert w.decay_rate > 0
    assert w.fit_residual < 0.1
    # the deep well localizes much more strongly than the shallow one
    assert w.decay_rate > 2.0


def test_coarse_grid_norm_loss(lat2pi):
    bs = fix_gauge(solve_bands(cosine_potential(1.0), lat2pi, 8, 2, 8))
    with pytest.raises(NormLoss):
        synthesize_wannier(bs, spacing=TWO_PI / 4)


def test_wannier_cache_round_trip(cosine_wannier, tmp_path):
    save_wannier(cosine_wannier, tmp_path, "abc")
    w, h = load_wannier(tmp_path)
    assert h == "abc"
    np.testing.assert_array_equal(w.values, cosine_wannier.values)
    assert w.decay_rate == cosine_wannier.decay_rate
    csv = tmp_path / "wannier.csv"
    csv.write_text(csv.read_text().replace("x1,x2", "x1,x2 "))
    with pytest.raises(ValueError):
        load_wannier(tmp_path)


# hoppings

def test_cosine_band_hoppings(unit_lattice):
    th, _ = bz_grid(unit_lattice, 16)
    lam = 2 - np.cos(th[..., 0]) - np.cos(th[..., 1])
    h = hoppings_from_band(lam, unit_lattice)
    expected = {(0, 0): 2.0, (1, 0): -0.5, (-1, 0): -0.5, (0, 1): -0.5, (0, -1): -0.5}
    for g, v in h.entries.items():
        assert v == pytest.approx(expected.get(g, 0.0), abs=1e-14)


def test_band_hoppings_real_and_even(cosine_bands, lat2pi):
    h = hoppings_from_band(cosine_bands.band(0), lat2pi)
    for g, v in h.entries.items():
        assert abs(v.imag) < 1e-10
        assert abs(v - h[(-g[0], -g[1])]) < 1e-10


def test_band_round_trip(cosine_bands, lat2pi):
    h = hoppings_from_band(cosine_bands.band(0), lat2pi, 1e-10)
    back = h.evaluate(lat2pi, cosine_bands.thetas).real
    assert np.max(np.abs(back - cosine_bands.band(0))) <= 1e-6


def test_truncation_invariant(cosine_bands, lat2pi):
    h = hoppings_from_band(cosine_bands.band(0), lat2pi, 1e-8)
    allc = band_fourier_coefficients(cosine_bands.band(0))
    top = max(abs(v) for v in allc.values())
    for g, v in allc.items():
        if g not in h.entries:
            assert np.linalg.norm(lat2pi.position(g)) > h.trunc_radius
            assert abs(v) < h.trunc_tol * top


def test_real_space_hoppings_match_band(cosine_wannier, cosine_bands, lat2pi):
    sites = enumerate_sites(lat2pi, 5 * TWO_PI)
    gram = magnetic_gramian(cosine_wannier, sites, 0.0)
    h_real = magnetic_hoppings(cosine_wannier, gram, cosine_potential(1.0), lat2pi, 0.0, check_limit=False)
    h_band = hoppings_from_band(cosine_bands.band(0), lat2pi)
    for g, v in h_real.entries.items():
        assert v == pytest.approx(h_band[g], abs=1e-5)


def test_harper_hermitian():
    h = HoppingSet({(1, 0): 1 + 2j, (-1, 0): 1 - 2j})
    assert h.hermitian_defect() == 0.0


# Gramian

def test_gramian_identity_at_zero_field(cosine_wannier, lat2pi):
    sites = enumerate_sites(lat2pi, 2 * TWO_PI)
    g = magnetic_gramian(cosine_wannier, sites, 0.0)
    np.testing.assert_allclose(g.G, np.eye(len(sites)), atol=1e-6)


@pytest.fixture(scope="module")
def noncentro_wannier(lat2pi):
    return synthesize_wannier(fix_gauge(solve_bands(NONCENTRO, lat2pi, 32, 2, 8)))


def test_gramian_linear_in_eps(noncentro_wannier, lat2pi):
    sites = enumerate_sites(lat2pi, 2 * TWO_PI)
    fld = FieldSpec(1.0)
    off = []
    for eps in (0.05, 0.025):
        G = magnetic_gramian(noncentro_wannier, sites, eps, 0.0, fld).G
        off.append(np.max(np.abs(G - np.diag(np.diag(G)))))
    assert off[0] / off[1] == pytest.approx(2.0, rel=0.2)


def test_gramian_magnetic_covariance_and_loewdin(cosine_wannier, lat2pi):
    sites = enumerate_sites(lat2pi, 2 * TWO_PI)
    fld = FieldSpec(1.0)
    eps = 0.05
    gd = magnetic_gramian(cosine_wannier, sites, eps, 0.0, fld)
    pos = np.array([s.position for s in sites])
    idx = np.array([s.index for s in sites])
    lam = peierls_phase(fld, pos[:, None, :], pos[None, :, :], eps, 0.0)
    reduced = gd.G * np.conj(lam)
    by_diff = {}
    for i in range(len(sites)):
        for j in range(len(sites)):
            d = tuple(idx[i] - idx[j])
            by_diff.setdefault(d, []).append(reduced[i, j])
    spread = max(np.max(np.abs(np.array(v) - v[0])) for v in by_diff.values())
    assert spread < 1e-8
    F = gd.F
    assert np.max(np.abs(F @ gd.G @ F - np.eye(len(sites)))) <= 1e-10


def test_gramian_window_too_small(cosine_wannier, lat2pi):
    with pytest.raises(QuadratureOverlapTruncated):
        magnetic_gramian(cosine_wannier, enumerate_sites(lat2pi, 14 * TWO_PI), 0.0)


def test_loewdin_examples():
    np.testing.assert_allclose(loewdin_inverse_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(loewdin_inverse_sqrt(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]), atol=1e-15)
    with pytest.raises(NearSingularGramian):
        loewdin_inverse_sqrt(np.diag([1.0, 1e-12]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_loewdin_random_spd(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(50, 50)) + 1j * rng.normal(size=(50, 50))
    G = a @ a.conj().T / 50 + 0.5 * np.eye(50)
    F = loewdin_inverse_sqrt(G)
    np.testing.assert_allclose(F, F.conj().T, atol=1e-12)
    assert np.max(np.abs(F @ G @ F - np.eye(50))) <= 1e-10


# magnetic hoppings

def test_magnetic_hoppings_zero_field_limit(cosine_wannier, cosine_bands, lat2pi):
    sites = enumerate_sites(lat2pi, 5 * TWO_PI)
    gram = magnetic_gramian(cosine_wannier, sites, 0.0)
    h = magnetic_hoppings(cosine_wannier, gram, cosine_potential(1.0), lat2pi, 0.0)
    h0 = hoppings_from_band(cosine_bands.band(0), lat2pi)
    assert max(abs(v - h0[g]) for g, v in h.entries.items()) <= 1e-4


def test_magnetic_hoppings_linear_and_hermitian(cosine_wannier, cosine_bands, lat2pi):
    # weak constant part (B0 = 0.02) keeps the second-order term below the first-order one
    sites = enumerate_sites(lat2pi, 5 * TWO_PI)
    fld = FieldSpec(0.02)
    pot = cosine_potential(1.0)
    h0 = hoppings_from_band(cosine_bands.band(0), lat2pi)
    devs = []
    for eps in (0.04, 0.02, 0.01):
        gram = magnetic_gramian(cosine_wannier, sites, eps, 0.0, fld)
        raw = magnetic_hoppings(cosine_wannier, gram, pot, lat2pi, eps, fld, check_limit=False, symmetrize=False)
        assert raw.hermitian_defect() <= 1e-8
        devs.append(max(abs(v - h0[g]) for g, v in raw.entries.items()))
    slope = np.polyfit(np.log([0.04, 0.02, 0.01]), np.log(devs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)
