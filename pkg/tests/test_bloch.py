import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import mathieu_a, mathieu_b

from mbl.bloch import (
    Hypothesis,
    PotentialSpec,
    band_minimum_hessian,
    build_fiber_hamiltonian,
    bz_grid,
    classify_hypothesis,
    cosine_potential,
    fiber_eigensystem,
    free_potential,
    ground_state,
    ground_state_bound_check,
    solve_bands,
)
from mbl.errors import CutoffTooSmall, MinimumOnGridBoundaryUnresolved, NonPositiveHessian
from mbl.lattice import make_lattice
from oracles import hill_band, hill_edges

TWO_PI = 2 * np.pi


# fiber Hamiltonians

def test_free_fiber_is_diagonal(lat2pi):
    fh = build_fiber_hamiltonian((0.1, 0.0), free_potential(), lat2pi, 1)
    assert fh.matrix.shape == (9, 9)
    assert np.count_nonzero(fh.matrix - np.diag(np.diag(fh.matrix))) == 0
    k = np.flatnonzero((fh.gvecs == [0, 0]).all(axis=1))[0]
    assert fh.matrix[k, k] == pytest.approx(0.01, abs=1e-15)


def test_cosine_x1_couples_neighbours(lat2pi):
    pot = PotentialSpec({(1, 0): 1.0, (-1, 0): 1.0})
    fh = build_fiber_hamiltonian((0.2, -0.1), pot, lat2pi, 2)
    g = fh.gvecs
    diff = g[:, None, :] - g[None, :, :]
    neighbour = (np.abs(diff[..., 0]) == 1) & (diff[..., 1] == 0)
    off = fh.matrix - np.diag(np.diag(fh.matrix))
    np.testing.assert_array_equal(off[neighbour], 1.0)
    assert np.count_nonzero(off[~neighbour]) == 0
    np.testing.assert_array_equal(fh.matrix, fh.matrix.conj().T)


def test_cutoff_too_small():
    pot = PotentialSpec({(2, 0): 0.5, (-2, 0): 0.5})
    with pytest.raises(CutoffTooSmall):
        build_fiber_hamiltonian((0, 0), pot, make_lattice((1, 0), (0, 1)), 3)


def test_potential_rejects_nonreal_coefficients():
    with pytest.raises(ValueError):
        PotentialSpec({(1, 0): 1.0, (-1, 0): 0.5})


def test_potential_evaluates_real_function(lat2pi):
    x = np.array([[0.3, 1.2], [2.0, -0.7]])
    np.testing.assert_allclose(cosine_potential(1.0)(lat2pi, x), 2 * np.cos(x[:, 0]) + 2 * np.cos(x[:, 1]), atol=1e-14)


def test_potential_records_round_trip():
    pot = PotentialSpec({(1, 1): 0.5 - 0.25j, (-1, -1): 0.5 + 0.25j, (0, 2): 0.1, (0, -2): 0.1})
    assert PotentialSpec.from_records(pot.to_records()) == pot


# bands

def test_free_bands_at_quarter(lat2pi):
    bs = solve_bands(free_potential(), lat2pi, 8, 2, 2, vectors=False)
    _, tc = bz_grid(lat2pi, 8)
    k = np.argwhere(np.all(np.isclose(tc, [0.25, 0.0]), axis=-1))[0]
    assert bs.bands[k[0], k[1], 0] == pytest.approx(0.0625, abs=1e-14)
    assert bs.bands[k[0], k[1], 1] == pytest.approx(0.5625, abs=1e-14)


def test_free_bands_sorted_plane_waves(lat2pi):
    bs = solve_bands(free_potential(), lat2pi, 16, 4, 3, vectors=False)
    g = np.array([(i, j) for i in range(-3, 4) for j in range(-3, 4)], dtype=float)
    for th, lam in zip(bs.thetas.reshape(-1, 2), bs.bands.reshape(-1, 4)):
        ref = np.sort(np.sum((th + g) ** 2, axis=1))[:4]
        np.testing.assert_allclose(lam, ref, atol=1e-12)


def test_separable_band_matches_hill_oracle(lat2pi):
    bs = solve_bands(cosine_potential(1.0), lat2pi, 8, 2, 8, vectors=False)
    _, tc = bz_grid(lat2pi, 8)
    mu = {t: hill_band(t, 1.0, 0) for t in np.unique(tc)}
    for (t1, t2), lam in zip(tc.reshape(-1, 2), bs.bands[..., 0].ravel()):
        assert lam == pytest.approx(mu[t1] + mu[t2], abs=1e-8)


def test_periodicity_in_theta(lat2pi):
    pot = cosine_potential(1.0)
    th = np.array([0.13, -0.31])
    a = fiber_eigensystem(th, pot, lat2pi, 8, 3)[0]
    b = fiber_eigensystem(th + lat2pi.dual1 - lat2pi.dual2, pot, lat2pi, 8, 3)[0]
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_bands_monotone_and_even(cosine_bands):
    lam = cosine_bands.bands
    assert np.all(np.diff(lam, axis=-1) >= -1e-12)
    l0 = lam[..., 0]
    n = l0.shape[0]
    # theta_k -> -theta_k maps grid index k to (n - k) mod n
    rev = l0[(-np.arange(n)) % n][:, (-np.arange(n)) % n]
    np.testing.assert_allclose(l0, rev, atol=1e-8)


def test_cutoff_convergence_reference_potentials(lat2pi):
    for A, (c_lo, c_hi) in ((1.0, (8, 16)), (10.0, (12, 20))):
        for th in ((0.0, 0.0), (0.5, 0.5), (0.21, -0.37)):
            lo = fiber_eigensystem(th, cosine_potential(A), lat2pi, c_lo, 1)[0]
            hi = fiber_eigensystem(th, cosine_potential(A), lat2pi, c_hi, 1)[0]
            assert abs(lo[0] - hi[0]) <= 1e-8


# classification

def test_free_is_crossing(lat2pi):
    bs = solve_bands(free_potential(), lat2pi, 8, 2, 2, vectors=False)
    assert classify_hypothesis(bs) is Hypothesis.CROSSING


def _oracle_verdict(A):
    e = hill_edges(A)
    sup0 = 2 * e["band0_max"]
    inf1 = e["band0_min"] + e["band1_min"]
    return Hypothesis.GAP if sup0 < inf1 else Hypothesis.OVERLAP


@pytest.mark.parametrize("A,cutoff", [(10.0, 12), (0.5, 8), (0.05, 8)])
def test_classification_matches_mathieu_oracle(lat2pi, A, cutoff):
    bs = solve_bands(cosine_potential(A), lat2pi, 8, 2, cutoff, vectors=False)
    assert classify_hypothesis(bs) is _oracle_verdict(A)


def test_mathieu_oracle_verdicts():
    # the half-amplitude family already has a gap; overlap needs a much weaker potential
    assert _oracle_verdict(10.0) is Hypothesis.GAP
    assert _oracle_verdict(0.5) is Hypothesis.GAP
    assert _oracle_verdict(0.05) is Hypothesis.OVERLAP
    q = 2.0
    assert 2 * mathieu_b(1, q) < mathieu_a(0, q) + mathieu_a(1, q)


# harmonic data

def _grid(lat, n=32):
    th, _ = bz_grid(lat, n)
    return th


def test_hessian_of_free_paraboloid(lat2pi):
    th = _grid(lat2pi)
    hd = band_minimum_hessian(np.sum(th**2, axis=-1), lat2pi, thetas=th, periodic=False)
    np.testing.assert_allclose(hd.theta_min, 0, atol=1e-12)
    np.testing.assert_allclose(hd.quad_form, np.eye(2), atol=1e-10)
    assert hd.m == pytest.approx(1.0, abs=1e-10)
    assert hd.m == np.sqrt(hd.m1 * hd.m2)


def test_hessian_of_cosine_band(unit_lattice):
    th = _grid(unit_lattice, 64)
    lam = 2 - np.cos(th[..., 0]) - np.cos(th[..., 1])
    hd = band_minimum_hessian(lam, unit_lattice, thetas=th)
    np.testing.assert_allclose(hd.quad_form, 0.5 * np.eye(2), atol=1e-3)
    np.testing.assert_allclose(hd.theta_min, 0, atol=1e-12)


def test_hessian_of_shifted_paraboloid(lat2pi):
    th = _grid(lat2pi)
    lam = np.sum((th - [0.1, 0.0]) ** 2, axis=-1)
    hd = band_minimum_hessian(lam, lat2pi, thetas=th, periodic=False)
    np.testing.assert_allclose(hd.theta_min, [0.1, 0.0], atol=1e-12)
    assert hd.m == pytest.approx(1.0, abs=1e-10)


def test_hessian_minimum_on_boundary(lat2pi):
    th = _grid(lat2pi)
    lam = np.sum((th - [0.5, 0.0]) ** 2, axis=-1)
    with pytest.raises(MinimumOnGridBoundaryUnresolved):
        band_minimum_hessian(lam, lat2pi, thetas=th, periodic=False)


def test_hessian_flat_direction(lat2pi):
    th = _grid(lat2pi)
    with pytest.raises(NonPositiveHessian):
        band_minimum_hessian(th[..., 0] ** 2, lat2pi, thetas=th)


# lower bound on the ground band

def test_ground_state_positive(lat2pi):
    _, _, u = ground_state(cosine_potential(1.0), lat2pi, 8)
    assert np.min(u) > 0


def test_bound_free_equality(lat2pi):
    bs = solve_bands(free_potential(), lat2pi, 16, 2, 2, vectors=False)
    c, holds, margin = ground_state_bound_check(free_potential(), lat2pi, bs, 2)
    assert c == pytest.approx(1.0, abs=1e-12)
    assert holds
    assert abs(margin) <= 1e-10


@pytest.mark.parametrize("A,cutoff", [(1.0, 8), (10.0, 12)])
def test_bound_holds_reference_potentials(lat2pi, A, cutoff):
    bs = solve_bands(cosine_potential(A), lat2pi, 16, 2, cutoff, vectors=False)
    c, holds, margin = ground_state_bound_check(cosine_potential(A), lat2pi, bs, cutoff)
    assert 0 < c < 1
    assert holds and margin >= 0


# properties

coef = st.floats(-2, 2)


@st.composite
def real_potentials(draw):
    d = {}
    for g in [(1, 0), (0, 1), (1, 1), (1, -1)]:
        re, im = draw(coef), draw(coef)
        d[g] = complex(re, im)
        d[(-g[0], -g[1])] = complex(re, -im)
    return PotentialSpec(d)


@settings(max_examples=25, deadline=None)
@given(real_potentials(), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_fiber_hermitian_and_ordered(pot, t1, t2):
    lat = make_lattice((TWO_PI, 0), (0.7, 5.0))
    fh = build_fiber_hamiltonian(np.array([t1, t2]), pot, lat, 3)
    m = fh.matrix
    assert np.max(np.abs(m - m.conj().T)) <= 1e-12 * np.linalg.norm(m)
    w = fiber_eigensystem(np.array([t1, t2]), pot, lat, 3, 4)[0]
    assert np.all(np.diff(w) >= 0)
