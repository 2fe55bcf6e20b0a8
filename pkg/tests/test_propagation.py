import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ballistic.lattice import BoxGeometry, LatticeState, ball_probability
from ballistic.operators import Hamiltonian, PotentialField
from ballistic.potentials import PotentialSpec, realize
from ballistic.propagation import (
    NormDriftError,
    Propagator,
    SpectralBounds,
    bessel_j_sequence,
    dense_oracle_propagate,
    estimate_spectral_bounds,
    light_cone_horizon,
    plan_chebyshev,
    propagate,
)
from ballistic.spectral import dense_eigendecomposition

# J_n(10), n = 0..4 (frozen from scipy.special.jv)
J10 = [-0.24593576445134832, 0.0434727461688616, 0.2546303136851206, 0.05837937930518667, -0.21960268610200864]


# -- bounds -------------------------------------------------------------------------


@pytest.mark.parametrize("d, vs, edge", [(1, 0.0, 2.0), (3, 0.0, 6.0), (1, 1.0, 3.0)])
def test_bounds_examples(d, vs, edge):
    g = BoxGeometry(d, 3)
    v = np.zeros(g.total_sites)
    v[0] = vs
    b = estimate_spectral_bounds(Hamiltonian(g, PotentialField(g, v)))
    margin = 1e-6 * (4 * d + 2 * vs)
    assert b.e_min == pytest.approx(-edge - margin, abs=1e-15)
    assert b.e_max == pytest.approx(edge + margin, abs=1e-15)


@pytest.mark.parametrize("spec", [PotentialSpec(), PotentialSpec("anderson", lam=6, seed=2),
                                  PotentialSpec("power_law", c=-3.0)])
def test_bounds_enclose_spectrum(spec):
    g = BoxGeometry(1, 60)
    H = Hamiltonian(g, realize(spec, g))
    b = estimate_spectral_bounds(H)
    w = dense_eigendecomposition(H).eigenvalues
    assert b.e_min < w[0] and w[-1] < b.e_max


def test_bounds_invalid():
    with pytest.raises(ValueError):
        SpectralBounds(1.0, 1.0)


# -- Bessel coefficients ----------------------------------------------------------------


def test_bessel_sequence_frozen():
    j = bessel_j_sequence(10.0, 40)
    assert np.abs(j[:5] - J10).max() <= 1e-14


@pytest.mark.parametrize("x", [0.1, 1.0, 7.5, 20.0, 63.0])
def test_bessel_sequence_matches_reference(x):
    j = bessel_j_sequence(x, 120)
    ref = oracles.bessel(np.arange(121), x)
    assert np.abs(j - ref).max() <= 1e-13


def test_bessel_small_order_series():
    # power series J_n(x) = sum_m (-1)^m (x/2)^(2m+n) / (m! (m+n)!)
    x = 1.3
    j = bessel_j_sequence(x, 5)
    for n in range(6):
        s = sum((-1) ** m * (x / 2) ** (2 * m + n) / (math.factorial(m) * math.factorial(m + n)) for m in range(30))
        assert j[n] == pytest.approx(s, abs=1e-15)


def test_bessel_zero_and_negative():
    assert np.array_equal(bessel_j_sequence(0.0, 3), [1, 0, 0, 0])
    with pytest.raises(ValueError):
        bessel_j_sequence(-1.0, 3)


# -- plans ----------------------------------------------------------------------------


def test_plan_zero_step():
    p = plan_chebyshev(SpectralBounds(-2, 2), 0.0)
    assert p.order == 0 and p.coefficients[0] == 1


def test_plan_order_at_ten():
    p = plan_chebyshev(SpectralBounds(-2, 2), 5.0, 1e-12)
    assert p.order == 31
    assert 10 <= p.order <= 60
    assert abs(p.coefficients[-1]) <= 1e-12
    assert abs(p.coefficients[-2]) > 1e-12
    assert np.abs(np.abs(p.coefficients[1:5]) - 2 * np.abs(J10[1:5])).max() <= 1e-14


@pytest.mark.parametrize("x", [0.5, 3.0, 20.0, 80.0])
def test_plan_order_at_least_argument(x):
    p = plan_chebyshev(SpectralBounds(-1, 1), x, 1e-3)
    assert p.order >= math.ceil(x)


def test_plan_errors():
    b = SpectralBounds(-2, 2)
    with pytest.raises(ValueError):
        plan_chebyshev(b, -1.0)
    for tol in (0.0, 1.0):
        with pytest.raises(ValueError):
            plan_chebyshev(b, 1.0, tol)


# -- propagation ------------------------------------------------------------------------


def test_zero_step_identity():
    g = BoxGeometry(1, 20)
    H = Hamiltonian(g)
    s = LatticeState.random(g, rng=0)
    out = propagate(H, plan_chebyshev(estimate_spectral_bounds(H), 0.0), s)
    assert np.array_equal(out.amplitudes, s.amplitudes)


def test_free_delta_second_moment_t3(backend):
    g = BoxGeometry(1, 100)
    s = Propagator(Hamiltonian(g)).evolve(LatticeState.delta(g), 3.0)
    n = g.coords[:, 0]
    m2 = float(np.sum(n**2 * np.abs(s.amplitudes) ** 2))
    assert m2 == pytest.approx(18.000000000000004, rel=1e-10)
    assert abs(m2 - 18) <= 0.001 * 18
    ref = oracles.free_propagator_delta0(100, 3.0)
    assert np.abs(s.amplitudes - ref).max() <= 1e-12


def test_free_second_moment_along_horizon():
    g = BoxGeometry(1, 512)
    prop = Propagator(Hamiltonian(g))
    x = LatticeState.delta(g).amplitudes
    n2 = g.coords[:, 0] ** 2
    t_max = light_cone_horizon(g, 0, 0.9)
    t_prev = 0.0
    for t in np.linspace(1.0, t_max, 12):
        x = prop.advance(x, t - t_prev)
        t_prev = t
        assert np.sum(n2 * np.abs(x) ** 2) == pytest.approx(2 * t * t, rel=1e-3)


def test_chebyshev_matches_dense_oracle_random(backend):
    g = BoxGeometry(2, 7)
    rng = np.random.default_rng(11)
    H = Hamiltonian(g, PotentialField(g, rng.uniform(-2, 2, g.total_sites)))
    dec = dense_eigendecomposition(H)
    s = LatticeState.random(g, rng=rng)
    a = Propagator(H).evolve(s, 25.0).amplitudes
    b = dense_oracle_propagate(dec, s, 25.0).amplitudes
    assert np.linalg.norm(a - b) <= 1e-10


@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.0, 40.0))
@settings(max_examples=20, deadline=None)
def test_oracle_equivalence_small_boxes(seed, t):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    L = int(rng.integers(2, 100 if d == 1 else 11))
    g = BoxGeometry(d, L)
    H = Hamiltonian(g, PotentialField(g, rng.uniform(-3, 3, g.total_sites)))
    s = LatticeState.random(g, rng=rng)
    a = Propagator(H).evolve(s, t).amplitudes
    b = oracles.evolve_dense(oracles.dense_h(d, L, H.v), s.amplitudes, t)
    assert np.linalg.norm(a - b) <= 1e-10
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-11


def test_semigroup_and_reversal():
    g = BoxGeometry(1, 120)
    H = Hamiltonian(g, realize(PotentialSpec("power_law"), g))
    s = LatticeState.random(g, rng=3).amplitudes
    tau = 1.7
    prop = Propagator(H, tau=tau)
    x = s
    for _ in range(6):
        x = prop.advance(x, tau)
    y = Propagator(H, tau=100).advance(s, 6 * tau)
    assert np.linalg.norm(x - y) <= 1e-9
    back = prop.advance(x, -6 * tau)
    assert np.linalg.norm(back - s) <= 1e-9


def test_two_steps_equal_one_double_step():
    g = BoxGeometry(1, 60)
    H = Hamiltonian(g)
    b = estimate_spectral_bounds(H)
    s = LatticeState.random(g, rng=4)
    p1, p2 = plan_chebyshev(b, 2.5), plan_chebyshev(b, 5.0)
    twice = propagate(H, p1, propagate(H, p1, s))
    once = propagate(H, p2, s)
    assert np.linalg.norm(twice.amplitudes - once.amplitudes) <= 1e-10


def test_unitarity_long_run():
    g = BoxGeometry(1, 400)
    H = Hamiltonian(g, realize(PotentialSpec("anderson", lam=2, seed=1), g))
    prop = Propagator(H)
    x = LatticeState.gaussian(g, width=5.0).amplitudes
    for _ in range(30):
        x = prop.advance(x, 5.3)
        assert abs(np.linalg.norm(x) - 1) <= 1e-11


def test_norm_drift_aborts_on_bad_bounds():
    g = BoxGeometry(1, 40)
    H = Hamiltonian(g)
    prop = Propagator(H, bounds=SpectralBounds(-0.5, 0.5))
    with pytest.raises(NormDriftError):
        prop.advance(LatticeState.delta(g).amplitudes, 30.0)


def test_anderson_localization_control():
    g = BoxGeometry(1, 256)
    H = Hamiltonian(g, realize(PotentialSpec("anderson", lam=8, seed=7), g))
    dec = dense_eigendecomposition(H)
    psi = dense_oracle_propagate(dec, LatticeState.delta(g), 100.0)
    assert ball_probability(psi, 20) >= 0.9
    cheb = Propagator(H).evolve(LatticeState.delta(g), 100.0)
    assert np.linalg.norm(cheb.amplitudes - psi.amplitudes) <= 1e-10


# -- dense oracle ---------------------------------------------------------------------------


def test_dense_oracle_identity_and_eigenstate():
    g = BoxGeometry(1, 30)
    H = Hamiltonian(g, realize(PotentialSpec("wigner_von_neumann"), g))
    dec = dense_eigendecomposition(H)
    s = LatticeState.random(g, rng=5)
    assert np.abs(dense_oracle_propagate(dec, s, 0.0).amplitudes - s.amplitudes).max() <= 1e-13
    v = dec.eigenvectors[:, 17]
    out = dense_oracle_propagate(dec, LatticeState(g, v), 12.3).amplitudes
    assert abs(abs(np.vdot(v, out)) - 1) <= 1e-12
    assert abs(np.linalg.norm(dense_oracle_propagate(dec, s, 77.0).amplitudes) - 1) <= 1e-12
    with pytest.raises(ValueError):
        dense_oracle_propagate(dec, LatticeState.delta(BoxGeometry(1, 3)), 1.0)


# -- horizon ------------------------------------------------------------------------------


def test_horizon_examples():
    assert light_cone_horizon(BoxGeometry(1, 1024), 0, 0.9) == pytest.approx(460.8, abs=1e-12)
    assert light_cone_horizon(BoxGeometry(2, 64), 10, 0.8) == pytest.approx(10.8, abs=1e-12)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            light_cone_horizon(BoxGeometry(1, 10), 0, bad)
    with pytest.raises(ValueError):
        light_cone_horizon(BoxGeometry(1, 10), 10)


def test_horizon_empirical_free_L256():
    g = BoxGeometry(1, 256)
    t = light_cone_horizon(g, 0, 0.9)
    psi = dense_oracle_propagate(dense_eigendecomposition(Hamiltonian(g)), LatticeState.delta(g), t)
    inside = np.abs(g.coords[:, 0]) <= 256 - 2
    assert np.sum(np.abs(psi.amplitudes[inside]) ** 2) >= 1 - 1e-8
