"""Closed-form exponents against independent integrators, plus the exact
identities every characteristic function must satisfy."""

import math

import numpy as np
import pytest

from crcvol.affine import (HestonParams, JumpSpec, MarketState, char_fn,
                           char_fn_batch, flat_jump_spec,
                           forward_characteristic, jump_cumulant,
                           riccati_solve)
from crcvol.errors import NumericDomainError
from conftest import draw_heston, draw_jumps, fig1_model

# Frozen from the RK4 integrator (tests/oracles.py, h=1e-4; stable to 7e-16
# under h -> 2e-5) at exponent argument z = i*(1+0.5i), tau = 0.7, for
# kappa=7.797, theta=0.247, sigma=0.280, rho=0.042, r=q=0.
RK4_PHI = -0.01755304410592698 - 0.14127828802971973j
RK4_PSI = -0.01584134075653615 - 0.12761756413480776j

# Frozen from adaptive quadrature of the compensated jump integrand
# (tests/oracles.py): flat buckets intensity=0.081, nu=0.159, delta=0.205 at
# z=2i, tau=1; and the bucketed set below at z=1.5i, tau=0.5.
QUAD_CUM_FLAT = -0.010263530577562102 - 0.008667226238737214j
QUAD_CUM_BUCKETED = -0.009331604212333415 - 0.007012317905105692j
BUCKET_NUS = (0.1, -0.05, 0.2, 0.0, -0.15)
BUCKET_DELTAS = (0.1, 0.2, 0.15, 0.25, 0.12)


def test_riccati_matches_frozen_rk4():
    p = HestonParams(kappa=7.797, theta=0.247, sigma=0.280, rho=0.042,
                     r=0.0, q=0.0)
    sol = riccati_solve(1j * (1.0 + 0.5j), 0.7, p)
    assert abs(sol.phi - RK4_PHI) / abs(RK4_PHI) < 1e-9
    assert abs(sol.psi - RK4_PSI) / abs(RK4_PSI) < 1e-9


def test_riccati_random_draws_match_rk4():
    from oracles import rk4_riccati

    rng = np.random.default_rng(7001)
    for _ in range(10):
        p = draw_heston(rng)
        u = rng.uniform(-20.0, 20.0) + 1j * rng.choice([0.0, 0.5, 1.0])
        tau = rng.uniform(0.05, 2.0)
        z = 1j * u
        sol = riccati_solve(z, tau, p)
        phi, psi, exploded = rk4_riccati(z, tau, p.kappa, p.theta, p.sigma,
                                         p.rho, p.r, p.q)
        assert not exploded
        assert abs(sol.psi - psi) <= 1e-6 * max(abs(psi), 1e-12)
        assert abs(sol.phi - phi) <= 1e-6 * max(abs(phi), 1e-12)


def test_riccati_tau_zero_is_identity():
    p = HestonParams(kappa=2.0, theta=0.04, sigma=0.2, rho=-0.3, r=0.01,
                     q=0.005)
    sol = riccati_solve(1j * 3.0, 0.0, p)
    assert sol.phi == 0.0 and sol.psi == 0.0


def test_jump_cumulant_matches_frozen_quadrature():
    j = flat_jump_spec(0.081, 0.159, 0.205)
    c = jump_cumulant(2j, 1.0, j)
    assert abs(c - QUAD_CUM_FLAT) / abs(QUAD_CUM_FLAT) < 1e-12

    jb = JumpSpec(intensity=0.3, nus=BUCKET_NUS, deltas=BUCKET_DELTAS)
    cb = jump_cumulant(1.5j, 0.5, jb)
    assert abs(cb - QUAD_CUM_BUCKETED) / abs(QUAD_CUM_BUCKETED) < 1e-12


def test_jump_cumulant_is_additive_over_time():
    """The cumulant integrates a rate, so it must add across any split,
    including splits interior to a bucket and across bucket edges."""
    jb = JumpSpec(intensity=0.44, nus=BUCKET_NUS, deltas=BUCKET_DELTAS)
    z = 1j * (2.0 - 0.7j)
    rng = np.random.default_rng(7002)
    for _ in range(20):
        t2 = rng.uniform(0.02, 1.8)
        t1 = rng.uniform(0.0, min(t2, 0.95 * jb.edges[-1]))
        whole = jump_cumulant(z, t2, jb)
        first = jump_cumulant(z, t1, jb)
        # remaining piece: restart the clock at t1, dropping spent buckets
        k0 = jb.bucket_index(t1)
        edges = (0.0,) + tuple(e - t1 for e in jb.edges[k0 + 1:])
        j_shift = JumpSpec(intensity=jb.intensity, nus=jb.nus[k0:],
                           deltas=jb.deltas[k0:], edges=edges)
        second = jump_cumulant(z, t2 - t1, j_shift)
        assert abs(whole - (first + second)) < 1e-14


def test_char_fn_identities_random():
    rng = np.random.default_rng(7003)
    for _ in range(50):
        p = draw_heston(rng)
        j = draw_jumps(rng)
        state = MarketState(x=rng.uniform(-0.5, 5.0), v=rng.uniform(1e-4, 0.3))
        tau = rng.uniform(0.01, 2.0)
        assert abs(char_fn(0.0, tau, state, p, j) - 1.0) < 1e-12
        target = math.exp(state.x + (p.r - p.q) * tau)
        val = char_fn(-1j, tau, state, p, j)
        assert abs(val - target) / target < 1e-9


def test_char_fn_conjugate_symmetry():
    state, p, j = fig1_model()
    for u in (0.7, 3.3, 14.0):
        a = char_fn(u, 0.6, state, p, j)
        b = char_fn(-u, 0.6, state, p, j)
        assert abs(a - np.conj(b)) < 1e-12 * abs(a)


def test_char_fn_batch_flags_do_not_raise():
    state, p, j = fig1_model()
    u = np.array([0.0, 1.0, 50.0, 200.0])
    vals, blown = char_fn_batch(u, 0.5, state, p, j)
    assert vals.shape == (4,) and blown.shape == (4,)
    assert not blown.any()
    assert np.all(np.abs(vals) <= 1.0 + 1e-12)


def test_char_fn_raises_on_explosion():
    # Feller holds (2*1*0.16 > 0.25) yet the S^6 moment blows up by tau=2
    # for this strongly positive correlation (RK4 oracle confirms).
    p = HestonParams(kappa=1.0, theta=0.16, sigma=0.5, rho=0.9, r=0.0, q=0.0)
    state = MarketState(x=0.0, v=0.16)
    j = flat_jump_spec(0.0, 0.0, 0.1)
    with pytest.raises(NumericDomainError):
        riccati_solve(6.0 + 0.0j, 2.0, p)
    with pytest.raises(NumericDomainError):
        char_fn(-6.0j, 2.0, state, p, j)


def test_forward_characteristic_is_exponent_rate():
    """Central finite differences of the cumulative exponent across maturity
    must reproduce the instantaneous forward exponent."""
    state, p, j = fig1_model()
    v = 0.0734
    st = MarketState(x=0.0, v=v)
    h = 1e-5
    for u in (0.8, 2.5, -4.0):
        for tau in (0.15, 0.6, 1.3):  # interior to jump buckets
            up = np.log(char_fn(u, tau + h, st, p, j))
            dn = np.log(char_fn(u, tau - h, st, p, j))
            fd = (up - dn) / (2.0 * h)
            fw = forward_characteristic(u, tau, 0.0, v, p, j)
            assert abs(fd - fw) < 1e-7 * max(1.0, abs(fw))


def test_forward_characteristic_uses_calendar_bucket():
    """With calendar offset t_cal the jump rate must come from the bucket
    containing t_cal + x_ttm, not from x_ttm alone."""
    _, p, _ = fig1_model()
    jb = JumpSpec(intensity=0.5, nus=BUCKET_NUS, deltas=BUCKET_DELTAS)
    v = 0.05
    u = 1.7
    x_ttm = 0.01  # bucket 0 on its own
    t_cal = 0.5   # t_cal + x_ttm = 0.51 sits in bucket 4
    assert jb.bucket_index(t_cal + x_ttm) == 4
    a = forward_characteristic(u, x_ttm, t_cal, v, p, jb)
    b = forward_characteristic(u, x_ttm, 0.0, v, p, jb)
    flat4 = flat_jump_spec(0.5, BUCKET_NUS[4], BUCKET_DELTAS[4])
    c = forward_characteristic(u, x_ttm, 0.0, v, p, flat4)
    assert a != b
    assert abs(a - c) < 1e-14 * max(1.0, abs(c))


def test_heston_params_validation():
    with pytest.raises(ValueError):
        HestonParams(kappa=1.0, theta=0.02, sigma=0.5, rho=0.0, r=0.0, q=0.0)
    with pytest.raises(ValueError):
        HestonParams(kappa=2.0, theta=0.1, sigma=0.3, rho=1.5, r=0.0, q=0.0)
    with pytest.raises(ValueError):
        MarketState(x=0.0, v=-0.01)


def test_jump_spec_validation():
    with pytest.raises(ValueError):
        flat_jump_spec(-0.1, 0.0, 0.1)
    with pytest.raises(ValueError):
        JumpSpec(intensity=0.1, nus=(0.0,) * 4, deltas=(0.1,) * 5)
    with pytest.raises(ValueError):
        flat_jump_spec(0.1, 0.0, -0.05)
    with pytest.raises(ValueError):
        JumpSpec(intensity=0.1, nus=(0.0,) * 5, deltas=(0.1,) * 5,
                 edges=(0.0, 0.2, 0.1, 0.5, 0.9, 1.3))
