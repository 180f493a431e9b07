"""The jit kernels and the pure-numpy fallback must be interchangeable."""

import numpy as np
import pytest

from crcvol import kernels
from conftest import draw_heston, draw_jumps

needs_numba = pytest.mark.skipif(kernels.numba_api is None,
                                 reason="numba backend disabled")


@needs_numba
def test_riccati_backends_agree():
    rng = np.random.default_rng(91)
    for _ in range(25):
        p = draw_heston(rng)
        z = 1j * (rng.uniform(-40.0, 40.0) + 1j * rng.uniform(-1.0, 1.0))
        tau = rng.uniform(0.01, 2.0)
        args = (np.array([z]), tau, p.kappa, p.theta, p.sigma, p.rho, p.r, p.q)
        phi_a, psi_a, bl_a = kernels.numba_api.riccati_batch(*args)
        phi_b, psi_b, bl_b = kernels.numpy_api.riccati_batch(*args)
        assert bool(bl_a[0]) == bool(bl_b[0])
        if not bl_a[0]:
            np.testing.assert_allclose(phi_a, phi_b, rtol=1e-13, atol=1e-15)
            np.testing.assert_allclose(psi_a, psi_b, rtol=1e-13, atol=1e-15)


@needs_numba
def test_cumulant_backends_agree():
    rng = np.random.default_rng(92)
    for _ in range(25):
        j = draw_jumps(rng)
        z = 1j * rng.uniform(-30.0, 30.0)
        tau = rng.uniform(0.01, 2.0)
        nus = np.array(j.nus)
        deltas = np.array(j.deltas)
        edges = np.array(j.edges)
        va, ba = kernels.numba_api.cumulant_batch(
            np.array([z]), tau, j.intensity, nus, deltas, edges)
        vb, bb = kernels.numpy_api.cumulant_batch(
            np.array([z]), tau, j.intensity, nus, deltas, edges)
        assert bool(ba[0]) == bool(bb[0])
        np.testing.assert_allclose(va, vb, rtol=1e-13, atol=1e-16)


@needs_numba
def test_iv_and_bs_backends_agree():
    rng = np.random.default_rng(93)
    spot = 100.0
    strikes = spot * np.linspace(0.6, 1.6, 21)
    vols = rng.uniform(0.05, 0.9, strikes.size)
    for tau in (0.05, 0.4, 1.7):
        prices_a = kernels.numba_api.bs_batch(spot, strikes, tau, vols, 0.02,
                                              0.01, True)
        prices_b = kernels.numpy_api.bs_batch(spot, strikes, tau, vols, 0.02,
                                              0.01, True)
        np.testing.assert_allclose(prices_a, prices_b, rtol=1e-14, atol=0)
        iv_a, st_a = kernels.numba_api.iv_batch(prices_a, spot, strikes, tau,
                                                0.02, 0.01, True)
        iv_b, st_b = kernels.numpy_api.iv_batch(prices_b, spot, strikes, tau,
                                                0.02, 0.01, True)
        np.testing.assert_array_equal(st_a, st_b)
        np.testing.assert_allclose(iv_a, iv_b, rtol=1e-12, atol=1e-14)


def test_moment_explosion_flags_match_integrator():
    """For real exponent arguments deep in the moment region the closed form
    must flag explosion if and only if the brute-force integrator blows up."""
    from oracles import rk4_riccati

    kappa, theta, sigma, rho, r, q = 1.0, 0.09, 0.8, 0.9, 0.0, 0.0
    tau = 2.0
    for z_real in (1.0, 2.0, 3.0, 4.0, 6.0, 8.0):
        z = np.array([complex(z_real)])
        _, _, blown = kernels.riccati_batch(z, tau, kappa, theta, sigma, rho,
                                            r, q)
        _, _, exploded = rk4_riccati(complex(z_real), tau, kappa, theta,
                                     sigma, rho, r, q, h=1e-5)
        assert bool(blown[0]) == exploded, f"z={z_real}"


def test_near_pole_values_stay_accurate():
    """Just short of an explosion time the closed form still matches RK4."""
    from oracles import rk4_riccati

    kappa, theta, sigma, rho, r, q = 1.0, 0.09, 0.8, 0.9, 0.0, 0.0
    z = 4.0 + 0.0j
    lo, hi = 0.0, 2.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        _, _, blown = kernels.riccati_batch(np.array([z]), mid, kappa, theta,
                                            sigma, rho, r, q)
        if blown[0]:
            hi = mid
        else:
            lo = mid
    tau = 0.995 * lo
    phi_c, psi_c, blown = kernels.riccati_batch(np.array([z]), tau, kappa,
                                                theta, sigma, rho, r, q)
    assert not blown[0]
    phi_o, psi_o, exploded = rk4_riccati(z, tau, kappa, theta, sigma, rho, r,
                                         q, h=1e-6)
    assert not exploded
    assert abs(psi_c[0] - psi_o) / abs(psi_o) < 1e-6
    assert abs(phi_c[0] - phi_o) / abs(phi_o) < 1e-6
