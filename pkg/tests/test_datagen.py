"""Sampling, scaling, and the dataset pipeline."""

import numpy as np
import pytest

from crcvol.affine import HestonParams, JumpSpec, MarketState
from crcvol.datagen import (IDX_INTENSITY, IDX_KAPPA, IDX_Q, IDX_R, IDX_RHO,
                            IDX_SIGMA, IDX_THETA, IDX_V0, N_INPUTS, SLC_DELTA,
                            SLC_MONEYNESS, SLC_NU, SLC_TAU, SamplingBounds,
                            ScalingSpec, default_bounds, generate_dataset,
                            load_dataset, sample_params, scale, unscale)
from crcvol.errors import ConfigError
from crcvol.surface import build_surface, default_grid


def test_sample_params_deterministic():
    a = sample_params(1234)
    b = sample_params(1234)
    assert a.params == b.params
    assert a.v0 == b.v0
    assert a.jumps == b.jumps


def test_sample_params_respects_feller_and_box():
    bounds = default_bounds()
    for seed in range(300):
        pt = sample_params(seed)
        p = pt.params
        assert 2.0 * p.kappa * p.theta > p.sigma * p.sigma
        assert bounds.theta[0] <= p.theta <= bounds.theta[1]
        assert bounds.sigma[0] <= p.sigma <= bounds.sigma[1]
        assert bounds.rho[0] <= p.rho <= bounds.rho[1]
        assert bounds.v0[0] <= pt.v0 <= bounds.v0[1]


def test_sample_params_uniform_marginals():
    """Kolmogorov-Smirnov distance of each unconstrained coordinate against
    the uniform law on its box, 10^4 draws. The Feller rejection couples
    (kappa, theta, sigma), so those three are checked against the rejected
    law by construction; r, q, rho, v0, lambda, nu, delta stay independent
    uniforms and must pass a plain KS test."""
    n = 10_000
    bounds = default_bounds()
    rows = np.empty((n, 8))
    for i in range(n):
        pt = sample_params(i)
        rows[i] = (pt.params.r, pt.params.q, pt.params.rho, pt.v0,
                   pt.jumps.intensity, pt.jumps.nus[0], pt.jumps.deltas[0],
                   pt.jumps.nus[4])
    boxes = [bounds.r, bounds.q, bounds.rho, bounds.v0, bounds.intensity,
             bounds.nu, bounds.delta, bounds.nu]
    for col, (lo, hi) in enumerate(boxes):
        u = np.sort((rows[:, col] - lo) / (hi - lo))
        grid_pos = np.arange(1, n + 1) / n
        ks = np.max(np.maximum(np.abs(u - grid_pos),
                               np.abs(u - (grid_pos - 1.0 / n))))
        assert ks < 0.02, f"column {col}: KS={ks:.4f}"


def test_degenerate_bounds_give_constant_draws():
    bounds = SamplingBounds(r=(0.01, 0.01), q=(0.0, 0.0), v0=(0.04, 0.04),
                            kappa=(2.0, 2.0), theta=(0.09, 0.09),
                            sigma=(0.3, 0.3), rho=(-0.5, -0.5),
                            intensity=(0.1, 0.1), nu=(0.05, 0.05),
                            delta=(0.2, 0.2))
    a = sample_params(5, bounds)
    b = sample_params(99, bounds)
    assert a.params == b.params and a.v0 == b.v0 and a.jumps == b.jumps


def test_infeasible_feller_box_rejected():
    with pytest.raises((ConfigError, ValueError)):
        SamplingBounds(r=(0.0, 0.06), q=(0.0, 0.06), v0=(0.01, 0.25),
                       kappa=(1.0, 1.0), theta=(0.01, 0.01),
                       sigma=(0.5, 0.5), rho=(-0.9, 0.9),
                       intensity=(0.0, 1.0), nu=(-0.3, 0.3),
                       delta=(0.01, 0.3))


def test_model_point_input_layout():
    grid = default_grid()
    pt = sample_params(77)
    x = pt.to_inputs(grid)
    assert x.shape == (N_INPUTS,)
    assert x[IDX_R] == pt.params.r and x[IDX_Q] == pt.params.q
    np.testing.assert_array_equal(x[SLC_TAU], grid.maturities)
    np.testing.assert_array_equal(x[SLC_MONEYNESS], grid.moneyness)
    assert x[IDX_V0] == pt.v0 and x[IDX_KAPPA] == pt.params.kappa
    assert x[IDX_THETA] == pt.params.theta and x[IDX_SIGMA] == pt.params.sigma
    assert x[IDX_RHO] == pt.params.rho
    assert x[IDX_INTENSITY] == pt.jumps.intensity
    np.testing.assert_array_equal(x[SLC_NU], pt.jumps.nus)
    np.testing.assert_array_equal(x[SLC_DELTA], pt.jumps.deltas)


def test_scaling_round_trip_and_corners():
    bounds = default_bounds()
    grid = default_grid()
    spec = ScalingSpec.from_bounds(bounds, grid)
    rng = np.random.default_rng(2002)
    pts = np.stack([sample_params(int(s)).to_inputs(grid)
                    for s in rng.integers(0, 1 << 31, 30)])
    scaled, clamped = scale(pts, spec)
    assert not clamped.any()
    assert np.all(scaled >= 0.0) and np.all(scaled <= 1.0)
    back = unscale(scaled, spec)
    assert np.max(np.abs(back - pts)) < 1e-15 * np.max(np.abs(pts))

    # corners of the box map to {0, 1}; midpoint maps to 0.5 (varying dims)
    varying = spec.scale != 0.0
    lo = spec.shift
    hi = spec.shift + spec.scale
    lo_scaled, _ = scale(lo[None, :], spec)
    hi_scaled, _ = scale(hi[None, :], spec)
    assert np.all(lo_scaled[0][varying] == 0.0)
    assert np.all(hi_scaled[0][varying] == 1.0)
    mid_scaled, _ = scale((0.5 * (lo + hi))[None, :], spec)
    np.testing.assert_allclose(mid_scaled[0][varying], 0.5, atol=1e-12)


def test_scaling_clamps_and_flags_outside_box():
    bounds = default_bounds()
    grid = default_grid()
    spec = ScalingSpec.from_bounds(bounds, grid)
    x = sample_params(3).to_inputs(grid)[None, :].copy()
    x[0, IDX_THETA] = bounds.theta[1] + 1.0
    scaled, clamped = scale(x, spec)
    assert clamped[0, IDX_THETA]
    assert clamped.sum() == 1
    assert scaled[0, IDX_THETA] == 1.0


def test_generate_dataset_reproducible(tmp_path):
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    generate_dataset(3, seed=9090, out=p1)
    generate_dataset(3, seed=9090, out=p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_generate_dataset_subset_reproducible(tiny_dataset, tmp_path):
    """Per-index seeding: a smaller run must reproduce the first rows of a
    larger run with the same master seed."""
    sub = tmp_path / "sub.csv"
    generate_dataset(5, seed=424242, out=sub)
    x_sub, y_sub, _ = load_dataset(sub)
    x, y = tiny_dataset["x"], tiny_dataset["y"]
    np.testing.assert_array_equal(x_sub, x[:5])
    np.testing.assert_array_equal(y_sub, y[:5])


def test_generate_dataset_manifest_and_audit(tiny_dataset):
    man = tiny_dataset["manifest"]
    assert man["n_requested"] == 48
    assert man["n_written"] == tiny_dataset["x"].shape[0]
    assert man["n_dropped"] == 48 - man["n_written"]
    assert man["columns"] == 171
    assert man["seed"] == 424242
    assert "bounds" in man and "grid" in man and "damping" in man
    header = tiny_dataset["header"]
    assert header[0] == "r" and header[1] == "q"
    assert header[41] == "iv_001" and header[-1] == "iv_130"


def test_lambda_zero_bounds_match_pure_heston(tmp_path):
    """With the intensity pinned at zero the jump parameters are inert, so
    datasets from the same seed agree no matter what nu/delta boxes said."""
    b0 = default_bounds()
    bz = SamplingBounds(r=b0.r, q=b0.q, v0=b0.v0, kappa=b0.kappa,
                        theta=b0.theta, sigma=b0.sigma, rho=b0.rho,
                        intensity=(0.0, 0.0), nu=b0.nu, delta=b0.delta)
    pa = tmp_path / "za.csv"
    generate_dataset(4, seed=31337, bounds=bz, out=pa)
    xa, ya, _ = load_dataset(pa)
    assert np.all(xa[:, IDX_INTENSITY] == 0.0)
    # same surfaces from scratch with any other jump values at lambda = 0
    for row, vols in zip(xa, ya):
        p = HestonParams(kappa=row[IDX_KAPPA], theta=row[IDX_THETA],
                         sigma=row[IDX_SIGMA], rho=row[IDX_RHO],
                         r=row[IDX_R], q=row[IDX_Q])
        j_other = JumpSpec(intensity=0.0, nus=(0.25,) * 5,
                           deltas=(0.11,) * 5)
        s = build_surface(MarketState(x=0.0, v=row[IDX_V0]), p, j_other)
        np.testing.assert_allclose(s.vols.ravel(), vols, rtol=0, atol=1e-14)


def test_load_dataset_shapes(tiny_dataset):
    x, y = tiny_dataset["x"], tiny_dataset["y"]
    assert x.shape[1] == N_INPUTS and y.shape[1] == 130
    assert x.shape[0] == y.shape[0] > 0
    assert np.all(np.isfinite(x)) and np.all(np.isfinite(y))
    assert np.all(y > 0.0)
