"""Shared fixtures. Heavy artifacts (dataset, trained nets) are session-scoped
and build once; everything derives deterministically from fixed seeds."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from crcvol.affine import HestonParams, MarketState, flat_jump_spec
from crcvol.pricing import DampingConfig


def fig1_model():
    """Reference parameter set one: low initial variance, mild jumps."""
    p = HestonParams(kappa=7.797, theta=0.247, sigma=0.280, rho=0.042,
                     r=0.0205, q=0.03)
    state = MarketState(x=np.log(100.0), v=0.0001)
    j = flat_jump_spec(0.081, 0.159, 0.205)
    return state, p, j


def fig2_model():
    """Reference parameter set two: mid-range variance and jumps."""
    p = HestonParams(kappa=5.421, theta=0.370, sigma=0.224, rho=0.242,
                     r=0.0068, q=0.0161)
    state = MarketState(x=np.log(100.0), v=0.0951)
    j = flat_jump_spec(0.289, 0.087, 0.249)
    return state, p, j


def fig3_model():
    """Reference parameter set three: negative skew, frequent down jumps."""
    p = HestonParams(kappa=8.698, theta=0.106, sigma=0.391, rho=-0.12,
                     r=0.0111, q=0.0021)
    state = MarketState(x=np.log(100.0), v=0.0552)
    j = flat_jump_spec(0.491, -0.202, 0.287)
    return state, p, j


REFERENCE_MODELS = (fig1_model, fig2_model, fig3_model)


def draw_heston(rng, r_eq_q=False):
    """Random admissible Heston parameters (strict Feller)."""
    while True:
        kappa = rng.uniform(1.0, 10.0)
        theta = rng.uniform(0.01, 0.5)
        sigma = rng.uniform(0.01, 0.5)
        if 2.0 * kappa * theta <= sigma * sigma:
            continue
        r = rng.uniform(0.0, 0.06)
        q = r if r_eq_q else rng.uniform(0.0, 0.06)
        return HestonParams(kappa=kappa, theta=theta, sigma=sigma,
                            rho=rng.uniform(-0.95, 0.95), r=r, q=q)


def draw_jumps(rng):
    return flat_jump_spec(rng.uniform(0.0, 1.0), rng.uniform(-0.3, 0.3),
                          rng.uniform(0.01, 0.3))


@pytest.fixture(scope="session")
def damping():
    return DampingConfig()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small generated dataset shared by datagen/neural tests."""
    from crcvol.datagen import generate_dataset, load_dataset

    path = tmp_path_factory.mktemp("data") / "tiny.csv"
    manifest = generate_dataset(48, seed=424242, out=path)
    x, y, header = load_dataset(path)
    return {"path": path, "manifest": manifest, "x": x, "y": y,
            "header": header}
