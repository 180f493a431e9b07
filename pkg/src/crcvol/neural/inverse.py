"""Wiring for the inverse-calibration scheme.

The forward map (network one) prices: 41 model/grid features in, 130 grid
implied vols out. The inverse map (network two) calibrates: given theta,
sigma, rho and an observed surface it emits the ten bucketed jump
parameters, boxed by a stretched sigmoid. Composing them (network three)
feeds network two's jump estimate, together with the 31 non-jump features,
back through a frozen network one; trained to reproduce the surface it saw,
the composite learns surface-consistent jump parameters without jump labels.
"""

import numpy as np

from ..datagen import (IDX_RHO, IDX_SIGMA, IDX_THETA, N_INPUTS, SLC_NU,
                       ScalingSpec, SamplingBounds, default_bounds)
from ..surface import Grid, VolSurface, default_grid
from .network import Network, NetworkSpec

N_JUMP = 10
N_PASS = SLC_NU.start  # leading non-jump slots of the input layout
_N_SMILE_PARAMS = 3  # theta, sigma, rho


def _n_vols(grid: Grid) -> int:
    return grid.shape[0] * grid.shape[1]


def build_pricing_net(bounds: SamplingBounds = None, grid: Grid = None,
                      width: int = 256, n_main_layers: int = 2,
                      seed: int = 0) -> Network:
    """Fresh forward network: 41 raw features -> grid implied vols, with the
    sampling box's feature scaling baked in and a linear output."""
    bounds = bounds or default_bounds()
    grid = grid or default_grid()
    scaling = ScalingSpec.from_bounds(bounds, grid)
    safe = np.where(scaling.scale == 0.0, 1.0, scaling.scale)
    spec = NetworkSpec(input_dim=N_INPUTS, output_dim=_n_vols(grid),
                       n_main_layers=n_main_layers, width=width)
    return Network(spec, seed=seed, in_shift=scaling.shift, in_scale=1.0 / safe)


def build_inverse_net(bounds: SamplingBounds = None, grid: Grid = None,
                      width: int = 256, n_main_layers: int = 2,
                      seed: int = 0) -> Network:
    """Fresh inverse network: (theta, sigma, rho, surface vols) -> the ten
    jump parameters, stretched-sigmoid-boxed to the sampling bounds."""
    bounds = bounds or default_bounds()
    grid = grid or default_grid()
    nv = _n_vols(grid)
    lo = [bounds.nu[0]] * 5 + [bounds.delta[0]] * 5
    hi = [bounds.nu[1]] * 5 + [bounds.delta[1]] * 5
    shift = np.zeros(_N_SMILE_PARAMS + nv)
    scale = np.ones(_N_SMILE_PARAMS + nv)
    for col, box in enumerate((bounds.theta, bounds.sigma, bounds.rho)):
        shift[col] = box[0]
        scale[col] = 1.0 / (box[1] - box[0])
    spec = NetworkSpec(input_dim=_N_SMILE_PARAMS + nv, output_dim=N_JUMP,
                       n_main_layers=n_main_layers, width=width,
                       out_lo=tuple(lo), out_hi=tuple(hi))
    return Network(spec, seed=seed, in_shift=shift, in_scale=scale)


class ComposedInverse:
    """The composite net: inverse net (trainable) into frozen pricing net.

    Input rows are (31 non-jump features, n_vols observed vols); output is
    the pricing net's surface for the inverse net's jump estimate. Gradients
    flow through the frozen net into the trainable one, but the frozen net's
    parameters are structurally out of the optimizer's reach and its batch
    norm always runs in eval mode, so its weights never change.
    """

    def __init__(self, pricing_net: Network, inverse_net: Network):
        nv = pricing_net.spec.output_dim
        if pricing_net.spec.input_dim != N_PASS + N_JUMP:
            raise ValueError(
                f"pricing net must take {N_PASS + N_JUMP} inputs, "
                f"got {pricing_net.spec.input_dim}"
            )
        if inverse_net.spec.input_dim != _N_SMILE_PARAMS + nv:
            raise ValueError(
                f"inverse net must take {_N_SMILE_PARAMS + nv} inputs, "
                f"got {inverse_net.spec.input_dim}"
            )
        if inverse_net.spec.output_dim != N_JUMP:
            raise ValueError(
                f"inverse net must emit {N_JUMP} outputs, "
                f"got {inverse_net.spec.output_dim}"
            )
        self.pricing_net = pricing_net
        self.inverse_net = inverse_net
        self.input_dim = N_PASS + nv
        self.output_dim = nv

    def trainable_params(self) -> dict:
        return self.inverse_net.params

    @property
    def state(self) -> dict:
        """Mutable running statistics; only the inverse half ever trains."""
        return self.inverse_net.state

    def _split(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected batch of shape (n, {self.input_dim}), got {x.shape}"
            )
        smile = x[:, (IDX_THETA, IDX_SIGMA, IDX_RHO)]
        vols = x[:, N_PASS:]
        return x[:, :N_PASS], np.concatenate([smile, vols], axis=1)

    def forward_cached(self, x, train: bool):
        passthrough, x_inv = self._split(x)
        jumps, c_inv = self.inverse_net.forward_cached(x_inv, train)
        x_price = np.concatenate([passthrough, jumps], axis=1)
        # frozen: eval mode regardless of the composite's mode
        out, c_price = self.pricing_net.forward_cached(x_price, train=False)
        return out, (c_inv, c_price)

    def forward(self, x, train: bool = False):
        return self.forward_cached(x, train)[0]

    def backward(self, caches, dy):
        c_inv, c_price = caches
        _, dx_price = self.pricing_net.backward(c_price, dy)
        grads, dx_inv = self.inverse_net.backward(c_inv, dx_price[:, N_PASS:])
        dx = np.zeros((dy.shape[0], self.input_dim))
        dx[:, :N_PASS] = dx_price[:, :N_PASS]
        dx[:, (IDX_THETA, IDX_SIGMA, IDX_RHO)] += dx_inv[:, :_N_SMILE_PARAMS]
        dx[:, N_PASS:] = dx_inv[:, _N_SMILE_PARAMS:]
        return grads, dx


def compose_nn3(pricing_net: Network, inverse_net: Network) -> ComposedInverse:
    """Build the composite net with the pricing net frozen."""
    return ComposedInverse(pricing_net, inverse_net)


def composed_training_set(inputs, vols):
    """Rows for training the composite toward the identity: features are the
    non-jump inputs plus the observed surface; targets are that same surface."""
    inputs = np.asarray(inputs, dtype=np.float64)
    vols = np.asarray(vols, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != N_INPUTS:
        raise ValueError(f"inputs must be (n, {N_INPUTS}), got {inputs.shape}")
    if vols.ndim != 2 or vols.shape[0] != inputs.shape[0]:
        raise ValueError(f"vols must be (n, n_vols), got {vols.shape}")
    return np.concatenate([inputs[:, :N_PASS], vols], axis=1), vols


def invert(inverse_net: Network, surface: VolSurface, theta: float,
           sigma: float, rho: float):
    """Calibrate jump parameters to an observed surface. Returns
    (nus, deltas), each a 5-tuple, strictly inside the net's output box.
    The jump intensity is not produced; it is held fixed by convention."""
    vols = surface.vols.ravel()
    if _N_SMILE_PARAMS + vols.size != inverse_net.spec.input_dim:
        raise ValueError(
            f"surface has {vols.size} vols but the net expects "
            f"{inverse_net.spec.input_dim - _N_SMILE_PARAMS}"
        )
    x = np.concatenate([[theta, sigma, rho], vols])[None, :]
    y = inverse_net.forward(x, train=False)[0]
    return tuple(float(v) for v in y[:5]), tuple(float(v) for v in y[5:])
