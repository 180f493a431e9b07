"""Synthetic training data: uniform model sampling inside a bounds box with
Feller rejection, surface generation at unit spot, affine feature scaling,
and CSV persistence with a JSON manifest.

Input vectors follow a fixed 41-slot layout: carry (r, q), the grid's ten
maturities and thirteen moneyness levels, then v0, kappa, theta, sigma, rho,
intensity, five bucket jump locations and five bucket jump scales. Targets
are the 130 grid implied vols in row-major order. Surfaces at fixed
moneyness do not depend on the spot level, so everything is generated at
spot 1 and rescales freely.
"""

import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import BACKEND
from .affine import HestonParams, JumpSpec, MarketState
from .errors import ConfigError, CrcvolError, DataGenError
from .pricing import DampingConfig
from .surface import Grid, VolSurface, build_surface, check_static_arbitrage, default_grid

N_INPUTS = 41
IDX_R = 0
IDX_Q = 1
SLC_TAU = slice(2, 12)
SLC_MONEYNESS = slice(12, 25)
IDX_V0 = 25
IDX_KAPPA = 26
IDX_THETA = 27
IDX_SIGMA = 28
IDX_RHO = 29
IDX_INTENSITY = 30
SLC_NU = slice(31, 36)
SLC_DELTA = slice(36, 41)

#: largest audit violation a stored target row may carry
_AUDIT_LIMIT = 1e-5
_MAX_DRAW_ATTEMPTS = 200
_MANIFEST_VERSION = 1


def _check_pair(name, pair):
    lo, hi = (float(pair[0]), float(pair[1]))
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(f"bounds for {name} must be finite, got {pair}")
    if lo > hi:
        raise ValueError(f"bounds for {name} must satisfy lo <= hi, got {pair}")
    return (lo, hi)


@dataclass(frozen=True)
class SamplingBounds:
    """Per-parameter (lo, hi) boxes. Degenerate lo == hi pins a coordinate.
    The box must contain at least one point satisfying Feller's condition."""

    r: tuple = (0.0, 0.06)
    q: tuple = (0.0, 0.06)
    v0: tuple = (1e-4, 0.25)
    kappa: tuple = (1.0, 10.0)
    theta: tuple = (0.01, 0.5)
    sigma: tuple = (0.01, 0.5)
    rho: tuple = (-0.95, 0.95)
    intensity: tuple = (0.0, 1.0)
    nu: tuple = (-0.3, 0.3)
    delta: tuple = (0.01, 0.3)

    def __post_init__(self):
        for name in ("r", "q", "v0", "kappa", "theta", "sigma", "rho",
                     "intensity", "nu", "delta"):
            object.__setattr__(self, name, _check_pair(name, getattr(self, name)))
        if self.v0[0] < 0.0:
            raise ValueError("v0 lower bound must be non-negative")
        if self.kappa[0] <= 0.0 or self.theta[0] <= 0.0 or self.sigma[0] <= 0.0:
            raise ValueError("kappa, theta, sigma lower bounds must be positive")
        if self.rho[0] < -1.0 or self.rho[1] > 1.0:
            raise ValueError("rho bounds must stay within [-1, 1]")
        if self.intensity[0] < 0.0:
            raise ValueError("intensity lower bound must be non-negative")
        if self.delta[0] < 0.0:
            raise ValueError("delta lower bound must be non-negative")
        if 2.0 * self.kappa[1] * self.theta[1] <= self.sigma[0] ** 2:
            raise ValueError(
                "no point in the box satisfies Feller's condition: "
                f"2*{self.kappa[1]}*{self.theta[1]} <= {self.sigma[0]}^2"
            )

    def as_dict(self) -> dict:
        return {
            name: list(getattr(self, name))
            for name in ("r", "q", "v0", "kappa", "theta", "sigma", "rho",
                         "intensity", "nu", "delta")
        }


def default_bounds() -> SamplingBounds:
    return SamplingBounds()


@dataclass(frozen=True)
class ModelPoint:
    """One sampled model: diffusion parameters, starting variance, jumps."""

    params: HestonParams
    v0: float
    jumps: JumpSpec

    def to_inputs(self, grid: Grid) -> np.ndarray:
        """Assemble the 41-slot input vector for this point on a grid."""
        if len(grid.maturities) != 10 or len(grid.moneyness) != 13:
            raise ValueError(
                f"input layout expects a 10x13 grid, got {grid.shape}"
            )
        x = np.empty(N_INPUTS, dtype=np.float64)
        x[IDX_R] = self.params.r
        x[IDX_Q] = self.params.q
        x[SLC_TAU] = grid.maturities
        x[SLC_MONEYNESS] = grid.moneyness
        x[IDX_V0] = self.v0
        x[IDX_KAPPA] = self.params.kappa
        x[IDX_THETA] = self.params.theta
        x[IDX_SIGMA] = self.params.sigma
        x[IDX_RHO] = self.params.rho
        x[IDX_INTENSITY] = self.jumps.intensity
        x[SLC_NU] = self.jumps.nus
        x[SLC_DELTA] = self.jumps.deltas
        return x


def _uniform(rng, pair):
    lo, hi = pair
    return lo if lo == hi else rng.uniform(lo, hi)


def _draw_point(rng, bounds: SamplingBounds) -> ModelPoint:
    for _ in range(_MAX_DRAW_ATTEMPTS):
        r = _uniform(rng, bounds.r)
        q = _uniform(rng, bounds.q)
        v0 = _uniform(rng, bounds.v0)
        kappa = _uniform(rng, bounds.kappa)
        theta = _uniform(rng, bounds.theta)
        sigma = _uniform(rng, bounds.sigma)
        rho = _uniform(rng, bounds.rho)
        lam = _uniform(rng, bounds.intensity)
        nus = tuple(_uniform(rng, bounds.nu) for _ in range(5))
        deltas = tuple(_uniform(rng, bounds.delta) for _ in range(5))
        if 2.0 * kappa * theta <= sigma * sigma:
            continue  # Feller rejection; the whole point is redrawn
        return ModelPoint(
            params=HestonParams(r=r, q=q, kappa=kappa, theta=theta,
                                sigma=sigma, rho=rho),
            v0=v0,
            jumps=JumpSpec(intensity=lam, nus=nus, deltas=deltas),
        )
    raise ConfigError(
        f"Feller rejection rate above 99% inside {bounds}; widen the kappa/theta "
        "bounds or narrow sigma"
    )


def sample_params(seed, bounds: SamplingBounds = None) -> ModelPoint:
    """Draw one model point uniformly inside the box, rejecting draws that
    violate Feller's condition. ``seed`` may be an int or a SeedSequence."""
    bounds = bounds or default_bounds()
    rng = np.random.default_rng(seed)
    return _draw_point(rng, bounds)


@dataclass(frozen=True)
class ScalingSpec:
    """Per-feature affine map sending each input coordinate's box to (0, 1).
    Degenerate (constant) coordinates map to 0. Targets are never scaled."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        shift = np.array(self.shift, dtype=np.float64)
        scale = np.array(self.scale, dtype=np.float64)
        if shift.shape != scale.shape or shift.ndim != 1:
            raise ValueError("shift and scale must be 1-d arrays of equal length")
        if np.any(~np.isfinite(shift)) or np.any(~np.isfinite(scale)):
            raise ValueError("shift and scale must be finite")
        if np.any(scale < 0.0):
            raise ValueError("scale must be non-negative")
        shift.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def from_bounds(cls, bounds: SamplingBounds, grid: Grid) -> "ScalingSpec":
        lo = np.empty(N_INPUTS)
        hi = np.empty(N_INPUTS)
        lo[IDX_R], hi[IDX_R] = bounds.r
        lo[IDX_Q], hi[IDX_Q] = bounds.q
        lo[SLC_TAU] = hi[SLC_TAU] = grid.maturities
        lo[SLC_MONEYNESS] = hi[SLC_MONEYNESS] = grid.moneyness
        lo[IDX_V0], hi[IDX_V0] = bounds.v0
        lo[IDX_KAPPA], hi[IDX_KAPPA] = bounds.kappa
        lo[IDX_THETA], hi[IDX_THETA] = bounds.theta
        lo[IDX_SIGMA], hi[IDX_SIGMA] = bounds.sigma
        lo[IDX_RHO], hi[IDX_RHO] = bounds.rho
        lo[IDX_INTENSITY], hi[IDX_INTENSITY] = bounds.intensity
        lo[SLC_NU], hi[SLC_NU] = bounds.nu[0], bounds.nu[1]
        lo[SLC_DELTA], hi[SLC_DELTA] = bounds.delta[0], bounds.delta[1]
        return cls(shift=lo, scale=hi - lo)


def scale(x, spec: ScalingSpec):
    """Map raw features into the unit box. Returns (scaled, clamped) where
    ``clamped`` flags coordinates that fell outside and were clipped."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.shift.shape[0]:
        raise ValueError(
            f"feature dim {x.shape[-1]} does not match spec dim {spec.shift.shape[0]}"
        )
    safe = np.where(spec.scale == 0.0, 1.0, spec.scale)
    y = (x - spec.shift) / safe
    y = np.where(spec.scale == 0.0, 0.0, y)
    clamped = (y < 0.0) | (y > 1.0)
    return np.clip(y, 0.0, 1.0), clamped


def unscale(y, spec: ScalingSpec) -> np.ndarray:
    """Inverse of ``scale`` on in-box values; degenerate coordinates return
    their pinned value."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != spec.shift.shape[0]:
        raise ValueError(
            f"feature dim {y.shape[-1]} does not match spec dim {spec.shift.shape[0]}"
        )
    return y * spec.scale + spec.shift


def _csv_header(grid: Grid) -> str:
    cols = ["r", "q"]
    cols += [f"tau_{i + 1:02d}" for i in range(len(grid.maturities))]
    cols += [f"m_{i + 1:02d}" for i in range(len(grid.moneyness))]
    cols += ["v0", "kappa", "theta", "sigma", "rho", "lambda"]
    cols += [f"nu_{i + 1}" for i in range(5)]
    cols += [f"delta_{i + 1}" for i in range(5)]
    n_iv = len(grid.maturities) * len(grid.moneyness)
    cols += [f"iv_{i + 1:03d}" for i in range(n_iv)]
    return ",".join(cols)


def generate_dataset(n: int, seed: int, bounds: SamplingBounds = None,
                     grid: Grid = None, cfg: DampingConfig = None,
                     out=None) -> dict:
    """Generate ``n`` samples and write them as CSV plus a JSON manifest at
    ``out`` and ``out + '.manifest.json'``.

    Each sample is seeded independently from (seed, index), so any subset of
    indices regenerates identically. Samples whose surface cannot be built,
    inverted, or audited below a small arbitrage threshold are dropped and
    counted. Returns the manifest dictionary.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if out is None:
        raise ValueError("out path is required")
    bounds = bounds or default_bounds()
    grid = grid or default_grid()
    cfg = cfg or DampingConfig()

    t_start = time.monotonic()
    n_written = 0
    dropped = []
    state_x = 0.0  # unit spot
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(_csv_header(grid) + "\n")
        for i in range(n):
            rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
            point = _draw_point(rng, bounds)
            try:
                surf = build_surface(
                    MarketState(x=state_x, v=point.v0), point.params,
                    point.jumps, grid, cfg,
                )
            except CrcvolError:
                dropped.append(i)
                continue
            audit = check_static_arbitrage(surf, point.params.r, point.params.q)
            if audit.max_violation >= _AUDIT_LIMIT:
                dropped.append(i)
                continue
            row = np.concatenate([point.to_inputs(grid), surf.vols.ravel()])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
            n_written += 1

    drop_rate = len(dropped) / n
    if drop_rate > 0.5:
        raise DataGenError(
            f"dropped {len(dropped)} of {n} samples ({drop_rate:.1%}); "
            "the bounds box prices too many degenerate surfaces"
        )
    manifest = {
        "format_version": _MANIFEST_VERSION,
        "seed": seed,
        "n_requested": n,
        "n_written": n_written,
        "n_dropped": len(dropped),
        "dropped_indices": dropped,
        "drop_warning": drop_rate > 0.05,
        "bounds": bounds.as_dict(),
        "grid": {"maturities": list(grid.maturities), "moneyness": list(grid.moneyness)},
        "damping": {
            "alpha": cfg.alpha,
            "trunc": cfg.trunc,
            "n_nodes": cfg.n_nodes,
            "tol": cfg.tol,
            "max_nodes": cfg.max_nodes,
            "trunc_cap": cfg.trunc_cap,
        },
        "spot": 1.0,
        "backend": BACKEND,
        "columns": N_INPUTS + grid.shape[0] * grid.shape[1],
        "wall_time_s": round(time.monotonic() - t_start, 3),
    }
    if drop_rate > 0.05:
        warnings.warn(
            f"dataset drop rate {drop_rate:.1%} exceeds 5%", stacklevel=2
        )
    with open(str(out) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_dataset(path, n_inputs: int = N_INPUTS):
    """Load a dataset CSV. Returns (X, Y, header) with X (n, 41) raw inputs
    and Y (n, 130) implied vols."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[0] and data.shape[1] != len(header):
        raise ValueError(
            f"{path}: {data.shape[1]} columns but {len(header)} header names"
        )
    return data[:, :n_inputs], data[:, n_inputs:], header
