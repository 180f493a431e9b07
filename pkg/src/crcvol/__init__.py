"""Consistent-recalibration volatility surfaces.

Affine stochastic-volatility pricing with maturity-bucketed jumps, Fourier
call prices and implied vols, arbitrage-audited surface grids, a dataset
generator, a small from-scratch neural stack (forward pricing net, inverse
calibration net, and their frozen composition), and the moving-surface
recalibration simulator.

Submodules load lazily: ``import crcvol`` pulls no numerics until an
attribute is touched, so the CLI can pin thread pools first.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "errors": ["AccuracyError", "ConfigError", "CrcvolError", "DataGenError",
               "FormatError", "NoArbitrageBandError", "NumericDomainError",
               "TrainingDivergedError"],
    "affine": ["DEFAULT_BUCKET_EDGES", "HestonParams", "JumpSpec",
               "MarketState", "RiccatiSolution", "char_fn", "char_fn_batch",
               "flat_jump_spec", "forward_characteristic", "jump_cumulant",
               "riccati_solve"],
    "pricing": ["DampingConfig", "OptionQuote", "bs_price", "call_price",
                "call_prices", "implied_vol", "put_price"],
    "surface": ["ArbReport", "Grid", "VolSurface", "build_surface",
                "check_static_arbitrage", "default_grid", "delta_c",
                "read_surface_csv", "write_surface_csv"],
    "datagen": ["ModelPoint", "SamplingBounds", "ScalingSpec",
                "default_bounds", "generate_dataset", "load_dataset",
                "sample_params", "scale", "unscale"],
    "neural": ["ComposedInverse", "Network", "NetworkSpec", "TrainConfig",
               "TrainResult", "build_inverse_net", "build_pricing_net",
               "compose_nn3", "composed_training_set", "invert", "load",
               "mse_loss", "save", "smoothed_decreasing", "train"],
    "sim": ["ParamBox", "SimConfig", "SimRecord", "SimState", "bates_step",
            "param_step", "recalibrate", "run", "simulate_paths"],
    "config": ["RunConfig", "default_config", "load_config"],
}

_ATTR_TO_MODULE = {name: mod for mod, names in _EXPORTS.items()
                   for name in names}

__all__ = sorted(_ATTR_TO_MODULE) + ["__version__"]


def __getattr__(name: str):
    module_name = _ATTR_TO_MODULE.get(name)
    if module_name is None:
        if name in _EXPORTS:
            return importlib.import_module(f".{name}", __name__)
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__ + list(_EXPORTS)
