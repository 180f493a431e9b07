"""From-scratch residual ELU networks, the training loop, and the composed
inverse-calibration scheme."""

from .inverse import (ComposedInverse, build_inverse_net, build_pricing_net,
                      compose_nn3, composed_training_set, invert)
from .network import Network, NetworkSpec, load, mse_loss, save
from .training import TrainConfig, TrainResult, smoothed_decreasing, train

__all__ = [
    "ComposedInverse", "Network", "NetworkSpec", "TrainConfig", "TrainResult",
    "build_inverse_net", "build_pricing_net", "compose_nn3",
    "composed_training_set", "invert", "load", "mse_loss", "save",
    "smoothed_decreasing", "train",
]
