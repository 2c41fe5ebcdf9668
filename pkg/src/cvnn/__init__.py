"""Complex-valued neural networks on Wirtinger-calculus backpropagation.

From-scratch building blocks: a complex tensor type, forward/reverse-mode
differentiation over conjugate derivative pairs, complex layers, activations,
initializers and losses, an SGD training loop, and a synthetic radar-signal
harness with analytic-signal (Hilbert) preprocessing.
"""

from .ctensor import CTensor, conv2d, elementwise, matmul, modulus_arg
from .errors import (
    ConfigError,
    ContractError,
    CvnnError,
    DegenerateBatchError,
    DimensionError,
    DivergenceError,
    IntegrityError,
    SingularityError,
    UnsupportedArchitectureError,
    UnsupportedOpError,
)
from .losses import LossSpec
from .train import History, Model, SGDConfig, evaluate, fit, run_repeated, sgd_step

__version__ = "0.1.0"

__all__ = [
    "CTensor",
    "ConfigError",
    "ContractError",
    "CvnnError",
    "DegenerateBatchError",
    "DimensionError",
    "DivergenceError",
    "History",
    "IntegrityError",
    "LossSpec",
    "Model",
    "SGDConfig",
    "SingularityError",
    "UnsupportedArchitectureError",
    "UnsupportedOpError",
    "conv2d",
    "elementwise",
    "evaluate",
    "fit",
    "matmul",
    "modulus_arg",
    "run_repeated",
    "sgd_step",
]
