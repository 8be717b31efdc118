"""freqgate: frequency-gated U-Net segmentation on a numpy autodiff core."""

from . import complex_activations, fourier, losses, metrics
from .gradcheck import grad_check
from .layers import AttentionFilterGateLayer, AttentionGateLayer, GlobalFilterLayer
from .models import Model, ModelSpec, build, param_count
from .tensor import Spectrum, Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "AttentionFilterGateLayer",
    "AttentionGateLayer",
    "GlobalFilterLayer",
    "Model",
    "ModelSpec",
    "Spectrum",
    "Tape",
    "Tensor",
    "build",
    "complex_activations",
    "fourier",
    "grad_check",
    "losses",
    "metrics",
    "param_count",
]
