"""Lightweight CNNs (EfficientNet-B0, MobileNetV2, ShuffleNet) on a numpy autodiff core."""

from .autodiff import Tensor, no_grad
from .models import HeadConfig, ModelGraph, build_model, count_parameters, forward

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "HeadConfig", "ModelGraph", "build_model", "count_parameters",
           "forward"]
