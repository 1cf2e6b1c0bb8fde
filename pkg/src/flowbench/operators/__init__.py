"""Baseline operator-learning architectures with a uniform build/predict surface."""
from .spec import DEFAULTS, KINDS, STYLE, ModelSpec, paper_spec
from .layers import (MLP, BatchNorm2d, Conv2d, DoubleConv, Linear, Module, ModuleList, SpectralConv2d,
                     UpConv2x2)
from .models import (FFN, FNO, MODEL_CLASSES, AutoDeepONet, AutoDeepONetCNN, AutoEDeepONet, AutoFFN, DeepONet,
                     FNOBlock, Model, ResNet, UNet, aggregate, build_model)
from .inputs import (ModelInput, image_stack, model_input_for, predict, predict_frame_at, predict_next_field,
                     sample_lattice, spacetime_queries, unit_coordinates)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "AutoDeepONet", "AutoDeepONetCNN", "AutoEDeepONet", "AutoFFN", "BatchNorm2d", "Conv2d", "DEFAULTS",
    "DeepONet", "DoubleConv", "FFN", "FNO", "FNOBlock", "KINDS", "Linear", "MLP", "MODEL_CLASSES", "Model",
    "ModelInput", "ModelSpec", "Module", "ModuleList", "ResNet", "STYLE", "SpectralConv2d", "UNet", "UpConv2x2",
    "aggregate", "build_model", "image_stack", "load_checkpoint", "model_input_for", "paper_spec", "predict",
    "predict_frame_at", "predict_next_field", "sample_lattice", "save_checkpoint", "spacetime_queries",
    "unit_coordinates",
]
