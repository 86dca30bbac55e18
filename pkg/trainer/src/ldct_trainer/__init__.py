"""Learned TV parameter-maps through unrolled optimization."""

from .data import load_hdf5_images, make_datasets, pairs_from_images, synthetic_images
from .train import TrainReport, train
from .unet import ParamMapNet
from .unrolled import (
    UnrolledConfig,
    backproject_t,
    div_adjoint_t,
    estimate_param_map,
    grad_t,
    project_t,
    run_unrolled,
    unrolled_forward,
)

__version__ = "0.1.0"

__all__ = [
    "ParamMapNet",
    "TrainReport",
    "UnrolledConfig",
    "backproject_t",
    "div_adjoint_t",
    "estimate_param_map",
    "grad_t",
    "load_hdf5_images",
    "make_datasets",
    "pairs_from_images",
    "project_t",
    "run_unrolled",
    "synthetic_images",
    "train",
    "unrolled_forward",
]
