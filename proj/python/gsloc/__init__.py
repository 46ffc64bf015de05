# Copyright Contributors to the gsloc Project
# SPDX-License-Identifier: Apache-2.0

from ._core import (
    Camera,
    DataError,
    DomainError,
    Error,
    LocalizationFailure,
    Scene,
    SchemaError,
    SplitParams,
    build_map,
    evaluate,
    load_ply,
    mixture_moment,
    psnr,
    render,
    save_ply,
    split_parameters,
    split_scene,
    synthesize,
)

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "DataError",
    "DomainError",
    "Error",
    "LocalizationFailure",
    "Scene",
    "SchemaError",
    "SplitParams",
    "build_map",
    "evaluate",
    "load_ply",
    "mixture_moment",
    "psnr",
    "render",
    "save_ply",
    "split_parameters",
    "split_scene",
    "synthesize",
]
