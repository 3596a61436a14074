"""Prior mask generation from feature-map correlations.

Multi-patch regional matching between query and support feature grids plus
a learned per-support-position rectifier, exposed over numpy arrays. See
the package README for the file formats and the matching CLI.
"""

from ._core import (
    CorrVolume,
    Error,
    NsmWeights,
    avg_pool_2x2,
    baseline_prior,
    concentrate,
    elementwise_corr,
    export_pgm,
    fit_step,
    generate_prior,
    hadamard_mask,
    init_nsm_weights,
    init_projection_weights,
    l2_normalize_channels,
    load_named_tensors,
    load_tensor,
    max_reduce,
    noise_filter,
    normalize_minmax,
    patch_corr,
    project_channels,
    rectify,
    save_named_tensors,
    save_tensor,
    stack_patches,
)

__all__ = [
    "CorrVolume",
    "Error",
    "NsmWeights",
    "avg_pool_2x2",
    "baseline_prior",
    "concentrate",
    "elementwise_corr",
    "export_pgm",
    "fit_step",
    "generate_prior",
    "hadamard_mask",
    "init_nsm_weights",
    "init_projection_weights",
    "l2_normalize_channels",
    "load_named_tensors",
    "load_tensor",
    "max_reduce",
    "noise_filter",
    "normalize_minmax",
    "patch_corr",
    "project_channels",
    "rectify",
    "save_named_tensors",
    "save_tensor",
    "stack_patches",
]

__version__ = "0.1.0"
