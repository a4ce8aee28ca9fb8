"""Bayesian logistic shape model segmentation."""

from ._core import (
    Error,
    InvalidArgument,
    __version__,
    default_config,
    dice,
    expected_posterior,
    fit,
    hausdorff,
    logistic_prior,
    run_cli,
    shape_field,
    t_pdf,
)

__all__ = [
    "Error",
    "InvalidArgument",
    "__version__",
    "default_config",
    "dice",
    "expected_posterior",
    "fit",
    "hausdorff",
    "logistic_prior",
    "run_cli",
    "shape_field",
    "t_pdf",
]
