"""Set inference for sign-restricted discrete choice models via index-conditioned CLR tests."""

__version__ = "0.1.0"

from indexclr.clr import ClrConfig, TestOutcome, clr_test  # noqa: E402
from indexclr.confset import ConfidenceSet, build_eval_grid, build_param_grid, invert  # noqa: E402
from indexclr.kernels import KernelConfig  # noqa: E402
from indexclr.models import (  # noqa: E402
    Dataset,
    ParamSpace,
    SignModel,
    make_binary_model,
    make_multinomial_model,
    make_ordered_model,
    make_panel_binary_model,
    make_panel_ordered_model,
)

__all__ = [
    "ClrConfig",
    "ConfidenceSet",
    "Dataset",
    "KernelConfig",
    "ParamSpace",
    "SignModel",
    "TestOutcome",
    "build_eval_grid",
    "build_param_grid",
    "clr_test",
    "invert",
    "make_binary_model",
    "make_multinomial_model",
    "make_ordered_model",
    "make_panel_binary_model",
    "make_panel_ordered_model",
]
