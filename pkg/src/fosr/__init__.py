"""Bayesian function-on-scalars regression with unknown orthonormal loading
curves, shrinkage priors and decoupled shrinkage-and-selection summaries."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    DrawArchive,
    FunctionalDataset,
    McmcConfig,
    NumericalError,
    ValidationError,
    load_dataset,
    write_dataset,
)
from .dss import build_dss_problem, run_selection, solve_group_lasso  # noqa: E402
from .gibbs import FosrGibbs, run_gibbs  # noqa: E402
from .simulate import generate_dataset  # noqa: E402
from .summaries import gbpv_select, summarize_coefficients  # noqa: E402

__all__ = [
    "DrawArchive", "FunctionalDataset", "McmcConfig", "NumericalError", "ValidationError",
    "load_dataset", "write_dataset", "build_dss_problem", "run_selection", "solve_group_lasso",
    "FosrGibbs", "run_gibbs", "generate_dataset", "gbpv_select", "summarize_coefficients",
]
