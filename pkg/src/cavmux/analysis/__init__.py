from .correlation import (
    G2Error,
    G2Histogram,
    background_fraction_for,
    compute_g2,
    fit_bunching,
    rescale_g2,
)
from .fitting import (
    FitConvergenceError,
    FitError,
    FitResult,
    deconvolved_fwhm,
    fit_exponential_decay,
    fit_line,
    fit_rabi,
    levenberg_marquardt,
)

__all__ = [
    "FitConvergenceError",
    "FitError",
    "FitResult",
    "G2Error",
    "G2Histogram",
    "background_fraction_for",
    "compute_g2",
    "deconvolved_fwhm",
    "fit_bunching",
    "fit_exponential_decay",
    "fit_line",
    "fit_rabi",
    "levenberg_marquardt",
    "rescale_g2",
]
