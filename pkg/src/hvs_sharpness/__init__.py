"""No-reference image sharpness scoring with HVS-like FIR kernels.

Kernels are synthesized from a generalized-Gaussian spectral model
(:mod:`.kernels`), applied by a deterministic scoring pipeline
(:mod:`.scoring`), and evaluated against subjective ratings
(:mod:`.statistics`, :mod:`.harness`).
"""

from .kernels import (
    FirKernel,
    GGParams,
    HvsKernelSpec,
    KernelDesignError,
    design_derivative_kernel,
    gg_spectrum,
    kernel_response,
    load_kernel,
    save_kernel,
    synthesize,
)
from .presets import PRESETS, get_preset, preset_kernels
from .scoring import (
    ComboConfig,
    DegenerateMomentError,
    EmptyForegroundError,
    ScoringError,
    score_combo,
    score_single,
    to_gray,
)
from .statistics import fit_combo, fit_logistic, krcc, plcc, rmse, srcc

__version__ = "0.1.0"

__all__ = [
    "FirKernel",
    "GGParams",
    "HvsKernelSpec",
    "KernelDesignError",
    "design_derivative_kernel",
    "gg_spectrum",
    "kernel_response",
    "load_kernel",
    "save_kernel",
    "synthesize",
    "PRESETS",
    "get_preset",
    "preset_kernels",
    "ComboConfig",
    "DegenerateMomentError",
    "EmptyForegroundError",
    "ScoringError",
    "score_combo",
    "score_single",
    "to_gray",
    "fit_combo",
    "fit_logistic",
    "krcc",
    "plcc",
    "rmse",
    "srcc",
]
