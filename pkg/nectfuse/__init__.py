__version__ = "0.1.1"
__description__ = "bayesian fusion of noisy pipeline measurements with a clinical outcome"

__all__ = [
    "LogPosterior",
    "ModelConfig",
    "SamplerConfig",
    "TruthConfig",
    "fit",
    "fit_naive_single_pipeline",
    "generate",
    "load_panel",
    "nuts_run",
    "summarize",
]

from .dataio import load_panel
from .diagnostics import summarize
from .posterior import LogPosterior, ModelConfig, fit, fit_naive_single_pipeline
from .sampler import SamplerConfig, nuts_run
from .synth import TruthConfig, generate
