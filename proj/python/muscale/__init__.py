"""Loss prediction for wide transformers from narrow muP proxies.

Train a family of narrow proxies under maximal update parametrization, fit
L = a*C^b + c over (parameter count, loss) points, and predict the training
loss of wider models without training them.
"""

from muscale._core import (
    Corpus,
    FitError,
    FormatError,
    ModelSpec,
    MuHyperparams,
    PowerLawFit,
    RunRecord,
    SpecError,
    cost_ratio,
    count_params,
    fit_power_law,
    flops_per_step,
    grid_argmin,
    load_corpus,
    predict,
    run_paradigm,
    save_corpus,
    synth_corpus,
    train_lm,
    transfer,
)

__all__ = [
    "Corpus",
    "FitError",
    "FormatError",
    "ModelSpec",
    "MuHyperparams",
    "PowerLawFit",
    "RunRecord",
    "SpecError",
    "cost_ratio",
    "count_params",
    "fit_power_law",
    "flops_per_step",
    "grid_argmin",
    "load_corpus",
    "predict",
    "run_paradigm",
    "save_corpus",
    "synth_corpus",
    "train_lm",
    "transfer",
]

__version__ = "0.1.0"
