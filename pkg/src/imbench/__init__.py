"""imbench: class-imbalance mitigation benchmark for optical-network
failure detection.

A from-scratch random forest plus pre-, in-, and post-processing
mitigation techniques, evaluated by a seeded repeated-runs harness that
reports F1, percent improvement over the baseline, inference time, and
the variance-to-mean ratio of F1.
"""

from .dataset import (ColumnSchema, Dataset, GeneratorConfig, SplitSpec,
                      generate_synthetic, load_csv, stratified_split,
                      write_csv)
from .errors import ConfigError, DataError, NumericsError
from .forest import FitConfig, ForestModel, fit, predict, predict_proba

__version__ = "0.1.0"

__all__ = [
    "ColumnSchema", "Dataset", "GeneratorConfig", "SplitSpec",
    "generate_synthetic", "load_csv", "stratified_split", "write_csv",
    "ConfigError", "DataError", "NumericsError",
    "FitConfig", "ForestModel", "fit", "predict", "predict_proba",
    "__version__",
]
