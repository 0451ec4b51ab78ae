"""fragnet: file-fragment type identification toolkit.

A library and CLI for classifying fixed-size byte blocks (512 or 4,096
bytes) by file type: byte-embedding 1-D convolutional classifiers
trained with a built-in autodiff engine, hand-crafted statistical
baselines, a discrete Tree-structured Parzen Estimator for architecture
search, and a disk-image carving front end.
"""

from fragnet.corpus import Block, Dataset, Scenario, scenario, synth_corpus
from fragnet.features import CoMatrix, FeatureVector, global_features
from fragnet.net import (
    HyperParams,
    ModelSpec,
    TrainConfig,
    build_model,
    build_nn_co,
    build_nn_gf,
    forward,
    load_model,
    param_count,
    preset_model,
    save_model,
    train,
)
from fragnet.report import ConfusionMatrix
from fragnet.tensor import InvalidArchitectureError, Precision, Tensor
from fragnet.tpe import SearchSpace, TpeState, Trial, run_search, suggest

__version__ = "0.1.0"

__all__ = [
    "Block",
    "CoMatrix",
    "ConfusionMatrix",
    "Dataset",
    "FeatureVector",
    "HyperParams",
    "InvalidArchitectureError",
    "ModelSpec",
    "Precision",
    "Scenario",
    "SearchSpace",
    "Tensor",
    "TpeState",
    "TrainConfig",
    "Trial",
    "build_model",
    "build_nn_co",
    "build_nn_gf",
    "forward",
    "global_features",
    "load_model",
    "param_count",
    "preset_model",
    "run_search",
    "save_model",
    "scenario",
    "suggest",
    "synth_corpus",
    "train",
    "__version__",
]
