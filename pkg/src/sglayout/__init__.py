"""Scene-graph-to-layout generation with pair-wise spatial constraints.

Relative scale and relative distance of related object pairs are estimated
from annotated corpora and used, alongside absolute box regression, to train
a graph-convolutional layout generator.
"""

from ._kernels import HAVE_NATIVE
from .encoder import LayoutModel, ModelDims, combined_vector, encode, init_model, predict_boxes
from .graph import BoundingBox, LayoutSample, SceneGraph, Vocab, parse_samples, parse_vocab, validate_sample
from .spatial import LossWeights, box_loss, diag, relative_distance, relative_scale, scm_loss, total_loss
from .stats import FilterConfig, SynthSpec, TripletStatTable, compute_stats, filter_corpus, synth_corpus
from .train import EvalReport, TrainConfig, evaluate, predict_corpus, relation_probe, train

__version__ = "0.1.0"

__all__ = [
    "HAVE_NATIVE",
    "BoundingBox",
    "EvalReport",
    "FilterConfig",
    "LayoutModel",
    "LayoutSample",
    "LossWeights",
    "ModelDims",
    "SceneGraph",
    "SynthSpec",
    "TrainConfig",
    "TripletStatTable",
    "Vocab",
    "box_loss",
    "combined_vector",
    "compute_stats",
    "diag",
    "encode",
    "evaluate",
    "predict_corpus",
    "filter_corpus",
    "init_model",
    "parse_samples",
    "parse_vocab",
    "predict_boxes",
    "relation_probe",
    "relative_distance",
    "relative_scale",
    "scm_loss",
    "synth_corpus",
    "total_loss",
    "train",
    "validate_sample",
]
