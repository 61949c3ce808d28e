"""Small numpy engine for the window classifier: layers, backprop, AdaDelta, checkpoints."""
from .loss import drow_loss, loss
from .model import (BatchNorm, Conv, Dense, Dropout, Flatten, MaxPool, Model, ReLU, ShapeError,
                    SplitHead, build_mlp_baseline, drow_cnn, init, load_checkpoint, orthogonal,
                    save_checkpoint, shape_chain, softmax, spec_from_json, spec_to_json)
from .optim import AdaDelta, adadelta_step

__all__ = [
    "AdaDelta", "BatchNorm", "Conv", "Dense", "Dropout", "Flatten", "MaxPool", "Model", "ReLU",
    "ShapeError", "SplitHead", "adadelta_step", "build_mlp_baseline", "drow_cnn", "drow_loss",
    "init", "load_checkpoint", "loss", "orthogonal", "save_checkpoint", "shape_chain", "softmax",
    "spec_from_json", "spec_to_json",
]
