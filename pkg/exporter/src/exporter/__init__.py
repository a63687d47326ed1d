"""Procedural digit images, a small CNN, and binary feature-dump export.

The package renders synthetic digit glyphs as 28x28 grayscale images, trains
a four-layer convolutional network on an image dump, and writes the
penultimate-layer activations (plus the final linear head) in a binary dump
layout that downstream analysis tools consume directly.
"""

from .digits import render_digits
from .dumps import (
    DumpFormatError,
    FeatureDump,
    ImageDump,
    LinearHead,
    load_feature_dump,
    load_image_dump,
    save_feature_dump,
    save_image_dump,
)
from .model import ARCH_TAG, DigitNet, FEATURE_DIM, FEATURE_LAYER_TAG
from .train import (
    TrainSettings,
    box_filter,
    export_features,
    head_predictions,
    predict_labels,
    train_model,
)

__all__ = [
    "render_digits",
    "DumpFormatError",
    "FeatureDump",
    "ImageDump",
    "LinearHead",
    "load_feature_dump",
    "load_image_dump",
    "save_feature_dump",
    "save_image_dump",
    "ARCH_TAG",
    "DigitNet",
    "FEATURE_DIM",
    "FEATURE_LAYER_TAG",
    "TrainSettings",
    "box_filter",
    "export_features",
    "head_predictions",
    "predict_labels",
    "train_model",
]
