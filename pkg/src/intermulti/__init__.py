"""Multimodal emotion analysis with parameter-free self-decoupling and text-dominated
hierarchical high-order fusion, built on a small float64 autodiff engine."""

from .config import ModelConfig
from .data import FeatureDataset, UtteranceSample, load_dataset, write_dataset
from .metrics import MetricReport, metrics
from .model import InterMulti, RepresentationSet, loss
from .synthetic import SyntheticSpec, generate_synthetic, linear_baseline
from .training import train

__all__ = [
    "FeatureDataset",
    "InterMulti",
    "MetricReport",
    "ModelConfig",
    "RepresentationSet",
    "SyntheticSpec",
    "UtteranceSample",
    "generate_synthetic",
    "linear_baseline",
    "load_dataset",
    "loss",
    "metrics",
    "train",
    "write_dataset",
]

__version__ = "0.1.0"
