from scenecam.services.nn.builders import build_arch, build_cnn_fc, build_cnn_gap, build_network
from scenecam.services.nn.checkpoint import load_checkpoint, save_checkpoint
from scenecam.services.nn.network import Gradients, NetworkState, softmax_cross_entropy
from scenecam.services.nn.specs import count_parameters, trunk_rows
from scenecam.services.nn.training import LabeledFeatures, predict_proba, predict_sample, train

__all__ = [
    "Gradients",
    "LabeledFeatures",
    "NetworkState",
    "build_arch",
    "build_cnn_fc",
    "build_cnn_gap",
    "build_network",
    "count_parameters",
    "load_checkpoint",
    "predict_proba",
    "predict_sample",
    "save_checkpoint",
    "softmax_cross_entropy",
    "train",
    "trunk_rows",
]
