"""Toy sequence recognizer: synthetic data, conv encoder, CTC, training."""

from .ctc import ctc_loss, greedy_decode, min_frames
from .data import ALPHABET, BLANK, SyntheticSample, encode_label, make_samples
from .train import TrainConfig, TrainResult, load_checkpoint, save_checkpoint, train
from .evaluate import evaluate_checkpoint, evaluate_params, make_test_set
