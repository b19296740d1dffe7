"""Feature-statistics swapping kernels, a toy CTC recognizer, and an
experiment CLI for corruption-robustness studies."""

from .tensor import Axis, Rng, permutation, reduce_mean
from .statmoments import AffineParams, StatPair, instance_norm, moments
from .statswap import SwapGrad, SwapPair, adain, adain_backward
from .textadain import (
    DonorSource,
    TextAdaINConfig,
    WindowedBatch,
    forward,
    forward_backward,
    merge,
    split,
)

__version__ = "0.1.0"
