"""Hand-written sequence-labeling layers with explicit backward passes.

Everything operates on float64 arrays shaped (T, features) or batched
(B, T, features); no autodiff framework is involved.  Each layer owns its
parameters and gradient buffers; ``backward`` consumes the upstream gradient,
accumulates parameter gradients, and returns the input gradient.
"""

from .gradcheck import grad_check
from .gru import BiGru, Gru
from .layers import (
    AddPositional,
    Concat,
    Dense,
    Dropout,
    MultiHeadSelfAttention,
    WeightedSkipAdd,
    dropout,
    glorot_uniform,
    orthogonal,
    positional_encoding,
    relu,
    softmax,
)
from .losses import cross_entropy, cross_entropy_logit_grad
from .optim import Adam, adam_step, early_stopping, reduce_lr_on_plateau

__all__ = [
    "Adam",
    "AddPositional",
    "BiGru",
    "Concat",
    "Dense",
    "Dropout",
    "Gru",
    "MultiHeadSelfAttention",
    "WeightedSkipAdd",
    "adam_step",
    "cross_entropy",
    "cross_entropy_logit_grad",
    "dropout",
    "early_stopping",
    "glorot_uniform",
    "grad_check",
    "orthogonal",
    "positional_encoding",
    "reduce_lr_on_plateau",
    "relu",
    "softmax",
]
