from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .functional import PROB_FLOOR, cross_entropy, dropout, ffn, layer_norm, masked_softmax, nll, softmax
from .gradcheck import GradCheckReport, grad_check
from .module import Module, Parameter, count_parameters, uniform_init
from .optim import AdamState, TrainingError, adam_step, clip_grad_norm
from .tensor import (
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    embedding,
    exp,
    log,
    log_floor,
    matmul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    tanh,
    transpose,
)

__all__ = [
    "AdamState",
    "CheckpointError",
    "GradCheckReport",
    "Module",
    "PROB_FLOOR",
    "Parameter",
    "ShapeError",
    "Tensor",
    "TrainingError",
    "adam_step",
    "as_tensor",
    "clip_grad_norm",
    "concat",
    "count_parameters",
    "cross_entropy",
    "dropout",
    "embedding",
    "exp",
    "ffn",
    "grad_check",
    "layer_norm",
    "load_checkpoint",
    "log",
    "log_floor",
    "masked_softmax",
    "matmul",
    "nll",
    "no_grad",
    "relu",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "tanh",
    "transpose",
    "uniform_init",
]
