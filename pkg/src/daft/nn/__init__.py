from .tensor import Tensor, concat, softmax, stack, take_rows, where
from .layers import GRUCell, Linear, MLP, ParamStore, attention_alpha, glorot, gru_step, mlp_forward
from .optim import adam_update, collect_grads
from .random import bernoulli_kl, gumbel_bernoulli, gumbel_softmax
from .gradcheck import grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "concat", "softmax", "stack", "take_rows", "where",
    "GRUCell", "Linear", "MLP", "ParamStore", "attention_alpha", "glorot",
    "gru_step", "mlp_forward",
    "adam_update", "collect_grads",
    "bernoulli_kl", "gumbel_bernoulli", "gumbel_softmax",
    "grad_check",
    "load_checkpoint", "save_checkpoint",
]
