from . import autodiff
from .adam import AdamState, adam_step
from .autodiff import NonFiniteError, Tape, Var, forward_backward
from .rng import seeded_rng

__all__ = ["autodiff", "AdamState", "adam_step", "NonFiniteError", "Tape", "Var",
           "forward_backward", "seeded_rng"]
