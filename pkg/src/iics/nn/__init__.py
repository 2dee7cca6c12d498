from .aibn import AibnState, aibn_backward, aibn_forward
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .losses import (
    ClassifierHead,
    batch_hard_triplet,
    classify_scores,
    softmax,
    softmax_ce,
)
from .model import EncoderModel
from .optim import Sgd, SgdConfig, sgd_step

__all__ = [
    "AibnState", "aibn_forward", "aibn_backward", "EncoderModel", "ClassifierHead",
    "softmax", "softmax_ce", "batch_hard_triplet", "classify_scores", "Sgd", "SgdConfig",
    "sgd_step", "GradCheckReport", "grad_check", "save_checkpoint", "load_checkpoint",
]
