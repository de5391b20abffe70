"""Pose-based continuous sign language recognition on a numpy autograd core."""

from .ctc import GlossVocabulary, beam_decode, ctc_loss, greedy_decode
from .metrics import EditOps, wer
from .models import ConformerConfig, ConformerModel, FusionConfig, FusionModel, build_model
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "ConformerConfig", "ConformerModel", "EditOps", "FusionConfig", "FusionModel",
    "GlossVocabulary", "Tensor", "beam_decode", "build_model", "ctc_loss", "greedy_decode",
    "no_grad", "wer",
]
