"""Summary-guided document sentiment classification with reward feedback training."""

from .data import SyntheticSpec, gen_synthetic, ingest, read_corpus
from .encoder import EncoderConfig
from .errors import HinError
from .model import MODES, HINModel, ModelConfig
from .text import Sample
from .trainer import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig", "HINModel", "HinError", "MODES", "ModelConfig", "Sample", "SyntheticSpec",
    "TrainConfig", "gen_synthetic", "ingest", "read_corpus", "train",
]
