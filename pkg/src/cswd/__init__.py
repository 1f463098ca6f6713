"""Two-stream (MFCC audio + phoneme sequence) code-switch detection in numpy."""
from .datagen import CorpusSpec, generate_corpus, load_manifest
from .dsp import AudioBuffer, mfcc_extract
from .model import CswModel, ModelConfig, UtteranceBatch
from .trainer import TrainConfig, evaluate, train

__all__ = [
    "AudioBuffer",
    "CorpusSpec",
    "CswModel",
    "ModelConfig",
    "TrainConfig",
    "UtteranceBatch",
    "evaluate",
    "generate_corpus",
    "load_manifest",
    "mfcc_extract",
    "train",
]
__version__ = "0.1.0"
