"""Character BiLSTM-CRF sequence tagger trained from scratch."""

from emrkg.tagger.model import (
    TaggerModel,
    encode,
    gradient_check,
    load_model,
    predict,
    save_model,
)
from emrkg.tagger.train import TrainConfig, TrainResult, train
from emrkg.tagger.vocab import TagSet, Vocabulary

__all__ = [
    "TaggerModel",
    "TagSet",
    "TrainConfig",
    "TrainResult",
    "Vocabulary",
    "encode",
    "gradient_check",
    "load_model",
    "predict",
    "save_model",
    "train",
]
