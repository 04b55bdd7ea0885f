"""Residual dilated CNN + CRF for character-level clinical NER."""

from rdcnn.corpus import (
    ENTITY_TYPES,
    TAGS,
    EntitySpan,
    EntityType,
    EvalReport,
    decode_bieos,
    encode_bieos,
    evaluate,
    split_clauses,
)
from rdcnn.dictionary import Lexicon, bdmm_segment, dict_features
from rdcnn.trainer import Model, TrainConfig, predict, train

__all__ = [
    "ENTITY_TYPES",
    "TAGS",
    "EntitySpan",
    "EntityType",
    "EvalReport",
    "Lexicon",
    "Model",
    "TrainConfig",
    "bdmm_segment",
    "decode_bieos",
    "dict_features",
    "encode_bieos",
    "evaluate",
    "predict",
    "split_clauses",
    "train",
]

__version__ = "0.1.0"
