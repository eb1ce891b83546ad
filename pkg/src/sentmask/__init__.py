"""Semi-supervised long-document classification with learned sentence masks."""

from .config import TrainingConfig, config_from_keys, config_to_keys, resolve_config
from .data import (DatasetSplit, RawDocument, ShapedDocument, Vocabulary, load_jsonl,
                   shape_document, split_sentences, tokenize)
from .encoders import ClassDistribution, SentenceEmbeddings
from .explain import ExplanationRecord, explain, random_explanations, render_report
from .losses import LossBreakdown, consistency_vib_loss, supervised_vib_loss, total_loss
from .masking import MaskPrior, MaskVector, apply_mask, harden, kl_to_prior, sample_relaxed
from .metrics import (MetricsResult, accuracy, aopc, delete_top_sentences,
                      keep_top_sentences, posthoc_accuracy)
from .model import MaskedDocumentModel, build_model, collate
from .training import Checkpoint, fit, load_model, train_epoch

__version__ = "0.1.0"

__all__ = [
    "TrainingConfig", "config_from_keys", "config_to_keys", "resolve_config",
    "DatasetSplit", "RawDocument", "ShapedDocument", "Vocabulary",
    "load_jsonl", "shape_document", "split_sentences", "tokenize",
    "ClassDistribution", "SentenceEmbeddings",
    "ExplanationRecord", "explain", "random_explanations", "render_report",
    "LossBreakdown", "consistency_vib_loss", "supervised_vib_loss", "total_loss",
    "MaskPrior", "MaskVector", "apply_mask", "harden", "kl_to_prior", "sample_relaxed",
    "MetricsResult", "accuracy", "aopc", "delete_top_sentences",
    "keep_top_sentences", "posthoc_accuracy",
    "MaskedDocumentModel", "build_model", "collate",
    "Checkpoint", "fit", "load_model", "train_epoch",
    "__version__",
]
