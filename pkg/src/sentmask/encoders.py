"""Sentence encoders and the document classifier head.

Two interchangeable backends turn a shaped document into one vector per
sentence: a bidirectional recurrent encoder over word embeddings (the
reference backend) and an optional transformer wrapper that reads the CLS
state of a pretrained checkpoint.  Backends register by name so the config
key ``encoder.backend`` can select them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .data import PAD_ID
from .errors import DataError


@dataclass
class SentenceEmbeddings:
    """S x d sentence vectors; invalid rows are all-zero."""

    vectors: np.ndarray         # (S, d) float32
    sentence_valid: np.ndarray  # (S,) bool


@dataclass
class ClassDistribution:
    """Normalized 2-class probability vector."""

    probs: np.ndarray  # (2,) float

    def __post_init__(self):
        total = float(self.probs.sum())
        if not np.isfinite(self.probs).all() or abs(total - 1.0) > 1e-6:
            raise ValueError(f"probs must be finite and sum to 1, got {self.probs}")

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.probs))


ENCODER_BACKENDS: dict[str, type] = {}


def register_backend(name: str):
    def deco(cls):
        ENCODER_BACKENDS[name] = cls
        return cls
    return deco


def load_word_embeddings(path: str | Path, vocab, dim: int) -> np.ndarray:
    """Read a "token v1 ... vdim" text file into a table aligned with the vocab.

    Rows for PAD, UNK, and any token missing from the file stay zero.
    """
    table = np.zeros((len(vocab), dim), dtype=np.float32)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                continue
            idx = vocab.token_to_id.get(parts[0])
            if idx is not None:
                table[idx] = np.asarray(parts[1:], dtype=np.float32)
    return table


@register_backend("recurrent")
class RecurrentSentenceEncoder(nn.Module):
    """Word embeddings + per-sentence bidirectional recurrent layer.

    The sentence vector is the concatenation of the final forward and final
    backward hidden states over the sentence's valid tokens, so the output
    width is 2 * hidden_dim.
    """

    def __init__(self, vocab_size: int, word_dim: int, hidden_dim: int | None = None,
                 freeze_embeddings: bool = True,
                 pretrained: np.ndarray | None = None):
        super().__init__()
        if hidden_dim is None:
            hidden_dim = word_dim
        self.embedding = nn.Embedding(vocab_size, word_dim, padding_idx=PAD_ID)
        if pretrained is not None:
            if pretrained.shape != (vocab_size, word_dim):
                raise DataError(
                    f"embedding table shape {pretrained.shape} does not match "
                    f"(vocab={vocab_size}, dim={word_dim})")
            with torch.no_grad():
                self.embedding.weight.copy_(torch.as_tensor(pretrained))
        if freeze_embeddings:
            self.embedding.weight.requires_grad_(False)
        self.lstm = nn.LSTM(word_dim, hidden_dim, batch_first=True, bidirectional=True)
        self.out_dim = 2 * hidden_dim

    def encode_batch(self, tokens: torch.Tensor, token_valid: torch.Tensor,
                     sentences=None) -> torch.Tensor:
        """(B, S, K) token ids -> (B, S, 2*hidden) sentence vectors."""
        if int(tokens.max()) >= self.embedding.num_embeddings:
            raise DataError(
                f"vocabulary mismatch: token id {int(tokens.max())} outside "
                f"embedding table of size {self.embedding.num_embeddings}",
                code="vocabulary-mismatch")
        B, S, K = tokens.shape
        flat = tokens.reshape(B * S, K)
        lengths = token_valid.reshape(B * S, K).sum(dim=-1)
        emb = self.embedding(flat)
        packed = pack_padded_sequence(emb, lengths.clamp(min=1).cpu(),
                                      batch_first=True, enforce_sorted=False)
        _, (h, _) = self.lstm(packed)
        vec = torch.cat([h[0], h[1]], dim=-1)
        vec = vec * (lengths > 0).to(vec.dtype).unsqueeze(-1)
        return vec.reshape(B, S, self.out_dim)


@register_backend("transformer")
class TransformerSentenceEncoder(nn.Module):
    """Pretrained transformer backend: CLS state of the last layer per sentence.

    Optional; requires the ``transformers`` package and a downloadable (or
    local) checkpoint.  Works from the documents' original sentence strings
    rather than the corpus token grid.
    """

    def __init__(self, checkpoint: str = "bert-base-uncased", max_tokens: int = 64):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise DataError(
                "transformer backend requires the 'transformers' package "
                "(pip install sentmask[transformer])",
                code="missing-dependency") from exc
        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = AutoModel.from_pretrained(checkpoint)
        self.max_tokens = max_tokens
        self.out_dim = self.model.config.hidden_size

    def encode_batch(self, tokens: torch.Tensor, token_valid: torch.Tensor,
                     sentences=None) -> torch.Tensor:
        if sentences is None:
            raise DataError("transformer backend needs original sentence strings",
                            code="missing-sentences")
        B, S, _ = tokens.shape
        vectors = tokens.new_zeros((B, S, self.out_dim), dtype=torch.float32)
        for b, doc_sents in enumerate(sentences):
            doc_sents = doc_sents[:S]
            if not doc_sents:
                continue
            enc = self.tokenizer(doc_sents, return_tensors="pt", padding=True,
                                 truncation=True, max_length=self.max_tokens)
            out = self.model(**enc)
            vectors[b, :len(doc_sents)] = out.last_hidden_state[:, 0, :]
        valid = token_valid.any(dim=-1)
        return vectors * valid.to(vectors.dtype).unsqueeze(-1)


class DocumentClassifier(nn.Module):
    """Bidirectional recurrent layer over sentence vectors, masked mean-pool,
    then a 2-way affine head."""

    def __init__(self, input_dim: int, hidden_dim: int, num_classes: int = 2):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, hidden_dim, batch_first=True, bidirectional=True)
        self.head = nn.Linear(2 * hidden_dim, num_classes)

    def forward(self, vectors: torch.Tensor, sentence_valid: torch.Tensor) -> torch.Tensor:
        """(B, S, d) masked sentence vectors -> (B, 2) class logits.

        Pooling averages over valid rows only; an all-invalid document pools
        to zero and yields the head bias, never NaN.
        """
        out, _ = self.lstm(vectors)
        weights = sentence_valid.to(out.dtype).unsqueeze(-1)
        denom = weights.sum(dim=1).clamp(min=1.0)
        pooled = (out * weights).sum(dim=1) / denom
        return self.head(pooled)


def build_encoder(config, vocab=None, pretrained: np.ndarray | None = None) -> nn.Module:
    """Instantiate the configured encoder backend."""
    if config.encoder_backend not in ENCODER_BACKENDS:
        raise DataError(f"unknown encoder backend {config.encoder_backend!r}; "
                        f"registered: {sorted(ENCODER_BACKENDS)}",
                        code="unknown-backend")
    if config.encoder_backend == "recurrent":
        if pretrained is None and config.embedding_file and vocab is not None:
            pretrained = load_word_embeddings(config.embedding_file, vocab, config.word_dim)
        return RecurrentSentenceEncoder(
            vocab_size=config.vocab_size,
            word_dim=config.word_dim,
            hidden_dim=config.encoder_hidden,
            freeze_embeddings=config.freeze_embeddings,
            pretrained=pretrained,
        )
    return ENCODER_BACKENDS[config.encoder_backend](
        checkpoint=config.transformer_checkpoint)
