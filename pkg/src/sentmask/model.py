"""The assembled classifier: encoder -> mask network -> document head.

Training uses relaxed mask samples; inference hardens the mask (or bypasses
it) according to the config.  The per-document methods mirror the batch paths
exactly, so anything verified on one holds for the other.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import TrainingConfig
from .data import ShapedDocument
from .encoders import (ClassDistribution, DocumentClassifier, SentenceEmbeddings,
                       build_encoder)
from .masking import NEG_INF, MaskNetwork, harden


@dataclass
class Batch:
    """Stacked shaped documents as torch tensors; label -1 means unlabeled."""

    tokens: torch.Tensor          # (B, S, K) int64
    token_valid: torch.Tensor     # (B, S, K) bool
    sentence_valid: torch.Tensor  # (B, S) bool
    labels: torch.Tensor          # (B,) int64
    sentences: list[list[str]]

    def __len__(self) -> int:
        return self.tokens.shape[0]


def collate(docs: list[ShapedDocument]) -> Batch:
    return Batch(
        tokens=torch.as_tensor(np.stack([d.tokens for d in docs])),
        token_valid=torch.as_tensor(np.stack([d.token_valid for d in docs])),
        sentence_valid=torch.as_tensor(np.stack([d.sentence_valid for d in docs])),
        labels=torch.as_tensor(np.array(
            [-1 if d.label is None else d.label for d in docs], dtype=np.int64)),
        sentences=[d.original_sentences for d in docs],
    )


class MaskedDocumentModel(nn.Module):
    """Sentence encoder, contextual mask network, and 2-way classifier head."""

    def __init__(self, config: TrainingConfig, vocab=None,
                 pretrained_embeddings: np.ndarray | None = None):
        super().__init__()
        self.config = config
        self.encoder = build_encoder(config, vocab=vocab, pretrained=pretrained_embeddings)
        self.masknet = MaskNetwork(self.encoder.out_dim, config.mask_hidden)
        self.classifier = DocumentClassifier(self.encoder.out_dim, config.doc_hidden)
        self.checkpoint_id: str | None = None

    @property
    def is_trained(self) -> bool:
        return self.checkpoint_id is not None

    @property
    def dtype(self) -> torch.dtype:
        return self.classifier.head.weight.dtype

    # ------------------------------------------------------------------
    # batch paths (training and batched inference)
    # ------------------------------------------------------------------

    def encode_batch(self, batch: Batch) -> torch.Tensor:
        return self.encoder.encode_batch(batch.tokens, batch.token_valid,
                                         sentences=batch.sentences)

    def mask_logits_batch(self, vectors: torch.Tensor,
                          sentence_valid: torch.Tensor) -> torch.Tensor:
        """Keep-logits with -inf at invalid rows, shape (B, S)."""
        raw = self.masknet(vectors, sentence_valid)
        neg = torch.full_like(raw, NEG_INF)
        return torch.where(sentence_valid, raw, neg)

    def classify_batch(self, vectors: torch.Tensor, sentence_valid: torch.Tensor,
                       mask: torch.Tensor | None = None) -> torch.Tensor:
        """Class logits for (optionally mask-scaled) sentence vectors."""
        if mask is not None:
            vectors = vectors * mask.unsqueeze(-1)
        return self.classifier(vectors, sentence_valid)

    # ------------------------------------------------------------------
    # inference
    # ------------------------------------------------------------------

    def _hard_mask_batch(self, probs: np.ndarray, valid: np.ndarray) -> np.ndarray:
        rows = []
        for b in range(probs.shape[0]):
            mv = harden(probs[b], mode=self.config.harden_mode,
                        n=self.config.top_n, sentence_valid=valid[b])
            rows.append(mv.sample)
        return np.stack(rows)

    @torch.no_grad()
    def predict_proba(self, docs: ShapedDocument | list[ShapedDocument],
                      mask_mode: str | None = None, batch_size: int = 64) -> np.ndarray:
        """Class probabilities, shape (2,) for one document or (B, 2) for a list.

        ``mask_mode`` "hard" applies the hardened mask before classifying;
        "none" classifies the full document.  Defaults to the config choice.
        """
        single = isinstance(docs, ShapedDocument)
        doc_list = [docs] if single else list(docs)
        if mask_mode is None:
            mask_mode = self.config.infer_mask
        if mask_mode not in ("hard", "none"):
            raise ValueError(f"mask_mode must be hard or none, got {mask_mode!r}")

        was_training = self.training
        self.eval()
        try:
            chunks = []
            for start in range(0, len(doc_list), batch_size):
                batch = collate(doc_list[start:start + batch_size])
                vectors = self.encode_batch(batch)
                if mask_mode == "hard":
                    logits = self.mask_logits_batch(vectors, batch.sentence_valid)
                    probs = torch.sigmoid(logits).numpy()
                    hard = self._hard_mask_batch(probs, batch.sentence_valid.numpy())
                    mask = torch.as_tensor(hard, dtype=vectors.dtype)
                else:
                    mask = None
                class_logits = self.classify_batch(vectors, batch.sentence_valid, mask)
                chunks.append(F.softmax(class_logits, dim=-1).numpy())
        finally:
            self.train(was_training)
        out = np.concatenate(chunks, axis=0)
        return out[0] if single else out

    @torch.no_grad()
    def mask_probs(self, doc: ShapedDocument) -> np.ndarray:
        """Keep-probabilities for one document, zeros at invalid rows."""
        was_training = self.training
        self.eval()
        try:
            batch = collate([doc])
            vectors = self.encode_batch(batch)
            logits = self.mask_logits_batch(vectors, batch.sentence_valid)
            return torch.sigmoid(logits)[0].numpy()
        finally:
            self.train(was_training)

    # ------------------------------------------------------------------
    # per-document operations
    # ------------------------------------------------------------------

    @torch.no_grad()
    def encode_sentences(self, doc: ShapedDocument) -> SentenceEmbeddings:
        """One d-vector per valid sentence; zero vectors for invalid rows."""
        was_training = self.training
        self.eval()
        try:
            batch = collate([doc])
            vectors = self.encode_batch(batch)[0]
        finally:
            self.train(was_training)
        return SentenceEmbeddings(vectors=vectors.numpy(),
                                  sentence_valid=doc.sentence_valid.copy())

    @torch.no_grad()
    def classify(self, embeddings: SentenceEmbeddings,
                 mask: np.ndarray | None = None) -> ClassDistribution:
        """Classify from sentence vectors, optionally scaled by a mask in [0,1]^S."""
        vectors = torch.as_tensor(embeddings.vectors, dtype=self.dtype)
        valid = torch.as_tensor(embeddings.sentence_valid)
        mask_t = None
        if mask is not None:
            mask_t = torch.as_tensor(np.asarray(mask), dtype=self.dtype)
        logits = self.classify_batch(vectors.unsqueeze(0), valid.unsqueeze(0),
                                     None if mask_t is None else mask_t.unsqueeze(0))
        return ClassDistribution(probs=F.softmax(logits, dim=-1)[0].numpy())

    @torch.no_grad()
    def mask_logits(self, embeddings: SentenceEmbeddings) -> np.ndarray:
        """Contextual keep-logits for the sentence sequence; -inf at invalid rows."""
        vectors = torch.as_tensor(embeddings.vectors, dtype=self.dtype)
        valid = torch.as_tensor(embeddings.sentence_valid)
        logits = self.mask_logits_batch(vectors.unsqueeze(0), valid.unsqueeze(0))
        return logits[0].numpy()

    # ------------------------------------------------------------------

    def state_fingerprint(self) -> str:
        """Deterministic short id of the parameter state."""
        digest = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            digest.update(name.encode())
            digest.update(tensor.detach().cpu().numpy().tobytes())
        return digest.hexdigest()[:12]


def build_model(config: TrainingConfig, vocab=None,
                pretrained_embeddings: np.ndarray | None = None,
                seed: int | None = None) -> MaskedDocumentModel:
    """Build a model with deterministic parameter init from the config seed."""
    torch.manual_seed(config.seed if seed is None else seed)
    return MaskedDocumentModel(config, vocab=vocab,
                               pretrained_embeddings=pretrained_embeddings)
