"""Contextual sentence masking.

A bidirectional recurrent pass over the sentence-vector sequence scores every
sentence with a keep-logit, so each sentence's keep-probability depends on the
whole document, not just itself.  During training, masks are sampled with the
binary-concrete relaxation so gradients flow through the sampling step; at
inference they are hardened to exact {0, 1} by threshold or top-n selection.
The keep-probabilities are regularized toward a factorized Bernoulli prior
with a small keep rate, which is what pushes the mask to be sparse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

NEG_INF = float("-inf")

_NOISE_EPS = 1e-6


@dataclass(frozen=True)
class MaskPrior:
    """Factorized Bernoulli(keep_rate) prior over per-sentence masks."""

    keep_rate: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.keep_rate < 1.0):
            raise ValueError(f"keep_rate must be in (0, 1), got {self.keep_rate}")


@dataclass
class MaskVector:
    """Per-sentence mask state: logits, keep-probabilities, and one sample.

    ``sample`` is in (0, 1) for relaxed training samples and exactly {0, 1}
    for hardened inference masks.  Invalid rows carry logit -inf, prob 0,
    sample 0.
    """

    logits: np.ndarray          # (S,) float
    probs: np.ndarray           # (S,) float in [0, 1]
    sample: np.ndarray          # (S,) float
    sentence_valid: np.ndarray  # (S,) bool


class MaskNetwork(nn.Module):
    """Bidirectional recurrent scorer producing one keep-logit per sentence.

    The scorer bias starts positive so training begins near the identity
    mask; the prior's KL pressure then prunes sentences the classifier does
    not defend, instead of flattening everything before learning starts.
    """

    def __init__(self, input_dim: int, hidden_dim: int, bias_init: float = 2.0):
        super().__init__()
        self.lstm = nn.LSTM(input_dim, hidden_dim, batch_first=True, bidirectional=True)
        self.scorer = nn.Linear(2 * hidden_dim, 1)
        nn.init.constant_(self.scorer.bias, bias_init)

    def forward(self, vectors: torch.Tensor, sentence_valid: torch.Tensor) -> torch.Tensor:
        """Raw keep-logits, shape (B, S); caller decides how to treat invalid rows."""
        out, _ = self.lstm(vectors)
        return self.scorer(out).squeeze(-1)


def binary_concrete(logits: torch.Tensor, temperature: float,
                    noise: torch.Tensor) -> torch.Tensor:
    """Relaxed Bernoulli sample: sigmoid((logits + logistic noise) / temperature).

    ``noise`` holds uniform draws in (0, 1); the sample is differentiable
    with respect to ``logits``.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    u = noise.clamp(_NOISE_EPS, 1.0 - _NOISE_EPS)
    return torch.sigmoid((logits + torch.log(u) - torch.log1p(-u)) / temperature)


def bernoulli_kl_rows(probs: torch.Tensor, keep_rate: float,
                      sentence_valid: torch.Tensor) -> torch.Tensor:
    """Per-document KL(Bernoulli(p) || Bernoulli(r)) summed over valid rows.

    Uses 0*log(0) = 0, so probabilities of exactly 0 or 1 are fine.
    Input shape (..., S); returns shape (...,).
    """
    if not (0.0 < keep_rate < 1.0):
        raise ValueError(f"keep_rate must be in (0, 1), got {keep_rate}")
    p = probs
    log_r = float(np.log(keep_rate))
    log_1mr = float(np.log1p(-keep_rate))
    elem = (torch.xlogy(p, p) - p * log_r
            + torch.xlogy(1.0 - p, 1.0 - p) - (1.0 - p) * log_1mr)
    return (elem * sentence_valid.to(elem.dtype)).sum(dim=-1)


def sample_relaxed(logits: np.ndarray, temperature: float,
                   generator: torch.Generator | None = None,
                   noise: np.ndarray | None = None,
                   sentence_valid: np.ndarray | None = None) -> MaskVector:
    """Draw one relaxed mask from per-sentence logits.

    ``generator`` seeds the uniform noise source; a fixed generator state
    yields an identical sample.  ``noise`` overrides the draw entirely
    (useful for frozen-noise checks).  Rows with logit -inf, or excluded by
    ``sentence_valid``, come back with probability and sample exactly 0.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    logits = np.asarray(logits, dtype=np.float64)
    if sentence_valid is None:
        sentence_valid = np.isfinite(logits)
    sentence_valid = np.asarray(sentence_valid, dtype=bool)

    if noise is None:
        u = torch.rand(logits.shape, generator=generator, dtype=torch.float64).numpy()
    else:
        u = np.asarray(noise, dtype=np.float64)
    u = np.clip(u, _NOISE_EPS, 1.0 - _NOISE_EPS)

    safe_logits = np.where(sentence_valid, logits, 0.0)
    sample = 1.0 / (1.0 + np.exp(-(safe_logits + np.log(u) - np.log1p(-u)) / temperature))
    sample = np.where(sentence_valid, sample, 0.0)

    probs = np.where(sentence_valid, 1.0 / (1.0 + np.exp(-safe_logits)), 0.0)
    out_logits = np.where(sentence_valid, logits, NEG_INF)
    return MaskVector(logits=out_logits, probs=probs, sample=sample,
                      sentence_valid=sentence_valid)


def _safe_logit(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(probs) - np.log1p(-probs)


def harden(probs: np.ndarray, mode: str = "threshold", n: int | None = None,
           sentence_valid: np.ndarray | None = None) -> MaskVector:
    """Discretize keep-probabilities to an exact {0, 1} mask.

    threshold mode keeps rows with prob >= 0.5; top_n keeps the n valid rows
    with the largest probability, ties broken toward the lower index.  If n
    exceeds the number of valid rows, all valid rows are kept.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if sentence_valid is None:
        sentence_valid = probs > 0.0
    sentence_valid = np.asarray(sentence_valid, dtype=bool)

    if mode == "threshold":
        sample = ((probs >= 0.5) & sentence_valid).astype(np.float64)
    elif mode == "top_n":
        if n is None or n < 1:
            raise ValueError(f"top_n mode requires n >= 1, got {n}")
        sample = np.zeros_like(probs)
        valid_idx = np.flatnonzero(sentence_valid)
        order = valid_idx[np.argsort(-probs[valid_idx], kind="stable")]
        sample[order[:n]] = 1.0
    else:
        raise ValueError(f"unknown harden mode: {mode!r}")

    probs = np.where(sentence_valid, probs, 0.0)
    return MaskVector(
        logits=np.where(sentence_valid, _safe_logit(probs), NEG_INF),
        probs=probs,
        sample=sample,
        sentence_valid=sentence_valid,
    )


def kl_to_prior(probs: np.ndarray, prior: MaskPrior | float,
                sentence_valid: np.ndarray | None = None) -> float:
    """Closed-form KL(Bernoulli(p_j) || Bernoulli(r)) summed over valid rows."""
    keep_rate = prior.keep_rate if isinstance(prior, MaskPrior) else float(prior)
    probs_t = torch.as_tensor(np.asarray(probs, dtype=np.float64))
    if sentence_valid is None:
        valid_t = torch.ones_like(probs_t, dtype=torch.bool)
    else:
        valid_t = torch.as_tensor(np.asarray(sentence_valid, dtype=bool))
    return float(bernoulli_kl_rows(probs_t, keep_rate, valid_t))


def apply_mask(embeddings, mask: MaskVector):
    """Scale each sentence vector by its mask value; validity is unchanged."""
    from .encoders import SentenceEmbeddings

    vectors = embeddings.vectors * np.asarray(mask.sample, dtype=embeddings.vectors.dtype)[:, None]
    return SentenceEmbeddings(vectors=vectors,
                              sentence_valid=embeddings.sentence_valid.copy())
