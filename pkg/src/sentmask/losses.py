"""Training objectives.

Two objectives share one model: a supervised term (cross-entropy of the
masked-path prediction against the gold label, plus the mask KL penalty) and
a consistency term on unlabeled documents (cross-entropy of the masked-path
prediction against the full-document prediction, gradients blocked through
the latter, plus the same KL penalty).  The step objective is
``supervised + alpha * unsupervised``, with no hidden extra terms; weight
decay, if any, lives in the optimizer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from .config import TrainingConfig
from .errors import DataError
from .masking import bernoulli_kl_rows, binary_concrete
from .model import Batch, MaskedDocumentModel


@dataclass
class LossBreakdown:
    """Per-step loss components, all plain floats for logging.

    ``total == supervised + alpha * unsupervised`` holds exactly (same
    float arithmetic), and both KL terms are non-negative.
    """

    supervised: float = 0.0
    unsupervised: float = 0.0
    total: float = 0.0
    kl_labeled: float = 0.0
    kl_unlabeled: float = 0.0
    ce_labeled: float = 0.0
    consistency_ce: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _masked_student_forward(model: MaskedDocumentModel, batch: Batch,
                            temperature: float,
                            generator: torch.Generator | None,
                            noise: torch.Tensor | None):
    """Shared forward: encode, score, sample one relaxed mask, classify.

    Returns (student class logits, keep-probs, valid mask, sentence vectors).
    """
    vectors = model.encode_batch(batch)
    raw_logits = model.masknet(vectors, batch.sentence_valid)
    valid = batch.sentence_valid
    probs = torch.sigmoid(raw_logits) * valid.to(raw_logits.dtype)
    if noise is None:
        noise = torch.rand(raw_logits.shape, generator=generator,
                           dtype=raw_logits.dtype)
    sample = binary_concrete(raw_logits, temperature, noise) * valid.to(raw_logits.dtype)
    class_logits = model.classify_batch(vectors, valid, mask=sample)
    return class_logits, probs, valid, vectors


def supervised_vib_loss(model: MaskedDocumentModel, batch: Batch,
                        config: TrainingConfig, temperature: float | None = None,
                        generator: torch.Generator | None = None,
                        noise: torch.Tensor | None = None,
                        beta: float | None = None,
                        ) -> tuple[torch.Tensor, LossBreakdown]:
    """Mean over the batch of [-log p(y | masked doc) + beta * KL(probs || prior)]."""
    if bool((batch.labels < 0).any()):
        raise DataError("unlabeled document in a labeled batch", code="missing-label")
    if temperature is None:
        temperature = config.temperature
    if beta is None:
        beta = config.beta
    class_logits, probs, valid, _ = _masked_student_forward(
        model, batch, temperature, generator, noise)
    ce = F.cross_entropy(class_logits, batch.labels)
    kl = bernoulli_kl_rows(probs, config.keep_rate, valid).mean()
    loss = ce + beta * kl
    breakdown = LossBreakdown(
        supervised=float(loss.detach()),
        ce_labeled=float(ce.detach()),
        kl_labeled=max(0.0, float(kl.detach())),
    )
    return loss, breakdown


def consistency_vib_loss(model: MaskedDocumentModel, batch: Batch,
                         config: TrainingConfig, temperature: float | None = None,
                         generator: torch.Generator | None = None,
                         noise: torch.Tensor | None = None,
                         beta: float | None = None,
                         ) -> tuple[torch.Tensor, LossBreakdown]:
    """Mean of [CE(full-doc prediction, masked-path prediction) + beta * KL].

    The full-document (teacher) distribution is computed without the mask and
    without gradients, so only the masked (student) path trains.  With
    ``config.soft_teacher`` off, the teacher target is its argmax one-hot.
    """
    if temperature is None:
        temperature = config.temperature
    if beta is None:
        beta = config.beta
    class_logits, probs, valid, vectors = _masked_student_forward(
        model, batch, temperature, generator, noise)
    with torch.no_grad():
        teacher_logits = model.classify_batch(vectors.detach(), valid, mask=None)
        targets = F.softmax(teacher_logits, dim=-1)
        if not config.soft_teacher:
            targets = F.one_hot(targets.argmax(dim=-1),
                                num_classes=targets.shape[-1]).to(targets.dtype)
    ce = -(targets * F.log_softmax(class_logits, dim=-1)).sum(dim=-1).mean()
    kl = bernoulli_kl_rows(probs, config.keep_rate, valid).mean()
    loss = ce + beta * kl
    breakdown = LossBreakdown(
        unsupervised=float(loss.detach()),
        consistency_ce=float(ce.detach()),
        kl_unlabeled=max(0.0, float(kl.detach())),
    )
    return loss, breakdown


def total_loss(supervised: LossBreakdown, unsupervised: LossBreakdown,
               alpha: float) -> LossBreakdown:
    """Combine fragments into the full step objective: su + alpha * un."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return LossBreakdown(
        supervised=supervised.supervised,
        unsupervised=unsupervised.unsupervised,
        total=supervised.supervised + alpha * unsupervised.unsupervised,
        kl_labeled=supervised.kl_labeled,
        kl_unlabeled=unsupervised.kl_unlabeled,
        ce_labeled=supervised.ce_labeled,
        consistency_ce=unsupervised.consistency_ce,
    )
