"""Faithfulness and accuracy metrics with the sentence-deletion protocol.

Deletion invalidates rows in place (positions preserved) so the classifier
sees the document with holes; a compaction mode that shifts the survivors
upward is available for sensitivity analysis.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import ShapedDocument
from .errors import DataError


@dataclass
class MetricsResult:
    accuracy: float
    aopc: float
    posthoc: float
    n: int
    T: int

    def as_dict(self) -> dict:
        return asdict(self)


def _ranked_indices(ranked) -> list[int]:
    return list(getattr(ranked, "ranked_indices", ranked))


def _invalidate_rows(doc: ShapedDocument, rows) -> ShapedDocument:
    out = doc.copy()
    rows = list(rows)
    out.tokens[rows] = 0
    out.token_valid[rows] = False
    out.sentence_valid[rows] = False
    return out


def _compact(doc: ShapedDocument) -> ShapedDocument:
    """Shift valid rows to the top, preserving their relative order."""
    out = doc.copy()
    keep = np.flatnonzero(doc.sentence_valid)
    S = doc.tokens.shape[0]
    out.tokens[:] = 0
    out.token_valid[:] = False
    out.sentence_valid[:] = False
    out.tokens[:len(keep)] = doc.tokens[keep]
    out.token_valid[:len(keep)] = doc.token_valid[keep]
    out.sentence_valid[:len(keep)] = True
    assert out.tokens.shape == (S, doc.tokens.shape[1])
    return out


def delete_top_sentences(doc: ShapedDocument, ranked, n: int,
                         compact: bool = False) -> ShapedDocument:
    """Copy of ``doc`` with the n top-ranked sentences removed.

    The input document is never mutated.  Rows beyond the ranking or the
    valid count are unaffected; n larger than the valid count removes all
    valid rows.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rows = [j for j in _ranked_indices(ranked)[:n] if doc.sentence_valid[j]]
    out = _invalidate_rows(doc, rows)
    return _compact(out) if compact else out


def keep_top_sentences(doc: ShapedDocument, ranked, n: int,
                       compact: bool = False) -> ShapedDocument:
    """Copy of ``doc`` keeping exactly the top-n ranked sentences."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    keep = set(_ranked_indices(ranked)[:n])
    drop = [j for j in np.flatnonzero(doc.sentence_valid) if j not in keep]
    out = _invalidate_rows(doc, drop)
    return _compact(out) if compact else out


def aopc(model, docs: list[ShapedDocument], explanations, n: int,
         mask_mode: str | None = None, compact: bool = False) -> float:
    """Average drop of the predicted class's probability after deleting the
    top-n sentences, normalized by 1/(T+1)."""
    if not docs:
        raise DataError("empty test set", code="empty-split")
    if len(explanations) != len(docs):
        raise ValueError("need one explanation per document")
    before = model.predict_proba(docs, mask_mode=mask_mode)
    predicted = before.argmax(axis=-1)
    perturbed = [delete_top_sentences(doc, expl, n, compact=compact)
                 for doc, expl in zip(docs, explanations)]
    after = model.predict_proba(perturbed, mask_mode=mask_mode)
    T = len(docs)
    idx = np.arange(T)
    drops = before[idx, predicted] - after[idx, predicted]
    return float(drops.sum() / (T + 1))


def posthoc_accuracy(model, docs: list[ShapedDocument], explanations, n: int,
                     mask_mode: str | None = None, compact: bool = False) -> float:
    """Fraction of documents whose prediction is unchanged when classifying
    from only the top-n sentences."""
    if not docs:
        raise DataError("empty test set", code="empty-split")
    if len(explanations) != len(docs):
        raise ValueError("need one explanation per document")
    before = model.predict_proba(docs, mask_mode=mask_mode).argmax(axis=-1)
    kept = [keep_top_sentences(doc, expl, n, compact=compact)
            for doc, expl in zip(docs, explanations)]
    after = model.predict_proba(kept, mask_mode=mask_mode).argmax(axis=-1)
    return float((before == after).mean())


def accuracy(model, docs: list[ShapedDocument], mask_mode: str | None = None) -> float:
    """Mean argmax-vs-label agreement over labeled documents."""
    if not docs:
        raise DataError("empty test set", code="empty-split")
    labels = []
    for doc in docs:
        if doc.label is None:
            raise DataError(f"document {doc.id!r} has no label", code="missing-label")
        labels.append(doc.label)
    preds = model.predict_proba(docs, mask_mode=mask_mode).argmax(axis=-1)
    return float((preds == np.array(labels)).mean())


def evaluate(model, docs: list[ShapedDocument], explanations, n: int,
             mask_mode: str | None = None, compact: bool = False) -> MetricsResult:
    return MetricsResult(
        accuracy=accuracy(model, docs, mask_mode=mask_mode),
        aopc=aopc(model, docs, explanations, n, mask_mode=mask_mode, compact=compact),
        posthoc=posthoc_accuracy(model, docs, explanations, n,
                                 mask_mode=mask_mode, compact=compact),
        n=n,
        T=len(docs),
    )
