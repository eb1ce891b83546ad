"""Ranked-sentence explanations and report rendering."""

from __future__ import annotations

import html
import json
from dataclasses import dataclass

import numpy as np
import torch

from .data import ShapedDocument
from .errors import UntrainedModelError


@dataclass
class ExplanationRecord:
    """Valid sentence rows ranked by keep-probability, highest first."""

    doc_id: str
    ranked_indices: list[int]
    scores: list[float]
    n_default: int
    checkpoint_id: str


def explain(doc: ShapedDocument, model, n_default: int | None = None) -> ExplanationRecord:
    """Rank the document's valid sentences by keep-probability.

    Ties break toward the lower row index.  Uses the probabilities directly
    (no sampling), so repeated calls return identical records.
    """
    if not getattr(model, "is_trained", False):
        raise UntrainedModelError(
            "model has no trained checkpoint loaded; fit or load one first")
    probs = model.mask_probs(doc)
    valid = np.flatnonzero(doc.sentence_valid)
    order = valid[np.argsort(-probs[valid], kind="stable")]
    if n_default is None:
        n_default = model.config.top_n
    return ExplanationRecord(
        doc_id=doc.id,
        ranked_indices=[int(j) for j in order],
        scores=[float(probs[j]) for j in order],
        n_default=int(n_default),
        checkpoint_id=model.checkpoint_id,
    )


def random_explanations(docs: list[ShapedDocument], seed: int = 0,
                        n_default: int = 20) -> list[ExplanationRecord]:
    """Random sentence rankings; the control baseline for sanity checks."""
    gen = torch.Generator().manual_seed(seed)
    records = []
    for doc in docs:
        valid = np.flatnonzero(doc.sentence_valid)
        perm = torch.randperm(len(valid), generator=gen).numpy()
        order = valid[perm]
        scores = np.linspace(1.0, 0.0, num=len(order), endpoint=False)
        records.append(ExplanationRecord(
            doc_id=doc.id,
            ranked_indices=[int(j) for j in order],
            scores=[float(s) for s in scores],
            n_default=n_default,
            checkpoint_id="random-control",
        ))
    return records


def render_report(doc: ShapedDocument, record: ExplanationRecord, n: int,
                  format: str = "json") -> bytes:
    """Render an explanation as machine-readable JSON or a highlight HTML page.

    Output bytes are deterministic for fixed inputs.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if format == "json":
        return _render_json(doc, record, n)
    if format == "html":
        return _render_html(doc, record, n)
    raise ValueError(f"unknown report format: {format!r}")


def _render_json(doc: ShapedDocument, record: ExplanationRecord, n: int) -> bytes:
    payload = {
        "doc_id": record.doc_id,
        "ranking": [
            {
                "index": idx,
                "score": score,
                "text": doc.original_sentences[idx] if idx < len(doc.original_sentences) else "",
            }
            for idx, score in zip(record.ranked_indices, record.scores)
        ],
        "n_default": n,
        "checkpoint": record.checkpoint_id,
    }
    return (json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n").encode("utf-8")


_HTML_PAGE = """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ font-family: Georgia, serif; max-width: 52em; margin: 2em auto; line-height: 1.5; }}
mark {{ background: #ffe08a; padding: 0 0.1em; }}
.meta {{ color: #666; font-size: 0.85em; margin-bottom: 1.5em; }}
</style>
</head>
<body>
<h1>{title}</h1>
<p class="meta">top {n} sentences highlighted &middot; checkpoint {checkpoint}</p>
<p>{body}</p>
</body>
</html>
"""


def _render_html(doc: ShapedDocument, record: ExplanationRecord, n: int) -> bytes:
    top = set(record.ranked_indices[:n])
    score_by_row = dict(zip(record.ranked_indices, record.scores))
    parts = []
    for j, sent in enumerate(doc.original_sentences):
        escaped = html.escape(sent)
        if j in top:
            parts.append(f'<mark title="score={score_by_row[j]:.6f}">{escaped}</mark>')
        else:
            parts.append(escaped)
    page = _HTML_PAGE.format(
        title=html.escape(doc.id),
        n=n,
        checkpoint=html.escape(str(record.checkpoint_id)),
        body="".join(parts),
    )
    return page.encode("utf-8")
