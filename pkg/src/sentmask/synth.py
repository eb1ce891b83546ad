"""Planted-rationale synthetic corpus.

Every document is a fixed number of distractor sentences; k of its rows are
signal sentences carrying marker tokens from one of two disjoint marker sets,
and the marker set used is what determines the label.  The generator writes
the corpus, the split manifest, and a ground-truth file naming the signal
rows, so rationale recovery can be scored exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DISTRACTOR_VOCAB = 150
SIGNAL_VOCAB = 6

RULE = "label 1 iff the signal sentences carry pos* markers (neg* markers give label 0)"


@dataclass
class SynthSpec:
    n_docs: int = 2000
    n_sentences: int = 40
    k_signal: int = 3
    n_labeled: int = 200
    n_unlabeled: int = 1600
    n_test: int = 200
    seed: int = 0
    min_words: int = 5
    max_words: int = 9
    markers_per_sentence: int = 2

    def __post_init__(self):
        if self.n_labeled + self.n_unlabeled + self.n_test > self.n_docs:
            raise ValueError("split sizes exceed n_docs")
        if self.k_signal > self.n_sentences:
            raise ValueError("k_signal cannot exceed n_sentences")


def _sentence(rng: np.random.Generator, distractors: list[str],
              min_words: int, max_words: int) -> list[str]:
    length = int(rng.integers(min_words, max_words + 1))
    return [distractors[i] for i in rng.integers(0, len(distractors), size=length)]


def generate(out_dir: str | Path, spec: SynthSpec | None = None) -> dict:
    """Write data.jsonl, data.manifest.json, and truth.json under ``out_dir``.

    Returns summary counts.  Unlabeled-pool documents are written without a
    label field; their generating labels are recorded only in truth.json.
    """
    spec = spec or SynthSpec()
    rng = np.random.default_rng(spec.seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    distractors = [f"filler{i:03d}" for i in range(DISTRACTOR_VOCAB)]
    markers = {
        1: [f"posmark{i}" for i in range(SIGNAL_VOCAB)],
        0: [f"negmark{i}" for i in range(SIGNAL_VOCAB)],
    }

    # exactly balanced labels, randomly ordered
    labels = np.array([1] * (spec.n_docs // 2) + [0] * (spec.n_docs - spec.n_docs // 2))
    rng.shuffle(labels)

    docs = []
    truth: dict[str, dict] = {}
    for i in range(spec.n_docs):
        doc_id = f"syn-{i:05d}"
        label = int(labels[i])
        rows = [_sentence(rng, distractors, spec.min_words, spec.max_words)
                for _ in range(spec.n_sentences)]
        signal_rows = sorted(int(j) for j in
                             rng.choice(spec.n_sentences, size=spec.k_signal, replace=False))
        for j in signal_rows:
            slots = rng.choice(len(rows[j]),
                               size=min(spec.markers_per_sentence, len(rows[j])),
                               replace=False)
            for slot in slots:
                rows[j][int(slot)] = markers[label][int(rng.integers(0, SIGNAL_VOCAB))]
        text = " ".join(" ".join(words) + "." for words in rows)
        docs.append({"id": doc_id, "text": text, "label": label})
        truth[doc_id] = {"label": label, "signal_rows": signal_rows}

    order = rng.permutation(spec.n_docs)
    labeled_ids = [docs[i]["id"] for i in order[:spec.n_labeled]]
    unlabeled_ids = [docs[i]["id"] for i in
                     order[spec.n_labeled:spec.n_labeled + spec.n_unlabeled]]
    test_ids = [docs[i]["id"] for i in
                order[spec.n_labeled + spec.n_unlabeled:
                      spec.n_labeled + spec.n_unlabeled + spec.n_test]]
    unlabeled_set = set(unlabeled_ids)

    with open(out_dir / "data.jsonl", "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = dict(doc)
            if rec["id"] in unlabeled_set:
                del rec["label"]
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")

    manifest = {"labeled": labeled_ids, "unlabeled": unlabeled_ids, "test": test_ids}
    (out_dir / "data.manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2),
        encoding="utf-8")
    (out_dir / "truth.json").write_text(
        json.dumps({"seed": spec.seed, "rule": RULE, "docs": truth},
                   ensure_ascii=False, sort_keys=True, indent=2),
        encoding="utf-8")

    return {
        "n_docs": spec.n_docs,
        "labeled": len(labeled_ids),
        "unlabeled": len(unlabeled_ids),
        "test": len(test_ids),
        "positive": int(labels.sum()),
        "n_sentences": spec.n_sentences,
        "k_signal": spec.k_signal,
    }


def load_truth(path: str | Path) -> dict[str, dict]:
    return json.loads(Path(path).read_text(encoding="utf-8"))["docs"]


def rationale_precision(explanations, truth: dict[str, dict], n: int) -> float:
    """Mean fraction of the top-n ranked rows that are true signal rows."""
    if not explanations:
        raise ValueError("no explanations given")
    scores = []
    for record in explanations:
        signal = set(truth[record.doc_id]["signal_rows"])
        top = record.ranked_indices[:n]
        scores.append(len(signal.intersection(top)) / max(1, len(top)))
    return float(np.mean(scores))
