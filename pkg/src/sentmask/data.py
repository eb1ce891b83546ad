"""Corpus ingestion: sentence splitting, tokenization, and fixed-grid shaping.

Documents are split on ``. ? ;`` (delimiter stays attached to its sentence),
word-tokenized, and laid out on an S x K integer grid with validity masks so
every downstream component sees a fixed shape regardless of input length.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyDocumentError

PAD_ID = 0
UNK_ID = 1

SENTENCE_DELIMITERS = ".?;"

_WORD_RE = re.compile(r"\w+")


@dataclass(frozen=True)
class RawDocument:
    """One document as it appears on disk; label is absent for the unlabeled pool."""

    id: str
    text: str
    label: int | None = None


@dataclass
class ShapedDocument:
    """A document shaped onto an S x K token grid.

    ``tokens[j, k] == PAD_ID`` wherever ``token_valid[j, k]`` is false, and
    whole rows are zero wherever ``sentence_valid[j]`` is false.
    ``original_sentences`` keeps the pre-truncation sentence strings (all of
    them, even past row S) so reports can reconstruct the document text.
    """

    id: str
    tokens: np.ndarray          # (S, K) int64
    sentence_valid: np.ndarray  # (S,) bool
    token_valid: np.ndarray     # (S, K) bool
    label: int | None = None
    original_sentences: list[str] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.tokens.shape  # type: ignore[return-value]

    @property
    def num_valid_sentences(self) -> int:
        return int(self.sentence_valid.sum())

    def copy(self) -> "ShapedDocument":
        return ShapedDocument(
            id=self.id,
            tokens=self.tokens.copy(),
            sentence_valid=self.sentence_valid.copy(),
            token_valid=self.token_valid.copy(),
            label=self.label,
            original_sentences=list(self.original_sentences),
        )


@dataclass
class DatasetSplit:
    """Labeled / unlabeled / test partitions; ids are disjoint across them."""

    labeled: list[ShapedDocument]
    unlabeled: list[ShapedDocument]
    test: list[ShapedDocument]

    def __post_init__(self):
        seen: set[str] = set()
        for part in (self.labeled, self.unlabeled, self.test):
            for doc in part:
                if doc.id in seen:
                    raise DataError(f"duplicate id across partitions: {doc.id!r}",
                                    code="duplicate-id")
                seen.add(doc.id)


def split_sentences(text: str) -> list[str]:
    """Split ``text`` after every ``.``, ``?``, or ``;``.

    The delimiter stays attached to its sentence, a trailing fragment without
    a delimiter is kept as its own sentence, and empty or whitespace-only
    fragments are dropped.  Concatenating the returned pieces together with
    the dropped whitespace reproduces the input exactly.
    """
    pieces: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch in SENTENCE_DELIMITERS:
            pieces.append(text[start:i + 1])
            start = i + 1
    if start < len(text):
        pieces.append(text[start:])
    return [p for p in pieces if p.strip()]


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation is not a token."""
    return _WORD_RE.findall(text.lower())


class Vocabulary:
    """Token -> id map with reserved ids 0=PAD and 1=UNK.

    File format is newline-delimited tokens where line number = id - 2.
    """

    def __init__(self, tokens: list[str]):
        self.tokens = list(tokens)
        self.token_to_id = {t: i + 2 for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens) + 2

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @classmethod
    def build(cls, texts, max_size: int | None = None, min_count: int = 1) -> "Vocabulary":
        """Frequency-capped vocabulary over word tokens of ``texts``.

        Ordering is deterministic: by descending count, then alphabetically.
        """
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [t for t, c in ranked if c >= min_count]
        if max_size is not None:
            kept = kept[:max_size]
        return cls(kept)

    def save(self, path: str | Path):
        Path(path).write_text("\n".join(self.tokens) + ("\n" if self.tokens else ""),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])


def shape_document(doc: RawDocument, vocab: Vocabulary, S: int, K: int) -> ShapedDocument:
    """Shape a raw document onto the S x K grid.

    Keeps the first S sentences and the first K tokens of each; sentences
    whose tokenization is empty (no word characters) carry no model-visible
    content and are skipped.  A document with no tokenizable sentence at all
    is an error.
    """
    if S < 1 or K < 1:
        raise ValueError(f"S and K must be >= 1, got S={S} K={K}")
    sentences: list[str] = []
    sentence_tokens: list[list[str]] = []
    for sent in split_sentences(doc.text):
        toks = tokenize(sent)
        if toks:
            sentences.append(sent)
            sentence_tokens.append(toks)
    if not sentences:
        raise EmptyDocumentError(f"empty document: {doc.id!r}")

    tokens = np.zeros((S, K), dtype=np.int64)
    sentence_valid = np.zeros(S, dtype=bool)
    token_valid = np.zeros((S, K), dtype=bool)
    for j, toks in enumerate(sentence_tokens[:S]):
        ids = [vocab.encode(t) for t in toks[:K]]
        tokens[j, :len(ids)] = ids
        token_valid[j, :len(ids)] = True
        sentence_valid[j] = True
    return ShapedDocument(
        id=doc.id,
        tokens=tokens,
        sentence_valid=sentence_valid,
        token_valid=token_valid,
        label=doc.label,
        original_sentences=sentences,
    )


def _parse_label(value, doc_id: str, lineno: int) -> int | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value not in (0, 1):
        raise DataError(
            f"line {lineno}: label for id {doc_id!r} must be 0 or 1, got {value!r}",
            code="bad-label",
        )
    return value


def read_jsonl(path: str | Path) -> list[RawDocument]:
    """Read raw documents from a JSONL file, rejecting duplicates and bad labels."""
    docs: list[RawDocument] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: malformed JSON ({exc.msg})",
                                code="malformed-json") from exc
            if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                raise DataError(f"line {lineno}: object must have keys id and text",
                                code="malformed-json")
            doc_id = str(obj["id"])
            if doc_id in seen:
                raise DataError(f"line {lineno}: duplicate id {doc_id!r}",
                                code="duplicate-id")
            seen.add(doc_id)
            docs.append(RawDocument(
                id=doc_id,
                text=str(obj["text"]),
                label=_parse_label(obj.get("label"), doc_id, lineno),
            ))
    return docs


def default_manifest_path(path: str | Path) -> Path:
    """Sidecar manifest path for a JSONL file: data.jsonl -> data.manifest.json."""
    p = Path(path)
    return p.with_name(p.stem + ".manifest.json")


def load_jsonl(path: str | Path, vocab: Vocabulary, S: int, K: int,
               manifest_path: str | Path | None = None) -> DatasetSplit:
    """Load and shape a JSONL corpus into the split given by its manifest.

    The manifest is a JSON object ``{"labeled": [...], "unlabeled": [...],
    "test": [...]}`` assigning each id to exactly one partition.  Labeled and
    test documents must carry a label; documents routed to the unlabeled pool
    have any label they carry dropped.  Each partition preserves file order.
    """
    docs = read_jsonl(path)
    by_id = {d.id: d for d in docs}
    order = {d.id: i for i, d in enumerate(docs)}

    if manifest_path is None:
        manifest_path = default_manifest_path(path)
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {manifest_path}: {exc.msg}",
                        code="malformed-manifest") from exc

    assigned: set[str] = set()
    parts: dict[str, list[RawDocument]] = {}
    for name in ("labeled", "unlabeled", "test"):
        ids = manifest.get(name, [])
        for doc_id in ids:
            if doc_id not in by_id:
                raise DataError(f"manifest {name!r} names unknown id {doc_id!r}",
                                code="unknown-id")
            if doc_id in assigned:
                raise DataError(f"id {doc_id!r} assigned to more than one partition",
                                code="duplicate-id")
            assigned.add(doc_id)
        parts[name] = sorted((by_id[i] for i in ids), key=lambda d: order[d.id])

    def shape_part(raw_docs: list[RawDocument], name: str) -> list[ShapedDocument]:
        shaped = []
        for doc in raw_docs:
            if name in ("labeled", "test") and doc.label is None:
                raise DataError(f"{name} document {doc.id!r} has no label",
                                code="missing-label")
            if name == "unlabeled":
                doc = RawDocument(id=doc.id, text=doc.text, label=None)
            shaped.append(shape_document(doc, vocab, S, K))
        return shaped

    return DatasetSplit(
        labeled=shape_part(parts["labeled"], "labeled"),
        unlabeled=shape_part(parts["unlabeled"], "unlabeled"),
        test=shape_part(parts["test"], "test"),
    )


# ---------------------------------------------------------------------------
# Shaped-dataset cache.  Plain .npy + .json files: no archive timestamps, so
# re-running ingestion on identical input produces byte-identical output.
# ---------------------------------------------------------------------------

def save_shaped(docs: list[ShapedDocument], directory: str | Path, name: str):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if docs:
        tokens = np.stack([d.tokens for d in docs])
        valid = np.stack([d.sentence_valid for d in docs])
    else:
        tokens = np.zeros((0, 0, 0), dtype=np.int64)
        valid = np.zeros((0, 0), dtype=bool)
    labels = np.array([-1 if d.label is None else d.label for d in docs], dtype=np.int64)
    np.save(directory / f"{name}.tokens.npy", tokens)
    np.save(directory / f"{name}.valid.npy", valid)
    np.save(directory / f"{name}.labels.npy", labels)
    meta = [{"id": d.id, "sentences": d.original_sentences} for d in docs]
    (directory / f"{name}.meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, sort_keys=True), encoding="utf-8")


def load_shaped(directory: str | Path, name: str) -> list[ShapedDocument]:
    directory = Path(directory)
    tokens = np.load(directory / f"{name}.tokens.npy")
    valid = np.load(directory / f"{name}.valid.npy")
    labels = np.load(directory / f"{name}.labels.npy")
    meta = json.loads((directory / f"{name}.meta.json").read_text(encoding="utf-8"))
    docs = []
    for i, entry in enumerate(meta):
        docs.append(ShapedDocument(
            id=entry["id"],
            tokens=tokens[i],
            sentence_valid=valid[i],
            token_valid=tokens[i] != PAD_ID,
            label=None if labels[i] < 0 else int(labels[i]),
            original_sentences=list(entry["sentences"]),
        ))
    return docs


def save_split(split: DatasetSplit, directory: str | Path):
    for name in ("labeled", "unlabeled", "test"):
        save_shaped(getattr(split, name), directory, name)


def load_split(directory: str | Path) -> DatasetSplit:
    return DatasetSplit(
        labeled=load_shaped(directory, "labeled"),
        unlabeled=load_shaped(directory, "unlabeled"),
        test=load_shaped(directory, "test"),
    )
