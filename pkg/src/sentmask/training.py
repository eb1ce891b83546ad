"""Training loop: labeled pass, then unlabeled pass, every epoch.

All randomness flows through four derived seeds (parameter init, batch order,
mask noise, holdout carve), so a run is replayable from its config seed and a
checkpoint restores the exact mid-run RNG state.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainingConfig, config_from_keys, config_to_keys
from .data import DatasetSplit, ShapedDocument
from .errors import DataError, TrainingDivergedError
from .losses import LossBreakdown, consistency_vib_loss, supervised_vib_loss, total_loss
from .model import MaskedDocumentModel, build_model, collate

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """Single-file training snapshot: parameters, optimizer, config, RNG."""

    version: int
    config: dict
    epoch: int                     # epochs completed
    model_state: dict
    optimizer_state: dict
    rng: dict
    best: dict                     # {"epoch": int, "metric": float}
    checkpoint_id: str

    def save(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.__dict__, path)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        payload = torch.load(path, weights_only=False)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {payload.get('version')!r}",
                            code="bad-checkpoint")
        return cls(**payload)

    def training_config(self) -> TrainingConfig:
        return config_from_keys(dict(self.config))


def model_from_checkpoint(ckpt: Checkpoint, vocab=None) -> MaskedDocumentModel:
    config = ckpt.training_config()
    model = MaskedDocumentModel(config, vocab=vocab)
    model.load_state_dict(ckpt.model_state)
    model.checkpoint_id = ckpt.checkpoint_id
    return model


def load_model(path: str | Path, vocab=None) -> MaskedDocumentModel:
    return model_from_checkpoint(Checkpoint.load(path), vocab=vocab)


@dataclass
class TrainState:
    model: MaskedDocumentModel
    optimizer: torch.optim.Optimizer
    data_gen: torch.Generator
    noise_gen: torch.Generator
    epoch: int = 0
    global_step: int = 0
    best_metric: float = -math.inf
    best_epoch: int = -1
    best_model_state: dict = field(default_factory=dict)


def _batches(indices: torch.Tensor, batch_size: int):
    for start in range(0, len(indices), batch_size):
        yield indices[start:start + batch_size].tolist()


def _check_finite(value: float, phase: str, step: int, epoch: int):
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"non-finite loss {value} at step {step} ({phase} pass, epoch {epoch})")


def train_epoch(state: TrainState, split: DatasetSplit, config: TrainingConfig,
                log_step=None) -> dict:
    """One labeled pass then one unlabeled pass; returns an epoch summary.

    With alpha == 0 the unlabeled pass is forward-only (logged, but it must
    contribute zero parameter change, which an adaptive optimizer step on a
    zero gradient would not guarantee).
    """
    if not split.labeled:
        raise DataError("labeled partition is empty", code="empty-split")
    model, opt = state.model, state.optimizer
    epoch = state.epoch
    temperature = config.temperature_at(epoch)
    beta = config.beta_at(epoch)
    alpha = config.alpha_at(epoch)
    totals: list[float] = []

    model.train()
    perm = torch.randperm(len(split.labeled), generator=state.data_gen)
    for batch_idx in _batches(perm, config.batch_labeled):
        batch = collate([split.labeled[i] for i in batch_idx])
        loss, fragment = supervised_vib_loss(
            model, batch, config, temperature=temperature, generator=state.noise_gen,
            beta=beta)
        breakdown = total_loss(fragment, LossBreakdown(), alpha)
        _check_finite(breakdown.total, "labeled", state.global_step, epoch)
        opt.zero_grad()
        loss.backward()
        if config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
        opt.step()
        if log_step is not None:
            log_step(state.global_step, epoch, "labeled", breakdown)
        totals.append(breakdown.total)
        state.global_step += 1

    if split.unlabeled:
        perm = torch.randperm(len(split.unlabeled), generator=state.data_gen)
        for batch_idx in _batches(perm, config.batch_unlabeled):
            batch = collate([split.unlabeled[i] for i in batch_idx])
            loss, fragment = consistency_vib_loss(
                model, batch, config, temperature=temperature, generator=state.noise_gen,
                beta=beta)
            breakdown = total_loss(LossBreakdown(), fragment, alpha)
            _check_finite(breakdown.total, "unlabeled", state.global_step, epoch)
            if alpha > 0:
                opt.zero_grad()
                (alpha * loss).backward()
                if config.grad_clip > 0:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                opt.step()
            if log_step is not None:
                log_step(state.global_step, epoch, "unlabeled", breakdown)
            totals.append(breakdown.total)
            state.global_step += 1

    state.epoch += 1
    return {
        "epoch": epoch,
        "steps": len(totals),
        "mean_total": float(np.mean(totals)) if totals else 0.0,
        "final_total": totals[-1] if totals else 0.0,
        "temperature": temperature,
    }


def evaluate_accuracy(model: MaskedDocumentModel, docs: list[ShapedDocument],
                      mask_mode: str | None = None) -> float:
    if not docs:
        raise DataError("cannot evaluate accuracy on an empty document list",
                        code="empty-split")
    probs = model.predict_proba(docs, mask_mode=mask_mode)
    preds = probs.argmax(axis=-1)
    labels = np.array([d.label for d in docs])
    return float((preds == labels).mean())


def _carve_holdout(labeled: list[ShapedDocument], fraction: float,
                   seed: int) -> tuple[list[ShapedDocument], list[ShapedDocument]]:
    n_hold = int(len(labeled) * fraction)
    gen = torch.Generator().manual_seed(seed)
    perm = torch.randperm(len(labeled), generator=gen).tolist()
    hold = [labeled[i] for i in perm[:n_hold]]
    train = [labeled[i] for i in perm[n_hold:]]
    return train, hold


def _snapshot_state(model: MaskedDocumentModel) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def _fingerprint_state(model_state: dict) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(model_state.items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()[:12]


def _make_checkpoint(state: TrainState, config: TrainingConfig,
                     model_state: dict, checkpoint_id: str) -> Checkpoint:
    return Checkpoint(
        version=CHECKPOINT_VERSION,
        config=config_to_keys(config),
        epoch=state.epoch,
        model_state=model_state,
        optimizer_state=copy.deepcopy(state.optimizer.state_dict()),
        rng={
            "data": state.data_gen.get_state(),
            "noise": state.noise_gen.get_state(),
            "global_step": state.global_step,
        },
        best={"epoch": state.best_epoch, "metric": state.best_metric},
        checkpoint_id=checkpoint_id,
    )


def fit(split: DatasetSplit, config: TrainingConfig, out_dir: str | Path | None = None,
        resume_from: str | Path | None = None, log_step=None, log_epoch=None,
        vocab=None) -> Checkpoint:
    """Train for up to ``config.epochs`` epochs and return the best checkpoint.

    Model selection uses accuracy on a holdout carved from the labeled set
    (``config.holdout_fraction``); when the carve is empty the training
    labeled set itself is scored.  If ``out_dir`` is given, ``last.ckpt`` and
    ``best.ckpt`` are written each epoch, and ``resume_from`` continues a run
    from a ``last.ckpt`` with identical results to an uninterrupted run.
    """
    if not split.labeled:
        raise DataError("cannot fit with zero labeled documents", code="empty-split")
    torch.set_num_threads(config.threads)

    if resume_from is not None:
        ckpt = Checkpoint.load(resume_from)
        config = ckpt.training_config()
        model = model_from_checkpoint(ckpt, vocab=vocab)
        optimizer = torch.optim.Adam(
            [p for p in model.parameters() if p.requires_grad],
            lr=config.lr, weight_decay=config.weight_decay)
        optimizer.load_state_dict(ckpt.optimizer_state)
        data_gen = torch.Generator()
        data_gen.set_state(ckpt.rng["data"])
        noise_gen = torch.Generator()
        noise_gen.set_state(ckpt.rng["noise"])
        state = TrainState(model=model, optimizer=optimizer, data_gen=data_gen,
                           noise_gen=noise_gen, epoch=ckpt.epoch,
                           global_step=ckpt.rng["global_step"],
                           best_metric=ckpt.best["metric"], best_epoch=ckpt.best["epoch"])
        # best-so-far parameters live in best.ckpt next to the resumed last.ckpt
        best_path = Path(resume_from).with_name("best.ckpt")
        if best_path.exists():
            state.best_model_state = Checkpoint.load(best_path).model_state
        else:
            state.best_model_state = _snapshot_state(model)
    else:
        model = build_model(config, vocab=vocab)
        optimizer = torch.optim.Adam(
            [p for p in model.parameters() if p.requires_grad],
            lr=config.lr, weight_decay=config.weight_decay)
        state = TrainState(
            model=model,
            optimizer=optimizer,
            data_gen=torch.Generator().manual_seed(config.seed + 1),
            noise_gen=torch.Generator().manual_seed(config.seed + 2),
        )
        state.best_model_state = _snapshot_state(model)

    train_labeled, holdout = _carve_holdout(
        split.labeled, config.holdout_fraction, config.seed + 3)
    if not train_labeled:
        train_labeled, holdout = split.labeled, []
    eval_docs = holdout if holdout else train_labeled
    train_split = DatasetSplit(labeled=train_labeled, unlabeled=split.unlabeled, test=[])

    while state.epoch < config.epochs:
        summary = train_epoch(state, train_split, config, log_step=log_step)
        acc = evaluate_accuracy(model, eval_docs)
        summary["holdout_accuracy"] = acc
        summary["holdout_size"] = len(holdout)
        if acc > state.best_metric:
            state.best_metric = acc
            state.best_epoch = summary["epoch"]
            state.best_model_state = _snapshot_state(model)
        if log_epoch is not None:
            log_epoch(summary)
        if out_dir is not None:
            last = _make_checkpoint(state, config, _snapshot_state(model),
                                    checkpoint_id=model.state_fingerprint())
            last.save(Path(out_dir) / "last.ckpt")
            best = _make_checkpoint(state, config, state.best_model_state,
                                    checkpoint_id=_fingerprint_state(state.best_model_state))
            best.save(Path(out_dir) / "best.ckpt")

    best = _make_checkpoint(state, config, state.best_model_state,
                            checkpoint_id=_fingerprint_state(state.best_model_state))
    if out_dir is not None:
        best.save(Path(out_dir) / "best.ckpt")
        if config.epochs == 0:
            best.save(Path(out_dir) / "last.ckpt")
    model.load_state_dict(best.model_state)
    model.checkpoint_id = best.checkpoint_id
    return best
