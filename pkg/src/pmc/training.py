"""Recognizer training with weak-label pseudo-targets, and description.

The objective is ctc + lambda1 * primitive + lambda2 * transition, where the
per-step terms are cross-entropies against the pseudo-targets and are masked
outside annotated ranges. Both lambdas run at their configured value for the
warmup epochs and drop to 0 afterwards. One optimizer step per annotated
sequence; Adam with a fixed update order keeps runs bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .ctc import (
    PosteriorSequence,
    ctc_log_prob,
    ctc_loss_op,
    decode,
    occurrence_runs,
    viterbi_align,
)
from .errors import (
    DivergedLoss,
    EmptyDataset,
    NonFiniteLoss,
    ValidationError,
    VersionMismatch,
)
from .features import (
    NormalizationStats,
    compute_normalization_stats,
    featurize_sequence,
)
from .network import ModelConfig, forward_logprobs, init_params
from .primitives import SegmentationConfig, segment_primitives
from .types import (
    CheckpointState,
    ConceptVocabulary,
    Description,
    PoseSequence,
    PrimitiveSequence,
    WeakAnnotation,
    load_checkpoint,
    save_checkpoint,
)
from .weak_labels import UNSUPERVISED, PseudoTargets, pseudo_targets_for_sequence


@dataclass(frozen=True)
class LossBreakdown:
    ctc: float
    primitive: float
    transition: float
    lambda1: float
    lambda2: float
    total: float

    def __post_init__(self) -> None:
        for name in ("ctc", "primitive", "transition"):
            v = getattr(self, name)
            if v < 0 or not np.isfinite(v):
                raise ValidationError(f"{name} component must be finite and >= 0")

    @classmethod
    def build(
        cls, ctc: float, primitive: float, transition: float, lam1: float, lam2: float
    ) -> "LossBreakdown":
        ctc, primitive, transition = max(ctc, 0.0), max(primitive, 0.0), max(transition, 0.0)
        return cls(
            ctc=ctc,
            primitive=primitive,
            transition=transition,
            lambda1=lam1,
            lambda2=lam2,
            total=ctc + lam1 * primitive + lam2 * transition,
        )

    def to_json(self) -> dict:
        return {
            "ctc": self.ctc,
            "primitive": self.primitive,
            "transition": self.transition,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "total": self.total,
        }


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 200
    warmup_epochs: int | None = None  # defaults to epochs // 2
    learning_rate: float = 1e-3
    final_learning_rate: float | None = None  # cosine-decay floor; None = constant
    lambda1: float = 1.0
    lambda2: float = 1.0
    seed: int = 0
    beam_width: int = 32

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.warmup_epochs is not None and self.warmup_epochs < 0:
            raise ValidationError("warmup_epochs must be >= 0")
        if self.final_learning_rate is not None and not (
            0 < self.final_learning_rate <= self.learning_rate
        ):
            raise ValidationError("final_learning_rate must be in (0, learning_rate]")

    @property
    def warmup(self) -> int:
        return self.epochs // 2 if self.warmup_epochs is None else self.warmup_epochs

    def lr_at(self, epoch: int) -> float:
        if self.final_learning_rate is None or self.epochs == 1:
            return self.learning_rate
        frac = epoch / (self.epochs - 1)
        lo, hi = self.final_learning_rate, self.learning_rate
        return lo + 0.5 * (hi - lo) * (1.0 + np.cos(np.pi * frac))


def loss(
    post: PosteriorSequence,
    targets: PseudoTargets,
    lam1: float,
    lam2: float,
    blank: int | None = None,
) -> LossBreakdown:
    """Loss components from a posterior (pure evaluation, no gradients)."""
    if blank is None:
        blank = post.num_classes - 1
    if post.num_steps != 2 * targets.K - 1:
        raise ValidationError(
            f"posterior has {post.num_steps} steps for K={targets.K}"
        )
    logp = post.log_steps()
    ctc = -ctc_log_prob(post, targets.label_sequence, blank)
    prim_mask = targets.primitive_targets != UNSUPERVISED
    trans_mask = targets.transition_targets != UNSUPERVISED
    prim = 0.0
    if prim_mask.any():
        rows = 2 * np.nonzero(prim_mask)[0]
        prim = float(-logp[rows, targets.primitive_targets[prim_mask]].sum())
    trans = 0.0
    if trans_mask.any():
        rows = 2 * np.nonzero(trans_mask)[0] + 1
        trans = float(-logp[rows, targets.transition_targets[trans_mask]].sum())
    return LossBreakdown.build(ctc, prim, trans, lam1, lam2)


def _loss_graph(
    logp: Var, targets: PseudoTargets, lam1: float, lam2: float, blank: int
) -> tuple[Var, LossBreakdown]:
    total = ctc_loss_op(logp, targets.label_sequence, blank)
    ctc_val = float(total.value)
    prim_val = 0.0
    trans_val = 0.0

    prim_mask = targets.primitive_targets != UNSUPERVISED
    if prim_mask.any():
        rows = 2 * np.nonzero(prim_mask)[0]
        term = ad.mul(ad.vsum(ad.pick(logp, rows, targets.primitive_targets[prim_mask])), -1.0)
        prim_val = float(term.value)
        if lam1 != 0.0:
            total = ad.add(total, ad.mul(term, lam1))
    trans_mask = targets.transition_targets != UNSUPERVISED
    if trans_mask.any():
        rows = 2 * np.nonzero(trans_mask)[0] + 1
        term = ad.mul(ad.vsum(ad.pick(logp, rows, targets.transition_targets[trans_mask])), -1.0)
        trans_val = float(term.value)
        if lam2 != 0.0:
            total = ad.add(total, ad.mul(term, lam2))
    return total, LossBreakdown.build(ctc_val, prim_val, trans_val, lam1, lam2)


def grad(
    params: Mapping[str, np.ndarray],
    batch: Sequence[tuple[np.ndarray, PseudoTargets]],
    cfg: ModelConfig,
    lam1: float = 1.0,
    lam2: float = 1.0,
) -> tuple[dict[str, np.ndarray], LossBreakdown]:
    """Exact gradient of the mean batch loss for every parameter."""
    if not batch:
        raise EmptyDataset("empty batch")
    blank = cfg.num_classes - 1
    pvars = {k: Var(v) for k, v in params.items()}
    total: Var | None = None
    parts: list[LossBreakdown] = []
    for features, targets in batch:
        logp = forward_logprobs(pvars, features, cfg)
        item_loss, breakdown = _loss_graph(logp, targets, lam1, lam2, blank)
        parts.append(breakdown)
        total = item_loss if total is None else ad.add(total, item_loss)
    total = ad.mul(total, 1.0 / len(batch))
    if not np.isfinite(total.value):
        raise NonFiniteLoss(f"batch loss is {total.value}")
    total.backward()
    grads = {
        k: (v.grad if v.grad is not None else np.zeros_like(v.value))
        for k, v in pvars.items()
    }
    mean = LossBreakdown.build(
        float(np.mean([p.ctc for p in parts])),
        float(np.mean([p.primitive for p in parts])),
        float(np.mean([p.transition for p in parts])),
        lam1,
        lam2,
    )
    return grads, mean


class _Adam:
    """Per-parameter adaptive steps; update order is fixed by sorted names."""

    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name in sorted(params):
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            params[name] = params[name] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainedModel:
    """Recognizer parameters plus everything needed to reproduce inference."""

    params: dict[str, np.ndarray]
    config: ModelConfig
    stats: NormalizationStats
    vocabulary: ConceptVocabulary
    seg_config: SegmentationConfig

    @property
    def blank(self) -> int:
        return self.vocabulary.blank_index

    def posterior(self, prims: PrimitiveSequence) -> PosteriorSequence:
        feats = featurize_sequence(prims, self.stats)
        logp = forward_logprobs(self.params, feats, self.config)
        return PosteriorSequence(np.exp(logp.value))

    def to_checkpoint(self) -> CheckpointState:
        return CheckpointState(
            vocabulary=self.vocabulary,
            config={
                "model": self.config.to_json(),
                "segmentation": self.seg_config.to_json(),
            },
            parameters={
                **self.params,
                "feature_mean": self.stats.mean,
                "feature_std": self.stats.std,
            },
        )

    def save(self, path: str | Path) -> None:
        save_checkpoint(self.to_checkpoint(), path)

    @classmethod
    def from_checkpoint(cls, state: CheckpointState) -> "TrainedModel":
        try:
            cfg = ModelConfig.from_json(state.config["model"])
            seg = SegmentationConfig.from_json(state.config["segmentation"])
        except KeyError as exc:
            raise VersionMismatch(f"checkpoint config missing {exc}") from exc
        params = dict(state.parameters)
        try:
            mean = params.pop("feature_mean")
            std = params.pop("feature_std")
        except KeyError as exc:
            raise VersionMismatch(f"checkpoint missing {exc}") from exc
        return cls(
            params=params,
            config=cfg,
            stats=NormalizationStats(mean=mean, std=std),
            vocabulary=state.vocabulary,
            seg_config=seg,
        )

    @classmethod
    def load(
        cls, path: str | Path, expect_vocabulary: ConceptVocabulary | None = None
    ) -> "TrainedModel":
        return cls.from_checkpoint(load_checkpoint(path, expect_vocabulary))


@dataclass(frozen=True)
class PreparedSequence:
    """A sequence segmented and featurized for training or inference."""

    sequence: PoseSequence
    prims: PrimitiveSequence
    features: np.ndarray
    targets: PseudoTargets | None = None


def prepare_dataset(
    sequences: Sequence[PoseSequence],
    annotations: Sequence[WeakAnnotation],
    vocabulary: ConceptVocabulary,
    seg_cfg: SegmentationConfig,
) -> tuple[list[PreparedSequence], NormalizationStats]:
    """Segment annotated sequences, fit normalization stats, build targets."""
    by_seq: dict[str, list[WeakAnnotation]] = {}
    for a in annotations:
        by_seq.setdefault(a.sequence_id, []).append(a)
    annotated = [s for s in sequences if s.id in by_seq]
    if not annotated:
        raise EmptyDataset("no sequence has annotations")
    covered = {a.concept for a in annotations}
    missing = [l for l in vocabulary.labels if l not in covered]
    if missing:
        raise EmptyDataset(f"concepts without any annotation: {missing}")

    segmented = [(s, segment_primitives(s, seg_cfg)) for s in annotated]
    stats = compute_normalization_stats(
        p for _, prims in segmented for p in prims.primitives
    )
    prepared = []
    for seq, prims in segmented:
        prepared.append(
            PreparedSequence(
                sequence=seq,
                prims=prims,
                features=featurize_sequence(prims, stats),
                targets=pseudo_targets_for_sequence(by_seq[seq.id], prims, vocabulary),
            )
        )
    return prepared, stats


def train(
    sequences: Sequence[PoseSequence],
    annotations: Sequence[WeakAnnotation],
    vocabulary: ConceptVocabulary,
    seg_cfg: SegmentationConfig,
    train_cfg: TrainingConfig = TrainingConfig(),
    model_cfg: ModelConfig | None = None,
    val_sequences: Sequence[PoseSequence] = (),
    val_annotations: Sequence[WeakAnnotation] = (),
    log_path: str | Path | None = None,
) -> tuple[TrainedModel, list[dict]]:
    """Fit the recognizer; deterministic given the seeds in both configs.

    Emits one history record per epoch (mean loss components, and SeqAcc
    against the validation split's pseudo label sequences when provided).
    """
    prepared, stats = prepare_dataset(sequences, annotations, vocabulary, seg_cfg)
    if model_cfg is None:
        model_cfg = ModelConfig(
            feature_dim=stats.dim, num_classes=vocabulary.num_classes
        )
    if model_cfg.feature_dim != stats.dim:
        raise ValidationError(
            f"model feature_dim {model_cfg.feature_dim} != data {stats.dim}"
        )
    if model_cfg.num_classes != vocabulary.num_classes:
        raise ValidationError("model num_classes must equal |vocabulary| + 1")

    val_prepared: list[PreparedSequence] = []
    if val_sequences:
        seg = [(s, segment_primitives(s, seg_cfg)) for s in val_sequences]
        val_by_seq: dict[str, list[WeakAnnotation]] = {}
        for a in val_annotations:
            val_by_seq.setdefault(a.sequence_id, []).append(a)
        for seq, prims in seg:
            anns = val_by_seq.get(seq.id)
            if not anns:
                continue
            val_prepared.append(
                PreparedSequence(
                    sequence=seq,
                    prims=prims,
                    features=featurize_sequence(prims, stats),
                    targets=pseudo_targets_for_sequence(anns, prims, vocabulary),
                )
            )

    params = init_params(model_cfg)
    optimizer = _Adam(params, train_cfg.learning_rate)
    rng = np.random.default_rng(train_cfg.seed)
    blank = vocabulary.blank_index
    history: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(train_cfg.epochs):
            warm = epoch < train_cfg.warmup
            lam1 = train_cfg.lambda1 if warm else 0.0
            lam2 = train_cfg.lambda2 if warm else 0.0
            optimizer.lr = train_cfg.lr_at(epoch)
            order = rng.permutation(len(prepared))
            sums = np.zeros(3)
            for i in order:
                item = prepared[i]
                grads, breakdown = grad(
                    params, [(item.features, item.targets)], model_cfg, lam1, lam2
                )
                optimizer.step(params, grads)
                sums += (breakdown.ctc, breakdown.primitive, breakdown.transition)
            mean = sums / len(prepared)
            record = LossBreakdown.build(mean[0], mean[1], mean[2], lam1, lam2).to_json()
            record["epoch"] = epoch
            if not np.isfinite(record["total"]):
                raise DivergedLoss(f"loss diverged at epoch {epoch}")
            if val_prepared:
                model = TrainedModel(params, model_cfg, stats, vocabulary, seg_cfg)
                accs = []
                for item in val_prepared:
                    post = model.posterior(item.prims)
                    pred, _ = decode(post, train_cfg.beam_width, blank)
                    accs.append(
                        100.0 * (1.0 - _norm_edit_distance(pred, item.targets.label_sequence))
                    )
                record["val_seq_acc"] = float(np.mean(accs))
            history.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
    finally:
        if log_fh:
            log_fh.close()

    model = TrainedModel(
        params=params,
        config=model_cfg,
        stats=stats,
        vocabulary=vocabulary,
        seg_config=seg_cfg,
    )
    return model, history


def _norm_edit_distance(a: Sequence, b: Sequence) -> float:
    # local copy to avoid importing evaluation (which imports this module)
    if not a and not b:
        return 0.0
    la, lb = len(a), len(b)
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (a[i - 1] != b[j - 1]),
            )
        prev = cur
    return prev[lb] / max(la, lb)


@dataclass(frozen=True)
class AlignedOccurrence:
    """One recognized label occurrence with its primitive assignment."""

    label_index: int
    step_indices: tuple[int, ...]
    primitive_indices: tuple[int, ...]
    interval: tuple[int, int]
    score: float


def align_occurrences(
    prims: PrimitiveSequence,
    post: PosteriorSequence,
    blank: int,
    beam_width: int = 32,
) -> list[AlignedOccurrence]:
    """decode + viterbi_align, grouped into per-occurrence assignments.

    An occurrence's interval is the union of frames of the primitives whose
    steps it owns; occurrences owning only a transition step collapse to the
    zero-length interval at that boundary.
    """
    labels, _ = decode(post, beam_width, blank)
    if not labels:
        return []
    step_labels = viterbi_align(post, labels, blank)
    logp = post.log_steps()
    out = []
    for label, steps in occurrence_runs(step_labels, blank):
        prim_idx = tuple(s // 2 for s in steps if s % 2 == 0)
        if prim_idx:
            interval = (
                prims.primitives[prim_idx[0]].start_frame,
                prims.primitives[prim_idx[-1]].end_frame,
            )
        else:
            b = prims.primitives[(steps[0] + 1) // 2].start_frame
            interval = (b, b)
        score = float(np.exp(np.mean([logp[s, label] for s in steps])))
        out.append(
            AlignedOccurrence(
                label_index=label,
                step_indices=tuple(steps),
                primitive_indices=prim_idx,
                interval=interval,
                score=min(max(score, 0.0), 1.0),
            )
        )
    return out


def describe(
    seq: PoseSequence, model: TrainedModel, beam_width: int = 32
) -> Description:
    """Full pipeline: segment, classify steps, decode, align, localize."""
    prims = segment_primitives(seq, model.seg_config)
    post = model.posterior(prims)
    occs = align_occurrences(prims, post, model.blank, beam_width)
    return Description(
        labels=tuple(model.vocabulary.label_of(o.label_index) for o in occs),
        intervals=tuple(o.interval for o in occs),
        scores=tuple(o.score for o in occs),
    )
