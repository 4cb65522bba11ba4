"""Quantitative metrics: recognition, localization, reconstruction, and
generation quality, plus the recurrent action classifier used both as the
recognition-accuracy judge and as the feature extractor."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import DegenerateLength, EmptyDataset, ShapeMismatch, ValidationError
from .generator import ConceptModel, Occurrence, occurrence_frames, sample_concept
from .network import gru_step
from .training import _Adam

MAP_THRESHOLDS = tuple(0.5 + 0.05 * i for i in range(10))


@dataclass(frozen=True)
class IntervalPrediction:
    concept: str
    interval: tuple[int, int]
    score: float

    def __post_init__(self) -> None:
        s, e = self.interval
        if s >= e:
            raise ValidationError(f"interval must satisfy start < end, got ({s}, {e})")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class MetricsReport:
    """Scalar metrics; absent entries are None.

    Units: norm_ed in [0,1]; seq_acc, rep_map, acc in percent; kd in percent
    of the normalization length; ape, ave in pixels; fid, div, mm in feature
    units.
    """

    norm_ed: float | None = None
    seq_acc: float | None = None
    rep_map: float | None = None
    ape: float | None = None
    ave: float | None = None
    fid: float | None = None
    acc: float | None = None
    div: float | None = None
    mm: float | None = None
    kd: float | None = None

    def __post_init__(self) -> None:
        for name in ("norm_ed", "seq_acc", "rep_map", "ape", "ave", "fid", "acc", "div", "mm", "kd"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise ValidationError(f"{name} must be finite when present")
        if self.norm_ed is not None:
            if not 0.0 <= self.norm_ed <= 1.0:
                raise ValidationError("norm_ed must lie in [0, 1]")
            if self.seq_acc is not None and abs(
                self.seq_acc - (1.0 - self.norm_ed) * 100.0
            ) > 1e-9:
                raise ValidationError("seq_acc must equal (1 - norm_ed) * 100")

    def to_json(self) -> dict:
        return {
            k: getattr(self, k)
            for k in ("norm_ed", "seq_acc", "rep_map", "ape", "ave", "fid", "acc", "div", "mm", "kd")
        }


# ---------------------------------------------------------------------------
# Recognition metrics


def norm_edit_distance(pred: Sequence, gt: Sequence) -> float:
    """Levenshtein distance divided by max length; 0 when both are empty."""
    if not pred and not gt:
        return 0.0
    la, lb = len(pred), len(gt)
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (pred[i - 1] != gt[j - 1]),
            )
        prev = cur
    return prev[lb] / max(la, lb)


def sequence_accuracy(pred: Sequence, gt: Sequence) -> float:
    return (1.0 - norm_edit_distance(pred, gt)) * 100.0


def interval_iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def _average_precision(
    preds: list[IntervalPrediction],
    gts: list[tuple[int, int]],
    threshold: float,
) -> float:
    if not gts:
        raise ValueError("AP needs ground truth")
    if not preds:
        return 0.0
    order = sorted(preds, key=lambda p: (-p.score, p.interval))
    matched: set[int] = set()
    tp = np.zeros(len(order))
    for i, p in enumerate(order):
        best_iou, best_j = 0.0, -1
        for j, g in enumerate(gts):
            if j in matched:
                continue
            iou = interval_iou(p.interval, g)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= threshold:
            matched.add(best_j)
            tp[i] = 1.0
    cum_tp = np.cumsum(tp)
    recall = cum_tp / len(gts)
    precision = cum_tp / np.arange(1, len(order) + 1)
    # all-point interpolation: integrate the precision envelope over recall
    mrec = np.concatenate([[0.0], recall, [recall[-1]]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]).sum())


def repetition_map(
    preds: Sequence[IntervalPrediction],
    gts: Sequence[tuple[str, tuple[int, int]]],
    thresholds: Sequence[float] = MAP_THRESHOLDS,
) -> float:
    """mAP over IoU thresholds (default 0.50:0.05:0.95), in percent.

    AP per class and threshold by score-ranked greedy matching with each
    ground truth matched at most once; classes are those with ground truth.
    """
    classes = sorted({c for c, _ in gts})
    if not classes:
        raise ValidationError("need at least one ground-truth interval")
    per_class_preds = {c: [p for p in preds if p.concept == c] for c in classes}
    per_class_gts = {c: [iv for cc, iv in gts if cc == c] for c in classes}
    means = []
    for thr in thresholds:
        aps = [
            _average_precision(per_class_preds[c], per_class_gts[c], thr)
            for c in classes
        ]
        means.append(float(np.mean(aps)))
    return float(np.mean(means)) * 100.0


# ---------------------------------------------------------------------------
# Pose-sequence metrics


def _frames_of(p) -> np.ndarray:
    frames = p.frames if hasattr(p, "frames") else np.asarray(p, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[2] != 2:
        raise ShapeMismatch(f"expected (T, J, 2) poses, got {frames.shape}")
    return frames


def dtw_align(p, q) -> tuple[np.ndarray, float]:
    """Minimal-cost monotone alignment under per-frame mean joint L2 cost.

    Returns (path, cost) where path is an (L, 2) index array satisfying the
    usual boundary, monotonicity, and continuity constraints.
    """
    a, b = _frames_of(p), _frames_of(q)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch("keypoint counts differ")
    t1, t2 = a.shape[0], b.shape[0]
    local = np.linalg.norm(a[:, None, :, :] - b[None, :, :, :], axis=3).mean(axis=2)
    acc = np.full((t1, t2), np.inf)
    move = np.zeros((t1, t2), dtype=np.int8)  # 0 diag, 1 up(i-1), 2 left(j-1)
    acc[0, 0] = local[0, 0]
    for i in range(1, t1):
        acc[i, 0] = acc[i - 1, 0] + local[i, 0]
        move[i, 0] = 1
    for j in range(1, t2):
        acc[0, j] = acc[0, j - 1] + local[0, j]
        move[0, j] = 2
    for i in range(1, t1):
        prev_row = acc[i - 1]
        row = acc[i]
        for j in range(1, t2):
            best = prev_row[j - 1]
            m = 0
            if prev_row[j] < best:
                best, m = prev_row[j], 1
            if row[j - 1] < best:
                best, m = row[j - 1], 2
            row[j] = best + local[i, j]
            move[i, j] = m
    path = [(t1 - 1, t2 - 1)]
    while path[-1] != (0, 0):
        i, j = path[-1]
        m = move[i, j]
        path.append((i - 1, j - 1) if m == 0 else (i - 1, j) if m == 1 else (i, j - 1))
    path.reverse()
    return np.asarray(path, dtype=np.int64), float(acc[t1 - 1, t2 - 1])


def ape(p, q) -> float:
    """Average positional error in pixels over DTW-aligned frame pairs."""
    a, b = _frames_of(p), _frames_of(q)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch("keypoint counts differ")
    if a.shape[0] == b.shape[0]:
        pairs = (a, b)
    else:
        path, _ = dtw_align(a, b)
        pairs = (a[path[:, 0]], b[path[:, 1]])
    return float(np.linalg.norm(pairs[0] - pairs[1], axis=2).mean())


def _joint_spread(frames: np.ndarray) -> np.ndarray:
    t = frames.shape[0]
    mu = frames.mean(axis=0)  # (J, 2)
    return np.linalg.norm(frames - mu, axis=2).sum(axis=0) / (t - 1)  # (J,)


def ave(p, q) -> float:
    """Average variance error: mean over joints of |spread - spread_gt|."""
    a, b = _frames_of(p), _frames_of(q)
    if a.shape[1] != b.shape[1]:
        raise ShapeMismatch("keypoint counts differ")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise DegenerateLength("variance needs at least 2 frames")
    return float(np.abs(_joint_spread(a) - _joint_spread(b)).mean())


# ---------------------------------------------------------------------------
# Action classifier (recognition accuracy judge + feature extractor)


@dataclass(frozen=True)
class ClassifierConfig:
    hidden_dim: int = 32
    epochs: int = 150
    learning_rate: float = 1e-2
    seed: int = 0


def normalize_motion(frames: np.ndarray) -> np.ndarray:
    """Root-align (first-frame root joint to origin) and scale-normalize one
    motion; returns (T, 2J) inputs for the recurrent classifier."""
    frames = _frames_of(frames)
    aligned = frames - frames[0, 0]
    scale = np.linalg.norm(aligned, axis=2).mean()
    if scale < 1e-9:
        scale = 1.0
    return (aligned / scale).reshape(frames.shape[0], -1)


class ActionClassifier:
    """GRU over normalized per-frame poses; the last hidden state is the
    feature vector and feeds a linear class head."""

    def __init__(self, params: dict[str, np.ndarray], labels: tuple[str, ...], cfg: ClassifierConfig):
        self.params = params
        self.labels = labels
        self.cfg = cfg

    @property
    def feature_dim(self) -> int:
        return self.cfg.hidden_dim

    def _hidden_batch(self, inputs: list[np.ndarray], pvars: Mapping | None = None) -> Var:
        p = pvars if pvars is not None else {k: Var(v) for k, v in self.params.items()}
        n = len(inputs)
        tmax = max(x.shape[0] for x in inputs)
        d = inputs[0].shape[1]
        padded = np.zeros((n, tmax, d))
        mask = np.zeros((n, tmax, 1))
        for i, x in enumerate(inputs):
            padded[i, : x.shape[0]] = x
            mask[i, : x.shape[0]] = 1.0
        proj_w, proj_b = p["in_w"], p["in_b"]
        h: Var | np.ndarray = np.zeros((n, self.cfg.hidden_dim))
        for t in range(tmax):
            x = ad.add(ad.matmul(padded[:, t, :], proj_w), proj_b)
            h_new = gru_step(p, ad.tanh(x), h)
            m = mask[:, t, :]
            h = ad.add(ad.mul(h_new, m), ad.mul(h, 1.0 - m))
        return h

    def features(self, motions: Sequence[np.ndarray]) -> np.ndarray:
        """Feature matrix (N, hidden_dim); motions are (T, J, 2) arrays."""
        out = []
        inputs = [normalize_motion(m) for m in motions]
        for lo in range(0, len(inputs), 256):
            out.append(self._hidden_batch(inputs[lo : lo + 256]).value)
        return np.concatenate(out) if out else np.zeros((0, self.cfg.hidden_dim))

    def scores(self, motions: Sequence[np.ndarray]) -> np.ndarray:
        feats = self.features(motions)
        return feats @ self.params["head_w"] + self.params["head_b"]

    def classify(self, motions: Sequence[np.ndarray]) -> list[str]:
        return [self.labels[i] for i in self.scores(motions).argmax(axis=1)]


def train_action_classifier(
    examples: Sequence[tuple[str, np.ndarray]],
    cfg: ClassifierConfig = ClassifierConfig(),
) -> ActionClassifier:
    """Fit the classifier on (label, motion) pairs; full-batch Adam on
    softmax cross-entropy, deterministic given cfg.seed."""
    if not examples:
        raise EmptyDataset("no classifier examples")
    labels = tuple(sorted({lab for lab, _ in examples}))
    if len(labels) < 2:
        raise EmptyDataset("classifier needs at least 2 classes")
    label_idx = {lab: i for i, lab in enumerate(labels)}
    motions = [normalize_motion(m) for _, m in examples]
    targets = np.array([label_idx[lab] for lab, _ in examples])
    d = motions[0].shape[1]
    h = cfg.hidden_dim

    rng = np.random.default_rng(cfg.seed)

    def uniform(fan_in, *shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params = {
        "in_w": uniform(d, d, h),
        "in_b": np.zeros(h),
        "cell_wz": uniform(h, h, h),
        "cell_uz": uniform(h, h, h),
        "cell_bz": np.zeros(h),
        "cell_wr": uniform(h, h, h),
        "cell_ur": uniform(h, h, h),
        "cell_br": np.zeros(h),
        "cell_wh": uniform(h, h, h),
        "cell_uh": uniform(h, h, h),
        "cell_bh": np.zeros(h),
        "head_w": uniform(h, h, len(labels)),
        "head_b": np.zeros(len(labels)),
    }
    clf = ActionClassifier(params, labels, cfg)
    optimizer = _Adam(params, cfg.learning_rate)
    rows = np.arange(len(motions))
    for _ in range(cfg.epochs):
        pvars = {k: Var(v) for k, v in params.items()}
        hidden = clf._hidden_batch(motions, pvars)
        logits = ad.add(ad.matmul(hidden, pvars["head_w"]), pvars["head_b"])
        logp = ad.log_softmax(logits)
        loss = ad.mul(ad.vmean(ad.pick(logp, rows, targets)), -1.0)
        loss.backward()
        grads = {
            k: (v.grad if v.grad is not None else np.zeros_like(v.value))
            for k, v in pvars.items()
        }
        optimizer.step(params, grads)
        clf.params = params
    return clf


# ---------------------------------------------------------------------------
# Distribution metrics


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; tiny negative
    eigenvalues from rounding are clamped to zero."""
    sym = (mat + mat.T) / 2.0
    w, v = np.linalg.eigh(sym)
    w = np.where(w < 0.0, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def product_sqrt(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    """A matrix M with M @ M = c1 @ c2, via the symmetrized product
    c1^(1/2) c2 c1^(1/2). Requires positive-definite c1."""
    s1h = psd_sqrt(c1)
    inner = psd_sqrt(s1h @ c2 @ s1h)
    return s1h @ inner @ np.linalg.inv(s1h)


def gaussian_fid(
    mu1: np.ndarray, c1: np.ndarray, mu2: np.ndarray, c2: np.ndarray
) -> float:
    """||mu1 - mu2||^2 + Tr(c1 + c2 - 2 (c1 c2)^(1/2)), trace computed from
    the symmetrized product so singular covariances are handled."""
    s1h = psd_sqrt(c1)
    inner = s1h @ c2 @ s1h
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    trace_sqrt = np.sqrt(np.where(w < 0.0, 0.0, w)).sum()
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(c1) + np.trace(c2) - 2.0 * trace_sqrt)


def feature_stats(feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if feats.shape[0] < 2:
        raise DegenerateLength("need at least 2 feature vectors")
    return feats.mean(axis=0), np.cov(feats, rowvar=False)


def fid_from_features(real: np.ndarray, generated: np.ndarray) -> float:
    mu1, c1 = feature_stats(real)
    mu2, c2 = feature_stats(generated)
    return gaussian_fid(mu1, c1, mu2, c2)


# ---------------------------------------------------------------------------
# Generative evaluation


@dataclass(frozen=True)
class GenMetrics:
    fid: float
    acc: float  # percent
    div: float
    mm: float
    per_run: tuple[dict, ...] = field(default=())

    def to_json(self) -> dict:
        return {"fid": self.fid, "acc": self.acc, "div": self.div, "mm": self.mm}


def gen_metrics(
    models: Mapping[str, ConceptModel],
    real_occurrences: Sequence[Occurrence],
    classifier: ActionClassifier,
    motion_of: Callable[[Occurrence], np.ndarray] = occurrence_frames,
    seed: int = 0,
    runs: int = 20,
    n_samples: int = 1000,
    div_subset: int = 200,
    mm_subset: int = 20,
) -> GenMetrics:
    """FID / accuracy / diversity / multimodality, averaged over seeded runs.

    Real motions are drawn with replacement; each draw's label is the
    requested class for the paired generated motion, so both pools share one
    class mixture. Runs are independent streams and execute concurrently.
    """
    if not real_occurrences:
        raise EmptyDataset("no real occurrences")
    pool_labels = [o.concept for o in real_occurrences]
    pool_feats = classifier.features([motion_of(o) for o in real_occurrences])
    class_list = sorted(models)

    def one_run(run: int) -> dict:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run,)))
        idx = rng.integers(0, len(real_occurrences), size=n_samples)
        req_labels = [pool_labels[i] for i in idx]
        gen_motions = [
            motion_of(sample_concept(models[lab], rng)) for lab in req_labels
        ]
        gen_feats = classifier.features(gen_motions)
        pred = classifier.classify(gen_motions)
        acc = 100.0 * float(np.mean([p == r for p, r in zip(pred, req_labels)]))
        fid = fid_from_features(pool_feats[idx], gen_feats)

        div_labels = [
            pool_labels[i]
            for i in rng.integers(0, len(real_occurrences), size=2 * div_subset)
        ]
        div_feats = classifier.features(
            [motion_of(sample_concept(models[lab], rng)) for lab in div_labels]
        )
        u, v = div_feats[:div_subset], div_feats[div_subset:]
        div = float(np.linalg.norm(u - v, axis=1).mean())

        mm_terms = []
        for lab in class_list:
            feats = classifier.features(
                [
                    motion_of(sample_concept(models[lab], rng))
                    for _ in range(2 * mm_subset)
                ]
            )
            u, v = feats[:mm_subset], feats[mm_subset:]
            mm_terms.append(np.linalg.norm(u - v, axis=1))
        mm = float(np.concatenate(mm_terms).mean())
        return {"run": run, "fid": fid, "acc": acc, "div": div, "mm": mm}

    with ThreadPoolExecutor(max_workers=min(4, runs)) as pool:
        results = list(pool.map(one_run, range(runs)))
    return GenMetrics(
        fid=float(np.mean([r["fid"] for r in results])),
        acc=float(np.mean([r["acc"] for r in results])),
        div=float(np.mean([r["div"] for r in results])),
        mm=float(np.mean([r["mm"] for r in results])),
        per_run=tuple(results),
    )
