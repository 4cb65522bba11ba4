"""Per-concept generative models over primitive parameters.

Aligned label occurrences are harvested from the trained recognizer, filtered
by spline count and by distance to the annotated single-rep references, and
summarized as one diagonal Gaussian per spline index (8J coefficients plus
duration). Sampling draws each index independently; synthesis stitches
segments by translating each one onto the previous segment's final pose.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    IndexOutOfRange,
    LengthMismatch,
    MalformedFile,
    NoCompatibleReference,
    UnknownConcept,
    ValidationError,
)
from .primitives import execute_primitives, segment_primitives
from .training import TrainedModel, align_occurrences
from .types import (
    FORMAT_VERSION,
    PoseSequence,
    PrimitiveSequence,
    SplinePrimitive,
    WeakAnnotation,
    atomic_write_json,
    read_json,
)

DEFAULT_COV_F = 0.01
DEFAULT_SIMILARITY_THRESHOLD = 8.0
DISTANCE_SAMPLES = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])


@dataclass(frozen=True)
class Occurrence:
    """One aligned single repetition: contiguous splines plus provenance."""

    concept: str
    splines: tuple[SplinePrimitive, ...]
    source: tuple[str, tuple[int, int]]

    def __post_init__(self) -> None:
        splines = tuple(self.splines)
        if not splines:
            raise ValidationError("occurrence needs at least one spline")
        for a, b in zip(splines, splines[1:]):
            if b.start_frame != a.end_frame:
                raise ValidationError("occurrence splines must be contiguous")
        object.__setattr__(self, "splines", splines)
        src_id, (s, e) = self.source
        object.__setattr__(self, "source", (str(src_id), (int(s), int(e))))

    @property
    def num_splines(self) -> int:
        return len(self.splines)

    @property
    def J(self) -> int:
        return self.splines[0].J

    @property
    def n_frames(self) -> int:
        return sum(p.n_frames for p in self.splines)

    def to_json(self) -> dict:
        return {
            "concept": self.concept,
            "source": [self.source[0], list(self.source[1])],
            "splines": [p.to_json() for p in self.splines],
        }

    @classmethod
    def from_json(cls, obj: Any) -> "Occurrence":
        return cls(
            concept=str(obj["concept"]),
            splines=tuple(SplinePrimitive.from_json(p) for p in obj["splines"]),
            source=(obj["source"][0], tuple(obj["source"][1])),
        )


@dataclass(frozen=True)
class ConceptModel:
    """Ordered diagonal Gaussians over per-spline parameter vectors.

    Each vector has dimension 8J + 1: the coefficient blocks then the
    duration in frames. Sampling variance is cov_f * variance.
    """

    concept: str
    means: np.ndarray  # (l_star, D)
    variances: np.ndarray  # (l_star, D)
    cov_f: float = DEFAULT_COV_F
    support_count: int = 1

    def __post_init__(self) -> None:
        means = np.array(self.means, dtype=np.float64)
        variances = np.array(self.variances, dtype=np.float64)
        if means.ndim != 2 or means.shape != variances.shape:
            raise ValidationError("means and variances must be matching 2D arrays")
        if np.any(variances < 0):
            raise ValidationError("variances must be >= 0")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(variances)):
            raise ValidationError("model parameters must be finite")
        if self.cov_f < 0:
            raise ValidationError("cov_f must be >= 0")
        if self.support_count < 1:
            raise ValidationError("support_count must be >= 1")
        if (means.shape[1] - 1) % 8 != 0:
            raise ValidationError("vector dimension must be 8*J + 1")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def l_star(self) -> int:
        return self.means.shape[0]

    @property
    def J(self) -> int:
        return (self.means.shape[1] - 1) // 8

    def to_json(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "concept": self.concept,
            "l_star": self.l_star,
            "cov_f": self.cov_f,
            "support": self.support_count,
            "gaussians": [
                {"mu": mu.tolist(), "var": var.tolist()}
                for mu, var in zip(self.means, self.variances)
            ],
        }

    @classmethod
    def from_json(cls, obj: Any) -> "ConceptModel":
        if not isinstance(obj, Mapping) or obj.get("version") != FORMAT_VERSION:
            raise MalformedFile("not a concept model file")
        gaussians = obj["gaussians"]
        return cls(
            concept=str(obj["concept"]),
            means=np.array([g["mu"] for g in gaussians], dtype=np.float64),
            variances=np.array([g["var"] for g in gaussians], dtype=np.float64),
            cov_f=float(obj["cov_f"]),
            support_count=int(obj["support"]),
        )


@dataclass(frozen=True)
class MotionScript:
    """Ordered (concept, repetition count) pairs plus the sampling seed."""

    entries: tuple[tuple[str, int], ...]
    seed: int = 0

    def __post_init__(self) -> None:
        entries = tuple((str(c), int(n)) for c, n in self.entries)
        if not entries:
            raise ValidationError("script needs at least one entry")
        if any(n < 1 for _, n in entries):
            raise ValidationError("repetition counts must be >= 1")
        object.__setattr__(self, "entries", entries)

    def slots(self) -> list[str]:
        return [c for c, n in self.entries for _ in range(n)]

    def to_json(self) -> dict:
        return {"entries": [[c, n] for c, n in self.entries], "seed": self.seed}

    @classmethod
    def from_json(cls, obj: Any) -> "MotionScript":
        if not isinstance(obj, Mapping) or "entries" not in obj:
            raise MalformedFile("not a motion script")
        return cls(
            entries=tuple((e[0], e[1]) for e in obj["entries"]),
            seed=int(obj.get("seed", 0)),
        )


EDIT_KINDS = ("relabel", "insert", "delete", "set_primitive_param")


@dataclass(frozen=True)
class EditCommand:
    kind: str
    target: int
    payload: Any = None

    def __post_init__(self) -> None:
        if self.kind not in EDIT_KINDS:
            raise ValidationError(f"kind must be one of {EDIT_KINDS}")
        if self.kind == "set_primitive_param":
            prim_idx, coeff_idx, value = self.payload
            if not np.isfinite(value):
                raise ValidationError("coefficient value must be finite")
            object.__setattr__(
                self, "payload", (int(prim_idx), int(coeff_idx), float(value))
            )

    @classmethod
    def from_json(cls, obj: Any) -> "EditCommand":
        if not isinstance(obj, Mapping) or "kind" not in obj or "target" not in obj:
            raise MalformedFile("edit command needs 'kind' and 'target'")
        kind = str(obj["kind"])
        target = int(obj["target"])
        if kind == "relabel":
            return cls(kind, target, str(obj["label"]))
        if kind == "insert":
            if "occurrence" in obj:
                return cls(kind, target, Occurrence.from_json(obj["occurrence"]))
            entry = obj["entry"]
            return cls(kind, target, (str(entry[0]), int(entry[1])))
        if kind == "delete":
            return cls(kind, target)
        if kind == "set_primitive_param":
            p = obj["param"]
            return cls(kind, target, (p[0], p[1], p[2]))
        raise MalformedFile(f"unknown edit kind {kind!r}")


# ---------------------------------------------------------------------------
# Occurrence extraction and filtering


def extract_occurrences(
    sequences: Iterable[PoseSequence],
    model: TrainedModel,
    beam_width: int = 32,
) -> dict[str, list[Occurrence]]:
    """Describe every sequence and collect each aligned label occurrence
    with its assigned primitives. Occurrences owning no primitive step
    contribute nothing."""
    out: dict[str, list[Occurrence]] = {label: [] for label in model.vocabulary.labels}
    for seq in sequences:
        prims = segment_primitives(seq, model.seg_config)
        post = model.posterior(prims)
        for occ in align_occurrences(prims, post, model.blank, beam_width):
            if not occ.primitive_indices:
                continue
            splines = tuple(prims.primitives[i] for i in occ.primitive_indices)
            concept = model.vocabulary.label_of(occ.label_index)
            out[concept].append(
                Occurrence(concept=concept, splines=splines, source=(seq.id, occ.interval))
            )
    return out


def reference_occurrences(
    sequences: Iterable[PoseSequence],
    annotations: Iterable[WeakAnnotation],
    model: TrainedModel,
) -> dict[str, list[Occurrence]]:
    """Ground-truth single-rep references from annotated instance ranges:
    the primitives whose midpoints fall inside each instance range."""
    by_id = {s.id: s for s in sequences}
    cache: dict[str, PrimitiveSequence] = {}
    refs: dict[str, list[Occurrence]] = {}
    for ann in annotations:
        seq = by_id.get(ann.sequence_id)
        if seq is None:
            continue
        if seq.id not in cache:
            cache[seq.id] = segment_primitives(seq, model.seg_config)
        prims = cache[seq.id]
        for s, e in ann.instance_ranges:
            chosen = [
                p for p in prims.primitives if s <= p.start_frame + p.n_frames / 2 < e
            ]
            if not chosen:
                continue
            refs.setdefault(ann.concept, []).append(
                Occurrence(
                    concept=ann.concept,
                    splines=tuple(chosen),
                    source=(seq.id, (chosen[0].start_frame, chosen[-1].end_frame)),
                )
            )
    return refs


def length_filter(occs: Sequence[Occurrence]) -> list[Occurrence]:
    """Keep only occurrences whose spline count is the mode (ties go to the
    smaller count)."""
    if not occs:
        raise EmptyInput("no occurrences to filter")
    counts = Counter(o.num_splines for o in occs)
    top = max(counts.values())
    l_star = min(l for l, c in counts.items() if c == top)
    return [o for o in occs if o.num_splines == l_star]


def _distance_points(occ: Occurrence) -> np.ndarray:
    pts = np.stack([p.evaluate(DISTANCE_SAMPLES) for p in occ.splines])  # (l, 4, J, 2)
    root = occ.splines[0].evaluate(np.zeros(1))[0, 0]  # first-frame root joint
    return pts - root


def occurrence_distance(d: Occurrence, g: Occurrence) -> float:
    """Mean L2 distance over four equally spaced samples per spline and
    keypoint, after aligning both first-frame root joints to the origin."""
    if d.num_splines != g.num_splines:
        raise LengthMismatch(
            f"spline counts differ: {d.num_splines} vs {g.num_splines}"
        )
    if d.J != g.J:
        raise LengthMismatch(f"keypoint counts differ: {d.J} vs {g.J}")
    diff = _distance_points(d) - _distance_points(g)
    return float(np.linalg.norm(diff, axis=-1).mean())


def similarity_filter(
    occs: Sequence[Occurrence],
    refs: Sequence[Occurrence],
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> list[Occurrence]:
    """Keep occurrences within ``threshold`` (inclusive) of their nearest
    length-compatible reference."""
    if not refs:
        raise EmptyInput("no reference occurrences")
    kept = []
    for occ in occs:
        usable = [g for g in refs if g.num_splines == occ.num_splines and g.J == occ.J]
        if not usable:
            raise NoCompatibleReference(
                f"no reference with {occ.num_splines} splines for {occ.concept!r}"
            )
        if min(occurrence_distance(occ, g) for g in usable) <= threshold:
            kept.append(occ)
    return kept


# ---------------------------------------------------------------------------
# Model fitting and sampling


def occurrence_param_matrix(occ: Occurrence) -> np.ndarray:
    """(l, 8J+1) parameter rows: flattened coefficients then duration."""
    return np.stack(
        [np.concatenate([p.coeffs.ravel(), [p.n_frames]]) for p in occ.splines]
    )


def occurrence_frames(occ: Occurrence) -> np.ndarray:
    """Evaluate an occurrence's splines on their frame grids; (T, J, 2)."""
    return np.concatenate([p.evaluate(p.frame_grid()) for p in occ.splines])


def fit_concept_model(
    occs: Sequence[Occurrence],
    cov_f: float = DEFAULT_COV_F,
    concept: str | None = None,
) -> ConceptModel:
    """Per spline index, the sample mean and population variance of the
    parameter vectors (variance 0 when a single occurrence supports it)."""
    if not occs:
        raise EmptyInput("cannot fit a model on zero occurrences")
    lens = {o.num_splines for o in occs}
    if len(lens) != 1:
        raise LengthMismatch(f"occurrences have mixed spline counts: {sorted(lens)}")
    stack = np.stack([occurrence_param_matrix(o) for o in occs])  # (N, l, D)
    return ConceptModel(
        concept=concept if concept is not None else occs[0].concept,
        means=stack.mean(axis=0),
        variances=stack.var(axis=0),
        cov_f=cov_f,
        support_count=len(occs),
    )


def _round_duration(x: float) -> int:
    return max(2, int(np.floor(x + 0.5)))


def sample_concept(model: ConceptModel, rng: np.random.Generator) -> Occurrence:
    """Draw the l_star parameter vectors independently and rebuild splines.

    Durations round to the nearest integer, at least 2 frames.
    """
    scale = np.sqrt(model.cov_f * model.variances)
    draws = model.means + rng.standard_normal(model.means.shape) * scale
    splines = []
    start = 0
    for row in draws:
        n = _round_duration(row[-1])
        splines.append(
            SplinePrimitive(
                coeffs=row[:-1].reshape(model.J, 8), start_frame=start, n_frames=n
            )
        )
        start += n
    return Occurrence(
        concept=model.concept,
        splines=tuple(splines),
        source=(f"sampled:{model.concept}", (0, start)),
    )


def slot_rng(seed: int, slot: int) -> np.random.Generator:
    """Independent stream per (seed, slot); order-independent across slots."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(slot,)))


def sample_script(
    script: MotionScript, models: Mapping[str, ConceptModel]
) -> list[Occurrence]:
    slots = script.slots()
    for concept in slots:
        if concept not in models:
            raise UnknownConcept(f"no model for concept {concept!r}")
    return [
        sample_concept(models[c], slot_rng(script.seed, i))
        for i, c in enumerate(slots)
    ]


# ---------------------------------------------------------------------------
# Stitching, synthesis, editing


def _last_pose(prim: SplinePrimitive) -> np.ndarray:
    u_last = np.array([(prim.n_frames - 1) / prim.n_frames])
    return prim.evaluate(u_last)[0]  # (J, 2)


def _offset_spline(prim: SplinePrimitive, offset: np.ndarray, start: int) -> SplinePrimitive:
    coeffs = prim.coeffs.copy()
    coeffs[:, 3] += offset[:, 0]
    coeffs[:, 7] += offset[:, 1]
    return SplinePrimitive(coeffs=coeffs, start_frame=start, n_frames=prim.n_frames)


def stitch(segments: Sequence[Occurrence]) -> PrimitiveSequence:
    """Concatenate segments, translating each one (constant per-keypoint
    offset on d_x, d_y) so its first evaluated pose equals the previous
    segment's last evaluated pose."""
    if not segments:
        raise EmptyInput("nothing to stitch")
    out: list[SplinePrimitive] = []
    start = 0
    prev_last: np.ndarray | None = None
    for seg in segments:
        if prev_last is None:
            offset = np.zeros((seg.J, 2))
        else:
            first_pose = seg.splines[0].coeffs[:, [3, 7]]
            offset = prev_last - first_pose
        for prim in seg.splines:
            out.append(_offset_spline(prim, offset, start))
            start += prim.n_frames
        prev_last = _last_pose(out[-1])
    return PrimitiveSequence(source_id="stitched", primitives=tuple(out))


def segment_boundaries(segments: Sequence[Occurrence]) -> list[int]:
    """Frame indices where each segment after the first begins, in the
    stitched frame numbering."""
    bounds = []
    total = 0
    for seg in segments[:-1]:
        total += seg.n_frames
        bounds.append(total)
    return bounds


def synthesize(
    script: MotionScript,
    models: Mapping[str, ConceptModel],
    like: PoseSequence | None = None,
    **meta: Any,
) -> PoseSequence:
    """Sample every repetition in order, stitch, and execute."""
    segments = sample_script(script, models)
    prims = stitch(segments)
    return execute_primitives(prims, like=like, id="synthesized", **meta)


def apply_edit(
    segments: Sequence[Occurrence],
    cmd: EditCommand,
    models: Mapping[str, ConceptModel],
    rng: np.random.Generator | None = None,
) -> list[Occurrence]:
    """Apply one edit and return the new segment list; stitching is always
    re-derived from the raw segments at render/export time."""
    segs = list(segments)
    if rng is None:
        rng = np.random.default_rng(0)
    if cmd.kind == "delete":
        if not 0 <= cmd.target < len(segs):
            raise IndexOutOfRange(f"no segment {cmd.target}")
        segs.pop(cmd.target)
        return segs
    if cmd.kind == "insert":
        if not 0 <= cmd.target <= len(segs):
            raise IndexOutOfRange(f"cannot insert at {cmd.target}")
        if isinstance(cmd.payload, Occurrence):
            segs.insert(cmd.target, cmd.payload)
        else:
            concept, count = cmd.payload
            if concept not in models:
                raise UnknownConcept(f"no model for concept {concept!r}")
            for i in range(count):
                segs.insert(cmd.target + i, sample_concept(models[concept], rng))
        return segs
    if cmd.kind == "relabel":
        if not 0 <= cmd.target < len(segs):
            raise IndexOutOfRange(f"no segment {cmd.target}")
        concept = cmd.payload
        if concept not in models:
            raise UnknownConcept(f"no model for concept {concept!r}")
        segs[cmd.target] = sample_concept(models[concept], rng)
        return segs
    # set_primitive_param
    if not 0 <= cmd.target < len(segs):
        raise IndexOutOfRange(f"no segment {cmd.target}")
    prim_idx, coeff_idx, value = cmd.payload
    seg = segs[cmd.target]
    if not 0 <= prim_idx < seg.num_splines:
        raise IndexOutOfRange(f"segment has no primitive {prim_idx}")
    prim = seg.splines[prim_idx]
    flat = prim.coeffs.ravel().copy()
    if not 0 <= coeff_idx < flat.shape[0]:
        raise IndexOutOfRange(f"no coefficient {coeff_idx}")
    flat[coeff_idx] = value
    new_prim = SplinePrimitive(
        coeffs=flat.reshape(prim.coeffs.shape),
        start_frame=prim.start_frame,
        n_frames=prim.n_frames,
    )
    splines = list(seg.splines)
    splines[prim_idx] = new_prim
    segs[cmd.target] = Occurrence(
        concept=seg.concept, splines=tuple(splines), source=seg.source
    )
    return segs


# ---------------------------------------------------------------------------
# Pipeline helper and file I/O


def build_concept_models(
    sequences: Sequence[PoseSequence],
    annotations: Sequence[WeakAnnotation],
    model: TrainedModel,
    cov_f: float = DEFAULT_COV_F,
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
    beam_width: int = 32,
) -> dict[str, ConceptModel]:
    """extract -> length filter -> similarity filter -> fit, per concept.

    Concepts whose occurrences are entirely filtered away fall back to their
    annotated references so every concept keeps a model.
    """
    extracted = extract_occurrences(sequences, model, beam_width)
    refs = reference_occurrences(sequences, annotations, model)
    models: dict[str, ConceptModel] = {}
    for concept in model.vocabulary.labels:
        occs = extracted.get(concept, [])
        concept_refs = refs.get(concept, [])
        candidates: list[Occurrence] = []
        if occs:
            candidates = length_filter(occs)
            if concept_refs:
                try:
                    candidates = similarity_filter(candidates, concept_refs, threshold)
                except NoCompatibleReference:
                    candidates = []
        if not candidates:
            if not concept_refs:
                raise EmptyInput(
                    f"concept {concept!r} has no usable occurrences or references"
                )
            candidates = length_filter(concept_refs)
        models[concept] = fit_concept_model(candidates, cov_f=cov_f, concept=concept)
    return models


def save_concept_model(model: ConceptModel, path: str | Path) -> None:
    atomic_write_json(model.to_json(), path)


def load_concept_model(path: str | Path) -> ConceptModel:
    return ConceptModel.from_json(read_json(path))


def save_concept_models(models: Mapping[str, ConceptModel], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for concept, model in sorted(models.items()):
        save_concept_model(model, directory / f"{concept}.json")


def load_concept_models(directory: str | Path) -> dict[str, ConceptModel]:
    directory = Path(directory)
    models = {}
    for path in sorted(directory.glob("*.json")):
        model = load_concept_model(path)
        models[model.concept] = model
    if not models:
        raise EmptyInput(f"no concept model files in {directory}")
    return models


def load_script(path: str | Path) -> MotionScript:
    return MotionScript.from_json(read_json(path))


def save_script(script: MotionScript, path: str | Path) -> None:
    atomic_write_json(script.to_json(), path)
