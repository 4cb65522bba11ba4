"""Canonical domain types, JSON file formats, and checkpoint serialization.

All types are immutable after construction and validate their invariants
eagerly, so any constructed value is safe to share across threads.
Frame ranges are half-open ``[start, end)`` throughout.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import MalformedFile, ValidationError, VersionMismatch

FORMAT_VERSION = 1


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)  # private copy, then lock
    a.setflags(write=False)
    return a


def atomic_write_json(obj: Any, path: str | Path) -> None:
    """Write JSON durably: temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str | Path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: not valid JSON ({exc})") from exc


@dataclass(frozen=True)
class PoseSequence:
    """Per-frame 2D joint positions of one subject.

    frames has shape (T, J, 2) holding (x, y) pixel coordinates.
    """

    id: str
    fps: float
    width: int
    height: int
    joint_names: tuple[str, ...]
    frames: np.ndarray

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 2:
            raise ValidationError(f"frames must be (T, J, 2), got {frames.shape}")
        t, j, _ = frames.shape
        if t < 1 or j < 1:
            raise ValidationError("need T >= 1 and J >= 1")
        if len(self.joint_names) != j:
            raise ValidationError(
                f"joint_names has {len(self.joint_names)} entries for J={j}"
            )
        if not np.all(np.isfinite(frames)):
            raise ValidationError("coordinates must be finite")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("frame dimensions must be positive")
        object.__setattr__(self, "frames", _freeze(frames))
        object.__setattr__(self, "joint_names", tuple(self.joint_names))

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def J(self) -> int:
        return self.frames.shape[1]

    @property
    def diagonal(self) -> float:
        """Frame diagonal in pixels, the default normalization length."""
        return float(np.hypot(self.width, self.height))

    def to_json(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "id": self.id,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "joint_names": list(self.joint_names),
            "frames": self.frames.tolist(),
        }

    @classmethod
    def from_json(cls, obj: Any) -> "PoseSequence":
        _expect_mapping(obj, "pose sequence")
        _expect_version(obj)
        _expect_keys(obj, ("id", "fps", "width", "height", "joint_names", "frames"))
        frames = obj["frames"]
        if not isinstance(frames, list) or not frames:
            raise MalformedFile("'frames' must be a non-empty list")
        lens = {len(f) for f in frames}
        if len(lens) != 1:
            raise ValidationError(f"inconsistent joint counts across frames: {sorted(lens)}")
        try:
            arr = np.asarray(frames, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise MalformedFile(f"'frames' is not a numeric array: {exc}") from exc
        return cls(
            id=str(obj["id"]),
            fps=float(obj["fps"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            joint_names=tuple(str(n) for n in obj["joint_names"]),
            frames=arr,
        )


# Coefficient block layout per keypoint, cubic in normalized time u:
# value(u) = a*u^3 + b*u^2 + c*u + d for each axis.
COEFF_NAMES = ("a_x", "b_x", "c_x", "d_x", "a_y", "b_y", "c_y", "d_y")


@dataclass(frozen=True)
class SplinePrimitive:
    """One motion segment: per-keypoint cubics in u = (t - start) / n_frames.

    coeffs has shape (J, 8) with columns ordered as COEFF_NAMES.
    The 5-frame fitting minimum is enforced by the fitting ops; sampled
    primitives may be as short as 2 frames.
    """

    coeffs: np.ndarray
    start_frame: int
    n_frames: int

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.ndim != 2 or coeffs.shape[1] != 8:
            raise ValidationError(f"coeffs must be (J, 8), got {coeffs.shape}")
        if coeffs.shape[0] < 1:
            raise ValidationError("need at least one keypoint block")
        if not np.all(np.isfinite(coeffs)):
            raise ValidationError("coefficients must be finite")
        if self.n_frames < 2:
            raise ValidationError("n_frames must be >= 2")
        if self.start_frame < 0:
            raise ValidationError("start_frame must be >= 0")
        object.__setattr__(self, "coeffs", _freeze(coeffs))

    @property
    def J(self) -> int:
        return self.coeffs.shape[0]

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.n_frames

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        """Evaluate all keypoints at parameter values u; returns (len(u), J, 2)."""
        u = np.asarray(u, dtype=np.float64)
        powers = np.stack([u**3, u**2, u, np.ones_like(u)], axis=1)  # (n, 4)
        cx = self.coeffs[:, 0:4]  # (J, 4)
        cy = self.coeffs[:, 4:8]
        x = powers @ cx.T  # (n, J)
        y = powers @ cy.T
        return np.stack([x, y], axis=2)

    def frame_grid(self) -> np.ndarray:
        return np.arange(self.n_frames, dtype=np.float64) / self.n_frames

    def to_json(self) -> dict:
        return {
            "start": self.start_frame,
            "n_frames": self.n_frames,
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_json(cls, obj: Any) -> "SplinePrimitive":
        _expect_mapping(obj, "primitive")
        _expect_keys(obj, ("start", "n_frames", "coeffs"))
        return cls(
            coeffs=np.asarray(obj["coeffs"], dtype=np.float64),
            start_frame=int(obj["start"]),
            n_frames=int(obj["n_frames"]),
        )


@dataclass(frozen=True)
class PrimitiveSequence:
    """Ordered primitives tiling a source sequence without gaps or overlaps."""

    source_id: str
    primitives: tuple[SplinePrimitive, ...]

    def __post_init__(self) -> None:
        prims = tuple(self.primitives)
        if not prims:
            raise ValidationError("need at least one primitive")
        j = prims[0].J
        for a, b in zip(prims, prims[1:]):
            if b.start_frame != a.end_frame:
                raise ValidationError(
                    f"primitives must tile contiguously: segment ending at "
                    f"{a.end_frame} followed by one starting at {b.start_frame}"
                )
        if any(p.J != j for p in prims):
            raise ValidationError("all primitives must share the same keypoint count")
        object.__setattr__(self, "primitives", prims)

    @property
    def K(self) -> int:
        return len(self.primitives)

    @property
    def J(self) -> int:
        return self.primitives[0].J

    @property
    def start_frame(self) -> int:
        return self.primitives[0].start_frame

    @property
    def end_frame(self) -> int:
        return self.primitives[-1].end_frame

    def boundaries(self) -> list[int]:
        """Internal boundary frames (start of second .. last primitive)."""
        return [p.start_frame for p in self.primitives[1:]]

    def to_json(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "source_id": self.source_id,
            "primitives": [p.to_json() for p in self.primitives],
        }

    @classmethod
    def from_json(cls, obj: Any) -> "PrimitiveSequence":
        _expect_mapping(obj, "primitive sequence")
        _expect_version(obj)
        _expect_keys(obj, ("source_id", "primitives"))
        return cls(
            source_id=str(obj["source_id"]),
            primitives=tuple(SplinePrimitive.from_json(p) for p in obj["primitives"]),
        )


@dataclass(frozen=True)
class ConceptVocabulary:
    """Ordered concept names plus the reserved blank index (always last)."""

    labels: tuple[str, ...]
    blank_index: int = -1

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        if not labels or any(not l for l in labels):
            raise ValidationError("labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise ValidationError("labels must be unique")
        blank = self.blank_index if self.blank_index >= 0 else len(labels)
        if 0 <= blank < len(labels):
            raise ValidationError("blank_index must not collide with a label index")
        if blank != len(labels):
            raise ValidationError("blank_index must equal len(labels)")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "blank_index", blank)

    @property
    def num_classes(self) -> int:
        return len(self.labels) + 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown concept {label!r}") from None

    def label_of(self, index: int) -> str:
        if index == self.blank_index:
            raise ValidationError("blank index has no label")
        return self.labels[index]


@dataclass(frozen=True)
class WeakAnnotation:
    """One eight-click supervision unit: a labeled repetition range plus
    exactly three instance ranges inside it."""

    sequence_id: str
    concept: str
    repetition_range: tuple[int, int]
    instance_ranges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        rep = (int(self.repetition_range[0]), int(self.repetition_range[1]))
        insts = tuple((int(s), int(e)) for s, e in self.instance_ranges)
        if rep[0] >= rep[1]:
            raise ValidationError(f"repetition range out of order: {rep}")
        if len(insts) != 3:
            raise ValidationError(f"need exactly 3 instance ranges, got {len(insts)}")
        for s, e in insts:
            if s >= e:
                raise ValidationError(f"instance range out of order: ({s}, {e})")
            if s < rep[0] or e > rep[1]:
                raise ValidationError(
                    f"instance range ({s}, {e}) outside repetition {rep}"
                )
        ordered = sorted(insts)
        for (s1, e1), (s2, e2) in zip(ordered, ordered[1:]):
            if s2 < e1:
                raise ValidationError("instance ranges must not overlap")
        object.__setattr__(self, "repetition_range", rep)
        object.__setattr__(self, "instance_ranges", insts)

    def to_json(self) -> dict:
        return {
            "concept": self.concept,
            "repetition": list(self.repetition_range),
            "instances": [list(r) for r in self.instance_ranges],
        }

    @classmethod
    def from_json(cls, obj: Any, sequence_id: str) -> "WeakAnnotation":
        _expect_mapping(obj, "annotation")
        _expect_keys(obj, ("concept", "repetition", "instances"))
        rep = obj["repetition"]
        insts = obj["instances"]
        if not isinstance(rep, list) or len(rep) != 2:
            raise MalformedFile("'repetition' must be [start, end]")
        if not isinstance(insts, list):
            raise MalformedFile("'instances' must be a list of ranges")
        for r in insts:
            if not isinstance(r, list) or len(r) != 2:
                raise MalformedFile("each instance must be [start, end]")
        return cls(
            sequence_id=sequence_id,
            concept=str(obj["concept"]),
            repetition_range=(rep[0], rep[1]),
            instance_ranges=tuple((r[0], r[1]) for r in insts),
        )


@dataclass(frozen=True)
class Description:
    """Recognized concept labels with per-occurrence frame intervals and scores."""

    labels: tuple[str, ...]
    intervals: tuple[tuple[int, int], ...]
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        intervals = tuple((int(s), int(e)) for s, e in self.intervals)
        scores = tuple(float(s) for s in self.scores)
        if not (len(labels) == len(intervals) == len(scores)):
            raise ValidationError("labels/intervals/scores must have equal length")
        for s, e in intervals:
            if e < s:
                raise ValidationError(f"interval out of order: ({s}, {e})")
        for (_, e1), (s2, _) in zip(intervals, intervals[1:]):
            if s2 < e1:
                raise ValidationError("intervals must be sorted and non-overlapping")
        for sc in scores:
            if not (0.0 <= sc <= 1.0):
                raise ValidationError(f"score {sc} outside [0, 1]")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.labels)

    def to_json(self) -> dict:
        return {
            "labels": list(self.labels),
            "intervals": [list(i) for i in self.intervals],
            "scores": list(self.scores),
        }

    @classmethod
    def from_json(cls, obj: Any) -> "Description":
        _expect_mapping(obj, "description")
        _expect_keys(obj, ("labels", "intervals", "scores"))
        return cls(
            labels=tuple(obj["labels"]),
            intervals=tuple((i[0], i[1]) for i in obj["intervals"]),
            scores=tuple(obj["scores"]),
        )


# ---------------------------------------------------------------------------
# File I/O


def _expect_mapping(obj: Any, what: str) -> None:
    if not isinstance(obj, Mapping):
        raise MalformedFile(f"expected a JSON object for {what}")


def _expect_keys(obj: Mapping, keys: Iterable[str]) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise MalformedFile(f"missing keys: {missing}")


def _expect_version(obj: Mapping) -> None:
    if "version" not in obj:
        raise MalformedFile("missing 'version' field")
    if obj["version"] != FORMAT_VERSION:
        raise VersionMismatch(
            f"format version {obj['version']} != supported {FORMAT_VERSION}"
        )


def load_pose_sequence(path: str | Path) -> PoseSequence:
    return PoseSequence.from_json(read_json(path))


def save_pose_sequence(seq: PoseSequence, path: str | Path) -> None:
    atomic_write_json(seq.to_json(), path)


def load_annotations(
    path: str | Path, vocabulary: ConceptVocabulary | None = None
) -> list[WeakAnnotation]:
    obj = read_json(path)
    _expect_mapping(obj, "annotation file")
    _expect_version(obj)
    _expect_keys(obj, ("sequence_id", "annotations"))
    seq_id = str(obj["sequence_id"])
    anns = [WeakAnnotation.from_json(a, seq_id) for a in obj["annotations"]]
    if vocabulary is not None:
        for a in anns:
            if a.concept not in vocabulary.labels:
                raise ValidationError(f"unknown concept {a.concept!r} in {path}")
    return anns


def save_annotations(
    sequence_id: str, annotations: Sequence[WeakAnnotation], path: str | Path
) -> None:
    for a in annotations:
        if a.sequence_id != sequence_id:
            raise ValidationError(
                f"annotation for {a.sequence_id!r} saved under {sequence_id!r}"
            )
    atomic_write_json(
        {
            "version": FORMAT_VERSION,
            "sequence_id": sequence_id,
            "annotations": [a.to_json() for a in annotations],
        },
        path,
    )


def load_primitive_sequence(path: str | Path) -> PrimitiveSequence:
    return PrimitiveSequence.from_json(read_json(path))


def save_primitive_sequence(prims: PrimitiveSequence, path: str | Path) -> None:
    atomic_write_json(prims.to_json(), path)


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass(frozen=True)
class CheckpointState:
    """Versioned model state: vocabulary, free-form config, named tensors."""

    vocabulary: ConceptVocabulary
    config: dict
    parameters: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        params = {
            str(k): _freeze(np.asarray(v, dtype=np.float64))
            for k, v in self.parameters.items()
        }
        object.__setattr__(self, "parameters", params)


def save_checkpoint(state: CheckpointState, path: str | Path) -> None:
    obj = {
        "version": FORMAT_VERSION,
        "vocabulary": list(state.vocabulary.labels),
        "config": state.config,
        "parameters": {
            name: {"shape": list(t.shape), "data": t.ravel().tolist()}
            for name, t in state.parameters.items()
        },
    }
    atomic_write_json(obj, path)


def load_checkpoint(
    path: str | Path, expect_vocabulary: ConceptVocabulary | None = None
) -> CheckpointState:
    obj = read_json(path)
    _expect_mapping(obj, "checkpoint")
    _expect_version(obj)
    _expect_keys(obj, ("vocabulary", "config", "parameters"))
    vocab = ConceptVocabulary(tuple(str(l) for l in obj["vocabulary"]))
    if expect_vocabulary is not None and vocab.labels != expect_vocabulary.labels:
        raise VersionMismatch(
            f"checkpoint vocabulary {vocab.labels} != expected {expect_vocabulary.labels}"
        )
    params: dict[str, np.ndarray] = {}
    raw = obj["parameters"]
    _expect_mapping(raw, "parameters")
    for name, entry in raw.items():
        _expect_mapping(entry, f"parameter {name}")
        _expect_keys(entry, ("shape", "data"))
        shape = tuple(int(s) for s in entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise MalformedFile(f"parameter {name}: payload does not match shape")
        try:
            params[name] = data.reshape(shape)
        except ValueError as exc:
            raise MalformedFile(f"parameter {name}: {exc}") from exc
    if not isinstance(obj["config"], Mapping):
        raise MalformedFile("'config' must be an object")
    return CheckpointState(vocabulary=vocab, config=dict(obj["config"]), parameters=params)
