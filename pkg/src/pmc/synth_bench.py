"""Deterministic synthetic motion-concept benchmark.

Six waveform-based exercise classes over a 7-joint stick figure, generated
with per-occurrence duration/amplitude/phase jitter and per-frame pixel
noise, plus exact ground truth (frame labels, occurrence intervals, derived
weak annotations). Stands in for real workout footage in all desk-scale
tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import MalformedFile, UnknownConcept, ValidationError
from .generator import MotionScript
from .types import (
    FORMAT_VERSION,
    ConceptVocabulary,
    PoseSequence,
    WeakAnnotation,
    atomic_write_json,
    load_annotations,
    load_pose_sequence,
    read_json,
    save_annotations,
    save_pose_sequence,
)

WAVEFORM_FAMILIES = ("sinusoid", "triangle", "bounce")

JOINT_NAMES = (
    "root",
    "neck",
    "head",
    "left_hand",
    "right_hand",
    "left_foot",
    "right_foot",
)
BASE_POSE = np.array(
    [
        [320.0, 300.0],
        [320.0, 240.0],
        [320.0, 200.0],
        [250.0, 240.0],
        [390.0, 240.0],
        [290.0, 420.0],
        [350.0, 420.0],
    ]
)
BONES = ((0, 1), (1, 2), (1, 3), (1, 4), (0, 5), (0, 6))


@dataclass(frozen=True)
class JointWave:
    """Waveform of one joint: displacement along ``direction`` (radians)."""

    amplitude: float
    frequency: float = 1.0  # whole cycles per occurrence keep junctions closed
    phase: float = 0.0
    family: str = "sinusoid"
    direction: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValidationError("amplitude must be >= 0")
        if self.family not in WAVEFORM_FAMILIES:
            raise ValidationError(f"family must be one of {WAVEFORM_FAMILIES}")
        if self.frequency <= 0:
            raise ValidationError("frequency must be positive")


@dataclass(frozen=True)
class ConceptSpec:
    name: str
    joints: tuple[JointWave, ...]
    base_duration: int
    duration_jitter: float = 0.0
    amplitude_jitter: float = 0.0
    phase_jitter: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self) -> None:
        if not self.joints:
            raise ValidationError("need per-joint waveform parameters")
        if self.base_duration < 10:  # twice the minimum segment length
            raise ValidationError("base_duration must be >= 10 frames")
        for j in ("duration_jitter", "amplitude_jitter", "phase_jitter"):
            v = getattr(self, j)
            if not 0.0 <= v < 1.0:
                raise ValidationError(f"{j} must lie in [0, 1)")
        if self.noise_std < 0:
            raise ValidationError("noise_std must be >= 0")
        object.__setattr__(self, "joints", tuple(self.joints))

    @property
    def J(self) -> int:
        return len(self.joints)


def _waveform(theta: np.ndarray, family: str) -> np.ndarray:
    if family == "sinusoid":
        return np.sin(theta)
    if family == "triangle":
        return 2.0 / np.pi * np.arcsin(np.sin(theta))
    # bounce: arches with a sharp reversal corner at every zero
    return np.abs(np.sin(theta))


def _occurrence_offsets(
    spec: ConceptSpec, duration: int, amp_mult: float, extra_phase: float
) -> np.ndarray:
    """Displacement from the base pose, shape (duration, J, 2)."""
    i = np.arange(duration, dtype=np.float64)
    out = np.zeros((duration, spec.J, 2))
    for j, wave in enumerate(spec.joints):
        theta = 2.0 * np.pi * wave.frequency * (i / duration) + wave.phase + extra_phase
        disp = wave.amplitude * amp_mult * _waveform(theta, wave.family)
        out[:, j, 0] = disp * np.cos(wave.direction)
        out[:, j, 1] = disp * np.sin(wave.direction)
    return out


@dataclass(frozen=True)
class GroundTruth:
    """Exact generation schedule: per-frame labels (None during rest),
    per-occurrence intervals, and the derived weak annotations (first,
    middle, and last instance of each repetition group)."""

    frame_labels: tuple[str | None, ...]
    occurrences: tuple[tuple[str, tuple[int, int]], ...]
    annotations: tuple[WeakAnnotation, ...]

    def label_sequence(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.occurrences)


def generate_sequence(
    script: MotionScript,
    specs: Mapping[str, ConceptSpec],
    seed: int,
    *,
    fps: float = 30.0,
    width: int = 640,
    height: int = 480,
    rest_frames: int = 14,
    sequence_id: str | None = None,
) -> tuple[PoseSequence, GroundTruth]:
    """Concatenate jittered waveform instances with C0-continuous junctions
    and rest gaps between concept groups. Deterministic given the seed."""
    for concept, _ in script.entries:
        if concept not in specs:
            raise UnknownConcept(f"no spec for concept {concept!r}")
    j_count = {specs[c].J for c, _ in script.entries}
    if len(j_count) != 1 or j_count.pop() != BASE_POSE.shape[0]:
        raise ValidationError("all specs must use the shared skeleton joint count")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    frames: list[np.ndarray] = []
    labels: list[str | None] = []
    occurrences: list[tuple[str, tuple[int, int]]] = []
    annotations: list[WeakAnnotation] = []
    cursor = BASE_POSE.copy()
    seq_id = sequence_id if sequence_id is not None else f"synth-{seed}"

    def emit_rest(edge: bool = False) -> None:
        # vary gap lengths so rest primitives cover a range of durations;
        # sequence edges may have no rest at all (motion can start or end
        # on the first/last frame, as synthesized clips do)
        if edge:
            # half the edges are hard (motion starts/ends within a few
            # frames), half carry a normal rest
            if rng.random() < 0.5:
                n = int(rng.integers(0, 4))
            else:
                n = rest_frames + int(rng.integers(0, rest_frames + 1))
        else:
            n = rest_frames + int(rng.integers(0, rest_frames // 2 + 1))
        for _ in range(n):
            frames.append(cursor.copy())
            labels.append(None)

    emit_rest(edge=True)
    for entry_idx, (concept, count) in enumerate(script.entries):
        spec = specs[concept]
        group_start = len(frames)
        group_occs: list[tuple[int, int]] = []
        for _ in range(count):
            duration = max(
                10,
                int(round(spec.base_duration * (1.0 + rng.uniform(-spec.duration_jitter, spec.duration_jitter)))),
            ) if spec.duration_jitter > 0 else spec.base_duration
            amp_mult = (
                1.0 + rng.uniform(-spec.amplitude_jitter, spec.amplitude_jitter)
                if spec.amplitude_jitter > 0
                else 1.0
            )
            extra_phase = (
                rng.uniform(-spec.phase_jitter, spec.phase_jitter) * 2.0 * np.pi
                if spec.phase_jitter > 0
                else 0.0
            )
            offsets = _occurrence_offsets(spec, duration, amp_mult, extra_phase)
            shift = cursor - (BASE_POSE + offsets[0])
            start = len(frames)
            for f in range(duration):
                frames.append(BASE_POSE + offsets[f] + shift)
                labels.append(concept)
            # whole-cycle waveforms close exactly, so the cursor is the
            # occurrence's own start pose
            cursor = BASE_POSE + offsets[0] + shift
            occurrences.append((concept, (start, start + duration)))
            group_occs.append((start, start + duration))
        if count >= 3:
            annotations.append(
                WeakAnnotation(
                    sequence_id=seq_id,
                    concept=concept,
                    repetition_range=(group_start, len(frames)),
                    instance_ranges=(
                        group_occs[0],
                        group_occs[len(group_occs) // 2],
                        group_occs[-1],
                    ),
                )
            )
        emit_rest(edge=entry_idx == len(script.entries) - 1)

    arr = np.stack(frames)
    noise_levels = [specs[c].noise_std for c, _ in script.entries]
    noise_std = float(np.mean(noise_levels))
    if noise_std > 0:
        arr = arr + rng.normal(0.0, noise_std, size=arr.shape)
    seq = PoseSequence(
        id=seq_id,
        fps=fps,
        width=width,
        height=height,
        joint_names=JOINT_NAMES,
        frames=arr,
    )
    gt = GroundTruth(
        frame_labels=tuple(labels),
        occurrences=tuple(occurrences),
        annotations=tuple(annotations),
    )
    return seq, gt


# ---------------------------------------------------------------------------
# Default concept inventory


def default_concept_specs(
    noise_std: float = 1.0,
    duration_jitter: float = 0.05,
    amplitude_jitter: float = 0.1,
    phase_jitter: float = 0.03,
) -> dict[str, ConceptSpec]:
    """Six exercise-like classes over the shared skeleton."""
    half_pi = np.pi / 2.0

    def spec(name: str, base: int, waves: Sequence[JointWave]) -> ConceptSpec:
        return ConceptSpec(
            name=name,
            joints=tuple(waves),
            base_duration=base,
            duration_jitter=duration_jitter,
            amplitude_jitter=amplitude_jitter,
            phase_jitter=phase_jitter,
            noise_std=noise_std,
        )

    still = JointWave(amplitude=0.0)
    # bounce joints use frequency 0.5 (one excursion per rep, dwell only at
    # the rep boundaries, like a real exercise reversal)
    specs = {
        "jumping_jack": spec(
            "jumping_jack",
            34,
            [
                JointWave(9.0, 0.5, direction=half_pi, family="bounce"),  # root
                JointWave(9.0, 0.5, direction=half_pi, family="bounce"),  # neck
                JointWave(9.0, 0.5, direction=half_pi, family="bounce"),  # head
                JointWave(85.0, 0.5, direction=np.pi * 0.75, family="bounce"),
                JointWave(85.0, 0.5, direction=np.pi * 0.25, family="bounce"),
                JointWave(34.0, 0.5, direction=np.pi, family="bounce"),  # feet out
                JointWave(34.0, 0.5, direction=0.0, family="bounce"),
            ],
        ),
        "squat": spec(
            "squat",
            46,
            [
                JointWave(52.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(52.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(52.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(46.0, 0.5, direction=half_pi * 1.2, family="bounce"),
                JointWave(46.0, 0.5, direction=half_pi * 0.8, family="bounce"),
                still,
                still,
            ],
        ),
        "arm_swing": spec(
            "arm_swing",
            30,
            [
                still,
                JointWave(6.0, direction=0.0, phase=half_pi),
                JointWave(8.0, direction=0.0, phase=half_pi),
                JointWave(70.0, direction=0.0, phase=half_pi),
                JointWave(70.0, direction=0.0, phase=half_pi + np.pi),
                still,
                still,
            ],
        ),
        "high_knee": spec(
            "high_knee",
            30,
            [
                JointWave(8.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(8.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(8.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(20.0, 0.5, direction=half_pi, family="bounce"),
                still,
                JointWave(60.0, 0.5, direction=-half_pi, family="bounce"),
                still,
            ],
        ),
        "torso_twist": spec(
            "torso_twist",
            40,
            [
                JointWave(10.0, direction=0.0, family="triangle", phase=half_pi),
                JointWave(26.0, direction=0.0, family="triangle", phase=half_pi),
                JointWave(34.0, direction=0.0, family="triangle", phase=half_pi),
                JointWave(88.0, direction=0.0, family="triangle", phase=half_pi),
                JointWave(88.0, direction=0.0, family="triangle", phase=half_pi),
                still,
                still,
            ],
        ),
        "toe_touch": spec(
            "toe_touch",
            50,
            [
                JointWave(24.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(58.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(76.0, 0.5, direction=half_pi, family="bounce"),
                JointWave(120.0, 0.5, direction=half_pi * 1.1, family="bounce"),
                JointWave(120.0, 0.5, direction=half_pi * 0.9, family="bounce"),
                still,
                still,
            ],
        ),
    }
    return specs


# ---------------------------------------------------------------------------
# Dataset generation


@dataclass(frozen=True)
class DatasetConfig:
    sequences_per_concept: int = 10
    min_reps: int = 5
    max_reps: int = 20
    train_fraction: float = 0.8
    fps: float = 30.0
    width: int = 640
    height: int = 480
    rest_frames: int = 14
    noise_std: float = 1.0
    duration_jitter: float = 0.05
    amplitude_jitter: float = 0.1
    phase_jitter: float = 0.03

    def __post_init__(self) -> None:
        if self.sequences_per_concept < 2:
            raise ValidationError("need >= 2 sequences per concept for both splits")
        if not 3 <= self.min_reps <= self.max_reps:
            raise ValidationError("need 3 <= min_reps <= max_reps")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError("train_fraction must lie in (0, 1)")

    def specs(self) -> dict[str, ConceptSpec]:
        return default_concept_specs(
            noise_std=self.noise_std,
            duration_jitter=self.duration_jitter,
            amplitude_jitter=self.amplitude_jitter,
            phase_jitter=self.phase_jitter,
        )

    def to_json(self) -> dict:
        return {
            "sequences_per_concept": self.sequences_per_concept,
            "min_reps": self.min_reps,
            "max_reps": self.max_reps,
            "train_fraction": self.train_fraction,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "rest_frames": self.rest_frames,
            "noise_std": self.noise_std,
            "duration_jitter": self.duration_jitter,
            "amplitude_jitter": self.amplitude_jitter,
            "phase_jitter": self.phase_jitter,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "DatasetConfig":
        return cls(**{k: obj[k] for k in cls().to_json() if k in obj})


@dataclass(frozen=True)
class DatasetItem:
    sequence: PoseSequence
    ground_truth: GroundTruth
    script: MotionScript
    split: str  # "train" | "test"


@dataclass(frozen=True)
class SyntheticDataset:
    items: tuple[DatasetItem, ...]
    vocabulary: ConceptVocabulary
    config: DatasetConfig
    seed: int

    @property
    def train_items(self) -> list[DatasetItem]:
        return [i for i in self.items if i.split == "train"]

    @property
    def test_items(self) -> list[DatasetItem]:
        return [i for i in self.items if i.split == "test"]

    def annotations(self, split: str | None = None) -> list[WeakAnnotation]:
        return [
            a
            for i in self.items
            if split is None or i.split == split
            for a in i.ground_truth.annotations
        ]


def generate_dataset(
    config: DatasetConfig = DatasetConfig(), seed: int = 0
) -> SyntheticDataset:
    """Default scale: 6 concepts x 10 sequences, 5-20 reps each, disjoint
    80/20 train/test split per concept."""
    specs = config.specs()
    names = sorted(specs)
    vocabulary = ConceptVocabulary(labels=tuple(names))
    items: list[DatasetItem] = []
    n_train = int(round(config.train_fraction * config.sequences_per_concept))
    n_train = min(max(n_train, 1), config.sequences_per_concept - 1)
    for ci, concept in enumerate(names):
        for s in range(config.sequences_per_concept):
            child = np.random.SeedSequence(seed, spawn_key=(ci, s))
            reps_rng = np.random.default_rng(child)
            reps = int(reps_rng.integers(config.min_reps, config.max_reps + 1))
            script = MotionScript(entries=((concept, reps),), seed=seed)
            seq, gt = generate_sequence(
                script,
                specs,
                seed=int(child.generate_state(1)[0]),
                fps=config.fps,
                width=config.width,
                height=config.height,
                rest_frames=config.rest_frames,
                sequence_id=f"{concept}-{s:03d}",
            )
            split = "train" if s < n_train else "test"
            items.append(
                DatasetItem(sequence=seq, ground_truth=gt, script=script, split=split)
            )
    return SyntheticDataset(
        items=tuple(items), vocabulary=vocabulary, config=config, seed=seed
    )


# ---------------------------------------------------------------------------
# On-disk layout: poses/<id>.json, annotations/<id>.json, manifest.json


def save_dataset(dataset: SyntheticDataset, directory: str | Path) -> None:
    directory = Path(directory)
    (directory / "poses").mkdir(parents=True, exist_ok=True)
    (directory / "annotations").mkdir(parents=True, exist_ok=True)
    entries = []
    for item in dataset.items:
        seq_id = item.sequence.id
        save_pose_sequence(item.sequence, directory / "poses" / f"{seq_id}.json")
        save_annotations(
            seq_id,
            item.ground_truth.annotations,
            directory / "annotations" / f"{seq_id}.json",
        )
        entries.append(
            {
                "id": seq_id,
                "split": item.split,
                "pose_file": f"poses/{seq_id}.json",
                "annotation_file": f"annotations/{seq_id}.json",
                "script": item.script.to_json(),
                "occurrences": [[c, s, e] for c, (s, e) in item.ground_truth.occurrences],
            }
        )
    manifest = {
        "version": FORMAT_VERSION,
        "vocabulary": list(dataset.vocabulary.labels),
        "bones": [list(b) for b in BONES],
        "seed": dataset.seed,
        "config": dataset.config.to_json(),
        "items": entries,
    }
    atomic_write_json(manifest, directory / "manifest.json")


@dataclass(frozen=True)
class LoadedItem:
    sequence: PoseSequence
    annotations: tuple[WeakAnnotation, ...]
    split: str
    script: MotionScript
    occurrences: tuple[tuple[str, tuple[int, int]], ...]


@dataclass(frozen=True)
class LoadedDataset:
    items: tuple[LoadedItem, ...]
    vocabulary: ConceptVocabulary
    bones: tuple[tuple[int, int], ...]

    def split(self, name: str) -> list[LoadedItem]:
        return [i for i in self.items if i.split == name]

    def sequences(self, split: str | None = None) -> list[PoseSequence]:
        return [
            i.sequence for i in self.items if split is None or i.split == split
        ]

    def annotations(self, split: str | None = None) -> list[WeakAnnotation]:
        return [
            a
            for i in self.items
            if split is None or i.split == split
            for a in i.annotations
        ]


def load_dataset(directory: str | Path) -> LoadedDataset:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    if not isinstance(manifest, Mapping) or manifest.get("version") != FORMAT_VERSION:
        raise MalformedFile(f"{directory}: not a dataset manifest")
    vocabulary = ConceptVocabulary(tuple(manifest["vocabulary"]))
    items = []
    for entry in manifest["items"]:
        seq = load_pose_sequence(directory / entry["pose_file"])
        anns = load_annotations(directory / entry["annotation_file"], vocabulary)
        items.append(
            LoadedItem(
                sequence=seq,
                annotations=tuple(anns),
                split=str(entry["split"]),
                script=MotionScript.from_json(entry["script"]),
                occurrences=tuple(
                    (c, (s, e)) for c, s, e in entry["occurrences"]
                ),
            )
        )
    return LoadedDataset(
        items=tuple(items),
        vocabulary=vocabulary,
        bones=tuple((a, b) for a, b in manifest.get("bones", [])),
    )
