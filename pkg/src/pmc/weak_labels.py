"""Pseudo-targets synthesized from weak repetition annotations.

From a labeled repetition range and three instance ranges we estimate the
occurrence count n, force the concept label on in-range primitive steps, and
place blanks on the transition steps nearest the estimated instance
boundaries. Steps outside any annotated range stay unsupervised (-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateAnnotation, ValidationError
from .types import ConceptVocabulary, PrimitiveSequence, WeakAnnotation

UNSUPERVISED = -1


@dataclass(frozen=True)
class PseudoTargets:
    """Training targets for one sequence: the CTC label sequence plus
    per-step forced labels (-1 where unsupervised)."""

    label_sequence: tuple[int, ...]
    primitive_targets: np.ndarray  # (K,)
    transition_targets: np.ndarray  # (K-1,)

    def __post_init__(self) -> None:
        if len(self.label_sequence) < 1:
            raise ValidationError("label sequence must be non-empty")
        pt = np.array(self.primitive_targets, dtype=np.int64)
        tt = np.array(self.transition_targets, dtype=np.int64)
        if pt.shape[0] != tt.shape[0] + 1:
            raise ValidationError("need K primitive targets and K-1 transition targets")
        pt.setflags(write=False)
        tt.setflags(write=False)
        object.__setattr__(self, "label_sequence", tuple(int(l) for l in self.label_sequence))
        object.__setattr__(self, "primitive_targets", pt)
        object.__setattr__(self, "transition_targets", tt)

    @property
    def K(self) -> int:
        return self.primitive_targets.shape[0]


def estimate_repetition_count(repetition_length: float, average_length: float) -> int:
    """Occurrence count estimate: round half up, clamped to at least 1."""
    if average_length < 1.0:
        raise DegenerateAnnotation(
            f"average instance length {average_length} < 1 frame"
        )
    return max(1, int(np.floor(repetition_length / average_length + 0.5)))


def make_pseudo_targets(
    ann: WeakAnnotation,
    prims: PrimitiveSequence,
    vocabulary: ConceptVocabulary,
) -> PseudoTargets:
    rep_s, rep_e = ann.repetition_range
    if rep_s < prims.start_frame or rep_e > prims.end_frame:
        raise ValidationError(
            f"repetition range [{rep_s}, {rep_e}) outside primitive span "
            f"[{prims.start_frame}, {prims.end_frame})"
        )
    label = vocabulary.index(ann.concept)
    blank = vocabulary.blank_index

    lens = [e - s for s, e in ann.instance_ranges]
    avg = float(np.mean(lens))
    n = estimate_repetition_count(rep_e - rep_s, avg)

    k = prims.K
    midpoints = np.array(
        [p.start_frame + p.n_frames / 2.0 for p in prims.primitives]
    )
    prim_targets = np.where(
        (midpoints >= rep_s) & (midpoints < rep_e), label, UNSUPERVISED
    ).astype(np.int64)

    trans_targets = np.full(max(k - 1, 0), UNSUPERVISED, dtype=np.int64)
    if k > 1:
        boundaries = np.array(prims.boundaries(), dtype=np.float64)
        snapped: set[int] = set()
        for m in range(1, n):
            cut = rep_s + m * avg
            dist = np.abs(boundaries - cut)
            snapped.add(int(dist.argmin()))  # ties resolve to the earlier boundary
        for i in range(k - 1):
            if i in snapped:
                trans_targets[i] = blank
            elif prim_targets[i] == label and prim_targets[i + 1] == label:
                trans_targets[i] = label

    return PseudoTargets(
        label_sequence=tuple([label] * n),
        primitive_targets=prim_targets,
        transition_targets=trans_targets,
    )


def merge_pseudo_targets(parts: Sequence[PseudoTargets]) -> PseudoTargets:
    """Combine per-annotation targets of one sequence (already in temporal
    order). Conflicting step assignments are rejected."""
    if not parts:
        raise ValidationError("nothing to merge")
    k = parts[0].K
    labels: list[int] = []
    pt = np.full(k, UNSUPERVISED, dtype=np.int64)
    tt = np.full(max(k - 1, 0), UNSUPERVISED, dtype=np.int64)
    for part in parts:
        if part.K != k:
            raise ValidationError("pseudo targets disagree on primitive count")
        labels.extend(part.label_sequence)
        for merged, new in ((pt, part.primitive_targets), (tt, part.transition_targets)):
            conflict = (merged != UNSUPERVISED) & (new != UNSUPERVISED) & (merged != new)
            if conflict.any():
                raise ValidationError(
                    "annotations assign conflicting step targets; repetition "
                    "ranges of one sequence must not overlap"
                )
            np.copyto(merged, new, where=new != UNSUPERVISED)
    return PseudoTargets(tuple(labels), pt, tt)


def pseudo_targets_for_sequence(
    annotations: Sequence[WeakAnnotation],
    prims: PrimitiveSequence,
    vocabulary: ConceptVocabulary,
) -> PseudoTargets:
    """Merged pseudo-targets for all of one sequence's annotations, ordered
    by repetition start."""
    ordered = sorted(annotations, key=lambda a: a.repetition_range)
    return merge_pseudo_targets(
        [make_pseudo_targets(a, prims, vocabulary) for a in ordered]
    )
