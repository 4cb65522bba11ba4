"""Label-sequence probability machinery over the interleaved step posterior.

The collapse rule merges maximal runs of equal labels and then deletes
blanks, so the standard blank-augmented forward/Viterbi recursions apply
over the 2K-1 interleaved primitive/transition steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Var
from .errors import TargetTooLong, ValidationError

NEG_INF = -np.inf


@dataclass(frozen=True)
class PosteriorSequence:
    """(2K-1, num_classes) step posteriors; even rows (0-indexed) are
    primitive predictions, odd rows transition predictions."""

    steps: np.ndarray

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps, dtype=np.float64)
        if steps.ndim != 2:
            raise ValidationError(f"steps must be 2D, got shape {steps.shape}")
        s, _ = steps.shape
        if s < 1 or s % 2 == 0:
            raise ValidationError("step count must be odd (2K-1)")
        if np.any(steps < 0) or np.any(steps > 1):
            raise ValidationError("probabilities must lie in [0, 1]")
        if np.any(np.abs(steps.sum(axis=1) - 1.0) > 1e-6):
            raise ValidationError("each step must sum to 1 within 1e-6")
        steps = steps.copy()
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)

    @property
    def num_steps(self) -> int:
        return self.steps.shape[0]

    @property
    def num_classes(self) -> int:
        return self.steps.shape[1]

    @property
    def K(self) -> int:
        return (self.steps.shape[0] + 1) // 2

    def log_steps(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.steps)


def compress(labels: Sequence[int], blank: int) -> tuple[int, ...]:
    """Merge maximal runs of equal labels, then delete blanks."""
    out: list[int] = []
    prev: int | None = None
    for lab in labels:
        if lab != prev:
            out.append(lab)
        prev = lab
    return tuple(l for l in out if l != blank)


def _extended_target(target: Sequence[int], blank: int) -> np.ndarray:
    tgt = list(target)
    if any(l == blank for l in tgt):
        raise ValidationError("target must not contain the blank label")
    ext = np.full(2 * len(tgt) + 1, blank, dtype=np.int64)
    ext[1::2] = tgt
    return ext


def _skip_allowed(ext: np.ndarray) -> np.ndarray:
    """skip[s]: transition s-2 -> s may bypass the separating blank."""
    n = ext.shape[0]
    skip = np.zeros(n, dtype=bool)
    if n >= 3:
        skip[2:] = (ext[2:] != ext[:-2]) & (ext[2:] != ext[0])  # ext[0] is blank
    return skip


def _logaddexp3(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.logaddexp(np.logaddexp(a, b), c)


def _shift(a: np.ndarray, by: int) -> np.ndarray:
    out = np.full_like(a, NEG_INF)
    out[by:] = a[:-by]
    return out


def _forward_table(logp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    """alpha[t, s]: log prob of prefixes through state s at step t, inclusive."""
    steps = logp.shape[0]
    n_ext = ext.shape[0]
    alpha = np.full((steps, n_ext), NEG_INF)
    alpha[0, 0] = logp[0, ext[0]]
    if n_ext > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, steps):
        prev = alpha[t - 1]
        from_skip = np.where(skip, _shift(prev, 2), NEG_INF)
        alpha[t] = _logaddexp3(prev, _shift(prev, 1), from_skip) + logp[t, ext]
    return alpha


def _backward_table(logp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    """beta[t, s]: log prob of completing from state s after step t, exclusive
    of step t's own emission."""
    steps = logp.shape[0]
    n_ext = ext.shape[0]
    beta = np.full((steps, n_ext), NEG_INF)
    beta[steps - 1, n_ext - 1] = 0.0
    if n_ext > 1:
        beta[steps - 1, n_ext - 2] = 0.0
    for t in range(steps - 2, -1, -1):
        nxt = beta[t + 1] + logp[t + 1, ext]
        stay = nxt
        adv = np.full(n_ext, NEG_INF)
        adv[:-1] = nxt[1:]
        skp = np.full(n_ext, NEG_INF)
        if n_ext >= 3:
            skp[:-2] = np.where(skip[2:], nxt[2:], NEG_INF)
        beta[t] = _logaddexp3(stay, adv, skp)
    return beta


def ctc_log_prob(
    post: PosteriorSequence | np.ndarray, target: Sequence[int], blank: int
) -> float:
    """Exact log p(target | steps), summed over all alignments.

    Returns -inf when the target cannot fit in the available steps.
    """
    logp = post.log_steps() if isinstance(post, PosteriorSequence) else np.asarray(post)
    target = tuple(int(t) for t in target)
    ext = _extended_target(target, blank)
    skip = _skip_allowed(ext)
    alpha = _forward_table(logp, ext, skip)
    last = alpha[-1, -1]
    if ext.shape[0] > 1:
        last = np.logaddexp(last, alpha[-1, -2])
    return float(last)


def ctc_loss_op(logp: Var, target: Sequence[int], blank: int) -> Var:
    """-log p(target | steps) as an autodiff node with the analytic gradient
    from the forward-backward tables.

    Raises TargetTooLong when the target has zero probability structurally.
    """
    target = tuple(int(t) for t in target)
    ext = _extended_target(target, blank)
    skip = _skip_allowed(ext)
    lp = logp.value
    alpha = _forward_table(lp, ext, skip)
    beta = _backward_table(lp, ext, skip)
    total = alpha[-1, -1]
    if ext.shape[0] > 1:
        total = np.logaddexp(total, alpha[-1, -2])
    if not np.isfinite(total):
        raise TargetTooLong(
            f"target of {len(target)} labels cannot align in {lp.shape[0]} steps"
        )
    gamma = np.exp(alpha + beta - total)  # (steps, n_ext)

    def bw(g):
        grad = np.zeros_like(lp)
        rows = np.repeat(np.arange(lp.shape[0]), ext.shape[0])
        cols = np.tile(ext, lp.shape[0])
        np.add.at(grad, (rows, cols), -gamma.ravel())
        return g * grad

    return Var(-total, ((logp, bw),))


def decode(
    post: PosteriorSequence | np.ndarray, beam_width: int = 32, blank: int | None = None
) -> tuple[tuple[int, ...], float]:
    """argmax_L p(L | steps) by prefix beam search.

    With beam_width 1 this degenerates to best-path decoding; with a beam
    covering all prefixes the search is exact. Returns the label sequence
    and its total probability.
    """
    if isinstance(post, PosteriorSequence):
        logp = post.log_steps()
        if blank is None:
            blank = post.num_classes - 1
    else:
        logp = np.asarray(post)
        if blank is None:
            blank = logp.shape[1] - 1
    if beam_width < 1:
        raise ValidationError("beam_width must be >= 1")
    steps, n_classes = logp.shape

    if beam_width == 1:
        path = logp.argmax(axis=1)
        labels = compress(path, blank)
        score = float(np.exp(logp[np.arange(steps), path].sum()))
        return labels, score

    # prefix -> [log p ending in blank, log p ending in non-blank]
    beams: dict[tuple[int, ...], list[float]] = {(): [0.0, NEG_INF]}
    for t in range(steps):
        new: dict[tuple[int, ...], list[float]] = {}

        def bucket(prefix):
            entry = new.get(prefix)
            if entry is None:
                entry = [NEG_INF, NEG_INF]
                new[prefix] = entry
            return entry

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            for c in range(n_classes):
                p = logp[t, c]
                if p == NEG_INF:
                    continue
                if c == blank:
                    e = bucket(prefix)
                    e[0] = np.logaddexp(e[0], total + p)
                elif prefix and c == prefix[-1]:
                    e = bucket(prefix)
                    e[1] = np.logaddexp(e[1], pnb + p)
                    e2 = bucket(prefix + (c,))
                    e2[1] = np.logaddexp(e2[1], pb + p)
                else:
                    e = bucket(prefix + (c,))
                    e[1] = np.logaddexp(e[1], total + p)
        ranked = sorted(
            new.items(), key=lambda kv: (-np.logaddexp(kv[1][0], kv[1][1]), kv[0])
        )
        beams = dict(ranked[:beam_width])

    best, (pb, pnb) = min(
        beams.items(), key=lambda kv: (-np.logaddexp(kv[1][0], kv[1][1]), kv[0])
    )
    return best, float(np.exp(np.logaddexp(pb, pnb)))


def viterbi_align(
    post: PosteriorSequence | np.ndarray, target: Sequence[int], blank: int | None = None
) -> np.ndarray:
    """Most probable per-step label sequence whose compression is ``target``.

    Returns an array of length 2K-1 over target labels and blank.
    """
    if isinstance(post, PosteriorSequence):
        logp = post.log_steps()
        if blank is None:
            blank = post.num_classes - 1
    else:
        logp = np.asarray(post)
        if blank is None:
            blank = logp.shape[1] - 1
    target = tuple(int(t) for t in target)
    ext = _extended_target(target, blank)
    skip = _skip_allowed(ext)
    steps = logp.shape[0]
    n_ext = ext.shape[0]

    delta = np.full((steps, n_ext), NEG_INF)
    back = np.zeros((steps, n_ext), dtype=np.int64)
    delta[0, 0] = logp[0, ext[0]]
    if n_ext > 1:
        delta[0, 1] = logp[0, ext[1]]
    for t in range(1, steps):
        prev = delta[t - 1]
        cand = np.stack(
            [
                prev,
                _shift(prev, 1),
                np.where(skip, _shift(prev, 2), NEG_INF),
            ]
        )  # (3, n_ext)
        choice = cand.argmax(axis=0)
        delta[t] = cand[choice, np.arange(n_ext)] + logp[t, ext]
        back[t] = np.arange(n_ext) - choice

    ends = [n_ext - 1] + ([n_ext - 2] if n_ext > 1 else [])
    end = max(ends, key=lambda s: (delta[-1, s], -s))
    if not np.isfinite(delta[-1, end]):
        raise TargetTooLong(
            f"target of {len(target)} labels cannot align in {steps} steps"
        )
    states = np.empty(steps, dtype=np.int64)
    states[-1] = end
    for t in range(steps - 1, 0, -1):
        states[t - 1] = back[t, states[t]]
    return ext[states]


def occurrence_runs(
    step_labels: np.ndarray, blank: int
) -> list[tuple[int, list[int]]]:
    """Group aligned steps into label occurrences.

    Consecutive equal non-blank labels always belong to one occurrence (the
    alignment graph forces a blank between repeats), so maximal equal runs
    are exactly the occurrences, in temporal order.
    """
    runs: list[tuple[int, list[int]]] = []
    for i, lab in enumerate(int(l) for l in step_labels):
        if lab == blank:
            continue
        if runs and runs[-1][0] == lab and runs[-1][1][-1] == i - 1:
            runs[-1][1].append(i)
        else:
            runs.append((lab, [i]))
    return runs
