"""Spline primitive fitting, penalized DP segmentation, and reconstruction.

Each primitive is a per-keypoint cubic in normalized time u = (t - start) / n,
fit jointly across keypoints; segment boundaries are shared across keypoints.
The segmentation minimizes sum(segment fit costs) + lam * (#segments).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SegmentTooShort, SequenceTooShort, ShapeMismatch, ValidationError
from .types import PoseSequence, PrimitiveSequence, SplinePrimitive

# Calibrated on the default synthetic benchmark so the median segment length
# falls in the 10-20 frame band at 30 fps.
DEFAULT_LAMBDA = 100.0


@dataclass(frozen=True)
class SegmentationConfig:
    """Granularity knobs for the segmentation DP.

    lam is the per-segment penalty in squared-pixel units (same units as the
    fit cost); larger values yield fewer, longer primitives.
    """

    lam: float = DEFAULT_LAMBDA
    min_segment_frames: int = 5
    max_segment_frames: int | None = None

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValidationError("lam must be >= 0")
        # a cubic needs >= 4 points; 5 leaves one residual degree of freedom
        if self.min_segment_frames < 5:
            raise ValidationError("min_segment_frames must be >= 5")
        if (
            self.max_segment_frames is not None
            and self.max_segment_frames < self.min_segment_frames
        ):
            raise ValidationError("max_segment_frames must be >= min_segment_frames")

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "min_segment_frames": self.min_segment_frames,
            "max_segment_frames": self.max_segment_frames,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SegmentationConfig":
        return cls(
            lam=float(obj["lambda"]),
            min_segment_frames=int(obj["min_segment_frames"]),
            max_segment_frames=(
                None
                if obj.get("max_segment_frames") is None
                else int(obj["max_segment_frames"])
            ),
        )


@dataclass(frozen=True)
class FitResult:
    primitive: SplinePrimitive
    cost: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.cost) or self.cost < 0:
            raise ValidationError(f"cost must be finite and >= 0, got {self.cost}")


def fit_spline(
    poses: np.ndarray, start_frame: int = 0, min_segment_frames: int = 5
) -> FitResult:
    """Least-squares cubic fit of one frame window, all keypoints jointly.

    poses: (T_s, J, 2). Cost is the sum of squared residuals over every
    keypoint, frame, and axis.
    """
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[2] != 2:
        raise ShapeMismatch(f"poses must be (T, J, 2), got {poses.shape}")
    t = poses.shape[0]
    if t < min_segment_frames:
        raise SegmentTooShort(f"window of {t} frames < minimum {min_segment_frames}")
    u = np.arange(t, dtype=np.float64) / t
    vand = np.stack([u**3, u**2, u, np.ones_like(u)], axis=1)
    y = poses.reshape(t, -1)  # columns: j0x, j0y, j1x, j1y, ...
    coef, *_ = np.linalg.lstsq(vand, y, rcond=None)
    cost = float(((vand @ coef - y) ** 2).sum())
    cx = coef[:, 0::2].T  # (J, 4) = a_x, b_x, c_x, d_x
    cy = coef[:, 1::2].T
    prim = SplinePrimitive(
        coeffs=np.concatenate([cx, cy], axis=1), start_frame=start_frame, n_frames=t
    )
    return FitResult(primitive=prim, cost=max(cost, 0.0))


def window_cost_table(frames: np.ndarray, cfg: SegmentationConfig) -> np.ndarray:
    """Fit costs for every admissible window, via running moment sums.

    Returns cost[k, L] = least-squares cubic cost of frames[k : k+L]; inf for
    inadmissible lengths. Data are centered on the window's first sample
    before accumulating moments, which keeps the residual subtraction well
    conditioned; the residual itself is unchanged by that translation.
    """
    frames = np.asarray(frames, dtype=np.float64)
    t_total = frames.shape[0]
    flat = frames.reshape(t_total, -1)
    lmin = cfg.min_segment_frames
    lmax = min(cfg.max_segment_frames or t_total, t_total)
    cost = np.full((t_total, lmax + 1), np.inf)
    if t_total < lmin:
        return cost

    idx = np.arange(lmax, dtype=np.float64)
    ipow = np.stack([idx**m for m in range(7)], axis=0)  # (7, lmax)
    # spow[m][L] = sum_{i=0}^{L-1} i^m
    spow = np.concatenate([np.zeros((7, 1)), np.cumsum(ipow, axis=1)], axis=1)
    exps = np.arange(7, dtype=np.float64)

    for k in range(t_total - lmin + 1):
        lavail = min(lmax, t_total - k)
        x = flat[k : k + lavail] - flat[k]
        mom = np.cumsum(ipow[:4, :lavail, None] * x[None, :, :], axis=1)  # (4, L, 2J)
        sq = np.cumsum((x * x).sum(axis=1))  # (L,)
        lengths = np.arange(lmin, lavail + 1)
        lf = lengths.astype(np.float64)
        lpow = lf[:, None] ** exps[None, :]  # (nL, 7)
        p = np.arange(4)
        gram = spow[p[:, None] + p[None, :]][:, :, lengths].transpose(2, 0, 1)
        gram = gram / lpow[:, p[:, None] + p[None, :]]
        rhs = mom[:, lengths - 1, :].transpose(1, 0, 2) / lpow[:, :4, None]
        sol = np.linalg.solve(gram, rhs)  # (nL, 4, 2J)
        resid = sq[lengths - 1] - np.einsum("lpj,lpj->l", rhs, sol)
        cost[k, lengths] = np.maximum(resid, 0.0)
    return cost


def segmentation_cost(
    frames: np.ndarray,
    boundaries: Sequence[int],
    cfg: SegmentationConfig,
    table: np.ndarray | None = None,
) -> float:
    """Objective of an explicit segmentation, accumulated in DP order.

    boundaries are the internal split frames (excluding 0 and T), sorted.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if table is None:
        table = window_cost_table(frames, cfg)
    cuts = [0, *sorted(int(b) for b in boundaries), frames.shape[0]]
    obj = 0.0
    for a, b in zip(cuts, cuts[1:]):
        length = b - a
        if length < cfg.min_segment_frames or length > table.shape[1] - 1:
            raise SegmentTooShort(f"segment [{a}, {b}) inadmissible")
        obj = (obj + table[a, length]) + cfg.lam
    return obj


def segment_primitives(
    seq: PoseSequence,
    cfg: SegmentationConfig,
    return_objective: bool = False,
) -> PrimitiveSequence | tuple[PrimitiveSequence, float]:
    """Optimal penalized segmentation over shared keypoint boundaries.

    Ties are broken toward fewer segments, then the earlier final boundary,
    so output is deterministic.
    """
    t_total = seq.T
    if t_total < cfg.min_segment_frames:
        raise SequenceTooShort(
            f"sequence of {t_total} frames < minimum segment {cfg.min_segment_frames}"
        )
    table = window_cost_table(seq.frames, cfg)
    lmax = table.shape[1] - 1
    lmin = cfg.min_segment_frames

    dp = np.full(t_total + 1, np.inf)
    nseg = np.zeros(t_total + 1, dtype=np.int64)
    back = np.full(t_total + 1, -1, dtype=np.int64)
    dp[0] = 0.0
    for n in range(lmin, t_total + 1):
        k_lo = max(0, n - lmax)
        ks = np.arange(k_lo, n - lmin + 1)
        cand = (dp[ks] + table[ks, n - ks]) + cfg.lam
        finite = np.isfinite(cand)
        if not finite.any():
            continue
        ks, cand = ks[finite], cand[finite]
        order = np.lexsort((nseg[ks] + 1, cand))
        best = order[0]
        dp[n] = cand[best]
        nseg[n] = nseg[ks[best]] + 1
        back[n] = ks[best]
    if not np.isfinite(dp[t_total]):
        raise SequenceTooShort(
            "no feasible segmentation under the configured length bounds"
        )

    cuts = []
    n = t_total
    while n > 0:
        cuts.append(n)
        n = int(back[n])
    cuts.append(0)
    cuts.reverse()

    prims = [
        fit_spline(
            seq.frames[a:b], start_frame=a, min_segment_frames=cfg.min_segment_frames
        ).primitive
        for a, b in zip(cuts, cuts[1:])
    ]
    result = PrimitiveSequence(source_id=seq.id, primitives=tuple(prims))
    if return_objective:
        return result, float(dp[t_total])
    return result


def execute_primitives(
    prims: PrimitiveSequence,
    like: PoseSequence | None = None,
    *,
    fps: float = 30.0,
    width: int = 640,
    height: int = 480,
    joint_names: Sequence[str] | None = None,
    id: str | None = None,
) -> PoseSequence:
    """Evaluate every primitive on its frame grid and concatenate.

    Output length equals the sum of primitive durations. Sequence metadata
    (fps, frame size, joint names) is copied from ``like`` when given.
    """
    if like is not None:
        fps, width, height = like.fps, like.width, like.height
        joint_names = like.joint_names
    j = prims.J
    if joint_names is None:
        joint_names = tuple(f"j{i}" for i in range(j))
    if len(joint_names) != j:
        raise ShapeMismatch(f"{len(joint_names)} joint names for J={j}")
    frames = np.concatenate([p.evaluate(p.frame_grid()) for p in prims.primitives])
    return PoseSequence(
        id=id if id is not None else f"exec:{prims.source_id}",
        fps=fps,
        width=width,
        height=height,
        joint_names=tuple(joint_names),
        frames=frames,
    )


def keypoint_difference(
    recon: PoseSequence, gt: PoseSequence, norm: float | None = None
) -> float:
    """Mean per-joint per-frame L2 error as a percentage of ``norm``.

    norm defaults to the ground-truth frame diagonal.
    """
    if recon.frames.shape != gt.frames.shape:
        raise ShapeMismatch(
            f"shape {recon.frames.shape} vs {gt.frames.shape}"
        )
    if norm is None:
        norm = gt.diagonal
    if norm <= 0:
        raise ValidationError("norm must be positive")
    err = np.linalg.norm(recon.frames - gt.frames, axis=2)
    return float(err.mean() / norm * 100.0)
