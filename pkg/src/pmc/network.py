"""The description network: per-primitive and per-transition encoders with a
windowed recurrent readout and a shared classification head.

Steps are indexed 0..2K-2: even steps are primitive predictions (encoded by
the primitive MLP), odd steps are transition predictions (encoded by the
transition MLP over the concatenated neighbor features). Each step's latent
is the final hidden state of the recurrent cell run over the step's centered
window, clipped at the sequence edges, with a fresh zero state per window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ValidationError

CELL_KINDS = ("gru", "lstm")


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    num_classes: int
    hidden_dim: int = 128
    window_size: int = 13
    cell_kind: str = "gru"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1")
        if self.num_classes < 2:
            raise ValidationError("need at least one concept plus blank")
        if self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be >= 1")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValidationError("window_size must be odd and >= 1")
        if self.cell_kind not in CELL_KINDS:
            raise ValidationError(f"cell_kind must be one of {CELL_KINDS}")

    def to_json(self) -> dict:
        return {
            "feature_dim": self.feature_dim,
            "num_classes": self.num_classes,
            "hidden_dim": self.hidden_dim,
            "window_size": self.window_size,
            "cell_kind": self.cell_kind,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(
            feature_dim=int(obj["feature_dim"]),
            num_classes=int(obj["num_classes"]),
            hidden_dim=int(obj["hidden_dim"]),
            window_size=int(obj["window_size"]),
            cell_kind=str(obj["cell_kind"]),
            seed=int(obj["seed"]),
        )


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Seeded initialization: weights uniform in +/- 1/sqrt(fan_in), biases 0."""
    rng = np.random.default_rng(cfg.seed)
    f, h, c = cfg.feature_dim, cfg.hidden_dim, cfg.num_classes
    params: dict[str, np.ndarray] = {}
    params["m1_w"] = _uniform(rng, f, (f, h))
    params["m1_b"] = np.zeros(h)
    params["m2_w"] = _uniform(rng, h, (h, h))
    params["m2_b"] = np.zeros(h)
    params["t1_w"] = _uniform(rng, 2 * f, (2 * f, h))
    params["t1_b"] = np.zeros(h)
    params["t2_w"] = _uniform(rng, h, (h, h))
    params["t2_b"] = np.zeros(h)
    gates = ("z", "r", "h") if cfg.cell_kind == "gru" else ("i", "f", "o", "c")
    for g in gates:
        params[f"cell_w{g}"] = _uniform(rng, h, (h, h))
        params[f"cell_u{g}"] = _uniform(rng, h, (h, h))
        params[f"cell_b{g}"] = np.zeros(h)
    params["out_w"] = _uniform(rng, h, (h, c))
    params["out_b"] = np.zeros(c)
    return params


def _mlp(p: Mapping[str, Var], prefix: str, x) -> Var:
    hidden = ad.relu(ad.add(ad.matmul(x, p[f"{prefix}1_w"]), p[f"{prefix}1_b"]))
    return ad.add(ad.matmul(hidden, p[f"{prefix}2_w"]), p[f"{prefix}2_b"])


def gru_step(p: Mapping[str, Var], x, h) -> Var:
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p["cell_wz"]), ad.matmul(h, p["cell_uz"])), p["cell_bz"]))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p["cell_wr"]), ad.matmul(h, p["cell_ur"])), p["cell_br"]))
    cand = ad.tanh(ad.add(ad.add(ad.matmul(x, p["cell_wh"]), ad.matmul(ad.mul(r, h), p["cell_uh"])), p["cell_bh"]))
    one_minus_z = ad.sub(1.0, z)
    return ad.add(ad.mul(z, h), ad.mul(one_minus_z, cand))


def lstm_step(p: Mapping[str, Var], x, h, c) -> tuple[Var, Var]:
    def gate(name, act):
        return act(ad.add(ad.add(ad.matmul(x, p[f"cell_w{name}"]), ad.matmul(h, p[f"cell_u{name}"])), p[f"cell_b{name}"]))

    i = gate("i", ad.sigmoid)
    f = gate("f", ad.sigmoid)
    o = gate("o", ad.sigmoid)
    cand = gate("c", ad.tanh)
    c_new = ad.add(ad.mul(f, c), ad.mul(i, cand))
    return ad.mul(o, ad.tanh(c_new)), c_new


def _windowed_recurrence(p: Mapping[str, Var], emb: Var, cfg: ModelConfig) -> Var:
    """Run the cell over each step's centered window; read out at the window's
    final valid position. All windows are processed in one batched sweep."""
    s = emb.shape[0]
    half = (cfg.window_size - 1) // 2
    h: Var | np.ndarray = np.zeros((s, cfg.hidden_dim))
    c: Var | np.ndarray = np.zeros((s, cfg.hidden_dim))
    base = np.arange(s)
    for tau in range(-half, half + 1):
        pos = base + tau
        valid = ((pos >= 0) & (pos < s)).astype(np.float64)[:, None]
        x = ad.gather_rows(emb, np.clip(pos, 0, s - 1))
        if cfg.cell_kind == "gru":
            h_new = gru_step(p, x, h)
        else:
            h_new, c_new = lstm_step(p, x, h, c)
            c = ad.add(ad.mul(c_new, valid), ad.mul(c, 1.0 - valid))
        h = ad.add(ad.mul(h_new, valid), ad.mul(h, 1.0 - valid))
    return h


def forward_logprobs(
    params: Mapping[str, Var | np.ndarray], features: np.ndarray, cfg: ModelConfig
) -> Var:
    """Log posterior over classes for all 2K-1 steps; features is (K, F)."""
    p = {k: v if isinstance(v, Var) else Var(v) for k, v in params.items()}
    features = np.asarray(features, dtype=np.float64)
    k = features.shape[0]
    if k < 1:
        raise ValidationError("need at least one primitive")
    if features.shape[1] != cfg.feature_dim:
        raise ValidationError(
            f"feature dim {features.shape[1]} != config {cfg.feature_dim}"
        )
    prim_emb = _mlp(p, "m", features)
    if k > 1:
        pair_feats = np.concatenate([features[:-1], features[1:]], axis=1)
        trans_emb = _mlp(p, "t", pair_feats)
        stacked = ad.concat([prim_emb, trans_emb], axis=0)
        order = np.empty(2 * k - 1, dtype=np.int64)
        order[0::2] = np.arange(k)
        order[1::2] = k + np.arange(k - 1)
        emb = ad.gather_rows(stacked, order)
    else:
        emb = prim_emb
    hidden = _windowed_recurrence(p, emb, cfg)
    logits = ad.add(ad.matmul(hidden, p["out_w"]), p["out_b"])
    return ad.log_softmax(logits)
