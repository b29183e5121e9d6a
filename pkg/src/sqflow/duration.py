"""Sentence-duration predictors.

Three strategies feed the sampler's length initialization:

* a regression predictor over a frozen byte-level embedding table with a
  learnable attention pool and linear head, trained with MSE;
* a teacher that sums provided per-unit base durations, each jittered by
  a uniform random scale in [0.9, 1.3];
* a tiny autoregressive model that regresses each unit's duration from
  its id and the previously emitted duration.

Durations stay in seconds; conversion to latent frame counts happens only
when initializing the sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .checkpoint import Checkpoint, config_digest
from .numcore import Tensor
from .optim import Adam
from .sqlat import round_half_away

EMB_DIM = 64
DUR_MIN_S = 0.2
DUR_MAX_S = 30.0


@dataclass
class DurationSample:
    text: str
    duration_s: float

    def __post_init__(self):
        if not self.text:
            raise ValueError("DurationSample: text must be nonempty")
        if self.duration_s <= 0:
            raise ValueError("DurationSample: duration_s must be positive")


@dataclass
class UnitDurations:
    """Sequence of (unit id, base duration in seconds)."""

    units: list[tuple[int, float]]

    def __post_init__(self):
        if any(b <= 0 for _, b in self.units):
            raise ValueError("UnitDurations: base durations must be positive")


def _char_table(seed: int) -> np.ndarray:
    """Frozen byte embedding table; channel 0 is a constant so pooled sums
    carry the character count. Content channels stay small so they don't
    drown the count channel during regression."""
    rng = np.random.default_rng(seed)
    table = rng.normal(0.0, 0.3, (256, EMB_DIM)).astype(np.float32)
    table[:, 0] = 1.0
    return table


def _text_ids(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)


class RegressionPredictor:
    """Frozen byte embeddings -> learnable attention pool -> linear head.

    The pool is softmax attention rescaled by the byte count, so the
    pooled vector sums (rather than averages) the attended embeddings and
    text length stays recoverable by the head.
    """

    def __init__(self, emb_seed: int = 1234, init_seed: int = 0):
        self.emb_seed = emb_seed
        self.table = _char_table(emb_seed)
        rng = np.random.default_rng(init_seed)
        self.params = {
            "att_q": Tensor(rng.normal(0, 0.1, (EMB_DIM,)), requires_grad=True),
            "head_w": Tensor(rng.normal(0, 0.01, (EMB_DIM,)), requires_grad=True),
            "head_b": Tensor(np.zeros(1, dtype=np.float32), requires_grad=True),
        }

    def forward(self, text: str) -> Tensor:
        ids = _text_ids(text)
        emb = Tensor(self.table[ids])  # (n, EMB_DIM), frozen
        scores = nc.matmul(emb, self.params["att_q"])
        attn = nc.softmax(scores, axis=-1)
        pooled = nc.mul(nc.matmul(attn, emb), float(len(ids)))
        return nc.add(nc.matmul(pooled, self.params["head_w"]), self.params["head_b"])

    def load_state(self, tensors: dict[str, np.ndarray]):
        for k, p in self.params.items():
            p.data = tensors[k].astype(np.float32).copy()


@dataclass
class DurationTrainConfig:
    steps: int = 1500
    batch: int = 16
    lr: float = 0.02
    seed: int = 0
    val_fraction: float = 0.2


def _mse(pred: list[Tensor], targets: np.ndarray) -> Tensor:
    stacked = nc.concat(pred, axis=0)
    diff = nc.add(stacked, Tensor(-targets))
    return nc.mean(nc.square(diff))


def train_regression_predictor(dataset: list[DurationSample],
                               cfg: DurationTrainConfig | None = None) -> Checkpoint:
    """MSE-train the attention-pool regressor; checkpoint carries train/val MSE."""
    if len(dataset) < 2:
        raise ValueError("train_regression_predictor: need at least 2 samples")
    cfg = cfg or DurationTrainConfig()
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(dataset))
    n_val = max(1, int(len(dataset) * cfg.val_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        train_idx = val_idx
    model = RegressionPredictor(init_seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)

    def eval_mse(indices) -> float:
        with nc.no_grad():
            errs = [(float(model.forward(dataset[i].text).data[0]) - dataset[i].duration_s) ** 2
                    for i in indices]
        return float(np.mean(errs))

    train_mse_first = eval_mse(train_idx)
    for step in range(cfg.steps):
        batch = rng.choice(train_idx, size=min(cfg.batch, train_idx.size), replace=False)
        preds = [model.forward(dataset[i].text) for i in batch]
        targets = np.array([dataset[i].duration_s for i in batch], dtype=np.float32)
        loss = _mse(preds, targets)
        if not math.isfinite(float(loss.data)):
            raise RuntimeError(f"train_regression_predictor: non-finite loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
    meta = {
        "kind": "duration_regression",
        "seed": cfg.seed,
        "step": cfg.steps,
        "emb_seed": model.emb_seed,
        "train_mse_initial": train_mse_first,
        "train_mse": eval_mse(train_idx),
        "val_mse": eval_mse(val_idx),
        "config": {"steps": cfg.steps, "batch": cfg.batch, "lr": cfg.lr},
        "config_digest": config_digest({"steps": cfg.steps, "batch": cfg.batch, "lr": cfg.lr}),
    }
    tensors = {k: p.data.copy() for k, p in model.params.items()}
    return Checkpoint(tensors=tensors, meta=meta)


def predict_duration(text: str, ckpt: Checkpoint) -> float:
    """Predicted sentence duration in seconds, clamped to [0.2, 30]."""
    if not text:
        raise ValueError("predict_duration: empty text")
    model = RegressionPredictor(emb_seed=int(ckpt.meta.get("emb_seed", 1234)))
    model.load_state(ckpt.tensors)
    with nc.no_grad():
        raw = float(model.forward(text).data[0])
    return float(min(max(raw, DUR_MIN_S), DUR_MAX_S))


def teacher_sum_duration(units: UnitDurations, scale_range=(0.9, 1.3),
                         rng: np.random.Generator | None = None) -> float:
    """Sum of base durations, each scaled by an i.i.d. uniform draw."""
    if not units.units:
        raise ValueError("teacher_sum_duration: empty units")
    rng = rng or np.random.default_rng()
    lo, hi = scale_range
    scales = rng.uniform(lo, hi, size=len(units.units))
    return float(sum(s * b for s, (_, b) in zip(scales, units.units)))


# -- autoregressive per-unit predictor -------------------------------------------

_AR_EMB = 8
_AR_HID = 16


class ARDurationModel:
    """Next-duration regression: embed the unit id, concatenate the previous
    duration, one tanh hidden layer, linear out."""

    def __init__(self, n_units: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_units = n_units
        self.params = {
            "emb": Tensor(rng.normal(0, 0.5, (n_units, _AR_EMB)), requires_grad=True),
            "w1": Tensor(rng.normal(0, 0.3, (_AR_EMB + 1, _AR_HID)), requires_grad=True),
            "b1": Tensor(np.zeros(_AR_HID, dtype=np.float32), requires_grad=True),
            "w2": Tensor(rng.normal(0, 0.3, (_AR_HID,)), requires_grad=True),
            "b2": Tensor(np.zeros(1, dtype=np.float32), requires_grad=True),
        }

    def step(self, unit_id: int, prev_duration: float) -> Tensor:
        feats = nc.concat([nc.embedding(self.params["emb"], np.array([unit_id])).reshape(-1),
                           Tensor(np.array([prev_duration], dtype=np.float32))], axis=0)
        hid = nc.tanh(nc.add(nc.matmul(feats, self.params["w1"]), self.params["b1"]))
        return nc.add(nc.matmul(hid, self.params["w2"]), self.params["b2"])

    def load_state(self, tensors: dict[str, np.ndarray]):
        for k, p in self.params.items():
            p.data = tensors[k].astype(np.float32).copy()


def train_ar_duration(sequences: list[UnitDurations], n_units: int,
                      cfg: DurationTrainConfig | None = None) -> Checkpoint:
    """Teacher-forced MSE training of the AR unit-duration model."""
    if not sequences:
        raise ValueError("train_ar_duration: empty dataset")
    cfg = cfg or DurationTrainConfig(steps=300, batch=8, lr=0.02)
    rng = np.random.default_rng(cfg.seed)
    model = ARDurationModel(n_units, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    known = sorted({uid for seq in sequences for uid, _ in seq.units})
    if known and (known[0] < 0 or known[-1] >= n_units):
        raise ValueError(f"train_ar_duration: unit ids outside [0, {n_units})")
    for step in range(cfg.steps):
        idx = rng.integers(0, len(sequences), size=min(cfg.batch, len(sequences)))
        preds, targets = [], []
        for i in idx:
            prev = 0.0
            for uid, base in sequences[i].units:
                preds.append(model.step(uid, prev))
                targets.append(base)
                prev = base  # teacher forcing
        loss = _mse(preds, np.array(targets, dtype=np.float32))
        if not math.isfinite(float(loss.data)):
            raise RuntimeError(f"train_ar_duration: non-finite loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
    meta = {
        "kind": "duration_ar",
        "seed": cfg.seed,
        "step": cfg.steps,
        "n_units": n_units,
        "known_units": known,
        "config_digest": config_digest({"steps": cfg.steps, "lr": cfg.lr, "n_units": n_units}),
    }
    tensors = {k: p.data.copy() for k, p in model.params.items()}
    return Checkpoint(tensors=tensors, meta=meta)


def ar_unit_duration(units: list[int], ckpt: Checkpoint) -> tuple[list[float], float]:
    """Greedy per-unit durations plus their exact sum."""
    known = set(ckpt.meta["known_units"])
    for uid in units:
        if uid not in known:
            raise ValueError(f"ar_unit_duration: unknown unit id {uid}")
    model = ARDurationModel(int(ckpt.meta["n_units"]))
    model.load_state(ckpt.tensors)
    per_unit: list[float] = []
    prev = 0.0
    with nc.no_grad():
        for uid in units:
            pred = max(float(model.step(uid, prev).data[0]), 1e-2)
            per_unit.append(pred)
            prev = pred
    return per_unit, float(sum(per_unit))


def duration_to_frames(duration_s: float, frames_per_second: int) -> int:
    """Seconds -> latent frame count (half-away rounding, minimum 1)."""
    if duration_s <= 0:
        raise ValueError("duration_to_frames: duration_s must be positive")
    return max(1, int(round_half_away(np.float64(duration_s * frames_per_second))))
