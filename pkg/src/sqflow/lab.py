"""Experiment harness: oracle-codec TTS task, trainers, sweeps, reports.

The oracle-codec task replaces real speech with something decidable: each
vocabulary token owns a fixed lattice-valued pattern of F frames, an
utterance's latent is the concatenation of its tokens' patterns, and
nearest-pattern matching recovers the token sequence exactly. Conditional
generation quality is then a plain token accuracy.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import flow as fl
from .backbone import BackboneConfig, NULL_TOKEN, VelocityBackbone, desk_preset
from .checkpoint import Checkpoint, config_digest
from .flow import ConditionBundle, FlowConfig
from .optim import Adam, warmup_cosine_lr
from .sqlat import LatticeSpec, ScalarLatent, is_on_lattice, lattice_values, round_half_away

STYLE_DIM = 8


@dataclass
class OracleCodecTask:
    """V deterministic lattice patterns of shape (frames_per_token, d)."""

    vocab_size: int = 16
    frames_per_token: int = 4
    spec: LatticeSpec = field(default_factory=lambda: LatticeSpec(9, 8))
    frames_per_second: int = 50
    seed: int = 0
    min_pattern_distance: float = 1.0
    patterns: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        values = lattice_values(self.spec)
        shape = (self.frames_per_token, self.spec.d)
        pats: list[np.ndarray] = []
        while len(pats) < self.vocab_size:
            cand = rng.choice(values, size=shape).astype(np.float32)
            if all(np.linalg.norm(cand - p) >= self.min_pattern_distance for p in pats):
                pats.append(cand)
        self.patterns = np.stack(pats)

    def to_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "frames_per_token": self.frames_per_token,
                "S": self.spec.S, "d": self.spec.d,
                "frames_per_second": self.frames_per_second, "seed": self.seed,
                "min_pattern_distance": self.min_pattern_distance}

    @classmethod
    def from_dict(cls, d: dict) -> "OracleCodecTask":
        return cls(vocab_size=int(d["vocab_size"]), frames_per_token=int(d["frames_per_token"]),
                   spec=LatticeSpec(int(d["S"]), int(d["d"])),
                   frames_per_second=int(d["frames_per_second"]), seed=int(d["seed"]),
                   min_pattern_distance=float(d["min_pattern_distance"]))

    def latent_for(self, tokens) -> np.ndarray:
        """Concatenate the patterns of a 1..V token sequence."""
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.min() < 1 or tokens.max() > self.vocab_size:
            raise ValueError(f"tokens must lie in 1..{self.vocab_size}")
        return np.concatenate([self.patterns[t - 1] for t in tokens], axis=0)


@dataclass
class Utterance:
    tokens: tuple[int, ...]
    latent: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.latent.shape[0]


@dataclass
class TTSDataset:
    task: OracleCodecTask
    utterances: list[Utterance]
    len_range: tuple[int, int] = (3, 8)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.utterances)


def make_tts_dataset(task: OracleCodecTask, n_utts: int, len_range=(3, 8),
                     rng: np.random.Generator | None = None, seed: int = 0) -> TTSDataset:
    """Random token sequences in 1..V with their concatenated latents."""
    lo, hi = int(len_range[0]), int(len_range[1])
    if lo < 1 or hi > 64 or lo > hi:
        raise ValueError(f"len_range {len_range} must lie within [1, 64]")
    rng = rng or np.random.default_rng(seed)
    utts = []
    for _ in range(n_utts):
        n = int(rng.integers(lo, hi + 1))
        tokens = tuple(int(t) for t in rng.integers(1, task.vocab_size + 1, size=n))
        utts.append(Utterance(tokens=tokens, latent=task.latent_for(tokens)))
    return TTSDataset(task=task, utterances=utts, len_range=(lo, hi), seed=seed)


def oracle_decode(latent, task: OracleCodecTask) -> tuple[list[int], float]:
    """Nearest-pattern decode per F-frame window; returns tokens and the
    mean margin (second-best minus best distance) over windows."""
    frames = latent.frames if isinstance(latent, ScalarLatent) else np.asarray(latent, dtype=np.float32)
    F = task.frames_per_token
    n_win = frames.shape[0] // F
    if frames.shape[0] % F != 0:
        warnings.warn(f"oracle_decode: dropping {frames.shape[0] % F} trailing frames "
                      f"(latent length not divisible by {F})")
    if n_win == 0:
        return [], 0.0
    windows = frames[:n_win * F].reshape(n_win, F * task.spec.d)
    pats = task.patterns.reshape(task.vocab_size, -1)
    # squared L2 via the expansion; argmin matches true L2
    d2 = (windows ** 2).sum(1)[:, None] - 2.0 * windows @ pats.T + (pats ** 2).sum(1)[None, :]
    d2 = np.maximum(d2, 0.0)
    order = np.argsort(d2, axis=1)
    best = order[:, 0]
    dist = np.sqrt(d2)
    margin = float((dist[np.arange(n_win), order[:, 1]] - dist[np.arange(n_win), best]).mean())
    return [int(b) + 1 for b in best], margin


def corrupt_labels(dataset: TTSDataset, p: float, mode: str,
                   rng: np.random.Generator) -> TTSDataset:
    """Alter exactly round(p*n) conditions: 'shuffle' draws a fresh random
    sequence of the same length, 'empty' replaces it with the null token.
    Latents are untouched."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"corrupt_labels: fraction {p} outside [0, 1]")
    if mode not in ("shuffle", "empty"):
        raise ValueError(f"corrupt_labels: unknown mode {mode!r}")
    n = len(dataset.utterances)
    n_alter = int(round_half_away(p * n))
    picked = rng.choice(n, size=n_alter, replace=False) if n_alter else np.array([], dtype=int)
    out = [Utterance(u.tokens, u.latent) for u in dataset.utterances]
    for i in picked:
        u = out[i]
        if mode == "shuffle":
            fresh = tuple(int(t) for t in rng.integers(1, dataset.task.vocab_size + 1, size=len(u.tokens)))
            out[i] = Utterance(fresh, u.latent)
        else:
            out[i] = Utterance((NULL_TOKEN,), u.latent)
    return TTSDataset(task=dataset.task, utterances=out, len_range=dataset.len_range, seed=dataset.seed)


def save_dataset(ds: TTSDataset, path: str):
    """Write a dataset as .npz (flattened tokens/latents plus task json)."""
    import json

    tok_lens = np.array([len(u.tokens) for u in ds.utterances], dtype=np.int64)
    frame_lens = np.array([u.n_frames for u in ds.utterances], dtype=np.int64)
    tokens = np.concatenate([np.asarray(u.tokens, dtype=np.int64) for u in ds.utterances]) \
        if ds.utterances else np.zeros(0, dtype=np.int64)
    latents = np.concatenate([u.latent for u in ds.utterances], axis=0) \
        if ds.utterances else np.zeros((0, ds.task.spec.d), dtype=np.float32)
    np.savez(path, tokens=tokens, tok_lens=tok_lens, latents=latents, frame_lens=frame_lens,
             task_json=np.frombuffer(json.dumps(ds.task.to_dict()).encode(), dtype=np.uint8),
             len_range=np.array(ds.len_range, dtype=np.int64),
             seed=np.array([ds.seed], dtype=np.int64))


def load_dataset(path: str) -> TTSDataset:
    import json

    with np.load(path) as z:
        task = OracleCodecTask.from_dict(json.loads(z["task_json"].tobytes().decode()))
        tok_lens = z["tok_lens"]
        frame_lens = z["frame_lens"]
        tokens = z["tokens"]
        latents = z["latents"].astype(np.float32)
        len_range = tuple(int(v) for v in z["len_range"])
        seed = int(z["seed"][0])
    utts = []
    ti = fi = 0
    for tl, flen in zip(tok_lens, frame_lens):
        utts.append(Utterance(tuple(int(t) for t in tokens[ti:ti + tl]),
                              latents[fi:fi + flen].copy()))
        ti += tl
        fi += flen
    return TTSDataset(task=task, utterances=utts, len_range=len_range, seed=seed)


# -- flow model training -------------------------------------------------------


@dataclass
class FlowTrainConfig:
    steps: int = 2000
    batch: int = 8
    lr: float = 1e-3
    warmup: int = 100
    seed: int = 0
    log_every: int = 100


def backbone_for_task(task: OracleCodecTask, n_experts: int = 4) -> BackboneConfig:
    """Desk-preset backbone sized for the task's vocab and latent dim.

    Vocabulary row 0 is the reserved null token, so the embedding table
    has vocab_size + 1 rows.
    """
    return desk_preset(vocab_size=task.vocab_size + 1, latent_dim=task.spec.d,
                       style_dim=STYLE_DIM, n_experts=n_experts)


def train_flow_tts(dataset: TTSDataset, backbone_cfg: BackboneConfig,
                   flow_cfg: FlowConfig, opt_cfg: FlowTrainConfig) -> tuple[VelocityBackbone, Checkpoint]:
    """CFM-train a velocity backbone on the dataset's latents.

    Minibatches are bucketed by (token length, latent length) so they
    stack; each batch shares one uniform t draw. Aborts on non-finite
    loss.
    """
    if not dataset.utterances:
        raise ValueError("train_flow_tts: empty dataset")
    rng = np.random.default_rng(opt_cfg.seed)
    model = VelocityBackbone(backbone_cfg, rng)
    opt = Adam(model.parameters(), lr=opt_cfg.lr)

    buckets: dict[tuple[int, int], list[int]] = {}
    for i, u in enumerate(dataset.utterances):
        buckets.setdefault((len(u.tokens), u.n_frames), []).append(i)
    keys = sorted(buckets)
    weights = np.array([len(buckets[k]) for k in keys], dtype=np.float64)
    weights /= weights.sum()

    utts = dataset.utterances
    first = last = None
    losses: list[float] = []
    for step in range(opt_cfg.steps):
        key = keys[int(rng.choice(len(keys), p=weights))]
        members = buckets[key]
        idx = rng.choice(members, size=min(opt_cfg.batch, len(members)), replace=len(members) < opt_cfg.batch)
        x = np.stack([utts[i].latent for i in idx])
        tokens = np.stack([np.asarray(utts[i].tokens, dtype=np.int64) for i in idx])
        styles = np.zeros((len(idx), STYLE_DIM), dtype=np.float32)
        t = float(rng.uniform())
        eps = rng.standard_normal(x.shape).astype(np.float32)
        loss = fl.cfm_loss_batch(model, x, tokens, styles, t, eps, kind=flow_cfg.schedule)
        val = float(loss.data)
        if not math.isfinite(val):
            raise RuntimeError(f"train_flow_tts: non-finite loss at step {step} "
                               f"(t={t:.4f}, bucket={key})")
        opt.zero_grad()
        loss.backward()
        opt.step(lr=warmup_cosine_lr(step, opt_cfg.steps, opt_cfg.lr, warmup=opt_cfg.warmup))
        if first is None:
            first = val
        last = val
        if step % opt_cfg.log_every == 0:
            losses.append(val)

    config = {
        "task": dataset.task.to_dict(),
        "backbone": {"n_layers": backbone_cfg.n_layers, "hidden": backbone_cfg.hidden,
                     "n_heads": backbone_cfg.n_heads, "n_experts": backbone_cfg.n_experts,
                     "vocab_size": backbone_cfg.vocab_size, "max_positions": backbone_cfg.max_positions,
                     "latent_dim": backbone_cfg.latent_dim, "style_dim": backbone_cfg.style_dim},
        "flow": {"schedule": flow_cfg.schedule, "steps": flow_cfg.steps,
                 "guidance_scale": flow_cfg.guidance_scale, "sq_regularize": flow_cfg.sq_regularize},
        "optimizer": {"steps": opt_cfg.steps, "batch": opt_cfg.batch, "lr": opt_cfg.lr,
                      "warmup": opt_cfg.warmup},
    }
    meta = {
        "kind": "flow_tts",
        "seed": opt_cfg.seed,
        "step": opt_cfg.steps,
        "config": config,
        "config_digest": config_digest(config),
        "initial_loss": first,
        "final_loss": last,
        "loss_trace": losses,
    }
    tensors = {k: p.data.copy() for k, p in model.parameters().items()}
    return model, Checkpoint(tensors=tensors, meta=meta)


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[VelocityBackbone, OracleCodecTask, FlowConfig]:
    cfgd = ckpt.meta["config"]
    task = OracleCodecTask.from_dict(cfgd["task"])
    b = cfgd["backbone"]
    bcfg = BackboneConfig(n_layers=int(b["n_layers"]), hidden=int(b["hidden"]),
                          n_heads=int(b["n_heads"]), vocab_size=int(b["vocab_size"]),
                          max_positions=int(b["max_positions"]), latent_dim=int(b["latent_dim"]),
                          style_dim=int(b["style_dim"]), n_experts=int(b["n_experts"]))
    model = VelocityBackbone(bcfg, np.random.default_rng(0))
    model.load_state(ckpt.tensors)
    f = cfgd["flow"]
    fcfg = FlowConfig(spec=task.spec, schedule=f["schedule"], steps=int(f["steps"]),
                      guidance_scale=float(f["guidance_scale"]), sq_regularize=bool(f["sq_regularize"]))
    return model, task, fcfg


# -- evaluation ------------------------------------------------------------------


def _eval_conditions(task: OracleCodecTask, n_eval: int, len_range, seed: int):
    """Held-out token sequences (independent stream from the train seed)."""
    rng = np.random.default_rng([seed, 0xE7A1])
    conds = []
    for _ in range(n_eval):
        n = int(rng.integers(len_range[0], len_range[1] + 1))
        tokens = tuple(int(t) for t in rng.integers(1, task.vocab_size + 1, size=n))
        conds.append(tokens)
    return conds


def eval_conditional(model: VelocityBackbone, task: OracleCodecTask, n_eval: int,
                     flow_cfg: FlowConfig, seed: int = 0, len_range=(3, 8),
                     random_null: bool = False) -> dict:
    """Sample held-out conditions and decode with the oracle.

    Returns token_accuracy (per-token), exact-sequence accuracy,
    lattice_fraction, and mean decode margin. ``random_null`` swaps the
    unconditional branch for a freshly randomized condition per utterance.
    """
    conds = _eval_conditions(task, n_eval, len_range, seed)
    F = task.frames_per_token
    total = correct = exact = 0
    fracs: list[float] = []
    margins: list[float] = []
    elapsed = 0.0
    duration = 0.0
    for i, tokens in enumerate(conds):
        cond = ConditionBundle(tokens, np.zeros(STYLE_DIM, dtype=np.float32), F * len(tokens))
        rng_i = np.random.default_rng([seed, 1 + i])
        null_cond = None
        if random_null:
            fresh = tuple(int(t) for t in rng_i.integers(1, task.vocab_size + 1, size=len(tokens)))
            null_cond = ConditionBundle(fresh, np.zeros(STYLE_DIM, dtype=np.float32), cond.target_frames)
        t0 = time.perf_counter()
        latent = fl.sample(model, cond, flow_cfg, rng_i, null_cond=null_cond)
        elapsed += time.perf_counter() - t0
        duration += cond.target_frames / task.frames_per_second
        decoded, margin = oracle_decode(latent, task)
        margins.append(margin)
        _, frac = is_on_lattice(latent.frames, task.spec)
        fracs.append(frac)
        correct += sum(1 for a, b in zip(decoded, tokens) if a == b)
        total += len(tokens)
        exact += int(tuple(decoded) == tokens)
    return {
        "token_accuracy": correct / total,
        "sequence_accuracy": exact / len(conds),
        "lattice_fraction": float(np.mean(fracs)),
        "margin": float(np.mean(margins)),
        "n_eval": n_eval,
        "rtf": elapsed / duration,
    }


def rtf(model: VelocityBackbone, cond: ConditionBundle, flow_cfg: FlowConfig,
        frames_per_second: int = 50, seed: int = 0) -> dict:
    """Wall-clock generation time over nominal audio duration."""
    duration = cond.target_frames / frames_per_second
    if duration <= 0:
        raise ValueError("rtf: condition has zero duration")
    t0 = time.perf_counter()
    fl.sample(model, cond, flow_cfg, np.random.default_rng(seed))
    elapsed = time.perf_counter() - t0
    return {"rtf": elapsed / duration, "elapsed_s": elapsed, "duration_s": duration}


# -- reports -----------------------------------------------------------------------


@dataclass
class ExperimentReport:
    name: str
    metrics: dict[str, float]
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def validate(self):
        def check(value, where):
            if isinstance(value, bool):
                return
            if isinstance(value, (int, float)):
                if not math.isfinite(value):
                    raise ValueError(f"ExperimentReport {self.name}: non-finite value at {where}")
            elif isinstance(value, dict):
                for k, v in value.items():
                    check(v, f"{where}.{k}")
            elif isinstance(value, (list, tuple)):
                for j, v in enumerate(value):
                    check(v, f"{where}[{j}]")

        check(self.metrics, "metrics")
        check(self.rows, "rows")
        return self

    def to_dict(self) -> dict:
        return {"name": self.name, "metrics": self.metrics, "rows": self.rows,
                "config": self.config, "timings": self.timings}


# -- sweeps ------------------------------------------------------------------------


DEFAULT_GAMMAS = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0)
DEFAULT_STEPS = (5, 10, 15, 20, 25, 50)


def cfg_sweep(model: VelocityBackbone, task: OracleCodecTask, flow_cfg: FlowConfig,
              gammas=DEFAULT_GAMMAS, n_eval: int = 32, seed: int = 0,
              len_range=(3, 8)) -> ExperimentReport:
    """Token accuracy per guidance scale; flags whether gamma=1 is worst."""
    rows = []
    t0 = time.perf_counter()
    for g in gammas:
        cfg_g = FlowConfig(spec=flow_cfg.spec, schedule=flow_cfg.schedule, steps=flow_cfg.steps,
                           guidance_scale=float(g), sq_regularize=flow_cfg.sq_regularize)
        res = eval_conditional(model, task, n_eval, cfg_g, seed=seed, len_range=len_range)
        rows.append({"gamma": float(g), **{k: res[k] for k in ("token_accuracy", "sequence_accuracy", "lattice_fraction")}})
    accs = {r["gamma"]: r["token_accuracy"] for r in rows}
    best_gamma = max(accs, key=accs.get)
    gamma1 = accs.get(1.0)
    metrics = {
        "best_gamma": best_gamma,
        "best_accuracy": accs[best_gamma],
        "gamma1_accuracy": gamma1 if gamma1 is not None else float("nan"),
        "gamma1_is_worst_direction": bool(gamma1 is not None and gamma1 < accs[best_gamma]),
    }
    return ExperimentReport("cfg_sweep", metrics, rows,
                            config={"gammas": list(map(float, gammas)), "n_eval": n_eval,
                                    "steps": flow_cfg.steps, "seed": seed},
                            timings={"total_s": time.perf_counter() - t0}).validate()


def step_sweep(model: VelocityBackbone, task: OracleCodecTask, flow_cfg: FlowConfig,
               steps_list=DEFAULT_STEPS, n_eval: int = 32, seed: int = 0,
               len_range=(3, 8)) -> ExperimentReport:
    """Accuracy and RTF per Euler step count."""
    rows = []
    t0 = time.perf_counter()
    for n in steps_list:
        cfg_n = FlowConfig(spec=flow_cfg.spec, schedule=flow_cfg.schedule, steps=int(n),
                           guidance_scale=flow_cfg.guidance_scale, sq_regularize=flow_cfg.sq_regularize)
        res = eval_conditional(model, task, n_eval, cfg_n, seed=seed, len_range=len_range)
        rows.append({"steps": int(n), "token_accuracy": res["token_accuracy"], "rtf": res["rtf"]})
    by_steps = {r["steps"]: r for r in rows}
    rtfs = [r["rtf"] for r in rows]
    metrics = {
        "rtf_monotone": bool(all(a < b for a, b in zip(rtfs, rtfs[1:]))),
        "acc_25_ge_5": bool(by_steps[25]["token_accuracy"] >= by_steps[5]["token_accuracy"])
        if 25 in by_steps and 5 in by_steps else False,
        "acc_gap_50_vs_25": abs(by_steps[50]["token_accuracy"] - by_steps[25]["token_accuracy"])
        if 50 in by_steps and 25 in by_steps else float("nan"),
    }
    return ExperimentReport("step_sweep", metrics, rows,
                            config={"steps_list": list(map(int, steps_list)), "n_eval": n_eval,
                                    "gamma": flow_cfg.guidance_scale, "seed": seed},
                            timings={"total_s": time.perf_counter() - t0}).validate()


def noisy_label_study(task: OracleCodecTask, p: float = 0.1, n_utts: int = 192,
                      train_steps: int = 1200, n_eval: int = 32, seed: int = 0,
                      guided_gamma: float = 3.0, len_range=(3, 8),
                      sampler_steps: int = 25) -> ExperimentReport:
    """Twin training runs: empty-masked vs shuffle-corrupted conditions.

    Model A masks p of the conditions to the null token (classic
    guidance-style training); model B replaces the same fraction with
    always-wrong random sequences. Both train identically otherwise. The
    study compares their conditional accuracy at gamma=1 and checks that
    B still benefits from guidance when its unconditional branch is
    approximated by a freshly randomized condition.
    """
    base = make_tts_dataset(task, n_utts, len_range=len_range, seed=seed)
    ds_empty = corrupt_labels(base, p, "empty", np.random.default_rng([seed, 11]))
    ds_shuffle = corrupt_labels(base, p, "shuffle", np.random.default_rng([seed, 11]))
    bcfg = backbone_for_task(task)
    opt_cfg = FlowTrainConfig(steps=train_steps, seed=seed)
    fcfg1 = FlowConfig(spec=task.spec, steps=sampler_steps, guidance_scale=1.0)

    t0 = time.perf_counter()
    model_a, _ = train_flow_tts(ds_empty, bcfg, fcfg1, opt_cfg)
    model_b, _ = train_flow_tts(ds_shuffle, bcfg, fcfg1, opt_cfg)
    train_s = time.perf_counter() - t0

    res_a = eval_conditional(model_a, task, n_eval, fcfg1, seed=seed, len_range=len_range)
    res_b = eval_conditional(model_b, task, n_eval, fcfg1, seed=seed, len_range=len_range)
    fcfg_g = FlowConfig(spec=task.spec, steps=sampler_steps, guidance_scale=guided_gamma)
    res_b_guided = eval_conditional(model_b, task, n_eval, fcfg_g, seed=seed,
                                    len_range=len_range, random_null=True)

    metrics = {
        "acc_empty_gamma1": res_a["token_accuracy"],
        "acc_shuffle_gamma1": res_b["token_accuracy"],
        "acc_gap": abs(res_a["token_accuracy"] - res_b["token_accuracy"]),
        "acc_shuffle_guided": res_b_guided["token_accuracy"],
        "guided_gamma": guided_gamma,
        "guidance_helps_shuffle": bool(res_b_guided["token_accuracy"] > res_b["token_accuracy"]),
        "within_10_points": bool(abs(res_a["token_accuracy"] - res_b["token_accuracy"]) <= 0.10),
    }
    rows = [{"model": "empty_masked", "gamma": 1.0, **res_a},
            {"model": "shuffle_corrupted", "gamma": 1.0, **res_b},
            {"model": "shuffle_corrupted_random_null", "gamma": guided_gamma, **res_b_guided}]
    return ExperimentReport("noisy_label_study", metrics, rows,
                            config={"p": p, "n_utts": n_utts, "train_steps": train_steps,
                                    "n_eval": n_eval, "seed": seed},
                            timings={"train_s": train_s}).validate()


DEFAULT_COMPACTNESS_CELLS = ((9, 32), (9, 20), (9, 10), (9, 50), (3, 32), (5, 32))


def compactness_sweep(cells=DEFAULT_COMPACTNESS_CELLS, codec_steps: int = 700,
                      flow_steps: int = 600, n_train_utts: int = 160, n_eval: int = 24,
                      seed: int = 0, n_clips: int = 48,
                      sampler_steps: int = 25, gamma: float = 5.0) -> ExperimentReport:
    """Per (S, d): toy codec reconstruction SNR and flow generation accuracy.

    Mirrors the completeness/compactness trade-off: larger d reconstructs
    best, but generation peaks at a more compact latent.
    """
    from . import codec as cd  # local import: codec pulls in the conv kernels

    rng = np.random.default_rng([seed, 77])
    train_waves = cd.sine_mixture_dataset(n_clips, rng)
    held_waves = cd.sine_mixture_dataset(12, rng)
    rows = []
    t0 = time.perf_counter()
    for S, d in cells:
        ccfg = cd.CodecConfig(spec=LatticeSpec(S, d))
        codec, _ = cd.train_codec(train_waves, ccfg,
                                  cd.CodecTrainConfig(steps=codec_steps, batch=8, seed=seed))
        snrs = [cd.recon_metrics(w, codec.decode(codec.encode(w)))["snr_db"] for w in held_waves]

        task = OracleCodecTask(vocab_size=16, frames_per_token=4, spec=LatticeSpec(S, d), seed=seed)
        ds = make_tts_dataset(task, n_train_utts, seed=seed)
        ds = corrupt_labels(ds, 0.1, "empty", np.random.default_rng([seed, 5]))
        fcfg = FlowConfig(spec=task.spec, steps=sampler_steps, guidance_scale=gamma)
        model, _ = train_flow_tts(ds, backbone_for_task(task), fcfg,
                                  FlowTrainConfig(steps=flow_steps, seed=seed))
        res = eval_conditional(model, task, n_eval, fcfg, seed=seed)
        rows.append({"S": S, "d": d, "recon_snr_db": float(np.mean(snrs)),
                     "token_accuracy": res["token_accuracy"]})
    snr_by = {(r["S"], r["d"]): r["recon_snr_db"] for r in rows}
    acc_by = {(r["S"], r["d"]): r["token_accuracy"] for r in rows}
    best_snr_cell = max(snr_by, key=snr_by.get)
    worst_snr_cell = min(snr_by, key=snr_by.get)
    metrics = {
        "best_snr_cell_d": best_snr_cell[1],
        "worst_snr_cell_d": worst_snr_cell[1],
        "snr_best_is_d50": bool(best_snr_cell == (9, 50)),
        "snr_worst_is_d10": bool(worst_snr_cell == (9, 10)),
        "gen_d32_ge_d50": bool(acc_by.get((9, 32), 0.0) >= acc_by.get((9, 50), 1.0)),
    }
    return ExperimentReport("compactness_sweep", metrics, rows,
                            config={"cells": [list(c) for c in cells], "codec_steps": codec_steps,
                                    "flow_steps": flow_steps, "n_eval": n_eval, "seed": seed},
                            timings={"total_s": time.perf_counter() - t0}).validate()
