"""Scratch probe: condition padding and absolute-position features."""
import sys
import time

import numpy as np

from sqflow import lab, flow as fl
from sqflow import numcore as nc
from sqflow.backbone import VelocityBackbone, timestep_embedding
from sqflow.flow import ConditionBundle, FlowConfig
from sqflow.numcore import Tensor
from sqflow.optim import Adam, warmup_cosine_lr
from sqflow.sqlat import sq_quantize

PAD = 8


def abs_pos_feats(total, dim):
    pos = np.arange(total)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = pos[:, None] * freqs[None, :]
    return np.concatenate([np.cos(ang), np.sin(ang)], axis=1).astype(np.float32)


def train_eval(pad: bool, abspos: bool, steps: int, lr: float, seed=0, n_utts=192, batch=8):
    task = lab.OracleCodecTask()
    ds = lab.make_tts_dataset(task, n_utts, seed=seed)
    ds = lab.corrupt_labels(ds, 0.1, "empty", np.random.default_rng([seed, 5]))
    bcfg = lab.backbone_for_task(task)
    rng = np.random.default_rng(seed)
    model = VelocityBackbone(bcfg, rng)
    if abspos:
        model._abs = abs_pos_feats(bcfg.max_positions, bcfg.hidden) * 0.3
        orig_fb = model.forward_batch

        def fb(x_t, t, tokens, styles):
            # monkeypatched: add absolute position features to the sequence
            raise NotImplementedError
    opt = Adam(model.parameters(), lr=lr)

    def pad_tokens(toks):
        if not pad:
            return np.asarray(toks, dtype=np.int64)
        out = np.zeros(PAD, dtype=np.int64)
        out[:len(toks)] = toks
        return out

    buckets = {}
    for i, u in enumerate(ds.utterances):
        key = (PAD if pad else len(u.tokens), u.n_frames)
        buckets.setdefault(key, []).append(i)
    keys = sorted(buckets)
    weights = np.array([len(buckets[k]) for k in keys], float)
    weights /= weights.sum()

    r = np.random.default_rng(seed)
    t0 = time.perf_counter()
    loss_trace = []
    for step in range(steps):
        key = keys[int(r.choice(len(keys), p=weights))]
        members = buckets[key]
        idx = r.choice(members, size=min(batch, len(members)), replace=len(members) < batch)
        x = np.stack([ds.utterances[i].latent for i in idx])
        tokens = np.stack([pad_tokens(ds.utterances[i].tokens) for i in idx])
        styles = np.zeros((len(idx), 8), dtype=np.float32)
        t = float(r.uniform())
        eps = r.standard_normal(x.shape).astype(np.float32)
        loss = fl.cfm_loss_batch(model, x, tokens, styles, t, eps)
        opt.zero_grad(); loss.backward()
        opt.step(lr=warmup_cosine_lr(step, steps, lr, warmup=100))
        if step % 100 == 0:
            loss_trace.append(round(float(loss.data), 3))
    train_s = time.perf_counter() - t0

    # eval with padded conds + padded null
    def eval_gamma(gamma, n_eval=24, steps_n=25):
        conds = lab._eval_conditions(task, n_eval, (3, 8), 123)
        correct = total = 0
        for i, toks in enumerate(conds):
            tf = task.frames_per_token * len(toks)
            cond = ConditionBundle(tuple(pad_tokens(toks).tolist()), np.zeros(8, np.float32), tf)
            null = ConditionBundle(tuple([0] * (PAD if pad else 1)), np.zeros(8, np.float32), tf)
            fcfg = FlowConfig(spec=task.spec, steps=steps_n, guidance_scale=gamma)
            lat = fl.sample(model, cond, fcfg, np.random.default_rng([123, i]), null_cond=null)
            dec, _ = lab.oracle_decode(lat, task)
            correct += sum(1 for a, b in zip(dec, toks) if a == b)
            total += len(toks)
        return correct / total

    accs = {g: round(eval_gamma(g), 3) for g in (1.0, 3.0, 5.0)}
    print(f"pad={pad} abspos={abspos} lr={lr} steps={steps}: {train_s:.0f}s trace={loss_trace}"
          f" acc={accs}", flush=True)


if __name__ == "__main__":
    mode = sys.argv[1]
    if mode == "A":
        train_eval(pad=True, abspos=False, steps=2000, lr=1e-3)
    elif mode == "A3":
        train_eval(pad=True, abspos=False, steps=2000, lr=3e-3)
