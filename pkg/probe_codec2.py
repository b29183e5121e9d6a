"""Scratch probe: codec with channel rmsnorm between conv blocks."""
import sys
import time

import numpy as np

from sqflow import codec as cd
from sqflow import numcore as nc
from sqflow.numcore import Tensor
from sqflow.optim import Adam, warmup_cosine_lr
from sqflow.sqlat import LatticeSpec, sq_quantize_ste


class NormCodec:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        base = cd.SQCodec(cfg, rng)
        self.params = base.params
        widths = (1,) + tuple(cfg.channels) + (cfg.spec.d,)
        rwidths = (cfg.spec.d,) + tuple(reversed(cfg.channels)) + (1,)
        for i in range(len(cfg.strides) - 1):
            self.params[f"enc{i}.g"] = Tensor(np.ones(widths[i + 1], np.float32), requires_grad=True)
            self.params[f"dec{i}.g"] = Tensor(np.ones(rwidths[i + 1], np.float32), requires_grad=True)

    def _enc(self, x):
        cfg = self.cfg
        h = x
        n = len(cfg.strides)
        for i, (k, s) in enumerate(zip(cfg.kernel_sizes, cfg.strides)):
            h = nc.conv1d(h, self.params[f"enc{i}.w"], self.params[f"enc{i}.b"], stride=s, padding=(k - s) // 2)
            if i < n - 1:
                ht = nc.transpose(h, (0, 2, 1))
                ht = nc.rms_norm(ht, self.params[f"enc{i}.g"])
                h = nc.transpose(nc.tanh(ht), (0, 2, 1))
        return sq_quantize_ste(h, cfg.spec)

    def _dec(self, z):
        cfg = self.cfg
        h = z
        n = len(cfg.strides)
        rk = tuple(reversed(cfg.kernel_sizes))
        rs = tuple(reversed(cfg.strides))
        for i, (k, s) in enumerate(zip(rk, rs)):
            h = nc.conv1d_transpose(h, self.params[f"dec{i}.w"], self.params[f"dec{i}.b"], stride=s, padding=(k - s) // 2)
            if i < n - 1:
                ht = nc.transpose(h, (0, 2, 1))
                ht = nc.rms_norm(ht, self.params[f"dec{i}.g"])
                h = nc.transpose(nc.tanh(ht), (0, 2, 1))
        return h

    def snr(self, w):
        with nc.no_grad():
            z = self._enc(Tensor(w.samples[None, None, :]))
            y = self._dec(z)
        est = np.clip(y.data[0, 0], -1, 1)
        return cd.recon_metrics(w, cd.Waveform(est))["snr_db"]


def run(steps, lr, n_clips, batch, kernels, strides, seed=0, mag_scale=0.0078):
    rng = np.random.default_rng(1)
    train = cd.sine_mixture_dataset(n_clips, rng)
    held = cd.sine_mixture_dataset(12, rng)
    cfg = cd.CodecConfig(spec=LatticeSpec(9, 32), kernel_sizes=kernels, strides=strides)
    codec = NormCodec(cfg, np.random.default_rng(seed))
    opt = Adam(codec.params, lr=lr)
    clips = np.stack([w.samples for w in train])
    r = np.random.default_rng(seed)
    t0 = time.perf_counter()
    for step in range(steps):
        idx = r.integers(0, n_clips, size=batch)
        x = Tensor(clips[idx][:, None, :])
        y = codec._dec(codec._enc(x))
        diff = nc.add(y, nc.mul(x, -1.0))
        l1 = nc.mean(nc.abs_(diff))
        mag_ref = nc.mul(cd.stft_mag_tape(Tensor(clips[idx])), mag_scale)
        mag_est = nc.mul(cd.stft_mag_tape(nc.reshape(y, (batch, clips.shape[1]))), mag_scale)
        l2 = nc.mean(nc.square(nc.add(mag_est, nc.mul(mag_ref, -1.0))))
        loss = nc.add(l1, l2)
        opt.zero_grad()
        loss.backward()
        opt.step(lr=warmup_cosine_lr(step, steps, lr, warmup=50))
        if step % 500 == 0:
            snrs = [codec.snr(w) for w in held[:6]]
            print(f"  step {step}: loss={float(loss.data):.4f} snr={np.mean(snrs):.2f}", flush=True)
    snrs = [codec.snr(w) for w in held]
    print(f"NORM steps={steps} lr={lr} clips={n_clips} b={batch} k={kernels} s={strides}: "
          f"SNR mean {np.mean(snrs):.2f} min {np.min(snrs):.2f} ({time.perf_counter()-t0:.0f}s)", flush=True)


if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv) > 1 else "a"
    if mode == "a":
        run(steps=2500, lr=2e-3, n_clips=160, batch=8, kernels=(8, 16, 20), strides=(4, 8, 10))
    elif mode == "b":
        run(steps=2500, lr=5e-3, n_clips=160, batch=8, kernels=(8, 16, 20), strides=(4, 8, 10))
    elif mode == "c":
        run(steps=2500, lr=2e-3, n_clips=160, batch=8, kernels=(4, 20, 32), strides=(2, 10, 16))
