"""Scratch probe for codec SNR calibration (not part of the package)."""
import sys
import time

import numpy as np

from sqflow import codec as cd
from sqflow import numcore as nc
from sqflow.numcore import Tensor
from sqflow.optim import Adam, warmup_cosine_lr
from sqflow.sqlat import LatticeSpec


def run(kernels, steps, batch, lr, mag_scale, quantize, seed=0, n_train=64, stft_w=1.0):
    rng = np.random.default_rng(1)
    train = cd.sine_mixture_dataset(n_train, rng)
    held = cd.sine_mixture_dataset(16, rng)
    cfg = cd.CodecConfig(spec=LatticeSpec(9, 32), kernel_sizes=kernels)
    codec = cd.SQCodec(cfg, np.random.default_rng(seed))
    opt = Adam(codec.parameters(), lr=lr)
    clips = np.stack([w.samples for w in train])
    r = np.random.default_rng(seed)
    t0 = time.perf_counter()
    for step in range(steps):
        idx = r.integers(0, len(train), size=batch)
        x = Tensor(clips[idx][:, None, :])
        if quantize:
            z = codec._encode_tape(x)
        else:  # identity bottleneck: tanh only
            h = x
            n = len(cfg.strides)
            for i, (k, s) in enumerate(zip(cfg.kernel_sizes, cfg.strides)):
                h = nc.conv1d(h, codec.params[f"enc{i}.w"], codec.params[f"enc{i}.b"], stride=s, padding=(k - s) // 2)
                if i < n - 1:
                    h = nc.tanh(h)
            z = nc.tanh(h)
        y = codec._decode_tape(z)
        diff = nc.add(y, nc.mul(x, -1.0))
        l1 = nc.mean(nc.abs_(diff))
        mag_ref = nc.mul(cd.stft_mag_tape(Tensor(clips[idx])), mag_scale)
        mag_est = nc.mul(cd.stft_mag_tape(nc.reshape(y, (batch, clips.shape[1]))), mag_scale)
        l2 = nc.mean(nc.square(nc.add(mag_est, nc.mul(mag_ref, -1.0))))
        loss = nc.add(l1, nc.mul(l2, stft_w))
        opt.zero_grad()
        loss.backward()
        opt.step(lr=warmup_cosine_lr(step, steps, lr, warmup=50))
        if step % 500 == 0:
            snrs = [cd.recon_metrics(w, codec.decode(codec.encode(w)))["snr_db"] for w in held[:8]]
            print(f"  step {step}: loss={float(loss.data):.4f} snr={np.mean(snrs):.2f}", flush=True)
    snrs = [cd.recon_metrics(w, codec.decode(codec.encode(w)))["snr_db"] for w in held]
    dt = time.perf_counter() - t0
    print(f"kernels={kernels} steps={steps} b={batch} lr={lr} mag_scale={mag_scale} q={quantize}: "
          f"SNR mean {np.mean(snrs):.2f} min {np.min(snrs):.2f} ({dt:.0f}s)", flush=True)


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    if which in ("all", "a"):
        # balanced mags (2/sum(hann256) ~ 0.0078), modest steps
        run(kernels=(8, 16, 20), steps=2000, batch=8, lr=2e-3, mag_scale=0.0078, quantize=True)
    if which in ("all", "b"):
        run(kernels=(16, 32, 40), steps=2000, batch=8, lr=2e-3, mag_scale=0.0078, quantize=True)
    if which in ("all", "c"):
        # no quantization control
        run(kernels=(16, 32, 40), steps=2000, batch=8, lr=2e-3, mag_scale=0.0078, quantize=False)
