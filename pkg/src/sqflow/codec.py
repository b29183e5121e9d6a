"""Toy waveform codec with a scalar-quantized bottleneck.

Three strided conv blocks squeeze 16 kHz audio down to 50 lattice-valued
frames per second; three transposed conv blocks mirror them back. The
bottleneck is the straight-through quantizer, so reconstruction gradients
reach the encoder. Training data is synthetic sine mixtures; the loss is
time-domain L1 plus an STFT-magnitude L2 term.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .checkpoint import Checkpoint, config_digest
from .numcore import Tensor
from .optim import Adam, warmup_cosine_lr
from .sqlat import LatticeSpec, ScalarLatent, is_on_lattice, sq_quantize_ste


@dataclass
class Waveform:
    """Mono audio in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Waveform rejects non-finite samples")
        peak = float(np.abs(self.samples).max()) if self.samples.size else 0.0
        if peak > 1.0 + 1e-4:
            raise ValueError(f"Waveform samples exceed [-1, 1] (peak {peak:.4f})")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class CodecConfig:
    spec: LatticeSpec = field(default_factory=lambda: LatticeSpec(9, 32))
    sample_rate: int = 16000
    frames_per_second: int = 50
    channels: tuple[int, ...] = (32, 64)
    strides: tuple[int, ...] = (4, 8, 10)
    kernel_sizes: tuple[int, ...] = (8, 16, 20)

    def __post_init__(self):
        hop = 1
        for s in self.strides:
            hop *= s
        if hop * self.frames_per_second != self.sample_rate:
            raise ValueError(
                f"strides {self.strides} give hop {hop}, need {self.sample_rate // self.frames_per_second}")
        for k, s in zip(self.kernel_sizes, self.strides):
            if k < s or (k - s) % 2:
                raise ValueError(f"kernel {k} needs k >= stride {s} with even overlap")

    @property
    def hop(self) -> int:
        out = 1
        for s in self.strides:
            out *= s
        return out

    def to_dict(self) -> dict:
        return {"S": self.spec.S, "d": self.spec.d, "sample_rate": self.sample_rate,
                "frames_per_second": self.frames_per_second, "channels": list(self.channels),
                "strides": list(self.strides), "kernel_sizes": list(self.kernel_sizes)}

    @classmethod
    def from_dict(cls, cfgd: dict) -> "CodecConfig":
        return cls(spec=LatticeSpec(int(cfgd["S"]), int(cfgd["d"])),
                   sample_rate=int(cfgd["sample_rate"]),
                   frames_per_second=int(cfgd["frames_per_second"]),
                   channels=tuple(cfgd["channels"]), strides=tuple(cfgd["strides"]),
                   kernel_sizes=tuple(cfgd["kernel_sizes"]))


@dataclass
class CodecTrainConfig:
    steps: int = 1500
    batch: int = 8
    lr: float = 2e-3
    lambda_stft: float = 1.0
    seed: int = 0
    n_clips: int = 64
    log_every: int = 100


class SQCodec:
    """Conv encoder -> straight-through quantizer -> transposed-conv decoder."""

    def __init__(self, cfg: CodecConfig, rng: np.random.Generator):
        self.cfg = cfg
        widths = (1,) + tuple(cfg.channels) + (cfg.spec.d,)
        self.params: dict[str, Tensor] = {}
        for i, (cin, cout, k) in enumerate(zip(widths[:-1], widths[1:], cfg.kernel_sizes)):
            std = 1.0 / math.sqrt(cin * k)
            self.params[f"enc{i}.w"] = Tensor(rng.normal(0, std, (cout, cin, k)), requires_grad=True)
            self.params[f"enc{i}.b"] = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)
        rwidths = (cfg.spec.d,) + tuple(reversed(cfg.channels)) + (1,)
        rkernels = tuple(reversed(cfg.kernel_sizes))
        for i, (cin, cout, k) in enumerate(zip(rwidths[:-1], rwidths[1:], rkernels)):
            std = 1.0 / math.sqrt(cin * k)
            self.params[f"dec{i}.w"] = Tensor(rng.normal(0, std, (cin, cout, k)), requires_grad=True)
            self.params[f"dec{i}.b"] = Tensor(np.zeros(cout, dtype=np.float32), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def load_state(self, tensors: dict[str, np.ndarray]):
        for k, p in self.params.items():
            p.data = tensors[k].astype(np.float32).copy()

    def _encode_tape(self, x: Tensor) -> Tensor:
        """x (B, 1, L) -> quantized latent (B, d, T) on the tape."""
        cfg = self.cfg
        h = x
        n = len(cfg.strides)
        for i, (k, s) in enumerate(zip(cfg.kernel_sizes, cfg.strides)):
            h = nc.conv1d(h, self.params[f"enc{i}.w"], self.params[f"enc{i}.b"],
                          stride=s, padding=(k - s) // 2)
            if i < n - 1:
                h = nc.tanh(h)
        return sq_quantize_ste(h, cfg.spec)

    def _decode_tape(self, z: Tensor) -> Tensor:
        """z (B, d, T) -> waveform (B, 1, T*hop) on the tape, unclamped."""
        cfg = self.cfg
        h = z
        n = len(cfg.strides)
        rkernels = tuple(reversed(cfg.kernel_sizes))
        rstrides = tuple(reversed(cfg.strides))
        for i, (k, s) in enumerate(zip(rkernels, rstrides)):
            h = nc.conv1d_transpose(h, self.params[f"dec{i}.w"], self.params[f"dec{i}.b"],
                                    stride=s, padding=(k - s) // 2)
            if i < n - 1:
                h = nc.tanh(h)
        return h

    def pad_amount(self, n_samples: int) -> int:
        hop = self.cfg.hop
        return (-n_samples) % hop

    def encode(self, w: Waveform, return_padding: bool = False):
        """Waveform -> lattice-valued latent (ceil(len/hop) frames)."""
        if w.samples.size == 0:
            raise ValueError("encode: empty waveform")
        if w.sample_rate != self.cfg.sample_rate:
            raise ValueError(f"encode: waveform rate {w.sample_rate} != codec rate {self.cfg.sample_rate}")
        pad = self.pad_amount(w.samples.size)
        x = np.pad(w.samples, (0, pad))[None, None, :]
        with nc.no_grad():
            z = self._encode_tape(Tensor(x))
        latent = ScalarLatent(z.data[0].T.copy(), self.cfg.spec)
        return (latent, pad) if return_padding else latent

    def decode(self, z: ScalarLatent) -> Waveform:
        """Latent -> waveform of T/fps seconds, clamped to [-1, 1]."""
        if z.spec != self.cfg.spec:
            raise ValueError(f"decode: latent spec {z.spec} != codec spec {self.cfg.spec}")
        x = z.frames.T[None, :, :]
        with nc.no_grad():
            y = self._decode_tape(Tensor(x))
        samples = np.clip(y.data[0, 0], -1.0, 1.0)
        return Waveform(samples, self.cfg.sample_rate)


# -- STFT magnitude (tape + numpy flavors share the DFT matrices) -------------

def _dft_mats(size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = np.arange(size // 2 + 1)
    t = np.arange(size)
    ang = 2.0 * np.pi * np.outer(t, k) / size
    window = np.hanning(size)
    return (np.cos(ang).astype(np.float32), np.sin(ang).astype(np.float32),
            window.astype(np.float32))


_DFT_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _dft(size: int):
    if size not in _DFT_CACHE:
        _DFT_CACHE[size] = _dft_mats(size)
    return _DFT_CACHE[size]


def stft_mag_tape(x: Tensor, size: int = 256, hop: int = 64) -> Tensor:
    """Differentiable magnitude spectrogram of x (B, L)."""
    cos, sin, window = _dft(size)
    frames = nc.mul(nc.frame(x, size, hop), Tensor(window))
    re = nc.matmul(frames, Tensor(cos))
    im = nc.matmul(frames, Tensor(sin))
    return nc.sqrt(nc.add(nc.add(nc.square(re), nc.square(im)), 1e-10))


def stft_mag_np(x: np.ndarray, size: int = 256, hop: int = 64) -> np.ndarray:
    """Magnitude spectrogram of 1-D x via numpy rfft (metrics path)."""
    _, _, window = _dft(size)
    n = 1 + (x.size - size) // hop
    idx = np.arange(size)[None, :] + hop * np.arange(n)[:, None]
    return np.abs(np.fft.rfft(x[idx] * window, axis=-1)).astype(np.float32)


# -- metrics -------------------------------------------------------------------

SNR_CAP_DB = 99.0


def recon_metrics(ref: Waveform, est: Waveform) -> dict[str, float]:
    """SNR in dB (capped at 99) and mean L2 magnitude-spectrogram distance."""
    r, e = ref.samples, est.samples
    if r.shape != e.shape:
        raise ValueError(f"recon_metrics: lengths differ ({r.size} vs {e.size})")
    p_sig = float(np.sum(r.astype(np.float64) ** 2))
    if p_sig == 0.0:
        raise ValueError("recon_metrics: zero-energy reference")
    p_err = float(np.sum((r.astype(np.float64) - e.astype(np.float64)) ** 2))
    snr = SNR_CAP_DB if p_err == 0.0 else min(SNR_CAP_DB, 10.0 * math.log10(p_sig / p_err))
    mr = stft_mag_np(r)
    me = stft_mag_np(e)
    stft_dist = float(np.sqrt(((mr - me) ** 2).sum(axis=-1)).mean())
    return {"snr_db": float(snr), "stft_dist": stft_dist}


# -- synthetic training data -----------------------------------------------------

def sine_mixture(rng: np.random.Generator, sample_rate: int = 16000,
                 duration_s: float = 1.0) -> Waveform:
    """1-4 sinusoids (80-4000 Hz) with random amplitude envelopes."""
    n = int(round(sample_rate * duration_s))
    t = np.arange(n) / sample_rate
    out = np.zeros(n, dtype=np.float64)
    for _ in range(int(rng.integers(1, 5))):
        freq = float(np.exp(rng.uniform(np.log(80.0), np.log(4000.0))))
        phase = float(rng.uniform(0, 2 * np.pi))
        amp = float(rng.uniform(0.2, 1.0))
        # slow raised-cosine envelope with random center/width
        center = float(rng.uniform(0.2, 0.8)) * duration_s
        width = float(rng.uniform(0.3, 1.0)) * duration_s
        env = 0.5 * (1.0 + np.cos(np.clip((t - center) / width, -1, 1) * np.pi))
        out += amp * env * np.sin(2 * np.pi * freq * t + phase)
    peak = np.abs(out).max()
    if peak > 0:
        out *= float(rng.uniform(0.5, 0.95)) / peak
    return Waveform(out.astype(np.float32), sample_rate)


def sine_mixture_dataset(n_clips: int, rng: np.random.Generator,
                         sample_rate: int = 16000) -> list[Waveform]:
    return [sine_mixture(rng, sample_rate) for _ in range(n_clips)]


# -- training ---------------------------------------------------------------------

def reconstruction_loss(codec: SQCodec, batch: np.ndarray,
                        lambda_stft: float = 1.0) -> tuple[Tensor, Tensor]:
    """(total, l1) losses for a batch (B, L) of waveforms."""
    x = Tensor(batch[:, None, :])
    z = codec._encode_tape(x)
    y = codec._decode_tape(z)
    diff = nc.add(y, nc.mul(x, -1.0))
    l1 = nc.mean(nc.abs_(diff))
    if lambda_stft == 0.0:
        return l1, l1
    mag_ref = stft_mag_tape(Tensor(batch))
    mag_est = stft_mag_tape(nc.reshape(y, (batch.shape[0], batch.shape[1])))
    l2 = nc.mean(nc.square(nc.add(mag_est, nc.mul(mag_ref, -1.0))))
    total = nc.add(l1, nc.mul(l2, float(lambda_stft)))
    return total, l1


def train_codec(dataset: list[Waveform], cfg: CodecConfig,
                opt_cfg: CodecTrainConfig) -> tuple[SQCodec, Checkpoint]:
    """Train on waveform clips; returns the codec and its checkpoint.

    Raises RuntimeError with diagnostics if the loss goes non-finite.
    """
    if not dataset:
        raise ValueError("train_codec: empty dataset")
    rng = np.random.default_rng(opt_cfg.seed)
    codec = SQCodec(cfg, rng)
    opt = Adam(codec.parameters(), lr=opt_cfg.lr)
    clips = np.stack([w.samples for w in dataset])
    history: list[float] = []
    first = last = None
    for step in range(opt_cfg.steps):
        idx = rng.integers(0, len(dataset), size=min(opt_cfg.batch, len(dataset)))
        loss, _ = reconstruction_loss(codec, clips[idx], opt_cfg.lambda_stft)
        val = float(loss.data)
        if not math.isfinite(val):
            raise RuntimeError(f"train_codec: non-finite loss at step {step} (lr={opt_cfg.lr})")
        opt.zero_grad()
        loss.backward()
        opt.step(lr=warmup_cosine_lr(step, opt_cfg.steps, opt_cfg.lr, warmup=50))
        if first is None:
            first = val
        last = val
        if step % opt_cfg.log_every == 0:
            history.append(val)
    meta = {
        "kind": "codec",
        "seed": opt_cfg.seed,
        "step": opt_cfg.steps,
        "config": cfg.to_dict(),
        "config_digest": config_digest(cfg.to_dict()),
        "initial_loss": first,
        "final_loss": last,
    }
    tensors = {k: p.data.copy() for k, p in codec.parameters().items()}
    return codec, Checkpoint(tensors=tensors, meta=meta)


def codec_from_checkpoint(ckpt: Checkpoint) -> SQCodec:
    cfg = CodecConfig.from_dict(ckpt.meta["config"])
    codec = SQCodec(cfg, np.random.default_rng(0))
    codec.load_state(ckpt.tensors)
    return codec


def latent_fraction_on_lattice(codec: SQCodec, w: Waveform, tol: float = 1e-5) -> float:
    latent = codec.encode(w)
    _, frac = is_on_lattice(latent.frames, codec.cfg.spec, tol)
    return frac


# -- 16-bit PCM mono WAV files ------------------------------------------------------

def read_wav(path: str) -> Waveform:
    with wave.open(path, "rb") as f:
        if f.getnchannels() != 1:
            raise ValueError(f"read_wav: expected mono, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise ValueError(f"read_wav: expected 16-bit PCM, got {8 * f.getsampwidth()}-bit")
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return Waveform(samples, rate)


def write_wav(path: str, w: Waveform):
    pcm = np.clip(np.round(w.samples.astype(np.float64) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate)
        f.writeframes(pcm.tobytes())
