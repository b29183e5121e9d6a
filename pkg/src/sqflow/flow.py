"""Flow matching on the scalar latent space.

Data and noise are joined by x_t = a_t * x + b_t * eps with a linear
(default) or cosine schedule; the network regresses the path velocity
da_t * x + db_t * eps, which for the linear schedule is the constant
x - eps. Sampling integrates dx = v dt with explicit Euler from t=0
(pure noise) to t=1, combining conditional and unconditional predictions
with a guidance scale at every step, and optionally snaps the final
state onto the quantization lattice.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import numcore as nc
from .backbone import NULL_TOKEN
from .numcore import ShapeError, Tensor
from .sqlat import LatticeSpec, ScalarLatent, sq_quantize


@dataclass
class FlowConfig:
    spec: LatticeSpec
    schedule: str = "linear"
    steps: int = 25
    guidance_scale: float = 5.0
    sq_regularize: bool = True

    def __post_init__(self):
        if self.schedule not in ("linear", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.guidance_scale < 0:
            raise ValueError("guidance_scale must be >= 0")


@dataclass
class ConditionBundle:
    """Conditioning for one utterance: text token ids, a style vector, and
    the latent length the sampler should initialize."""

    text_tokens: tuple[int, ...]
    style_vector: np.ndarray
    target_frames: int

    def __post_init__(self):
        self.text_tokens = tuple(int(t) for t in self.text_tokens)
        self.style_vector = np.asarray(self.style_vector, dtype=np.float32)
        if self.target_frames < 1:
            raise ValueError("target_frames must be >= 1")


def null_condition(style_dim: int, target_frames: int) -> ConditionBundle:
    """The unconditional branch: a single reserved token, zero style."""
    return ConditionBundle(text_tokens=(NULL_TOKEN,),
                           style_vector=np.zeros(style_dim, dtype=np.float32),
                           target_frames=target_frames)


def schedule_coeffs(t: float, kind: str = "linear") -> tuple[float, float, float, float]:
    """(a_t, b_t, da_t, db_t) for the interpolation x_t = a_t x + b_t eps."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"schedule_coeffs: t={t} outside [0, 1]")
    if kind == "linear":
        return float(t), float(1.0 - t), 1.0, -1.0
    if kind == "cosine":
        half_pi = math.pi / 2.0
        # exact endpoints (cos(pi/2) in floats is ~6e-17, not 0)
        if t == 0.0:
            return 0.0, 1.0, half_pi, 0.0
        if t == 1.0:
            return 1.0, 0.0, 0.0, -half_pi
        return (math.sin(half_pi * t), math.cos(half_pi * t),
                half_pi * math.cos(half_pi * t), -half_pi * math.sin(half_pi * t))
    raise ValueError(f"unknown schedule {kind!r}")


def interpolate(x: np.ndarray, eps: np.ndarray, t: float, kind: str = "linear") -> np.ndarray:
    """Point on the noise-to-data path: a_t * x + b_t * eps."""
    x = np.asarray(x, dtype=np.float32)
    eps = np.asarray(eps, dtype=np.float32)
    if x.shape != eps.shape:
        raise ShapeError("interpolate", f"shapes {x.shape} and {eps.shape} differ")
    a, b, _, _ = schedule_coeffs(t, kind)
    return (np.float32(a) * x + np.float32(b) * eps).astype(np.float32)


def target_velocity(x: np.ndarray, eps: np.ndarray, t: float, kind: str = "linear") -> np.ndarray:
    """Path velocity da_t * x + db_t * eps; x - eps for the linear schedule."""
    x = np.asarray(x, dtype=np.float32)
    eps = np.asarray(eps, dtype=np.float32)
    if x.shape != eps.shape:
        raise ShapeError("target_velocity", f"shapes {x.shape} and {eps.shape} differ")
    _, _, da, db = schedule_coeffs(t, kind)
    return (np.float32(da) * x + np.float32(db) * eps).astype(np.float32)


def cfm_loss(model, x: np.ndarray, cond: ConditionBundle,
             rng: np.random.Generator, kind: str = "linear",
             t: float | None = None, eps: np.ndarray | None = None) -> Tensor:
    """Squared-error velocity regression at a random (t, eps) draw.

    ``model`` is any (x_t, t, cond) -> velocity Tensor evaluator. ``t``
    and ``eps`` can be pinned for deterministic tests.
    """
    x = np.asarray(x, dtype=np.float32)
    if t is None:
        t = float(rng.uniform(0.0, 1.0))
    if eps is None:
        eps = rng.standard_normal(x.shape).astype(np.float32)
    x_t = interpolate(x, eps, t, kind)
    target = target_velocity(x, eps, t, kind)
    v = model(x_t, t, cond)
    diff = nc.add(v, Tensor(-target))
    return nc.mean(nc.square(diff))


def cfm_loss_batch(model, x: np.ndarray, tokens: np.ndarray, styles: np.ndarray,
                   t: float, eps: np.ndarray, kind: str = "linear") -> Tensor:
    """Batched CFM loss sharing one t across the minibatch.

    ``model`` must expose ``forward_batch(x_t, t, tokens, styles)``;
    x and eps are (B, T, d).
    """
    x_t = interpolate(x, eps, t, kind)
    target = target_velocity(x, eps, t, kind)
    v = model.forward_batch(x_t, t, tokens, styles)
    diff = nc.add(v, Tensor(-target))
    return nc.mean(nc.square(diff))


def cfg_combine(v_uncond: np.ndarray, v_cond: np.ndarray, gamma: float) -> np.ndarray:
    """Guided velocity v_u + gamma * (v_c - v_u); gamma=1 is conditional
    only, gamma=0 unconditional only."""
    v_uncond = np.asarray(v_uncond, dtype=np.float32)
    v_cond = np.asarray(v_cond, dtype=np.float32)
    if v_uncond.shape != v_cond.shape:
        raise ShapeError("cfg_combine", f"shapes {v_uncond.shape} and {v_cond.shape} differ")
    return (v_uncond + np.float32(gamma) * (v_cond - v_uncond)).astype(np.float32)


def sample(model, cond: ConditionBundle, cfg: FlowConfig,
           rng: np.random.Generator,
           null_cond: ConditionBundle | None = None) -> ScalarLatent:
    """Euler-integrate the guided velocity field from noise to a latent.

    Runs ``cfg.steps`` uniform steps over t in {0, 1/N, ..., (N-1)/N}. The
    final state is snapped onto the lattice when ``cfg.sq_regularize``.
    ``null_cond`` overrides the unconditional branch (e.g. a freshly
    randomized condition standing in for a model that never saw the
    reserved null token).
    """
    gamma = cfg.guidance_scale
    n = cfg.steps
    d = cfg.spec.d
    x0 = rng.standard_normal((cond.target_frames, d)).astype(np.float32)
    null = null_cond if null_cond is not None else null_condition(
        cond.style_vector.shape[0], cond.target_frames)
    # float64 accumulator keeps Euler exact for constant fields; the model
    # always sees float32
    acc = x0.astype(np.float64)
    dt = 1.0 / n
    with nc.no_grad():
        for i in range(n):
            t = i / n
            x = acc.astype(np.float32)
            if gamma == 0.0:
                v_hat = model(x, t, null).data
            elif gamma == 1.0:
                v_hat = model(x, t, cond).data
            else:
                v_c = model(x, t, cond).data
                v_u = model(x, t, null).data
                v_hat = cfg_combine(v_u, v_c, gamma)
            if not np.all(np.isfinite(v_hat)):
                raise RuntimeError(f"sample: non-finite velocity at step {i} (t={t:.4f})")
            acc += dt * v_hat.astype(np.float64)
    out = acc.astype(np.float32)
    if cfg.sq_regularize:
        out = sq_quantize(out, cfg.spec)
    return ScalarLatent(out, cfg.spec)
