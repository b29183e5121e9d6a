"""Scalar-quantization lattice: tanh squash, round to {k/S}, utilities.

The quantizer maps any real to the grid {k/S : k = -S..S} via
``round(tanh(h) * S) / S``. Rounding ties go half away from zero so the
result is platform independent. The straight-through variant keeps the
tanh Jacobian and treats the rounding step as identity, letting encoder
gradients pass through the bottleneck.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import Tensor, round_ste, tanh


@dataclass(frozen=True)
class LatticeSpec:
    """Per-frame scalar latent space: values {k/S}^d, k in -S..S."""

    S: int
    d: int

    def __post_init__(self):
        if self.S < 1 or self.d < 1:
            raise ValueError(f"LatticeSpec needs S >= 1 and d >= 1, got S={self.S}, d={self.d}")

    @property
    def n_levels(self) -> int:
        return 2 * self.S + 1


@dataclass
class ScalarLatent:
    """Lattice-valued frames (T, d) together with their lattice spec."""

    frames: np.ndarray
    spec: LatticeSpec

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.spec.d:
            raise ValueError(f"ScalarLatent frames must be (T, {self.spec.d}), got {self.frames.shape}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with ties away from zero (not banker's)."""
    x = np.asarray(x)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def sq_quantize(h: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """round(tanh(h) * S) / S elementwise; output lies on the lattice."""
    h = np.asarray(h, dtype=np.float32)
    if not np.all(np.isfinite(h)):
        raise ValueError("sq_quantize: input contains non-finite values")
    y = np.tanh(h) * np.float32(spec.S)
    return (round_half_away(y) / np.float32(spec.S)).astype(np.float32)


def sq_quantize_ste(h: Tensor, spec: LatticeSpec) -> Tensor:
    """Quantize on the tape: forward equals sq_quantize, backward keeps
    only the tanh Jacobian (straight-through rounding)."""
    return round_ste(tanh(h), float(spec.S))


def lattice_values(spec: LatticeSpec) -> np.ndarray:
    """The 2S+1 representable values, strictly increasing from -1 to 1."""
    return (np.arange(-spec.S, spec.S + 1, dtype=np.float32) / np.float32(spec.S)).astype(np.float32)


def is_on_lattice(x: np.ndarray, spec: LatticeSpec, tol: float = 1e-5):
    """Elementwise lattice membership within tol, plus the true fraction."""
    if tol < 0:
        raise ValueError("is_on_lattice: tol must be >= 0")
    x = np.asarray(x, dtype=np.float32)
    nearest = np.clip(round_half_away(x.astype(np.float64) * spec.S) / spec.S, -1.0, 1.0)
    mask = np.abs(x.astype(np.float64) - nearest) <= tol
    frac = float(mask.mean()) if x.size else 1.0
    return mask, frac
