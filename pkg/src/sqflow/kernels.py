"""Hot inner loops: window gather/scatter behind a switchable backend.

The scatter-adds in the convolution and STFT backward passes are the only
loops numpy cannot vectorize well (``np.add.at`` is an order of magnitude
slower than a compiled loop). They get numba ``@njit`` implementations
with pure-numpy fallbacks. Select with::

    SQFLOW_KERNELS=numba   # default when numba imports
    SQFLOW_KERNELS=numpy   # force the fallback

``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
    _HAVE_NUMBA = False


def _pick_backend() -> str:
    want = os.environ.get("SQFLOW_KERNELS", "").strip().lower()
    if want in ("numba", "numpy"):
        if want == "numba" and not _HAVE_NUMBA:
            raise RuntimeError("SQFLOW_KERNELS=numba but numba is not importable")
        return want
    return "numba" if _HAVE_NUMBA else "numpy"


_backend = _pick_backend()


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return _backend


def use_backend(name: str):
    """Switch backends at runtime (tests and benchmarks)."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


# -- gather: shared by both backends (stride tricks + copy is already fast) ---

def im2col(x: np.ndarray, K: int, stride: int, padding: int) -> np.ndarray:
    """x (B, C, L) -> columns (B, Lout, C*K) for a kernel-K stride-s conv."""
    B, C, L = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(x, K, axis=2)[:, :, ::stride]
    # win: (B, C, Lout, K) -> (B, Lout, C, K) -> (B, Lout, C*K)
    lout = win.shape[2]
    return np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B, lout, C * K)


def extract_frames(x: np.ndarray, size: int, hop: int) -> np.ndarray:
    """x (B, L) -> frames (B, n_frames, size) with hop-spaced starts."""
    win = np.lib.stride_tricks.sliding_window_view(x, size, axis=-1)[:, ::hop]
    return np.ascontiguousarray(win)


# -- scatter: numba fast path -------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _col2im_numba(cols, C, L, K, stride, padding):
        B, lout, _ = cols.shape
        out = np.zeros((B, C, L + 2 * padding), dtype=np.float32)
        for b in range(B):
            for t in range(lout):
                base = t * stride
                for c in range(C):
                    row = cols[b, t]
                    off = c * K
                    for k in range(K):
                        out[b, c, base + k] += row[off + k]
        return out[:, :, padding:padding + L]

    @njit(cache=True)
    def _overlap_add_numba(frames, hop, L):
        B, n, size = frames.shape
        out = np.zeros((B, L), dtype=np.float32)
        for b in range(B):
            for t in range(n):
                base = t * hop
                for k in range(size):
                    out[b, base + k] += frames[b, t, k]
        return out


# -- scatter: numpy fallback ----------------------------------------------------

def _col2im_numpy(cols: np.ndarray, C: int, L: int, K: int, stride: int, padding: int) -> np.ndarray:
    B, lout, _ = cols.shape
    out = np.zeros((B, C, L + 2 * padding), dtype=np.float32)
    src = cols.reshape(B, lout, C, K)
    starts = np.arange(lout) * stride
    idx = starts[:, None] + np.arange(K)[None, :]  # (Lout, K)
    np.add.at(out, (slice(None), slice(None), idx.reshape(-1)),
              src.transpose(0, 2, 1, 3).reshape(B, C, -1))
    return out[:, :, padding:padding + L]


def _overlap_add_numpy(frames: np.ndarray, hop: int, L: int) -> np.ndarray:
    B, n, size = frames.shape
    out = np.zeros((B, L), dtype=np.float32)
    starts = np.arange(n) * hop
    idx = (starts[:, None] + np.arange(size)[None, :]).reshape(-1)
    np.add.at(out, (slice(None), idx), frames.reshape(B, -1))
    return out


# -- dispatch -------------------------------------------------------------------

def col2im(cols: np.ndarray, C: int, L: int, K: int, stride: int, padding: int) -> np.ndarray:
    """Adjoint of im2col: scatter columns (B, Lout, C*K) back to (B, C, L)."""
    cols = np.ascontiguousarray(cols, dtype=np.float32)
    if _backend == "numba":
        return _col2im_numba(cols, C, L, K, stride, padding)
    return _col2im_numpy(cols, C, L, K, stride, padding)


def overlap_add(frames: np.ndarray, hop: int, L: int) -> np.ndarray:
    """Adjoint of extract_frames: scatter (B, n, size) back to (B, L)."""
    frames = np.ascontiguousarray(frames, dtype=np.float32)
    if _backend == "numba":
        return _overlap_add_numba(frames, hop, L)
    return _overlap_add_numpy(frames, hop, L)
