"""Batched radix-2 FFT and the cosine transforms built on it.

The solver's separation-of-variables preconditioner expands grid columns in
the half-sample cosine basis

    X[l] = sqrt(2/N) * sum_k x[k] cos(pi (k + 1/2) l / N),     l = 0..N-1,

whose inverse carries a half weight on the constant mode:

    x[k] = sqrt(2/N) * (X[0]/2 + sum_{l>=1} X[l] cos(pi (k + 1/2) l / N)).

For power-of-two N the pair is evaluated through a single complex FFT of the
even/odd-folded sequence (reorder to [x0, x2, ..., x5, x3, x1], transform,
rotate by a quarter-sample twiddle); other lengths fall back to direct
summation against a cached cosine matrix, which also serves as the oracle in
the tests.  All routines are batched: the transform runs along ``axis`` and
broadcasts over every other axis.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch

__all__ = [
    "fft", "ifft", "dct_forward", "dct_inverse",
    "dct_forward_direct", "dct_inverse_direct", "is_power_of_two",
]


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


# ---------------------------------------------------------------------------
# complex FFT (iterative radix-2, batched over the last axis)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=256)
def _stage_twiddles(span: int) -> np.ndarray:
    w = np.exp(-1j * np.pi * np.arange(span) / span)
    w.setflags(write=False)
    return w


def fft(a, axis: int = -1) -> np.ndarray:
    """Complex DFT with the e^{-2 pi i j k / n} kernel; n must be a power of
    two."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[axis]
    if not is_power_of_two(n):
        raise DimensionMismatch(f"fft length must be a power of two, got {n}")
    moved = axis not in (-1, a.ndim - 1)
    if moved:
        a = np.moveaxis(a, axis, -1)
    out = a[..., _bit_reverse_indices(n)]
    span = 1
    while span < n:
        out = out.reshape(out.shape[:-1] + (n // (2 * span), 2 * span))
        even = out[..., :span]
        odd = out[..., span:] * _stage_twiddles(span)
        out = np.concatenate([even + odd, even - odd], axis=-1)
        out = out.reshape(out.shape[:-2] + (n,))
        span *= 2
    return np.moveaxis(out, -1, axis) if moved else out


def ifft(a, axis: int = -1) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    return np.conj(fft(np.conj(a), axis=axis)) / a.shape[axis]


# ---------------------------------------------------------------------------
# cosine transforms
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _quarter_twiddle(n: int) -> np.ndarray:
    w = np.exp(-0.5j * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=32)
def _cosine_matrix(n: int) -> np.ndarray:
    l = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    C = np.cos(np.pi * (k + 0.5) * l / n)
    C.setflags(write=False)
    return C


def _fold_even_odd(x: np.ndarray) -> np.ndarray:
    """[x0, x2, x4, ..., x5, x3, x1]: evens ascending, odds descending."""
    n = x.shape[-1]
    v = np.empty_like(x)
    half = (n + 1) // 2
    v[..., :half] = x[..., ::2]
    if n > 1:
        v[..., half:] = x[..., n - 1 - (n % 2):: -2]
    return v


def _unfold_even_odd(v: np.ndarray) -> np.ndarray:
    n = v.shape[-1]
    x = np.empty_like(v)
    half = (n + 1) // 2
    x[..., ::2] = v[..., :half]
    if n > 1:
        x[..., 1::2] = v[..., : half - 1: -1]
    return x


def dct_forward(x, axis: int = 0) -> np.ndarray:
    """Half-sample cosine analysis with the sqrt(2/N) scale (see module
    docstring); batched along every axis but ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    if not is_power_of_two(n):
        return dct_forward_direct(x, axis=axis)
    moved = np.moveaxis(x, axis, -1)
    V = fft(_fold_even_odd(np.ascontiguousarray(moved)))
    out = np.sqrt(2.0 / n) * (V * _quarter_twiddle(n)).real
    return np.moveaxis(out, -1, axis)


def dct_inverse(X, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`dct_forward` (half weight on the constant mode)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[axis]
    if not is_power_of_two(n):
        return dct_inverse_direct(X, axis=axis)
    C = np.ascontiguousarray(np.moveaxis(X, axis, -1))
    V = np.empty(C.shape, dtype=np.complex128)
    V[..., 0] = C[..., 0]
    if n > 1:
        theta = np.conj(_quarter_twiddle(n)[1:])
        V[..., 1:] = theta * (C[..., 1:] - 1j * C[..., :0:-1])
    # the IFFT already carries the 1/N: feeding coefficients sqrt(N/2) X
    # reproduces the samples exactly, so the scale here is sqrt(N/2)
    v = ifft(V).real
    out = np.sqrt(n / 2.0) * _unfold_even_odd(v)
    return np.moveaxis(out, -1, axis)


def dct_forward_direct(x, axis: int = 0) -> np.ndarray:
    """O(N^2) analysis by direct summation; any length (oracle/fallback)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    moved = np.moveaxis(x, axis, -1)
    out = np.sqrt(2.0 / n) * (moved @ _cosine_matrix(n).T)
    return np.moveaxis(out, -1, axis)


def dct_inverse_direct(X, axis: int = 0) -> np.ndarray:
    """O(N^2) synthesis by direct summation; any length (oracle/fallback)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[axis]
    weights = np.ones(n)
    weights[0] = 0.5
    basis = weights[:, None] * _cosine_matrix(n)
    moved = np.moveaxis(X, axis, -1)
    out = np.sqrt(2.0 / n) * (moved @ basis)
    return np.moveaxis(out, -1, axis)
