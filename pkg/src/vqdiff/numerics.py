"""Deterministic numeric substrate.

Stable probability transforms, a PSD matrix square root, a bias-corrected
Adam optimizer over flat parameter vectors, seeded RNG construction, and a
central-difference gradient checker. All exact-oracle paths run in float64.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Seeded deterministic generator (PCG64 under the hood).

    The same 64-bit seed reproduces the identical draw sequence within a
    build. Streams are never shared across threads; callers pass the
    generator explicitly.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


def log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Log-probabilities of ``v`` along ``axis``, via max-subtraction.

    ``exp`` of the result sums to 1 within 1e-12 on float64 inputs.

    Raises:
        ValueError: empty input or non-finite entries.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_softmax: empty input")
    if not np.all(np.isfinite(v)):
        raise ValueError("log_softmax: non-finite input")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Probabilities along ``axis``; stable via max-subtraction."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax: empty input")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def psd_sqrt(m: np.ndarray, sym_tol: float = 1e-9) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix.

    Uses a symmetric eigendecomposition; eigenvalues in [-1e-9, 0) are
    clamped to 0.

    Raises:
        ValueError: non-square input, asymmetry beyond ``sym_tol``, or an
            eigenvalue below -1e-9.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"psd_sqrt: expected square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.T)) > sym_tol:
        raise ValueError("psd_sqrt: matrix is not symmetric within tolerance")
    w, q = np.linalg.eigh(m)
    if np.any(w < -1e-9):
        raise ValueError(f"psd_sqrt: eigenvalue {w.min():.3e} below -1e-9; input not PSD")
    w = np.clip(w, 0.0, None)
    return (q * np.sqrt(w)) @ q.T


@dataclass
class AdamState:
    """Adam moment accumulators shaped like the flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int
    lr: float
    beta1: float
    beta2: float
    eps: float = 1e-8

    def __post_init__(self):
        if self.m.shape != self.v.shape:
            raise ValueError("AdamState: moment shapes differ")
        if self.step < 0:
            raise ValueError("AdamState: negative step counter")


def adam_init(n_params: int, lr: float, beta1: float, beta2: float, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=np.zeros(n_params, dtype=np.float64),
        v=np.zeros(n_params, dtype=np.float64),
        step=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Deterministic; returns new arrays."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"adam_step: shape mismatch params {params.shape} grads {grads.shape} state {state.m.shape}"
        )
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, step=step, lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return new_params, new_state


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    analytic_grad: np.ndarray,
    point: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences.

    The per-component relative error is |a - b| / max(1e-8, |a| + |b|).

    Raises:
        FloatingPointError: ``f`` returns a non-finite value at a probe point.
    """
    point = np.asarray(point, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    if point.shape != analytic_grad.shape:
        raise ValueError("finite_diff_check: gradient shape does not match point")
    worst = 0.0
    for i in range(point.size):
        probe = point.copy()
        probe.flat[i] = point.flat[i] + h
        f_plus = float(f(probe))
        probe.flat[i] = point.flat[i] - h
        f_minus = float(f(probe))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise FloatingPointError(f"finite_diff_check: non-finite f at component {i}")
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic_grad.flat[i]
        rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, rel)
    return worst


def categorical(rng: np.random.Generator, p: np.ndarray) -> int:
    """Single draw from a probability vector via inverse CDF."""
    p = np.asarray(p, dtype=np.float64)
    u = rng.random()
    acc = 0.0
    for i in range(p.size - 1):
        acc += p[i]
        if u < acc:
            return i
    return p.size - 1
