"""Hot per-row kernels for the sampling and training inner loops.

Each kernel has a ``*_np`` reference implementation and, when the numba
backend is active, an ``@njit`` twin compiled from the same arithmetic in
the same order so the two paths agree to the last bit wherever summation
order matches. Dispatch happens once at import via ``backend.USE_NUMBA``;
``benchmarks/bench_kernels.py`` times both.

Randomness never enters a kernel: uniform draws are taken outside and
passed in, so both backends consume identical random streams.
"""

import numpy as np

from vqdiff.backend import USE_NUMBA


def categorical_rows_np(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row: probs (N, M), uniforms (N,) -> indices (N,)."""
    n, m = probs.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        u = uniforms[i]
        acc = 0.0
        idx = m - 1
        for j in range(m - 1):
            acc += probs[i, j]
            if u < acc:
                idx = j
                break
        out[i] = idx
    return out


def mix_posteriors_np(table: np.ndarray, weights: np.ndarray, xt: np.ndarray) -> np.ndarray:
    """Posterior mixture per position.

    table: (K+1, K+1, K), entry [i, m, k] = q(prev = m | cur = i, clean = k).
    weights: (N, K) clean-token probabilities. xt: (N,) current tokens.
    Returns (N, K+1) mixed distributions.
    """
    n, k = weights.shape
    out = np.empty((n, k + 1), dtype=np.float64)
    for i in range(n):
        p = table[xt[i]]  # (K+1, K)
        for m in range(k + 1):
            acc = 0.0
            for c in range(k):
                acc += p[m, c] * weights[i, c]
            out[i, m] = acc
    return out


def truncate_rows_np(probs: np.ndarray, ratio: float) -> np.ndarray:
    """Keep the smallest top-probability set reaching cumulative mass >= ratio.

    Ties break toward the lower index; kept entries are renormalized.
    Operates row-wise on (N, M).
    """
    n, m = probs.shape
    out = np.zeros_like(probs)
    for i in range(n):
        # Stable descending order: sort on value, lower index wins ties.
        order = np.argsort(-probs[i], kind="stable")
        acc = 0.0
        kept = 0.0
        for j in range(m):
            idx = order[j]
            acc += probs[i, idx]
            out[i, idx] = probs[i, idx]
            if acc >= ratio:
                kept = acc
                break
        else:
            kept = acc
        if kept > 0.0:
            out[i] /= kept
    return out


if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _categorical_rows_nb(probs, uniforms):
        n, m = probs.shape
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            u = uniforms[i]
            acc = 0.0
            idx = m - 1
            for j in range(m - 1):
                acc += probs[i, j]
                if u < acc:
                    idx = j
                    break
            out[i] = idx
        return out

    @njit(cache=True)
    def _mix_posteriors_nb(table, weights, xt):
        n, k = weights.shape
        out = np.empty((n, k + 1), dtype=np.float64)
        for i in range(n):
            p = table[xt[i]]
            for m in range(k + 1):
                acc = 0.0
                for c in range(k):
                    acc += p[m, c] * weights[i, c]
                out[i, m] = acc
        return out

    @njit(cache=True)
    def _truncate_rows_nb(probs, ratio):
        n, m = probs.shape
        out = np.zeros_like(probs)
        order = np.empty(m, dtype=np.int64)
        for i in range(n):
            # Insertion sort by descending probability, lower index first on ties.
            for j in range(m):
                order[j] = j
            for j in range(1, m):
                cur = order[j]
                pos = j
                while pos > 0 and probs[i, order[pos - 1]] < probs[i, cur]:
                    order[pos] = order[pos - 1]
                    pos -= 1
                order[pos] = cur
            acc = 0.0
            kept = 0.0
            done = False
            for j in range(m):
                idx = order[j]
                acc += probs[i, idx]
                out[i, idx] = probs[i, idx]
                if acc >= ratio:
                    kept = acc
                    done = True
                    break
            if not done:
                kept = acc
            if kept > 0.0:
                for j in range(m):
                    out[i, j] /= kept
        return out

    def categorical_rows(probs, uniforms):
        return _categorical_rows_nb(
            np.ascontiguousarray(probs, dtype=np.float64),
            np.ascontiguousarray(uniforms, dtype=np.float64),
        )

    def mix_posteriors(table, weights, xt):
        return _mix_posteriors_nb(
            np.ascontiguousarray(table, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
            np.ascontiguousarray(xt, dtype=np.int64),
        )

    def truncate_rows(probs, ratio):
        return _truncate_rows_nb(np.ascontiguousarray(probs, dtype=np.float64), float(ratio))

else:
    categorical_rows = categorical_rows_np
    mix_posteriors = mix_posteriors_np
    truncate_rows = truncate_rows_np
