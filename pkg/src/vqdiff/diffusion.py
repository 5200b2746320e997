"""Forward corruption, exact posteriors, guided reverse sampling and the
variational objective for the mask-and-replace chain.

The reverse model is clean-token parameterized: the denoiser predicts
logits over the K non-mask classes, and the reverse distribution is the
posterior mixture

    p(x_{t-1} | x_t) = sum_c q(x_{t-1} | x_t, x_0 = c) * p_model(x_0 = c | x_t)

computed exactly from the schedule. At t = 1 the reverse distribution is
p_model(x_0 | x_1) itself, with zero mass on the mask class, so a finished
sample can never contain a mask token.

The stochastic training objective draws one timestep per example:
t = 1 contributes a reconstruction negative log-likelihood and t >= 2 a
KL between the exact posterior and the model mixture, summed over grid
positions. The prior term at t = T is parameter free (zero for any
schedule whose terminal state is exactly the all-mask distribution) and is
reported separately.
"""

from dataclasses import dataclass

import numpy as np

from vqdiff.errors import DegenerateInputError, SamplingError, TrainingDivergedError
from vqdiff.kernels import categorical_rows, mix_posteriors, truncate_rows
from vqdiff.numerics import log_softmax, softmax
from vqdiff.schedule import NoiseSchedule, forward_marginal, marginal_matrix, transition_matrix


# ---------------------------------------------------------------------------
# Guidance and truncation
# ---------------------------------------------------------------------------


def cfg_combine(cond_logp: np.ndarray, uncond_logp: np.ndarray, s: float) -> np.ndarray:
    """Guided log-probabilities: cond + (s - 1) * (cond - uncond).

    With s = 1 the output equals ``cond_logp`` exactly. The result is
    unnormalized; callers renormalize via ``log_softmax``. Works on the last
    axis of same-shaped arrays.
    """
    cond_logp = np.asarray(cond_logp, dtype=np.float64)
    uncond_logp = np.asarray(uncond_logp, dtype=np.float64)
    if cond_logp.shape != uncond_logp.shape:
        raise ValueError(
            f"cfg_combine: shape mismatch {cond_logp.shape} vs {uncond_logp.shape}"
        )
    if not (np.all(np.isfinite(cond_logp)) and np.all(np.isfinite(uncond_logp))):
        raise ValueError("cfg_combine: non-finite log-probabilities")
    if s == 1.0:
        return cond_logp.copy()
    return cond_logp + (s - 1.0) * (cond_logp - uncond_logp)


def truncate(p: np.ndarray, r: float) -> np.ndarray:
    """Nucleus-style truncation of a probability vector.

    Keeps the smallest set of highest-probability entries whose cumulative
    mass reaches ``r`` (ties to the lower index), zeroes the rest and
    renormalizes. ``r = 1`` keeps everything.

    Raises:
        ValueError: r outside (0, 1] or p not a probability vector.
    """
    if not 0.0 < r <= 1.0:
        raise ValueError(f"truncate: ratio must be in (0, 1], got {r}")
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("truncate: expected a 1-D probability vector")
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("truncate: input must be a probability vector")
    return truncate_rows(p[None, :], r)[0]


# ---------------------------------------------------------------------------
# Forward process
# ---------------------------------------------------------------------------


def forward_sample(
    s: NoiseSchedule, x0: np.ndarray, t: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample x_t ~ q(x_t | x_0) position-wise for a clean grid x0 of shape (S,)."""
    x0 = _check_clean(s, x0)
    probs = marginal_matrix(s, t)[:, x0].T  # (S, K+1)
    return categorical_rows(probs, rng.random(x0.size))


def forward_sample_batch(
    s: NoiseSchedule, x0: np.ndarray, t: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Batched corruption: x0 (B, S) clean grids, t (B,) per-example timesteps."""
    b, n = x0.shape
    ti = np.asarray(t, dtype=np.int64) - 1
    probs = np.empty((b, n, s.K + 1), dtype=np.float64)
    probs[:] = s.cum_beta[ti][:, None, None]
    probs[..., s.K] = s.cum_gamma[ti][:, None]
    rows = np.repeat(np.arange(b), n)
    cols = np.tile(np.arange(n), b)
    probs[rows, cols, x0.ravel()] += np.repeat(s.cum_alpha[ti], n)
    flat = probs.reshape(b * n, s.K + 1)
    return categorical_rows(flat, rng.random(b * n)).reshape(b, n)


# ---------------------------------------------------------------------------
# Exact posterior
# ---------------------------------------------------------------------------


def posterior(s: NoiseSchedule, xt_token: int, x0_token: int, t: int) -> np.ndarray:
    """Exact q(x_{t-1} | x_t, x_0) as a length K+1 probability vector.

    Elementwise ratio of forward marginals and the one-step transition:

        q(x_{t-1} = m | x_t, x_0) =
            q(x_{t-1} = m | x_0) * q(x_t | x_{t-1} = m) / q(x_t | x_0)

    Raises:
        DegenerateInputError: q(x_t | x_0) = 0 for the given pair, i.e.
            conditioning on an impossible event.
        ValueError: t < 2, out-of-range tokens, or x_0 = mask.
    """
    if t < 2:
        raise ValueError(f"posterior: requires t >= 2, got {t}")
    s.check_t(t)
    if not 0 <= x0_token < s.K:
        raise ValueError(f"posterior: x0 must be a non-mask token, got {x0_token}")
    if not 0 <= xt_token <= s.K:
        raise ValueError(f"posterior: xt out of range, got {xt_token}")
    marg_prev = forward_marginal(s, t - 1, x0_token)
    step_row = transition_matrix(s, t)[xt_token, :]
    denom = forward_marginal(s, t, x0_token)[xt_token]
    if denom <= 0.0:
        raise DegenerateInputError(
            f"posterior: q(x_{t}={xt_token} | x_0={x0_token}) = 0; cannot condition on it"
        )
    return marg_prev * step_row / denom


def posterior_table(s: NoiseSchedule, t: int) -> np.ndarray:
    """All posteriors at step t: table[i, m, k] = q(x_{t-1}=m | x_t=i, x_0=k).

    Impossible (x_t, x_0) pairings (zero forward probability) get all-zero
    rows; callers never index them for samples drawn from the chain itself.
    """
    if t < 2:
        raise ValueError(f"posterior_table: requires t >= 2, got {t}")
    s.check_t(t)
    marg_prev = marginal_matrix(s, t - 1)  # (K+1, K)
    marg_cur = marginal_matrix(s, t)  # (K+1, K)
    q_step = transition_matrix(s, t)  # (K+1, K+1), [to, from]
    num = q_step[:, :, None] * marg_prev[None, :, :]  # (cur, prev, clean)
    denom = marg_cur[:, None, :]
    safe = np.where(denom > 0.0, denom, 1.0)
    return np.where(denom > 0.0, num / safe, 0.0)


def reverse_dist(
    s: NoiseSchedule, x0_logits: np.ndarray, xt: np.ndarray, t: int
) -> np.ndarray:
    """Model reverse distribution p(x_{t-1} | x_t) per position, shape (S, K+1).

    Mixture of exact posteriors weighted by softmax(x0_logits); for t = 1
    returns softmax(x0_logits) directly with zero mask probability.
    """
    x0_logits = np.asarray(x0_logits, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.int64)
    if x0_logits.ndim != 2 or x0_logits.shape[1] != s.K:
        raise ValueError(f"reverse_dist: logits must have shape (S, {s.K})")
    if x0_logits.shape[0] != xt.size:
        raise ValueError("reverse_dist: logits/grid length mismatch")
    w = softmax(x0_logits, axis=-1)
    if t == 1:
        out = np.zeros((xt.size, s.K + 1), dtype=np.float64)
        out[:, : s.K] = w
        return out
    return mix_posteriors(posterior_table(s, t), w, xt)


# ---------------------------------------------------------------------------
# Variational objective
# ---------------------------------------------------------------------------


@dataclass
class VlbTerms:
    """Full objective decomposition: total = l0 + sum(l_middle) + lT."""

    l0: float
    l_middle: np.ndarray  # length T-1, entry i is the term at t = i + 2
    lT: float

    @property
    def total(self) -> float:
        return float(self.l0 + self.l_middle.sum() + self.lT)


def _check_clean(s: NoiseSchedule, x0: np.ndarray) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.int64)
    if np.any(x0 < 0) or np.any(x0 >= s.K):
        raise ValueError("clean grid must contain only non-mask tokens")
    return x0


def _kl_rows(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Row-wise KL(q || p) with the 0 * log 0 = 0 convention."""
    mask = q > 0.0
    safe_q = np.where(mask, q, 1.0)
    safe_p = np.where(mask, p, 1.0)
    if np.any((q > 0.0) & (p <= 0.0)):
        return np.where(
            (q > 0.0) & (p <= 0.0), np.inf, safe_q * (np.log(safe_q) - np.log(safe_p))
        ).sum(axis=-1)
    return (safe_q * (np.log(safe_q) - np.log(safe_p)) * mask).sum(axis=-1)


def vlb_terms_given_xt(
    s: NoiseSchedule, x0_logits: np.ndarray, x0: np.ndarray, xt: np.ndarray, t: int
) -> float:
    """Stochastic objective term at timestep t for a realized x_t, summed
    over positions.

    t = 1: reconstruction negative log-likelihood -log p(x_0 | x_1).
    t >= 2: KL(q(x_{t-1} | x_t, x_0) || p(x_{t-1} | x_t)).
    """
    x0 = _check_clean(s, x0)
    xt = np.asarray(xt, dtype=np.int64)
    if t == 1:
        logp = log_softmax(np.asarray(x0_logits, dtype=np.float64), axis=-1)
        return float(-logp[np.arange(x0.size), x0].sum())
    table = posterior_table(s, t)
    q = table[xt, :, x0]  # (S, K+1) true posterior rows
    p = reverse_dist(s, x0_logits, xt, t)
    return float(_kl_rows(q, p).sum())


def vlb_grad_given_xt(
    s: NoiseSchedule, x0_logits: np.ndarray, x0: np.ndarray, xt: np.ndarray, t: int
) -> tuple[float, np.ndarray]:
    """Objective term and its exact gradient with respect to ``x0_logits``."""
    x0 = _check_clean(s, x0)
    xt = np.asarray(xt, dtype=np.int64)
    logits = np.asarray(x0_logits, dtype=np.float64)
    w = softmax(logits, axis=-1)
    n = x0.size
    if t == 1:
        logp = log_softmax(logits, axis=-1)
        loss = float(-logp[np.arange(n), x0].sum())
        dlogits = w.copy()
        dlogits[np.arange(n), x0] -= 1.0
        return loss, dlogits
    table = posterior_table(s, t)
    pt = table[xt]  # (S, K+1, K)
    q = pt[np.arange(n), :, x0]  # (S, K+1)
    p = np.einsum("smk,sk->sm", pt, w)
    loss = float(_kl_rows(q, p).sum())
    mask = q > 0.0
    ratio = np.where(mask, q / np.where(mask, p, 1.0), 0.0)
    dw = -np.einsum("smk,sm->sk", pt, ratio)
    inner = (dw * w).sum(axis=-1, keepdims=True)
    dlogits = w * (dw - inner)
    return loss, dlogits


def prior_kl(s: NoiseSchedule, x0: np.ndarray) -> float:
    """Terminal term: KL(q(x_T | x_0) || all-mask point mass), summed over
    positions. Zero exactly when the schedule fully masks at t = T."""
    x0 = _check_clean(s, x0)
    total = 0.0
    for token in np.unique(x0):
        q = forward_marginal(s, s.T, int(token))
        count = int((x0 == token).sum())
        if np.any(q[: s.K] > 0.0):
            return float("inf")
        total += count * float(q[s.K] * np.log(q[s.K]))
    return total


def vlb_loss(
    s: NoiseSchedule,
    model,
    x0: np.ndarray,
    cond: np.ndarray,
    t: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One-sample stochastic objective term at timestep t, plus the constant
    terminal term (reported separately, never backpropagated).

    ``model`` is a callable (tokens (B, S), t, cond (B, d)) -> logits
    (B, S, K). The caller samples t uniformly from 1..T.

    Raises:
        TrainingDivergedError: the term evaluates non-finite.
    """
    x0 = _check_clean(s, x0)
    xt = forward_sample(s, x0, t, rng)
    logits = np.asarray(model(xt[None, :], t, cond[None, :]))[0]
    term = vlb_terms_given_xt(s, logits, x0, xt, t)
    if not np.isfinite(term):
        raise TrainingDivergedError(
            f"vlb term non-finite at t={t}: logits range "
            f"[{logits.min():.3e}, {logits.max():.3e}]"
        )
    return term, prior_kl(s, x0)


def vlb_decomposition(s: NoiseSchedule, model, x0: np.ndarray, cond: np.ndarray) -> VlbTerms:
    """Exact expected decomposition by enumerating all noisy grids.

    Only feasible at oracle scale ((K+1)^S small); used by tests to check
    the stochastic terms against an exhaustive computation.
    """
    x0 = _check_clean(s, x0)
    n = x0.size
    n_states = (s.K + 1) ** n
    if n_states > 4096:
        raise ValueError("vlb_decomposition: state space too large to enumerate")
    grids = np.array(
        np.meshgrid(*[np.arange(s.K + 1)] * n, indexing="ij"), dtype=np.int64
    ).reshape(n, n_states).T

    def grid_prob(t: int) -> np.ndarray:
        marg = marginal_matrix(s, t)
        per_pos = marg[grids, np.broadcast_to(x0, grids.shape)]  # (n_states, n)
        return per_pos.prod(axis=1)

    l_middle = np.zeros(s.T - 1, dtype=np.float64)
    for t in range(2, s.T + 1):
        weights = grid_prob(t)
        acc = 0.0
        for g, w_g in zip(grids, weights):
            if w_g <= 0.0:
                continue
            logits = np.asarray(model(g[None, :], t, cond[None, :]))[0]
            acc += w_g * vlb_terms_given_xt(s, logits, x0, g, t)
        l_middle[t - 2] = acc
    weights = grid_prob(1)
    l0 = 0.0
    for g, w_g in zip(grids, weights):
        if w_g <= 0.0:
            continue
        logits = np.asarray(model(g[None, :], 1, cond[None, :]))[0]
        l0 += w_g * vlb_terms_given_xt(s, logits, x0, g, 1)
    return VlbTerms(l0=float(l0), l_middle=l_middle, lT=prior_kl(s, x0))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def reverse_step_batch(
    s: NoiseSchedule,
    cond_logits: np.ndarray,
    uncond_logits: np.ndarray | None,
    xt: np.ndarray,
    t: int,
    guide: float,
    r: float,
    rng: np.random.Generator,
    table: np.ndarray | None = None,
) -> np.ndarray:
    """One guided reverse transition for a batch of grids xt (B, S)."""
    b, n = xt.shape
    cond_logp = log_softmax(cond_logits, axis=-1)
    if guide == 1.0 or uncond_logits is None:
        combined = cond_logp
    else:
        combined = cfg_combine(cond_logp, log_softmax(uncond_logits, axis=-1), guide)
    w = softmax(combined, axis=-1).reshape(b * n, s.K)
    if t == 1:
        dist = np.zeros((b * n, s.K + 1), dtype=np.float64)
        dist[:, : s.K] = w
    else:
        if table is None:
            table = posterior_table(s, t)
        dist = mix_posteriors(table, w, xt.reshape(b * n))
    dist = truncate_rows(dist, r)
    return categorical_rows(dist, rng.random(b * n)).reshape(b, n)


def sample_batch(
    model,
    s: NoiseSchedule,
    cond: np.ndarray,
    guide: float,
    r: float,
    rng: np.random.Generator,
    seq_len: int,
) -> np.ndarray:
    """Generate a batch of clean grids from the all-mask state.

    Runs t = T..1; at each step the model is evaluated with the given
    condition and (for guide != 1) with its null condition, the guided
    clean-token distribution is mixed through the exact posterior, truncated
    to mass ``r`` and sampled per position.

    Raises:
        SamplingError: a mask index survives in the final grid.
    """
    cond = np.asarray(cond, dtype=np.float64)
    if cond.ndim != 2:
        raise ValueError("sample_batch: cond must have shape (B, d)")
    b = cond.shape[0]
    grids = np.full((b, seq_len), s.K, dtype=np.int64)
    tables = {}
    for t in range(s.T, 0, -1):
        cond_logits = np.asarray(model(grids, t, cond))
        uncond_logits = None
        if guide != 1.0:
            uncond_logits = np.asarray(model(grids, t, None))
        if t >= 2 and t not in tables:
            tables[t] = posterior_table(s, t)
        grids = reverse_step_batch(
            s, cond_logits, uncond_logits, grids, t, guide, r, rng,
            table=tables.get(t),
        )
    if np.any(grids == s.K):
        raise SamplingError("mask index survived to t=0; schedule/model inconsistent")
    return grids


def sample(
    model,
    s: NoiseSchedule,
    cond: np.ndarray,
    guide: float,
    r: float,
    rng: np.random.Generator,
    seq_len: int,
) -> np.ndarray:
    """Single-grid convenience wrapper around ``sample_batch``."""
    return sample_batch(model, s, np.asarray(cond)[None, :], guide, r, rng, seq_len)[0]
