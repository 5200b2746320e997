"""Mask-and-replace corruption chain over K tokens plus an absorbing mask.

A schedule holds per-step probabilities (alpha_t, beta_t, gamma_t) for
timesteps t = 1..T and their cumulative counterparts. Per step, a non-mask
token is kept with probability alpha_t, resampled to each of the K tokens
with probability beta_t, and masked with probability gamma_t, so that
alpha_t + K*beta_t + gamma_t = 1. The mask state is absorbing.

Cumulative quantities describe the t-step marginal q(x_t | x_0):

    q(x_t = x_0)          = cum_alpha[t] + cum_beta[t]
    q(x_t = other token)  = cum_beta[t]            (each of the K-1 others)
    q(x_t = mask)         = cum_gamma[t]

with cum_alpha the product of alpha_s, 1 - cum_gamma the product of
(1 - gamma_s), and cum_beta fixed by total probability. ``build_schedule``
produces a chain whose terminal state is fully masked (cum_gamma[T] = 1
exactly); ``brute_force_cumulative`` is the explicit matrix-product oracle
against which the closed forms are validated.

Array index convention: timestep t (1-based) lives at index t - 1.
"""

from dataclasses import dataclass

import numpy as np

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable per-step and cumulative mask-and-replace probabilities.

    Attributes:
        T: number of timesteps.
        K: number of real codebook tokens; the mask index is K.
        alphas, betas, gammas: per-step keep / replace / mask probabilities,
            each of length T.
        cum_alpha, cum_beta, cum_gamma: cumulative quantities of length T.
    """

    T: int
    K: int
    alphas: np.ndarray
    betas: np.ndarray
    gammas: np.ndarray
    cum_alpha: np.ndarray
    cum_beta: np.ndarray
    cum_gamma: np.ndarray

    @property
    def mask_index(self) -> int:
        return self.K

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")


def _validate(s: NoiseSchedule, terminal_masked: bool = True) -> NoiseSchedule:
    col = s.alphas + s.K * s.betas + s.gammas
    if np.max(np.abs(col - 1.0)) > _SUM_TOL:
        raise ValueError("schedule: per-step probabilities do not sum to 1")
    for name, arr in (("alpha", s.alphas), ("beta", s.betas), ("gamma", s.gammas)):
        if np.any(arr < 0.0):
            raise ValueError(f"schedule: negative {name}_t")
    if terminal_masked and abs(s.cum_gamma[-1] - 1.0) > 1e-9:
        raise ValueError("schedule: terminal state not fully masked")
    if np.any(np.diff(s.cum_alpha) > _SUM_TOL):
        raise ValueError("schedule: cum_alpha must be non-increasing")
    if np.any(np.diff(s.cum_gamma) < -_SUM_TOL):
        raise ValueError("schedule: cum_gamma must be non-decreasing")
    total = s.cum_alpha + s.K * s.cum_beta + s.cum_gamma
    if np.max(np.abs(total - 1.0)) > 1e-9:
        raise ValueError("schedule: cumulative probabilities do not sum to 1")
    return s


def schedule_from_per_step(
    T: int, K: int, alphas, betas, gammas, terminal_masked: bool = True
) -> NoiseSchedule:
    """Assemble a schedule from explicit per-step values, deriving cumulatives.

    With ``terminal_masked=False`` the fully-masked-terminal requirement is
    waived; such chains are only suitable for studying the transition math,
    not for sampling (the reverse process starts from the all-mask state).
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    gammas = np.asarray(gammas, dtype=np.float64)
    if not (alphas.shape == betas.shape == gammas.shape == (T,)):
        raise ValueError("schedule_from_per_step: per-step arrays must have length T")
    cum_alpha = np.cumprod(alphas)
    cum_gamma = 1.0 - np.cumprod(1.0 - gammas)
    cum_beta = (1.0 - cum_alpha - cum_gamma) / K
    # Tiny negative values are float dust from the subtraction above.
    cum_beta[(cum_beta < 0.0) & (cum_beta > -1e-15)] = 0.0
    return _validate(
        NoiseSchedule(
            T=T,
            K=K,
            alphas=alphas,
            betas=betas,
            gammas=gammas,
            cum_alpha=cum_alpha,
            cum_beta=cum_beta,
            cum_gamma=cum_gamma,
        ),
        terminal_masked=terminal_masked,
    )


def build_schedule(T: int, K: int, replace_frac: float = 0.1) -> NoiseSchedule:
    """Linear mask-and-replace schedule with an exactly masked terminal state.

    The cumulative mask probability rises linearly, cum_gamma[t] = t/T, so
    the chain is fully masked at t = T. The cumulative keep probability
    falls linearly, cum_alpha[t] = (1 - t/T) * (1 - replace_frac): of the
    mass that survives masking, a constant ``replace_frac`` fraction is
    uniform-replacement mass, spread over the K tokens
    (cum_beta[t] = (1 - t/T) * replace_frac / K > 0 for t < T), which keeps
    every (x_t, x_0) pairing possible and the exact posterior well defined
    at every interior step.

    Per-step values are recovered from the cumulatives via
    alpha_t = cum_alpha[t]/cum_alpha[t-1] and
    (1 - gamma_t) = (1 - cum_gamma[t])/(1 - cum_gamma[t-1]), with beta_t
    fixed by the column-sum constraint.

    Raises:
        ValueError: invalid sizes, replace_frac outside [0, 1), or a
            recovery step yielding a negative beta_t.
    """
    if T < 1:
        raise ValueError(f"build_schedule: T must be >= 1, got {T}")
    if K < 2:
        raise ValueError(f"build_schedule: K must be >= 2, got {K}")
    if not 0.0 <= replace_frac < 1.0:
        raise ValueError(f"build_schedule: replace_frac must be in [0, 1), got {replace_frac}")

    t = np.arange(1, T + 1, dtype=np.float64)
    survive = 1.0 - t / T  # exactly 0 at t = T
    cum_gamma = t / T
    cum_alpha = survive * (1.0 - replace_frac)

    # Recover per-step values; prepend the t=0 state (clean data).
    prev_alpha = np.concatenate(([1.0], cum_alpha[:-1]))
    prev_keep = np.concatenate(([1.0], 1.0 - cum_gamma[:-1]))
    alphas = np.where(prev_alpha > 0.0, cum_alpha / np.where(prev_alpha > 0.0, prev_alpha, 1.0), 0.0)
    gammas = 1.0 - (1.0 - cum_gamma) / prev_keep
    betas = (1.0 - alphas - gammas) / K
    betas[(betas < 0.0) & (betas > -1e-15)] = 0.0
    if np.any(betas < 0.0):
        raise ValueError("build_schedule: construction produced negative beta_t")

    cum_beta = (1.0 - cum_alpha - cum_gamma) / K
    cum_beta[(cum_beta < 0.0) & (cum_beta > -1e-15)] = 0.0
    return _validate(
        NoiseSchedule(
            T=T,
            K=K,
            alphas=alphas,
            betas=betas,
            gammas=gammas,
            cum_alpha=cum_alpha,
            cum_beta=cum_beta,
            cum_gamma=cum_gamma,
        )
    )


def random_schedule(T: int, K: int, rng: np.random.Generator) -> NoiseSchedule:
    """Random valid schedule ending fully masked; a test and diagnostics aid.

    Interior steps draw gamma_t in [0, 0.25] and split the remaining mass
    between keep and uniform replacement; the final step always masks
    everything (alpha_T = beta_T = 0, gamma_T = 1).
    """
    if T < 1 or K < 2:
        raise ValueError("random_schedule: need T >= 1 and K >= 2")
    gammas = rng.uniform(0.0, 0.25, size=T)
    keep_frac = rng.uniform(0.6, 1.0, size=T)
    alphas = (1.0 - gammas) * keep_frac
    betas = (1.0 - alphas - gammas) / K
    alphas[-1] = 0.0
    betas[-1] = 0.0
    gammas[-1] = 1.0
    return schedule_from_per_step(T, K, alphas, betas, gammas)


def transition_matrix(s: NoiseSchedule, t: int) -> np.ndarray:
    """One-step transition matrix Q_t of shape (K+1, K+1).

    Entry [m, n] is q(x_t = m | x_{t-1} = n). Columns for non-mask n put
    alpha_t + beta_t on the diagonal, beta_t on the other non-mask rows and
    gamma_t on the mask row. The mask column is the unit vector at the mask
    row: the mask state is absorbing. Every column sums to 1 within 1e-12.
    """
    s.check_t(t)
    K = s.K
    a, b, g = s.alphas[t - 1], s.betas[t - 1], s.gammas[t - 1]
    q = np.full((K + 1, K + 1), b, dtype=np.float64)
    np.fill_diagonal(q, a + b)
    q[K, :] = g
    q[:, K] = 0.0
    q[K, K] = 1.0
    return q


def forward_marginal(s: NoiseSchedule, t: int, x0: int) -> np.ndarray:
    """Closed-form marginal q(x_t | x_0) as a probability vector of length K+1.

    Probability cum_alpha + cum_beta at ``x0``, cum_beta at every other
    non-mask index and cum_gamma at the mask index. Matches
    ``brute_force_cumulative`` columns within 1e-12.

    Raises:
        ValueError: ``x0`` is the mask index or out of range (clean data
            never contains the mask).
    """
    s.check_t(t)
    if not 0 <= x0 < s.K:
        raise ValueError(f"forward_marginal: x0 must be a non-mask token in 0..{s.K - 1}, got {x0}")
    p = np.full(s.K + 1, s.cum_beta[t - 1], dtype=np.float64)
    p[x0] += s.cum_alpha[t - 1]
    p[s.K] = s.cum_gamma[t - 1]
    return p


def marginal_matrix(s: NoiseSchedule, t: int) -> np.ndarray:
    """All K forward marginals at once: shape (K+1, K), column k = q(x_t | x_0=k)."""
    s.check_t(t)
    m = np.full((s.K + 1, s.K), s.cum_beta[t - 1], dtype=np.float64)
    m[np.arange(s.K), np.arange(s.K)] += s.cum_alpha[t - 1]
    m[s.K, :] = s.cum_gamma[t - 1]
    return m


def brute_force_cumulative(s: NoiseSchedule, t: int) -> np.ndarray:
    """Explicit left product Q_t Q_{t-1} ... Q_1; the oracle for the closed forms.

    Guarded to oracle scale (K <= 64, T <= 64); not used on hot paths.
    """
    if s.K > 64 or s.T > 64:
        raise ValueError("brute_force_cumulative: oracle limited to K <= 64, T <= 64")
    s.check_t(t)
    prod = np.eye(s.K + 1, dtype=np.float64)
    for step in range(1, t + 1):
        prod = transition_matrix(s, step) @ prod
    return prod
