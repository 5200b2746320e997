"""Synthetic multimodal embedding oracle.

Stands in for a pretrained two-tower embedder: each concept gets a
deterministic unit-norm image direction and a paired text direction rotated
away from it by a fixed gap angle, modeling the systematic angular
separation between paired image and text embeddings in real multimodal
spaces (typical paired cosine around 0.3 to 0.4, hence the default gap of
arccos 0.4). Per-sample image embeddings jitter around the concept
direction; text embeddings are exact.

``pseudo_text`` implements the training-time stand-in for a text
embedding: add scaled Gaussian noise to a unit image embedding and
renormalize,

    h  = h_img + alpha * e / ||e||,      h' = h / ||h||,

whose angular deviation from h_img is bounded by arcsin(alpha).
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_GAP_ANGLE = float(np.arccos(0.4))


@dataclass(frozen=True)
class EmbeddingSpace:
    """Concept-indexed unit-norm image/text directions with a fixed gap.

    Attributes:
        dim: embedding width.
        C: concept count.
        concept_dirs: (C, dim) unit rows; per-concept image direction.
        text_dirs: (C, dim) unit rows at exactly ``gap_angle`` from the
            paired concept direction.
        gap_angle: radians between paired image and text directions.
        jitter: per-sample angular spread of image embeddings (radians).
    """

    dim: int
    C: int
    concept_dirs: np.ndarray
    text_dirs: np.ndarray
    gap_angle: float
    jitter: float


def make_space(
    dim: int, C: int, gap_angle: float, jitter: float, seed: int
) -> EmbeddingSpace:
    """Build a deterministic embedding space.

    Concept directions come from orthonormalized Gaussian draws. Each text
    direction is the concept direction rotated by ``gap_angle`` toward an
    auxiliary direction; when dim >= 2C the auxiliary directions are
    orthogonal to every concept direction, so a text embedding's nearest
    concept under cosine is always its own.

    Raises:
        ValueError: dim < C, or gap_angle outside [0, pi/2).
    """
    if dim < C:
        raise ValueError(f"make_space: dim ({dim}) must be >= C ({C})")
    if not 0.0 <= gap_angle < np.pi / 2:
        raise ValueError(f"make_space: gap_angle must be in [0, pi/2), got {gap_angle}")
    if jitter < 0.0:
        raise ValueError(f"make_space: jitter must be >= 0, got {jitter}")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    n_dirs = 2 * C if dim >= 2 * C else C
    g = rng.standard_normal((dim, n_dirs))
    q, _ = np.linalg.qr(g)
    dirs = np.ascontiguousarray(q[:, :C].T)
    if dim >= 2 * C:
        aux = np.ascontiguousarray(q[:, C : 2 * C].T)
    else:
        # Not enough room for globally orthogonal auxiliaries: orthogonalize a
        # fresh draw against the paired concept direction only.
        aux = np.empty_like(dirs)
        for c in range(C):
            v = rng.standard_normal(dim)
            v -= (v @ dirs[c]) * dirs[c]
            aux[c] = v / np.linalg.norm(v)
    text = np.cos(gap_angle) * dirs + np.sin(gap_angle) * aux
    return EmbeddingSpace(
        dim=dim,
        C=C,
        concept_dirs=dirs,
        text_dirs=text,
        gap_angle=float(gap_angle),
        jitter=float(jitter),
    )


def _check_concept(sp: EmbeddingSpace, concept: int) -> None:
    if not 0 <= concept < sp.C:
        raise ValueError(f"concept index {concept} outside 0..{sp.C - 1}")


def image_embed(sp: EmbeddingSpace, concept: int, rng: np.random.Generator) -> np.ndarray:
    """Per-sample image embedding: the concept direction rotated by a random
    angle drawn uniformly from [0, jitter] toward a random orthogonal
    direction. Unit norm by construction."""
    _check_concept(sp, concept)
    d = sp.concept_dirs[concept]
    if sp.jitter == 0.0:
        return d.copy()
    v = rng.standard_normal(sp.dim)
    v -= (v @ d) * d
    v /= np.linalg.norm(v)
    phi = sp.jitter * rng.random()
    return np.cos(phi) * d + np.sin(phi) * v


def text_embed(sp: EmbeddingSpace, concept: int) -> np.ndarray:
    """Deterministic text embedding for a concept."""
    _check_concept(sp, concept)
    return sp.text_dirs[concept].copy()


def pseudo_text(h_img: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Noisy renormalized image embedding used as a text stand-in.

    The output is unit norm and deviates from ``h_img`` by at most
    arcsin(alpha), the tangent angle of the radius-alpha sphere around the
    unit vector's tip.

    Raises:
        ValueError: alpha outside [0, 1) (the bound is undefined at 1).
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"pseudo_text: alpha must be in [0, 1), got {alpha}")
    h_img = np.asarray(h_img, dtype=np.float64)
    if alpha == 0.0:
        return h_img.copy()
    e = rng.standard_normal(h_img.shape)
    h = h_img + alpha * e / np.linalg.norm(e)
    return h / np.linalg.norm(h)


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit-norm embeddings.

    Raises:
        ValueError: either input deviates from unit norm by more than 1e-6.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for name, v in (("a", a), ("b", b)):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError(f"cosine_score: input {name} is not unit norm")
    return float(a @ b)
