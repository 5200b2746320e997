"""Discrete diffusion over vector-quantized token grids, conditioned on a
synthetic multimodal embedding space.

The package covers the full desk-scale pipeline: a Gumbel-softmax patch
quantizer, an absorbing-state (mask-and-replace) categorical diffusion
process with exact posteriors, a tiny AdaLN-conditioned transformer denoiser
with hand-written reverse-mode gradients, classifier-free guidance
fine-tuning, and quantitative evaluation (Frechet distance, inception-score
and alignment-score surrogates).
"""

__version__ = "0.1.0"

from vqdiff.numerics import make_rng, log_softmax, softmax, psd_sqrt
from vqdiff.schedule import NoiseSchedule, build_schedule

__all__ = [
    "__version__",
    "make_rng",
    "log_softmax",
    "softmax",
    "psd_sqrt",
    "NoiseSchedule",
    "build_schedule",
]
