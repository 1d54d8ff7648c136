"""Bayesian pseudo-label generation for semi-supervised 3D segmentation.

Aggregates K stochastic forward passes, scores per-point uncertainty via
Shannon entropy, applies unanimous voting plus percentile thresholding, and
emits semantic, instance, and grounding pseudo-labels. Ships a synthetic
laboratory with a toy dropout learner for end-to-end runs at desk scale.
"""

__version__ = "0.1.0"

from . import assignment, grounding, instances, kernels, semantic, synthlab, tensorio  # noqa: F401
