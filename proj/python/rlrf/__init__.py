"""Rendering-feedback rewards, GRPO algebra and image metrics for SVG generation."""

import json as _json

from ._rlrf import (
    ConfigError,
    DimensionMismatch,
    LengthMismatch,
    MissingGroundTruth,
    RenderError,
    RlrfError,
    best_of_n,
    clipped_term,
    code_efficiency,
    color_entropy,
    compute_advantages,
    grpo_surrogate,
    is_blank,
    mse,
    render,
    reward_l2,
    reward_l2_canny,
    reward_length,
    sanitize_svg,
    ssim,
    token_count,
)
from ._rlrf import reward_rollout as _reward_rollout


def reward_rollout(image, svg, spec, gt_length=None):
    """Score one SVG against ``image`` (HxWx3 in [0, 1]) rendered at the image's size.

    ``spec`` maps component names to weights, e.g. ``{"l2": 1.0, "length": 0.1}``.
    """
    height, width = image.shape[:2]
    return _json.loads(_reward_rollout(image, svg, gt_length, _json.dumps(spec), width, height))


__all__ = [name for name in dir() if not name.startswith("_")]
