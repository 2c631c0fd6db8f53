import logging
import math

import numpy as np

from qaconv.models.image import ImageTensor
from qaconv.utils.exceptions import PreconditionError
from qaconv.utils.helpers import make_rng

logger = logging.getLogger(__name__)

WHITE = 1.0
MAX_OCCLUSION_FRACTION = 0.8


def occlusion_side_limit(height, width, max_frac=MAX_OCCLUSION_FRACTION):
    """Largest square side: floor(max_frac*width) capped by the height"""
    # 0.29*100 evaluates to 28.999999999999996
    return min(int(math.floor(round(max_frac * width, 9))), height)


def occlusion_box(height, width, rng, max_frac=MAX_OCCLUSION_FRACTION):
    """
    Sample one square that fits inside a height×width canvas

    The side is uniform on [1, floor(max_frac*width)] (capped by the
    height), the top-left corner uniform over valid positions. One pass,
    no rejection sampling.

    Returns:
        tuple: (top, left, side)
    """
    if not 0 < max_frac <= 1:
        raise PreconditionError(f"Occlusion fraction must lie in (0, 1], got {max_frac}")
    if height <= 0 or width <= 0:
        raise PreconditionError(f"Cannot occlude a degenerate {height}×{width} image")
    side_limit = occlusion_side_limit(height, width, max_frac)
    if side_limit < 1:
        raise PreconditionError(f"Image width {width} is too small for occlusion fraction {max_frac}")
    side = int(rng.integers(1, side_limit + 1))
    top = int(rng.integers(0, height - side + 1))
    left = int(rng.integers(0, width - side + 1))
    return top, left, side


def occlude_array(data, rng, max_frac=MAX_OCCLUSION_FRACTION, fill=WHITE):
    """Copy of a C×H×W array with one sampled square set to fill in every channel"""
    out = np.array(data, copy=True)
    top, left, side = occlusion_box(out.shape[1], out.shape[2], rng, max_frac)
    out[:, top:top + side, left:left + side] = fill
    return out


class AugmentationService:
    """Random occlusion and horizontal flipping of training inputs"""

    def __init__(self, max_frac=MAX_OCCLUSION_FRACTION, flip_prob=0.5):
        self.max_frac = max_frac
        self.flip_prob = flip_prob

    def random_occlude(self, img, seed, max_frac=None, fill=WHITE):
        """
        Fill one random square of the image with white

        Deterministic under seed: the same seed always picks the same square.
        """
        max_frac = self.max_frac if max_frac is None else max_frac
        return ImageTensor(occlude_array(img.data, make_rng(seed), max_frac, fill))

    def occlusion_box(self, img, seed, max_frac=None):
        """The (top, left, side) square random_occlude picks for this seed"""
        max_frac = self.max_frac if max_frac is None else max_frac
        return occlusion_box(img.height, img.width, make_rng(seed), max_frac)

    def random_hflip(self, img, seed, p=None):
        """Mirror the image across its vertical axis with probability p"""
        p = self.flip_prob if p is None else p
        if make_rng(seed).random() < p:
            return ImageTensor(img.data[:, :, ::-1])
        return ImageTensor(img.data)

    def augment_feature_map(self, data, seed):
        """
        Flip and occlude one [d, h, w] feature map for head training

        Occluded cells are zeroed, which normalization leaves at zero.
        """
        rng = make_rng(seed)
        if rng.random() < self.flip_prob:
            data = data[:, :, ::-1]
        return occlude_array(data, rng, self.max_frac, fill=0.0)
