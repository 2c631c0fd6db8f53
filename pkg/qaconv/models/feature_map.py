import numpy as np
from qaconv.utils.exceptions import FormatError


def _frozen_float32(values):
    array = np.array(values, dtype=np.float32, copy=True)
    array.flags.writeable = False
    return array


class FeatureMap:
    """
    One image's d×h×w final feature tensor

    Stored channel-major in single precision, so the flat index of
    (c, y, x) is (c*h + y)*w + x.
    """

    def __init__(self, data):
        data = _frozen_float32(data)
        if data.ndim != 3 or min(data.shape) <= 0:
            raise FormatError(f"Feature map must be a non-empty d×h×w array, got shape {data.shape}")
        self.data = data

    @property
    def d(self):
        return self.data.shape[0]

    @property
    def h(self):
        return self.data.shape[1]

    @property
    def w(self):
        return self.data.shape[2]

    @property
    def profile(self):
        """(d, h, w) triple shared by every map of a store"""
        return self.data.shape

    @property
    def hw(self):
        return self.h * self.w

    def location_vectors(self):
        """[hw, d] channel vectors in row-major location order"""
        return self.data.reshape(self.d, self.hw).T

    def __repr__(self):
        return f"FeatureMap(d={self.d}, h={self.h}, w={self.w})"


class QueryKernel:
    """hw adaptive kernels of size [d, s, s] cut from one query map"""

    def __init__(self, weights, h, w):
        weights = _frozen_float32(weights)
        if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
            raise FormatError(f"Kernel weights must be [hw, d, s, s], got shape {weights.shape}")
        if weights.shape[0] != h * w:
            raise FormatError(f"Kernel count {weights.shape[0]} does not match source map {h}×{w}")
        self.weights = weights
        self.h = h
        self.w = w

    @property
    def hw(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.weights.shape[1]

    @property
    def s(self):
        return self.weights.shape[2]

    def matrix(self):
        """[hw, d*s*s] kernel matrix used for convolution by matmul"""
        return self.weights.reshape(self.hw, -1)


class SimilarityMap:
    """[hw_q, h_g, w_g] local similarities of every query location"""

    def __init__(self, values):
        values = _frozen_float32(values)
        if values.ndim != 3:
            raise FormatError(f"Similarity map must be [hw_q, h_g, w_g], got shape {values.shape}")
        self.values = values

    @property
    def hw_q(self):
        return self.values.shape[0]

    @property
    def h_g(self):
        return self.values.shape[1]

    @property
    def w_g(self):
        return self.values.shape[2]
