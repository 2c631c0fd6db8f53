"""
Dense tensor operations behind query-adaptive convolution

All functions are pure: inputs are never modified and nothing is cached,
so they can be called from any number of threads. Arithmetic is carried
out in double precision and results are stored in single precision.
Locations are always flattened row-major (index = y*w + x).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from qaconv.models.feature_map import FeatureMap, QueryKernel, SimilarityMap
from qaconv.utils.exceptions import PreconditionError, ProfileMismatchError

NORM_EPS = 1e-12


def normalize_array(data, eps=NORM_EPS):
    """
    l2-normalize the channel axis of a [..., d, h, w] array

    Args:
        data: array whose third-from-last axis holds channels
        eps: lower bound on the norm, keeps zero vectors at zero

    Returns:
        np.ndarray: float32 array of the same shape
    """
    if eps <= 0:
        raise PreconditionError(f"Normalization eps must be positive, got {eps}")
    data = np.asarray(data, dtype=np.float64)
    norms = np.sqrt(np.sum(data * data, axis=-3, keepdims=True))
    return (data / np.maximum(norms, eps)).astype(np.float32)


def l2_normalize_channels(fm, eps=NORM_EPS):
    """Divide every location's channel vector by max(its norm, eps)"""
    return FeatureMap(normalize_array(fm.data, eps))


def check_kernel_size(s, h, w):
    """Reject even sizes and sizes exceeding the spatial dims"""
    if not isinstance(s, (int, np.integer)) or s < 1 or s % 2 == 0:
        raise PreconditionError(f"Kernel size must be a positive odd integer, got {s}")
    if s > min(h, w):
        raise PreconditionError(f"Kernel size {s} exceeds feature map size {h}×{w}")


def _patches(data, s):
    # [d, h, w, s, s] zero-padded neighborhoods centered on every location
    pad = (s - 1) // 2
    padded = np.pad(data, ((0, 0), (pad, pad), (pad, pad)))
    return sliding_window_view(padded, (s, s), axis=(1, 2))


def extract_query_kernel(fm, s=1):
    """
    Cut one [d, s, s] kernel around every location of the query map

    Borders are zero padded by (s-1)/2 so there are exactly h*w kernels;
    for s=1 kernel i is the channel vector of location i.
    """
    check_kernel_size(s, fm.h, fm.w)
    if s == 1:
        weights = fm.location_vectors()[:, :, None, None]
    else:
        weights = _patches(fm.data, s).transpose(1, 2, 0, 3, 4).reshape(fm.hw, fm.d, s, s)
    return QueryKernel(weights, fm.h, fm.w)


def gallery_patch_matrix(data, s=1):
    """
    [d*s*s, h*w] matrix whose column j is the patch centered on location j

    Column layout matches QueryKernel.matrix() rows, so a convolution is
    a single matrix product.
    """
    d, h, w = data.shape
    if s == 1:
        return np.asarray(data, dtype=np.float64).reshape(d, h * w)
    patches = _patches(np.asarray(data, dtype=np.float64), s)
    return patches.transpose(0, 3, 4, 1, 2).reshape(d * s * s, h * w)


def local_similarity(kernel_matrix, patch_matrix):
    """[hw_q, hw_g] inner products, accumulated in double, stored in single"""
    product = np.asarray(kernel_matrix, dtype=np.float64) @ np.asarray(patch_matrix, dtype=np.float64)
    return product.astype(np.float32)


def adaptive_convolve(kernel, fm):
    """
    Convolve a gallery map with a query-adaptive kernel

    values[i, y, x] is the inner product of kernel i with the s×s patch of
    fm centered at (y, x); for s=1 and normalized maps this is a cosine.
    """
    if kernel.d != fm.d:
        raise ProfileMismatchError(f"Kernel has {kernel.d} channels but feature map has {fm.d}")
    values = local_similarity(kernel.matrix(), gallery_patch_matrix(fm.data, kernel.s))
    return SimilarityMap(values.reshape(kernel.hw, fm.h, fm.w))


def pool_bidirectional(values):
    """
    Max over both axes of a [hw_q, hw_g] similarity matrix

    Returns:
        tuple: (pooled float32 [hw_q + hw_g], argmax int64 [hw_q + hw_g]).
        The first half holds, per query location, the best gallery score
        and its gallery location; the second half the reverse. np.argmax
        returns the first maximum, so ties go to the lowest flat index.
    """
    query_best = values.argmax(axis=1)
    gallery_best = values.argmax(axis=0)
    pooled = np.concatenate(
        [values[np.arange(values.shape[0]), query_best], values[gallery_best, np.arange(values.shape[1])]]
    )
    return pooled.astype(np.float32), np.concatenate([query_best, gallery_best]).astype(np.int64)


def global_max_pool_bidirectional(sm):
    """Bidirectional GMP over a square SimilarityMap, returning (2hw vector, argmax)"""
    if sm.hw_q != sm.h_g * sm.w_g:
        raise ProfileMismatchError(
            f"Similarity map is not square: {sm.hw_q} query locations vs {sm.h_g}×{sm.w_g} gallery"
        )
    return pool_bidirectional(sm.values.reshape(sm.hw_q, sm.h_g * sm.w_g))
