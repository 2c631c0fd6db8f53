import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from qaconv.models.feature_map import FeatureMap
from qaconv.models.head import MODE_EVAL, MODE_TRAIN
from qaconv.models.similarity import (
    STAGE_PROBABILITY, Correspondence, CorrespondenceSet, SimilarityMatrix
)
from qaconv.models.store import check_same_profile
from qaconv.utils.exceptions import PreconditionError, ProfileMismatchError
from qaconv.utils.tensor_ops import (
    adaptive_convolve, check_kernel_size, extract_query_kernel, gallery_patch_matrix,
    global_max_pool_bidirectional
)

logger = logging.getLogger(__name__)

# Largest float32 strictly below 1, and the smallest positive normal float32
PROB_MAX = float(np.nextafter(np.float32(1.0), np.float32(0.0)))
PROB_MIN = float(np.finfo(np.float32).tiny)


def sigmoid(x):
    """Overflow-free logistic function"""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _linear(y1, params):
    # Row-wise reduction keeps every pair's logit independent of the batch it sits in
    return np.sum(y1 * params.fc_weight, axis=-1) + params.fc_bias[0]


def batch_norm_train(x, weight, bias, eps):
    """
    Batch normalization with batch statistics over axis 0

    Returns:
        tuple: (output, cache) where cache holds the normalized input,
        inverse std, batch mean and biased batch variance
    """
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    return weight * x_hat + bias, (x_hat, inv_std, mean, var)


def head_forward_train(vectors, params):
    """
    Train-mode forward pass without touching running statistics

    Args:
        vectors: [N, 2hw] pooled similarity vectors, N >= 2
        params: HeadParams

    Returns:
        tuple: (probabilities [N], cache for head_backward)
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_features:
        raise ProfileMismatchError(f"Expected [N, {params.n_features}] vectors, got shape {x.shape}")
    if x.shape[0] < 2:
        raise PreconditionError("Train-mode batch normalization needs at least 2 pairs")
    y1, bn1_cache = batch_norm_train(x, params.bn1_weight, params.bn1_bias, params.eps)
    z = _linear(y1, params)
    y2, bn2_cache = batch_norm_train(z, params.bn2_weight[0], params.bn2_bias[0], params.eps)
    probs = np.clip(sigmoid(y2), PROB_MIN, PROB_MAX)
    cache = {"x": x, "y1": y1, "z": z, "y2": y2, "bn1": bn1_cache, "bn2": bn2_cache}
    return probs, cache


def update_running_stats(params, cache):
    """Blend batch statistics into running statistics with params.momentum"""
    n = cache["x"].shape[0]
    m = params.momentum
    _, _, mean1, var1 = cache["bn1"]
    _, _, mean2, var2 = cache["bn2"]
    unbiased = n / (n - 1)
    params.bn1_running_mean = (1 - m) * params.bn1_running_mean + m * mean1
    params.bn1_running_var = (1 - m) * params.bn1_running_var + m * var1 * unbiased
    params.bn2_running_mean = (1 - m) * params.bn2_running_mean + m * np.atleast_1d(mean2)
    params.bn2_running_var = (1 - m) * params.bn2_running_var + m * np.atleast_1d(var2) * unbiased


def head_logits_eval(vectors, params):
    """Eval-mode pre-sigmoid output using running statistics"""
    x = np.asarray(vectors, dtype=np.float64)
    x_hat = (x - params.bn1_running_mean) / np.sqrt(params.bn1_running_var + params.eps)
    z = _linear(params.bn1_weight * x_hat + params.bn1_bias, params)
    z_hat = (z - params.bn2_running_mean[0]) / np.sqrt(params.bn2_running_var[0] + params.eps)
    return params.bn2_weight[0] * z_hat + params.bn2_bias[0]


def head_forward(vectors, params):
    """
    BN-FC-BN head followed by a sigmoid

    Works on any [..., 2hw] batch. Train mode uses batch statistics and
    updates the running statistics of params; eval mode uses the running
    statistics and leaves params untouched.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.shape[-1] != params.n_features:
        raise ProfileMismatchError(f"Vectors have {x.shape[-1]} features, head expects {params.n_features}")
    flat = x.reshape(-1, params.n_features)
    if params.mode == MODE_TRAIN:
        probs, cache = head_forward_train(flat, params)
        update_running_stats(params, cache)
    else:
        probs = np.clip(sigmoid(head_logits_eval(flat, params)), PROB_MIN, PROB_MAX)
    return probs.reshape(x.shape[:-1])


class MatchingService:
    """Query-adaptive convolution matching between feature maps"""

    def __init__(self, kernel_size=1, workers=1, gallery_block=64):
        self.kernel_size = int(kernel_size)
        self.workers = max(1, int(workers))
        self.gallery_block = max(1, int(gallery_block))

    def raw_similarity(self, query, gallery):
        """
        2hw similarity vector of one normalized pair

        Returns:
            tuple: (float32 [2hw] vector, int64 [2hw] argmax locations)
        """
        check_same_profile(query, gallery)
        kernel = extract_query_kernel(query, self.kernel_size)
        return global_max_pool_bidirectional(adaptive_convolve(kernel, gallery))

    def _kernel_matrices(self, features):
        check_kernel_size(self.kernel_size, features.shape[2], features.shape[3])
        return [
            extract_query_kernel(FeatureMap(fm), self.kernel_size).matrix().astype(np.float64)
            for fm in features
        ]

    def _patch_blocks(self, features):
        hw = features.shape[2] * features.shape[3]
        blocks = []
        for start in range(0, features.shape[0], self.gallery_block):
            chunk = features[start:start + self.gallery_block]
            matrix = np.concatenate([gallery_patch_matrix(fm, self.kernel_size) for fm in chunk], axis=1)
            blocks.append((chunk.shape[0], matrix))
        return blocks, hw

    @staticmethod
    def _pooled_row(kernel_matrix, blocks, hw):
        # One query against every gallery block -> [n_g, 2hw]
        rows = []
        for count, patch_matrix in blocks:
            sim = (kernel_matrix @ patch_matrix).astype(np.float32)
            sim = sim.reshape(hw, count, hw).transpose(1, 0, 2)
            rows.append(np.concatenate([sim.max(axis=2), sim.max(axis=1)], axis=1))
        return np.concatenate(rows, axis=0)

    def raw_similarity_batch(self, query_features, gallery_features):
        """
        [n_q, n_g, 2hw] similarity vectors for every pair of two normalized arrays

        Work is fanned out over queries; each query row always runs the
        same computation, so the result does not depend on the worker count.
        """
        query_features = np.asarray(query_features, dtype=np.float32)
        gallery_features = np.asarray(gallery_features, dtype=np.float32)
        if query_features.shape[1:] != gallery_features.shape[1:]:
            raise ProfileMismatchError(
                f"Profile mismatch: {query_features.shape[1:]} vs {gallery_features.shape[1:]}"
            )
        kernels = self._kernel_matrices(query_features)
        blocks, hw = self._patch_blocks(gallery_features)
        if self.workers == 1 or len(kernels) == 1:
            rows = [self._pooled_row(k, blocks, hw) for k in kernels]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                rows = list(pool.map(lambda k: self._pooled_row(k, blocks, hw), kernels))
        return np.stack(rows)

    def match_batch(self, queries, gallery, params):
        """
        Probability matrix of every query against every gallery entry

        Args:
            queries: normalized GalleryStore of probes
            gallery: normalized GalleryStore to search
            params: HeadParams in eval mode

        Returns:
            SimilarityMatrix: probability stage, [n_query, n_gallery]
        """
        queries.require_nonempty("query store")
        gallery.require_nonempty("gallery store")
        check_same_profile(queries, gallery)
        if params.mode != MODE_EVAL:
            raise PreconditionError("Batched matching requires the head in eval mode")
        hw = queries.profile[1] * queries.profile[2]
        if params.n_features != 2 * hw:
            raise ProfileMismatchError(f"Head expects {params.n_features} features, profile gives {2 * hw}")

        started = time.perf_counter()
        logger.info(f"Matching {len(queries)} queries against {len(gallery)} gallery entries "
                    f"(s={self.kernel_size}, workers={self.workers})")
        vectors = self.raw_similarity_batch(queries.features, gallery.features)
        scores = head_forward(vectors, params)
        logger.info(f"Matching finished in {time.perf_counter() - started:.2f}s")
        return SimilarityMatrix(scores, STAGE_PROBABILITY)

    def match_within(self, store, params):
        """Store matched against itself, used for re-ranking's qq and gg inputs"""
        return self.match_batch(store, store, params)

    def interpret(self, query, gallery, params, threshold=0.5, deduplicate=True):
        """
        Reliable local correspondences of one normalized pair

        Every pooled entry above threshold yields a (query cell, gallery
        cell, local score) triple: query-side entries point to their gallery
        argmax, gallery-side entries to their query argmax. With
        deduplicate, a cell pair found from both sides is listed once.
        """
        if not 0 <= threshold <= 1:
            raise PreconditionError(f"Interpretation threshold must lie in [0, 1], got {threshold}")
        vector, argmax = self.raw_similarity(query, gallery)
        head = params if params.mode == MODE_EVAL else params.copy(mode=MODE_EVAL)
        probability = head_forward(vector[None, :], head)[0]

        w, hw = query.w, query.hw
        correspondences = []
        seen = set()
        for index in range(2 * hw):
            score = vector[index]
            if not score > threshold:
                continue
            if index < hw:
                q_cell, g_cell, direction = index, argmax[index], 'query'
            else:
                q_cell, g_cell, direction = argmax[index], index - hw, 'gallery'
            match = Correspondence(divmod(int(q_cell), w), divmod(int(g_cell), w), score, direction)
            if deduplicate and match.key() in seen:
                continue
            seen.add(match.key())
            correspondences.append(match)
        return CorrespondenceSet(correspondences, probability, threshold)
