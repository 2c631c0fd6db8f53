import logging

import numpy as np

from qaconv.models.similarity import STAGE_RERANKED, SimilarityMatrix
from qaconv.utils.exceptions import ProfileMismatchError

logger = logging.getLogger(__name__)


def k_reciprocal_neighbors(initial_rank, i, k):
    """Members of i's top-(k+1) list that also hold i in their own top-(k+1)"""
    forward = initial_rank[i, :k + 1]
    backward = initial_rank[forward, :k + 1]
    return forward[np.any(backward == i, axis=1)]


def combined_distance(qg, qq, gg):
    """
    (n_q+n_g)×(n_q+n_g) distance matrix over queries then gallery

    The diagonal is zeroed so every sample is its own nearest neighbor.
    """
    n_q, n_g = qg.shape
    if qq.shape != (n_q, n_q):
        raise ProfileMismatchError(f"Query-query matrix is {qq.shape[0]}×{qq.shape[1]}, expected {n_q}×{n_q}")
    if gg.shape != (n_g, n_g):
        raise ProfileMismatchError(f"Gallery-gallery matrix is {gg.shape[0]}×{gg.shape[1]}, expected {n_g}×{n_g}")
    dist = np.block([[qq, qg], [qg.T, gg]]).astype(np.float64)
    np.fill_diagonal(dist, 0.0)
    return dist


def encode_neighbors(dist, initial_rank, k1):
    """Gaussian-weighted k-reciprocal encoding with neighbor expansion, one row per sample"""
    n = dist.shape[0]
    half = int(np.around(k1 / 2))
    v = np.zeros_like(dist)
    for i in range(n):
        reciprocal = k_reciprocal_neighbors(initial_rank, i, k1)
        expansion = reciprocal
        for candidate in reciprocal:
            candidate_set = k_reciprocal_neighbors(initial_rank, candidate, half)
            if len(np.intersect1d(candidate_set, reciprocal)) > 2.0 / 3 * len(candidate_set):
                expansion = np.append(expansion, candidate_set)
        expansion = np.unique(expansion)
        weight = np.exp(-dist[i, expansion])
        v[i, expansion] = weight / np.sum(weight)
    return v


class RerankService:
    """k-reciprocal encoding re-ranking of query×gallery distances"""

    def __init__(self, params):
        self.params = params

    def k_reciprocal_rerank(self, qg, qq, gg):
        """
        Refine query-gallery distances by reciprocal-neighbor overlap

        Args:
            qg: query×gallery SimilarityMatrix (probability or distance stage)
            qq: query×query SimilarityMatrix
            gg: gallery×gallery SimilarityMatrix

        Returns:
            SimilarityMatrix: reranked_distance stage, final distance
            lambda·d + (1 - lambda)·d_jaccard, lower is better
        """
        k1, k2, lam = self.params.k1, self.params.k2, self.params.lambda_value
        original = qg.to_distance().astype(np.float64)
        dist = combined_distance(original, qq.to_distance(), gg.to_distance())
        n_q = qg.n_query
        logger.info(f"Re-ranking {qg.n_query}×{qg.n_gallery} distances (k1={k1}, k2={k2}, lambda={lam})")

        initial_rank = np.argsort(dist, axis=1, kind='stable')
        v = encode_neighbors(dist, initial_rank, k1)
        if k2 != 1:
            v = np.stack([v[initial_rank[i, :k2]].mean(axis=0) for i in range(dist.shape[0])])

        jaccard = np.empty((n_q, dist.shape[0]))
        for i in range(n_q):
            overlap = np.minimum(v[i][None, :], v).sum(axis=1)
            jaccard[i] = 1.0 - overlap / (2.0 - overlap)

        final = jaccard[:, n_q:] * (1 - lam) + original * lam
        return SimilarityMatrix(np.maximum(final, 0.0), STAGE_RERANKED)
