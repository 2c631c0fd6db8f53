import logging

import numpy as np

from qaconv.models.similarity import (
    STAGE_PROBABILITY, STAGE_RAW, STAGE_RERANKED, STAGE_TLIFTED, SimilarityMatrix
)
from qaconv.utils.exceptions import PreconditionError

logger = logging.getLogger(__name__)

MINMAX_EPS = 1e-12


def nearby_set(query_index, query_meta, tau):
    """
    Indices of records in the query's camera within tau seconds of it

    The query itself is always a member (its time difference is 0).
    """
    anchor = query_meta[query_index]
    return np.array([
        index for index, record in enumerate(query_meta)
        if record.camera == anchor.camera and abs(record.time - anchor.time) < tau or index == query_index
    ], dtype=np.int64)


def pivot_set(scores, gallery_indices, k):
    """
    Overall top-k gallery entries for a nearby set

    Args:
        scores: [|R|, |G|] appearance scores of every nearby person against
            the entries of one gallery camera
        gallery_indices: ascending gallery indices of that camera's entries
        k: pivot count

    Returns:
        np.ndarray: the k highest-scoring distinct entries, ties by lower
        gallery index; empty when the camera has no entries
    """
    gallery_indices = np.asarray(gallery_indices, dtype=np.int64)
    if gallery_indices.size == 0:
        return gallery_indices
    best = np.asarray(scores, dtype=np.float64).max(axis=0)
    order = np.argsort(-best, kind='stable')
    return gallery_indices[order[:k]]


def temporal_probability(pivot_times, x_times, sigma):
    """
    Kernel density of within-camera time differences to the pivots

    p_t(X) = mean over pivots B of exp(-(t_B - t_X)^2 / sigma^2). No pivots
    gives p_t = 0.
    """
    pivot_times = np.asarray(pivot_times, dtype=np.float64)
    x_times = np.atleast_1d(np.asarray(x_times, dtype=np.float64))
    if pivot_times.size == 0:
        return np.zeros_like(x_times)
    diff = x_times[:, None] - pivot_times[None, :]
    return np.mean(np.exp(-(diff * diff) / (sigma * sigma)), axis=1)


def appearance_probabilities(matrix):
    """
    Appearance scores in [0, 1] for fusion

    Probabilities pass through. Re-ranked distances become
    1 - (d - min)/(max - min + eps) per query row and raw similarities
    (s - min)/(max - min + eps); both maps keep each row's ranking.
    """
    scores = matrix.scores.astype(np.float64)
    if matrix.stage == STAGE_PROBABILITY:
        return scores
    if matrix.stage not in (STAGE_RERANKED, STAGE_RAW):
        raise PreconditionError(f"Cannot fuse a '{matrix.stage}' matrix")
    low = scores.min(axis=1, keepdims=True)
    span = scores.max(axis=1, keepdims=True) - low + MINMAX_EPS
    scaled = (scores - low) / span
    return 1.0 - scaled if matrix.stage == STAGE_RERANKED else scaled


def check_timestamps(records, name):
    missing = [index for index, record in enumerate(records) if not record.has_time]
    if missing:
        raise PreconditionError(
            f"Temporal lifting needs good time records, but {len(missing)} {name} records have no timestamp",
            details={"first_missing": missing[:10]}
        )


class TLiftService:
    """Model-free temporal lifting of appearance scores"""

    def __init__(self, params):
        self.params = params

    def fuse_query(self, query_index, appearance, query_meta, gallery_cameras, gallery_times):
        """Fused score row of one query"""
        params = self.params
        nearby = nearby_set(query_index, query_meta, params.tau)
        query_camera = query_meta[query_index].camera
        row = appearance[query_index].copy()
        for camera in np.unique(gallery_cameras):
            members = np.flatnonzero(gallery_cameras == camera)
            if params.exclude_same_camera and camera == query_camera:
                continue
            pivots = pivot_set(appearance[np.ix_(nearby, members)], members, params.k)
            p_t = temporal_probability(gallery_times[pivots], gallery_times[members], params.sigma)
            row[members] = (p_t + params.alpha) * appearance[query_index, members]
        return row

    def tlift_fuse(self, matrix, query_meta, gallery_meta):
        """
        Multiply every appearance score by (p_t + alpha)

        For each query, nearby persons in its camera are gathered, and for
        each gallery camera their overall top-K retrievals act as pivots of
        a temporal density over that camera.

        Returns:
            SimilarityMatrix: tlifted stage, same shape as the input
        """
        matrix.check_dims(len(query_meta), len(gallery_meta))
        check_timestamps(query_meta, "query")
        check_timestamps(gallery_meta, "gallery")
        appearance = appearance_probabilities(matrix)
        gallery_cameras = np.array([r.camera for r in gallery_meta], dtype=np.int64)
        gallery_times = np.array([r.time for r in gallery_meta], dtype=np.float64)

        logger.info(f"Temporal lifting {matrix.n_query}×{matrix.n_gallery} scores "
                    f"(tau={self.params.tau}, sigma={self.params.sigma}, K={self.params.k}, "
                    f"alpha={self.params.alpha})")
        fused = np.stack([
            self.fuse_query(i, appearance, query_meta, gallery_cameras, gallery_times)
            for i in range(matrix.n_query)
        ])
        return SimilarityMatrix(fused, STAGE_TLIFTED)
