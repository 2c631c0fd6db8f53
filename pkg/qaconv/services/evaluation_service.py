import logging

import numpy as np

from qaconv.models.report import EvalReport
from qaconv.utils.exceptions import PreconditionError

logger = logging.getLogger(__name__)


def rank_order(similarity_row):
    """Gallery indices from best to worst; ties keep the lower index first"""
    return np.argsort(-similarity_row, kind='stable')


def query_ap_cmc(order, good, junk, r_max):
    """
    AP and CMC row of a single query

    Args:
        order: gallery indices ranked best first
        good: boolean mask of valid positives
        junk: boolean mask of entries removed from the ranking

    Returns:
        tuple: (ap, cmc) or (None, None) when the query has no valid positive
    """
    if not good.any():
        return None, None
    kept = order[~junk[order]]
    hits = np.flatnonzero(good[kept])
    ap = np.mean(np.arange(1, len(hits) + 1) / (hits + 1))
    cmc = np.zeros(r_max)
    cmc[hits[0]:] = 1.0
    return float(ap), cmc


class EvaluationService:
    """Single-query CMC / mAP evaluation with cross-camera filtering"""

    def __init__(self, r_max=20):
        if r_max < 1:
            raise PreconditionError(f"r_max must be at least 1, got {r_max}")
        self.r_max = int(r_max)

    def evaluate(self, scores, query_meta, gallery_meta):
        """
        Evaluate a score matrix against identity/camera metadata

        Gallery entries sharing the query's identity and camera, and gallery
        identity -1, are dropped from each query's ranking. Queries left
        without a positive are skipped.

        Returns:
            EvalReport
        """
        scores.check_dims(len(query_meta), len(gallery_meta))
        similarity = scores.similarity_view()
        gallery_ids = np.array([r.identity for r in gallery_meta], dtype=np.int64)
        gallery_cams = np.array([r.camera for r in gallery_meta], dtype=np.int64)

        cmc_sum = np.zeros(self.r_max)
        ap_sum = 0.0
        n_valid = 0
        for i, record in enumerate(query_meta):
            same_id = gallery_ids == record.identity
            junk = (same_id & (gallery_cams == record.camera)) | (gallery_ids == -1)
            ap, cmc = query_ap_cmc(rank_order(similarity[i]), same_id & ~junk, junk, self.r_max)
            if ap is None:
                continue
            ap_sum += ap
            cmc_sum += cmc
            n_valid += 1

        if n_valid == 0:
            raise PreconditionError("No query has a cross-camera positive in the gallery")
        report = EvalReport(cmc_sum / n_valid, ap_sum / n_valid, n_valid)
        logger.info(f"Evaluated {n_valid}/{len(query_meta)} queries: rank1={report.rank(1):.4f} "
                    f"rank5={report.rank(5):.4f} rank10={report.rank(10):.4f} mAP={report.map:.4f}")
        return report
