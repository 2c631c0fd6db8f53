import numpy as np
import pytest

from qaconv.models.report import EvalReport
from qaconv.models.similarity import STAGE_PROBABILITY, STAGE_RERANKED, SimilarityMatrix
from qaconv.models.store import MetaRecord
from qaconv.services.evaluation_service import EvaluationService, query_ap_cmc, rank_order
from qaconv.utils.exceptions import PreconditionError
from qaconv.utils.helpers import FPS_DUKEMTMC, FPS_MARKET1501, frames_to_seconds
from tests.factories import brute_force_eval


def _meta(ids, cams):
    return [MetaRecord(identity=i, camera=c) for i, c in zip(ids, cams)]


def test_single_positive_at_rank_two():
    matrix = SimilarityMatrix([[0.9, 0.8, 0.7, 0.6, 0.5]])
    report = EvaluationService(r_max=5).evaluate(matrix, _meta([1], [0]), _meta([2, 1, 3, 4, 5], [1] * 5))
    assert report.map == 0.5
    assert report.cmc.tolist() == [0.0, 1.0, 1.0, 1.0, 1.0]
    assert report.n_valid_queries == 1


def test_same_camera_match_is_junk():
    matrix = SimilarityMatrix([[0.9, 0.8, 0.7]])
    report = EvaluationService(r_max=2).evaluate(matrix, _meta([1], [0]), _meta([1, 2, 1], [0, 1, 1]))
    assert report.map == 0.5
    assert report.cmc.tolist() == [0.0, 1.0]


def test_distractors_are_junk():
    matrix = SimilarityMatrix([[0.9, 0.8]])
    report = EvaluationService(r_max=1).evaluate(matrix, _meta([1], [0]), _meta([-1, 1], [1, 1]))
    assert report.map == 1.0 and report.rank(1) == 1.0


def test_perfect_scorer():
    query_ids, gallery_ids = [0, 1, 2], [2, 0, 1, 0, 3]
    scores = [[1.0 if q == g else 0.0 for g in gallery_ids] for q in query_ids]
    report = EvaluationService(r_max=3).evaluate(
        SimilarityMatrix(scores), _meta(query_ids, [0] * 3), _meta(gallery_ids, [1] * 5)
    )
    assert report.map == 1.0
    assert report.cmc.tolist() == [1.0, 1.0, 1.0]


def test_queries_without_positive_are_skipped():
    matrix = SimilarityMatrix([[0.9, 0.1], [0.2, 0.8]])
    report = EvaluationService(r_max=2).evaluate(matrix, _meta([1, 7], [0, 0]), _meta([1, 2], [1, 1]))
    assert report.n_valid_queries == 1
    assert report.rank(1) == 1.0


def test_no_valid_queries_is_an_error():
    matrix = SimilarityMatrix([[0.5]])
    with pytest.raises(PreconditionError):
        EvaluationService().evaluate(matrix, _meta([1], [0]), _meta([1], [0]))


def test_rank_order_breaks_ties_by_lower_index():
    assert rank_order(np.array([0.2, 0.5, 0.5, 0.1])).tolist() == [1, 2, 0, 3]


def test_query_ap_cmc_without_positive():
    assert query_ap_cmc(np.arange(3), np.zeros(3, bool), np.zeros(3, bool), 3) == (None, None)


def test_matches_brute_force_definitions(rng):
    for _ in range(200):
        n_query, n_gallery = int(rng.integers(1, 11)), int(rng.integers(2, 51))
        scores = np.round(rng.uniform(0, 1, (n_query, n_gallery)), 1)
        query_ids = rng.integers(0, 4, n_query)
        query_cams = rng.integers(0, 3, n_query)
        gallery_ids = rng.integers(-1, 4, n_gallery)
        gallery_cams = rng.integers(0, 3, n_gallery)
        gallery_ids[0] = query_ids[0]
        gallery_cams[0] = (query_cams[0] + 1) % 3

        report = EvaluationService(r_max=5).evaluate(
            SimilarityMatrix(scores), _meta(query_ids, query_cams), _meta(gallery_ids, gallery_cams)
        )
        cmc, mean_ap, n = brute_force_eval(
            scores.astype(np.float32), query_ids, query_cams, gallery_ids, gallery_cams, 5
        )
        assert report.n_valid_queries == n
        assert np.allclose(report.cmc, cmc, atol=1e-12)
        assert abs(report.map - mean_ap) < 1e-12


def test_cmc_is_monotone_and_bounded(rng):
    scores = rng.uniform(0, 1, (8, 20))
    query_ids, gallery_ids = rng.integers(0, 5, 8), rng.integers(0, 5, 20)
    gallery_ids[:5] = np.arange(5)
    report = EvaluationService(r_max=20).evaluate(
        SimilarityMatrix(scores), _meta(query_ids, [0] * 8), _meta(gallery_ids, [1] * 20)
    )
    assert np.all(np.diff(report.cmc) >= 0)
    assert 0 <= report.cmc[0] and report.cmc[-1] == 1.0
    assert 0 <= report.map <= 1


def test_order_preserving_transforms_leave_the_report_unchanged(rng):
    scores = np.round(rng.uniform(0, 1, (6, 12)), 1)
    query_meta = _meta(rng.integers(0, 3, 6), [0] * 6)
    gallery_ids = rng.integers(0, 3, 12)
    gallery_ids[:3] = np.arange(3)
    gallery_meta = _meta(gallery_ids, [1] * 12)
    service = EvaluationService(r_max=12)
    base = service.evaluate(SimilarityMatrix(scores), query_meta, gallery_meta)
    assert service.evaluate(SimilarityMatrix(np.sqrt(scores)), query_meta, gallery_meta) == base
    assert service.evaluate(SimilarityMatrix(1 - scores, STAGE_RERANKED), query_meta, gallery_meta) == base


def test_report_rendering():
    report = EvalReport([0.5, 1.0], 0.75, 2)
    assert report.to_lines() == "map=0.750000\nn_valid_queries=2\nrank1=0.500000\nrank2=1.000000\n"
    assert report.rank(10) == 1.0
    assert report.to_dict()["rank1"] == 0.5


def test_frames_to_seconds():
    assert abs(frames_to_seconds(59940, FPS_DUKEMTMC) - 1000.0) < 1e-9
    assert frames_to_seconds(0, 25) == 0.0
    assert frames_to_seconds(250, FPS_MARKET1501) == 10.0
    with pytest.raises(PreconditionError):
        frames_to_seconds(10, 0)


def test_metadata_frames_become_seconds():
    record = MetaRecord(identity=3, camera=2, frame=500, fps=25.0)
    assert record.time == 20.0 and record.has_time


def test_r_max_must_be_positive():
    with pytest.raises(PreconditionError):
        EvaluationService(r_max=0)


def test_stage_is_used_for_direction():
    matrix = SimilarityMatrix([[0.1, 0.9]], STAGE_PROBABILITY)
    distances = SimilarityMatrix([[0.1, 0.9]], STAGE_RERANKED)
    query, gallery = _meta([1], [0]), _meta([1, 2], [1, 1])
    assert EvaluationService(r_max=1).evaluate(matrix, query, gallery).rank(1) == 0.0
    assert EvaluationService(r_max=1).evaluate(distances, query, gallery).rank(1) == 1.0
