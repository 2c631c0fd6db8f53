import math

import numpy as np
import pytest

from qaconv.models.params import TLiftParams
from qaconv.models.similarity import (
    STAGE_PROBABILITY, STAGE_RAW, STAGE_RERANKED, STAGE_TLIFTED, SimilarityMatrix
)
from qaconv.models.store import MetaRecord
from qaconv.services.evaluation_service import EvaluationService
from qaconv.services.tlift_service import (
    TLiftService, appearance_probabilities, nearby_set, pivot_set, temporal_probability
)
from qaconv.utils.exceptions import PreconditionError
from tests.factories import temporal_fixture


def _records(camera_times):
    return [MetaRecord(identity=i, camera=camera, time=t) for i, (camera, t) in enumerate(camera_times)]


def test_nearby_set_keeps_close_records_of_the_same_camera():
    meta = _records([(0, 0.0), (0, 50.0), (0, 140.0), (1, 10.0), (0, -99.0)])
    assert nearby_set(0, meta, tau=100).tolist() == [0, 1, 4]
    assert nearby_set(2, meta, tau=100).tolist() == [1, 2]


def test_nearby_set_threshold_is_strict():
    meta = _records([(0, 0.0), (0, 100.0)])
    assert nearby_set(0, meta, tau=100).tolist() == [0]


def test_nearby_set_always_contains_the_query():
    meta = _records([(3, 7.0)])
    assert nearby_set(0, meta, tau=1e-9).tolist() == [0]


def test_pivot_set_pools_over_the_nearby_group():
    scores = np.array([
        [0.9, 0.1, 0.2, 0.3],
        [0.1, 0.8, 0.2, 0.1],
    ])
    assert pivot_set(scores, [10, 11, 12, 13], k=2).tolist() == [10, 11]


def test_pivot_set_breaks_ties_by_lower_index():
    scores = np.array([[0.5, 0.7, 0.5, 0.7]])
    assert pivot_set(scores, [4, 5, 6, 7], k=3).tolist() == [5, 7, 4]


def test_pivot_set_caps_at_camera_size_and_handles_empty_cameras():
    assert pivot_set(np.array([[0.2, 0.1]]), [0, 1], k=10).tolist() == [0, 1]
    assert pivot_set(np.zeros((1, 0)), [], k=10).size == 0


def test_temporal_probability_point_values():
    sigma = 200.0
    assert temporal_probability([42.0], 42.0, sigma)[0] == 1.0
    assert abs(temporal_probability([0.0], sigma, sigma)[0] - math.exp(-1)) < 1e-9
    both = temporal_probability([0.0, sigma], 0.0, sigma)[0]
    assert abs(both - (1 + math.exp(-1)) / 2) < 1e-9
    assert abs(both - 0.683940) < 1e-6


def test_temporal_probability_without_pivots_is_zero():
    assert temporal_probability([], [1.0, 2.0], 200.0).tolist() == [0.0, 0.0]


def test_temporal_probability_is_shift_invariant_and_monotone(rng):
    pivots = rng.uniform(0, 1000, 6)
    times = rng.uniform(0, 1000, 9)
    base = temporal_probability(pivots, times, 150.0)
    assert np.allclose(temporal_probability(pivots + 12345.0, times + 12345.0, 150.0), base, atol=1e-12)
    assert np.all(base > 0) and np.all(base <= 1)
    center = pivots.mean()
    stretched = temporal_probability(center + 2 * (pivots - center), center + 2 * (times - center), 150.0)
    assert np.all(stretched <= base + 1e-12)


def test_fusion_point_value():
    matrix = SimilarityMatrix([[0.5]], STAGE_PROBABILITY)
    query = _records([(0, 0.0)])
    gallery = _records([(1, 0.0)])
    fused = TLiftService(TLiftParams(alpha=0.2)).tlift_fuse(matrix, query, gallery)
    assert fused.stage == STAGE_TLIFTED
    assert abs(float(fused.scores[0, 0]) - 0.6) < 1e-7


def test_fusion_suppresses_far_entries_without_regularizer():
    matrix = SimilarityMatrix([[0.9, 0.2]], STAGE_PROBABILITY)
    query = _records([(0, 0.0)])
    gallery = _records([(1, 0.0), (1, 1e6)])
    params = TLiftParams(alpha=0.0, k=1)
    fused = TLiftService(params).tlift_fuse(matrix, query, gallery)
    assert abs(float(fused.scores[0, 0]) - 0.9) < 1e-7
    assert float(fused.scores[0, 1]) == 0.0


def test_fusion_is_shift_invariant():
    scores, query, gallery = temporal_fixture()
    service = TLiftService(TLiftParams())
    base = service.tlift_fuse(SimilarityMatrix(scores), query, gallery)
    shift = lambda records: [MetaRecord(r.identity, r.camera, time=r.time + 5000.0) for r in records]
    moved = service.tlift_fuse(SimilarityMatrix(scores), shift(query), shift(gallery))
    assert np.allclose(moved.scores, base.scores, atol=1e-6)


def test_fusion_preserves_order_among_equal_temporal_probability():
    scores = np.array([[0.3, 0.8, 0.5]])
    query = _records([(0, 0.0)])
    gallery = _records([(1, 10.0), (1, 10.0), (1, 10.0)])
    fused = TLiftService(TLiftParams()).tlift_fuse(SimilarityMatrix(scores), query, gallery)
    assert np.argsort(-fused.scores[0], kind='stable').tolist() == [1, 2, 0]


def test_rank_flip_after_temporal_lifting():
    scores, query, gallery = temporal_fixture()
    matrix = SimilarityMatrix(scores)
    fused = TLiftService(TLiftParams()).tlift_fuse(matrix, query, gallery)
    assert np.argmax(scores[0]) == 3
    assert int(np.argmax(fused.scores[0])) == 0
    evaluator = EvaluationService(r_max=4)
    assert abs(evaluator.evaluate(matrix, query, gallery).rank(1) - 2 / 3) < 1e-12
    assert evaluator.evaluate(fused, query, gallery).rank(1) == 1.0


def test_large_regularizer_approaches_appearance_ranking():
    scores, query, gallery = temporal_fixture()
    fused = TLiftService(TLiftParams(alpha=1e6)).tlift_fuse(SimilarityMatrix(scores), query, gallery)
    for i in range(3):
        assert int(np.argmax(fused.scores[i])) == int(np.argmax(scores[i]))


def test_same_camera_entries_can_be_left_unlifted():
    matrix = SimilarityMatrix([[0.4, 0.5]])
    query = _records([(0, 0.0)])
    gallery = _records([(0, 0.0), (1, 0.0)])
    fused = TLiftService(TLiftParams(exclude_same_camera=True)).tlift_fuse(matrix, query, gallery)
    assert abs(float(fused.scores[0, 0]) - 0.4) < 1e-7
    assert abs(float(fused.scores[0, 1]) - 0.6) < 1e-7


def test_missing_timestamps_are_refused():
    matrix = SimilarityMatrix([[0.5]])
    with pytest.raises(PreconditionError):
        TLiftService(TLiftParams()).tlift_fuse(matrix, [MetaRecord(1, 0)], _records([(1, 0.0)]))


def test_tlifted_input_is_refused():
    matrix = SimilarityMatrix([[0.5]], STAGE_TLIFTED)
    with pytest.raises(PreconditionError):
        TLiftService(TLiftParams()).tlift_fuse(matrix, _records([(0, 0.0)]), _records([(1, 0.0)]))


def test_appearance_probabilities_keep_row_rankings():
    distances = SimilarityMatrix([[0.2, 0.9, 0.5]], STAGE_RERANKED)
    raw = SimilarityMatrix([[3.0, 1.0, 2.0]], STAGE_RAW)
    assert np.argsort(-appearance_probabilities(distances)[0]).tolist() == [0, 2, 1]
    assert np.argsort(-appearance_probabilities(raw)[0]).tolist() == [0, 2, 1]


def test_params_reject_invalid_values():
    for bad in ({"tau": 0}, {"sigma": -1}, {"k": 0}, {"alpha": -0.1}):
        with pytest.raises(PreconditionError):
            TLiftParams(**bad)
