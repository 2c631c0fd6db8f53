import logging
import math
import time

import numpy as np
import pytest

from qaconv.models.feature_map import FeatureMap
from qaconv.models.head import MODE_EVAL, MODE_TRAIN, HeadParams
from qaconv.models.similarity import STAGE_PROBABILITY
from qaconv.models.store import GalleryStore
from qaconv.services.matching_service import MatchingService, head_forward
from qaconv.utils.exceptions import PreconditionError, ProfileMismatchError
from tests.factories import identity_head, random_maps

logger = logging.getLogger(__name__)

# Time limit for 100 queries against 1000 gallery maps of profile 128×24×8 on 4 workers
FULL_SCALE_SECONDS = 120.0


def test_zero_fc_gives_half_for_any_input(rng):
    head = identity_head(8, fc_weight=np.zeros(8))
    probs = head_forward(rng.standard_normal((5, 8)), head)
    assert np.all(probs == 0.5)


def test_single_weight_on_zero_feature_gives_half(rng):
    weight = np.zeros(8)
    weight[0] = 1.0
    v = rng.standard_normal(8)
    v[0] = 0.0
    assert head_forward(v[None, :], identity_head(8, fc_weight=weight))[0] == 0.5


def test_train_mode_matches_scalar_evaluation(rng):
    head = HeadParams.initialize(4, seed=3)
    head.bn1_weight = rng.uniform(0.5, 1.5, 4)
    head.bn1_bias = rng.uniform(-0.5, 0.5, 4)
    head.bn2_weight = np.array([1.3])
    head.bn2_bias = np.array([-0.2])
    x = rng.standard_normal((4, 4))
    probs = head_forward(x, head.copy())

    eps = head.eps
    y1 = np.zeros((4, 4))
    for f in range(4):
        column = [x[n, f] for n in range(4)]
        mean = sum(column) / 4
        var = sum((c - mean) ** 2 for c in column) / 4
        for n in range(4):
            y1[n, f] = head.bn1_weight[f] * (x[n, f] - mean) / math.sqrt(var + eps) + head.bn1_bias[f]
    z = [sum(y1[n, f] * head.fc_weight[f] for f in range(4)) + head.fc_bias[0] for n in range(4)]
    mean = sum(z) / 4
    var = sum((v - mean) ** 2 for v in z) / 4
    for n in range(4):
        y2 = head.bn2_weight[0] * (z[n] - mean) / math.sqrt(var + eps) + head.bn2_bias[0]
        assert abs(probs[n] - 1 / (1 + math.exp(-y2))) < 1e-12


def test_train_mode_updates_running_stats_eval_does_not(rng):
    head = HeadParams.initialize(4, seed=0)
    x = rng.standard_normal((6, 4))
    head_forward(x, head)
    assert np.allclose(head.bn1_running_mean, 0.1 * x.mean(axis=0))
    assert np.allclose(head.bn1_running_var, 0.9 + 0.1 * x.var(axis=0, ddof=1))

    frozen = head.copy(mode=MODE_EVAL)
    before = frozen.to_dict()
    head_forward(x, frozen)
    assert frozen.to_dict() == before


def test_train_mode_needs_two_pairs(rng):
    with pytest.raises(PreconditionError):
        head_forward(rng.standard_normal((1, 4)), HeadParams.initialize(4))


def test_probabilities_strictly_inside_unit_interval():
    head = identity_head(4, fc_weight=np.full(4, 1e6))
    probs = head_forward(np.array([[1.0, 1, 1, 1], [-1.0, -1, -1, -1]]), head)
    assert np.all(probs > 0) and np.all(probs < 1)
    assert not np.isnan(probs).any()


def _stores(rng, n_q, n_g, profile=(4, 2, 2)):
    return (GalleryStore(random_maps(rng, n_q, *profile)), GalleryStore(random_maps(rng, n_g, *profile)))


def test_match_batch_single_pair_consistency(rng, small_head):
    queries, gallery = _stores(rng, 1, 1)
    matrix = MatchingService().match_batch(queries, gallery, small_head)
    vector, _ = MatchingService().raw_similarity(queries[0], gallery[0])
    assert matrix.stage == STAGE_PROBABILITY
    assert matrix.scores[0, 0] == np.float32(head_forward(vector[None, :], small_head)[0])


def test_match_batch_is_worker_independent(rng, small_head):
    queries, gallery = _stores(rng, 3, 5)
    single = MatchingService(workers=1).match_batch(queries, gallery, small_head)
    pooled = MatchingService(workers=4).match_batch(queries, gallery, small_head)
    assert np.array_equal(single.scores, pooled.scores)


def test_match_batch_equals_pairwise_calls(rng):
    head = HeadParams.initialize(8, seed=5).eval()
    queries, gallery = _stores(rng, 10, 20)
    matrix = MatchingService(gallery_block=7).match_batch(queries, gallery, head)
    matcher = MatchingService()
    for i in range(10):
        for j in range(20):
            vector, _ = matcher.raw_similarity(queries[i], gallery[j])
            assert abs(matrix.scores[i, j] - head_forward(vector[None, :], head)[0]) < 1e-6


def test_gallery_block_size_does_not_change_scores(rng, small_head):
    queries, gallery = _stores(rng, 4, 9)
    small = MatchingService(gallery_block=2).match_batch(queries, gallery, small_head)
    large = MatchingService(gallery_block=64).match_batch(queries, gallery, small_head)
    assert np.allclose(small.scores, large.scores, rtol=0, atol=1e-7)


def test_probability_symmetry_with_equal_fc_halves(rng, small_head):
    queries, gallery = _stores(rng, 3, 4)
    matcher = MatchingService()
    forward = matcher.match_batch(queries, gallery, small_head)
    backward = matcher.match_batch(gallery, queries, small_head)
    assert np.allclose(forward.scores, backward.scores.T, atol=1e-6)


def test_match_batch_requires_eval_mode(rng):
    queries, gallery = _stores(rng, 2, 2)
    with pytest.raises(PreconditionError):
        MatchingService().match_batch(queries, gallery, HeadParams.initialize(8))


def test_match_batch_rejects_profile_mismatch(rng, small_head):
    queries = GalleryStore(random_maps(rng, 2, 4, 2, 2))
    gallery = GalleryStore(random_maps(rng, 2, 3, 2, 2))
    with pytest.raises(ProfileMismatchError):
        MatchingService().match_batch(queries, gallery, small_head)


def test_match_batch_rejects_empty_store(small_head):
    empty = GalleryStore(np.zeros((0, 4, 2, 2)))
    with pytest.raises(PreconditionError):
        MatchingService().match_batch(empty, empty, small_head)


def test_interpret_identical_maps(rng, small_head):
    fm = FeatureMap(random_maps(rng, 1, 4, 2, 2)[0])
    result = MatchingService().interpret(fm, fm, small_head, threshold=0.5)
    assert len(result) == 4
    for match in result:
        assert match.query_location == match.gallery_location
        assert abs(match.score - 1.0) < 1e-5
    assert 0 < result.probability < 1


def test_interpret_orthogonal_maps_is_empty(small_head):
    e1 = np.zeros((4, 2, 2))
    e1[0] = 1
    e2 = np.zeros((4, 2, 2))
    e2[1] = 1
    assert len(MatchingService().interpret(FeatureMap(e1), FeatureMap(e2), small_head)) == 0


def test_interpret_threshold_zero_lists_every_pooled_entry(rng, small_head):
    q, g = np.abs(random_maps(rng, 2, 4, 2, 2))
    result = MatchingService().interpret(FeatureMap(q), FeatureMap(g), small_head, threshold=0.0, deduplicate=False)
    assert len(result) == 8
    assert sum(1 for match in result if match.direction == 'query') == 4


def test_interpret_runs_head_in_eval_mode(rng):
    fm = FeatureMap(random_maps(rng, 1, 4, 2, 2)[0])
    head = HeadParams.initialize(8)
    result = MatchingService().interpret(fm, fm, head)
    assert head.mode == MODE_TRAIN
    assert result.to_dict()["threshold"] == 0.5


def test_interpret_rejects_bad_threshold(rng, small_head):
    fm = FeatureMap(random_maps(rng, 1, 4, 2, 2)[0])
    with pytest.raises(PreconditionError):
        MatchingService().interpret(fm, fm, small_head, threshold=1.5)


@pytest.mark.slow
def test_full_scale_matching_time(rng, record_property):
    queries = random_maps(rng, 100, 128, 24, 8)
    gallery = random_maps(rng, 1000, 128, 24, 8)
    started = time.perf_counter()
    vectors = MatchingService(workers=4).raw_similarity_batch(queries, gallery)
    elapsed = time.perf_counter() - started
    record_property('match_seconds', round(elapsed, 2))
    logger.warning(f"Matched 100×1000 maps of profile 128×24×8 on 4 workers in {elapsed:.2f}s")
    assert vectors.shape == (100, 1000, 2 * 24 * 8)
    assert elapsed < FULL_SCALE_SECONDS
