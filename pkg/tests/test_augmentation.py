import numpy as np
import pytest

from qaconv.models.image import DEFAULT_HEIGHT, DEFAULT_WIDTH, ImageTensor
from qaconv.services.augmentation_service import AugmentationService, occlusion_box, occlusion_side_limit
from qaconv.utils.exceptions import PreconditionError


@pytest.fixture
def black_image():
    return ImageTensor(np.zeros((3, DEFAULT_HEIGHT, DEFAULT_WIDTH)))


def test_occlusion_fills_exactly_one_bounded_square(black_image):
    service = AugmentationService()
    for seed in range(1000):
        out = service.random_occlude(black_image, seed).data
        top, left, side = service.occlusion_box(black_image, seed)
        assert 1 <= side <= 102
        assert 0 <= top <= DEFAULT_HEIGHT - side and 0 <= left <= DEFAULT_WIDTH - side
        assert np.all(out[:, top:top + side, left:left + side] == 1.0)
        assert int((out == 1.0).sum()) == 3 * side * side


def test_occlusion_is_deterministic_under_seed(black_image):
    service = AugmentationService()
    assert service.random_occlude(black_image, 99) == service.random_occlude(black_image, 99)
    boxes = {service.occlusion_box(black_image, seed) for seed in range(20)}
    assert len(boxes) > 1


def test_occlusion_leaves_input_untouched(rng):
    image = ImageTensor(rng.uniform(0, 0.5, (1, 16, 8)))
    before = image.data.copy()
    AugmentationService().random_occlude(image, 5)
    assert np.array_equal(image.data, before)


def test_occlusion_box_rejects_bad_fraction(rng):
    with pytest.raises(PreconditionError):
        occlusion_box(10, 10, rng, max_frac=0)
    with pytest.raises(PreconditionError):
        occlusion_box(10, 1, rng, max_frac=0.5)


def test_side_limit_survives_float_rounding():
    assert occlusion_side_limit(100, 100, 0.29) == 29
    assert occlusion_side_limit(DEFAULT_HEIGHT, DEFAULT_WIDTH) == 102
    assert occlusion_side_limit(20, 100, 0.29) == 20


def test_largest_side_is_reachable():
    image = ImageTensor(np.zeros((3, 100, 100)))
    service = AugmentationService()
    sides = {service.occlusion_box(image, seed, max_frac=0.29)[2] for seed in range(2000)}
    assert max(sides) == 29


def test_hflip_is_an_involution(rng):
    image = ImageTensor(rng.uniform(0, 1, (3, 6, 5)))
    service = AugmentationService()
    once = service.random_hflip(image, 0, p=1.0)
    assert np.array_equal(once.data, image.data[:, :, ::-1])
    assert service.random_hflip(once, 0, p=1.0) == image
    assert service.random_hflip(image, 0, p=0.0) == image


def test_hflip_keeps_symmetric_images(rng):
    half = rng.uniform(0, 1, (3, 4, 3))
    image = ImageTensor(np.concatenate([half, half[:, :, ::-1]], axis=2))
    assert AugmentationService().random_hflip(image, 1, p=1.0) == image


def test_feature_map_augmentation(rng):
    data = rng.uniform(0.1, 1.0, (4, 6, 4))
    service = AugmentationService()
    out = service.augment_feature_map(data, 11)
    assert out.shape == data.shape
    assert np.array_equal(out, service.augment_feature_map(data, 11))
    zeroed = (out == 0).all(axis=0)
    assert 1 <= zeroed.sum() <= 6 * 4
