import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import highpass_oracle, median_filter_oracle
from tdcnn import preprocess as P
from tdcnn.errors import DataFormatError, ShapeMismatchError

_images = st.integers(1, 12).flatmap(
    lambda h: st.integers(1, 12).flatmap(
        lambda w: st.binary(min_size=h * w, max_size=h * w).map(
            lambda raw: np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()
        )
    )
)


def test_grayscale_preserves_gray():
    for v in (0, 17, 255):
        rgb = np.full((3, 4, 3), v, dtype=np.uint8)
        assert np.all(P.to_grayscale(rgb) == v)


def test_grayscale_pure_red():
    rgb = np.zeros((1, 1, 3), dtype=np.uint8)
    rgb[0, 0, 0] = 255
    assert P.to_grayscale(rgb)[0, 0] == 76  # round(0.299 * 255)


def test_grayscale_single_channel_passthrough():
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    assert P.to_grayscale(img) is img


def test_grayscale_rejects_bad_channel_count():
    with pytest.raises(DataFormatError):
        P.to_grayscale(np.zeros((2, 2, 4), dtype=np.uint8))


def test_median_constant_image_unchanged():
    img = np.full((5, 7), 42, dtype=np.uint8)
    assert np.array_equal(P.median_filter_3x3(img), img)


def test_median_center_of_distinct_values():
    img = np.arange(9, dtype=np.uint8).reshape(3, 3)
    assert P.median_filter_3x3(img)[1, 1] == 4


@settings(max_examples=40, deadline=None)
@given(_images)
def test_median_matches_sorted_window_oracle(img):
    assert np.array_equal(P.median_filter_3x3(img), median_filter_oracle(img))


@given(_images)
@settings(max_examples=20, deadline=None)
def test_median_stays_within_input_range(img):
    out = P.median_filter_3x3(img)
    assert out.min() >= img.min() and out.max() <= img.max()


def test_highpass_flat_field_unchanged():
    img = np.full((6, 6), 99, dtype=np.uint8)
    assert np.array_equal(P.highpass_enhance(img), img)


@pytest.mark.parametrize("v,expect_clamp", [(100, True), (64, True), (40, False)])
def test_highpass_isolated_bright_pixel(v, expect_clamp):
    img = np.zeros((5, 5), dtype=np.uint8)
    img[2, 2] = v
    out = P.highpass_enhance(img)
    # edge map at the pixel is 4v, so the output is min(5v, 255)
    assert out[2, 2] == (255 if expect_clamp else 5 * v)


@settings(max_examples=30, deadline=None)
@given(_images.filter(lambda im: im.shape[0] >= 3 and im.shape[1] >= 3))
def test_highpass_matches_two_pass_oracle(img):
    assert np.array_equal(P.highpass_enhance(img), highpass_oracle(img))


def test_highpass_rejects_tiny_images():
    with pytest.raises(ShapeMismatchError):
        P.highpass_enhance(np.zeros((2, 5), dtype=np.uint8))


def test_resize_to_own_size_is_identity():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(9, 13), dtype=np.uint8)
    assert np.array_equal(P.resize(img, 9, 13), img)


def test_resize_constant_stays_constant():
    img = np.full((4, 6), 77, dtype=np.uint8)
    for shape in ((2, 2), (9, 5), (1, 1), (13, 20)):
        assert np.all(P.resize(img, *shape) == 77)


def test_resize_column_interpolation():
    img = np.array([[0], [255]], dtype=np.uint8)
    out = P.resize(img, 4, 1)
    assert np.array_equal(out[:, 0], [0, 85, 170, 255])


def test_augment_group_identities():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(6, 6), dtype=np.uint8)
    rotated = img
    for _ in range(4):
        rotated = P.augment(rotated)[1]
    assert np.array_equal(rotated, img)
    flipped_twice = P.augment(P.augment(img)[4])[4]
    assert np.array_equal(flipped_twice, img)


def test_augment_2x2_permutations():
    a, b, c, d = 1, 2, 3, 4
    img = np.array([[a, b], [c, d]], dtype=np.uint8)
    variants = P.augment(img)
    assert np.array_equal(variants[1], [[b, d], [a, c]])  # rot90 ccw
    assert np.array_equal(variants[4], [[b, a], [d, c]])  # horizontal flip


def test_augment_count_and_multiset():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, size=(8, 8), dtype=np.uint8)
    variants = P.augment(img)
    assert len(variants) == 5
    for v in variants:
        assert sorted(v.reshape(-1)) == sorted(img.reshape(-1))


def test_augment_nonsquare_transposes_extents():
    img = np.zeros((3, 5), dtype=np.uint8)
    variants = P.augment(img)
    assert variants[1].shape == (5, 3)
    assert variants[2].shape == (3, 5)
    assert variants[4].shape == (3, 5)


def test_normalize_range_and_values():
    zeros = np.zeros((2, 2), dtype=np.uint8)
    ones = np.full((2, 2), 255, dtype=np.uint8)
    assert np.array_equal(P.normalize(zeros), np.zeros((1, 2, 2), dtype=np.float32))
    assert np.array_equal(P.normalize(ones), np.ones((1, 2, 2), dtype=np.float32))
    mid = P.normalize(np.full((1, 1), 128, dtype=np.uint8), np.float64)
    assert abs(mid[0, 0, 0] - 128 / 255) < 1e-15


def test_pipeline_deterministic():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, size=(40, 40), dtype=np.uint8)
    a = P.pipeline(img.copy(), 16, 16)
    b = P.pipeline(img.copy(), 16, 16)
    assert np.array_equal(a, b)
