import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from vitmat import augment as A
from vitmat.augment import AugPolicy, ImageError
from vitmat.rng import RngState

images = st.tuples(st.integers(1, 10), st.integers(1, 10)).flatmap(
    lambda hw: arrays(np.uint8, (hw[0], hw[1], 3)))
seeds = st.integers(0, 2**63)


def half_up(x):
    return math.floor(x + 0.5)


# -- resize -------------------------------------------------------------------

@given(images)
def test_resize_same_size_is_identity(img):
    assert A.resize_bilinear(img, *img.shape[:2]).tobytes() == img.tobytes()


@given(st.integers(0, 255), st.integers(1, 20), st.integers(1, 20))
def test_resize_constant(v, h, w):
    img = np.full((5, 7, 3), v, np.uint8)
    assert (A.resize_bilinear(img, h, w) == v).all()


def test_resize_checkerboard_hand_computed():
    board = np.array([[0, 255], [255, 0]], np.uint8)
    img = np.repeat(board[..., None], 3, axis=2)
    # half-pixel centers: source coords -0.25, 0.25, 0.75, 1.25, clamped
    weights = [(1.0, 0.0), (0.75, 0.25), (0.25, 0.75), (0.0, 1.0)]
    expected = np.zeros((4, 4), np.int64)
    for i, (a0, a1) in enumerate(weights):
        for j, (b0, b1) in enumerate(weights):
            v = (a0 * b0 * board[0, 0] + a0 * b1 * board[0, 1]
                 + a1 * b0 * board[1, 0] + a1 * b1 * board[1, 1])
            expected[i, j] = half_up(v)
    out = A.resize_bilinear(img, 4, 4)
    assert np.array_equal(out[..., 0], expected)
    assert expected[1, 1] == 96 and expected[0, 0] == 0 and expected[0, 3] == 255


def test_resize_errors():
    with pytest.raises(ImageError):
        A.resize_bilinear(np.zeros((0, 3, 3), np.uint8), 2, 2)
    with pytest.raises(ImageError):
        A.resize_bilinear(np.zeros((3, 3, 3), np.uint8), 0, 2)


# -- flips / translate / crop -------------------------------------------------------

@given(images)
def test_flip_involutions_and_commute(img):
    assert A.flip_lr(A.flip_lr(img)).tobytes() == img.tobytes()
    assert A.flip_ud(A.flip_ud(img)).tobytes() == img.tobytes()
    assert A.flip_lr(A.flip_ud(img)).tobytes() == A.flip_ud(A.flip_lr(img)).tobytes()


def test_flip_lr_halves():
    img = np.zeros((4, 6, 3), np.uint8)
    img[:, 3:] = 255
    out = A.flip_lr(img)
    assert (out[:, :3] == 255).all() and (out[:, 3:] == 0).all()


@given(images)
def test_translate_zero_identity(img):
    assert A.translate(img, 0, 0).tobytes() == img.tobytes()


def test_translate_single_pixel_by_16():
    img = np.zeros((32, 32, 3), np.uint8)
    img[0, 0] = 255
    out = A.translate(img, 16, 16)
    assert (out[16, 16] == 255).all()
    assert out.sum() == 3 * 255


@given(arrays(np.uint8, (40, 40, 3)), st.integers(-16, 16), st.integers(-16, 16))
def test_translate_inverse_on_interior(img, dx, dy):
    back = A.translate(A.translate(img, dx, dy), -dx, -dy)
    rows = slice(max(0, -dy), 40 - max(0, dy))
    cols = slice(max(0, -dx), 40 - max(0, dx))
    mask = np.zeros((40, 40), bool)
    mask[rows, cols] = True
    assert np.array_equal(back[mask], img[mask])
    assert (back[~mask] == 0).all()


def test_translate_too_far():
    with pytest.raises(ImageError):
        A.translate(np.zeros((8, 8, 3), np.uint8), 8, 0)


@given(images, seeds)
def test_crop_identity_and_determinism(img, seed):
    h, w, _ = img.shape
    assert A.random_crop(img, 0, h, w, RngState(seed)).tobytes() == img.tobytes()
    a = A.random_crop(img, 2, h, w, RngState(seed))
    b = A.random_crop(img, 2, h, w, RngState(seed))
    assert a.tobytes() == b.tobytes()


def test_crop_offsets_uniform():
    img = np.zeros((3, 3, 3), np.uint8)
    img[1, 1] = 200
    rng = RngState(17)
    counts = np.zeros((3, 3), np.int64)
    n = 10_000
    for _ in range(n):
        out = A.random_crop(img, 1, 3, 3, rng)
        r, c = np.argwhere(out[..., 0] == 200)[0]
        counts[2 - r, 2 - c] += 1  # offset of the window
    assert (counts > 0).all()
    expected = n / 9
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 26.12  # 8 degrees of freedom, p = 0.001


def test_crop_too_large():
    with pytest.raises(ImageError):
        A.random_crop(np.zeros((4, 4, 3), np.uint8), 1, 7, 4, RngState(0))


# -- photometric ------------------------------------------------------------------

@given(images)
def test_photometric_identities(img):
    assert A.posterize(img, 8).tobytes() == img.tobytes()
    assert A.brightness(img, 1.0).tobytes() == img.tobytes()
    assert (A.brightness(img, 0.0) == 0).all()
    assert A.sharpness(img, 1.0).tobytes() == img.tobytes()


@given(images)
def test_solarize_boundary(img):
    out = A.solarize(img, 255)
    assert np.array_equal(out, np.where(img == 255, 0, img))
    assert A.solarize(img, 0).tobytes() == (255 - img).tobytes()


@given(images, st.integers(1, 8))
def test_posterize_idempotent_and_masks(img, bits):
    once = A.posterize(img, bits)
    assert A.posterize(once, bits).tobytes() == once.tobytes()
    assert (once % (1 << (8 - bits)) == 0).all()


@given(images)
def test_autocontrast_idempotent(img):
    once = A.autocontrast(img)
    assert A.autocontrast(once).tobytes() == once.tobytes()


def test_autocontrast_full_range_identity():
    img = (np.arange(48) * 5 % 256).astype(np.uint8).reshape(4, 4, 3)
    img[0, 0] = 0
    img[0, 1] = 255
    assert A.autocontrast(img).tobytes() == img.tobytes()


def test_autocontrast_stretch():
    img = np.zeros((1, 3, 3), np.uint8)
    img[0, :, 0] = [50, 100, 150]
    assert A.autocontrast(img)[0, :, 0].tolist() == [0, half_up(50 * 255 / 100), 255]


def test_equalize_two_level_hand_lut():
    img = np.full((32, 32, 3), 64, np.uint8)
    img[16:] = 192
    # N = 1024, last occupied level holds 512: step = 512 // 255 = 2
    # 64 -> (0 + 1) // 2 = 0 ; 192 -> min(255, (512 + 1) // 2) = 255
    out = A.equalize(img)
    assert (out[:16] == 0).all() and (out[16:] == 255).all()


def test_equalize_small_image_unchanged():
    img = np.full((8, 8, 3), 64, np.uint8)
    img[4:] = 192
    assert A.equalize(img).tobytes() == img.tobytes()


def test_equalize_matches_cumulative_rule():
    img = (RngState(3).uniform((40, 40, 3)) ** 2 * 256).astype(np.uint8)
    out = A.equalize(img)
    for ch in range(3):
        plane = img[..., ch].ravel()
        hist = [int((plane == v).sum()) for v in range(256)]
        last = [h for h in hist if h][-1]
        step = (plane.size - last) // 255
        lut, running = [], 0
        for v in range(256):
            lut.append(min(255, (running + step // 2) // step))
            running += hist[v]
        assert np.array_equal(out[..., ch].ravel(), np.array(lut)[plane])


def test_sharpness_kernel_and_border():
    img = np.zeros((5, 5, 3), np.uint8)
    img[2, 2] = 130
    sm = A.smooth(img)
    assert sm[2, 2, 0] == 50  # 130 * 5 / 13
    assert sm[1, 1, 0] == 10  # 130 / 13
    edge = np.zeros((5, 5, 3), np.uint8)
    edge[0, 0] = 255
    assert A.sharpness(edge, 0.0)[0, 0, 0] == 255


def test_parameter_ranges():
    img = np.zeros((2, 2, 3), np.uint8)
    for call in (lambda: A.posterize(img, 0), lambda: A.posterize(img, 9),
                 lambda: A.solarize(img, 256), lambda: A.brightness(img, -0.1),
                 lambda: A.sharpness(img, -1)):
        with pytest.raises(ImageError):
            call()


def test_check_image_rejects():
    with pytest.raises(ImageError):
        A.check_image(np.zeros((2, 2), np.uint8))
    with pytest.raises(ImageError):
        A.check_image(np.zeros((2, 2, 3), np.float32))


# -- RandAugment ---------------------------------------------------------------------

def test_magnitude_table_at_7():
    assert A.magnitude_params("posterize", 7) == 7
    assert A.magnitude_params("solarize", 7) == 196
    assert A.magnitude_params("brightness", 7, 1) == pytest.approx(1.21)
    assert A.magnitude_params("sharpness", 7, -1) == pytest.approx(0.79)
    assert A.magnitude_params("equalize", 7) is None


@given(st.integers(0, 30))
def test_magnitude_ranges(m):
    assert 4 <= A.magnitude_params("posterize", m) <= 8
    assert 0 <= A.magnitude_params("solarize", m) <= 255


@given(images, seeds)
def test_randaugment_n0_identity(img, seed):
    assert A.randaugment(img, 0, 7, RngState(seed)).tobytes() == img.tobytes()


@given(images, seeds)
def test_randaugment_deterministic(img, seed):
    assert A.randaugment(img, 2, 7, RngState(seed)).tobytes() == A.randaugment(img, 2, 7, RngState(seed)).tobytes()


def test_randaugment_forced_posterize_solarize(rand_image):
    img = rand_image(16, 16, seed=4)
    seed = next(s for s in range(10_000)
                if [n for n, _ in A.sample_ops(2, RngState(s))] == ["posterize", "solarize"])
    expected = A.solarize(A.posterize(img, 7), 196)
    assert A.randaugment(img, 2, 7, RngState(seed)).tobytes() == expected.tobytes()


def test_sample_ops_covers_all_ops():
    seen = {name for s in range(200) for name, _ in A.sample_ops(2, RngState(s))}
    assert seen == set(A.RANDAUG_OPS)
    assert len(A.RANDAUG_OPS) == 6


# -- normalize / pipeline / TTA ----------------------------------------------------------

def test_normalize_values():
    img = np.array([[[255, 0, 128]]], np.uint8)
    out = A.normalize(img)
    assert out[0, 0, 0] == 1.0 and out[0, 0, 1] == -1.0
    assert out[0, 0, 2] == (128 / 255 - 0.5) / 0.5


@given(images, st.tuples(*[st.floats(0.0, 1.0)] * 3), st.tuples(*[st.floats(0.05, 2.0)] * 3))
def test_denormalize_round_trip(img, mean, std):
    assert A.denormalize(A.normalize(img, mean, std), mean, std).tobytes() == img.tobytes()


def test_policy_validation():
    for kw in ({"fliplr_prob": 1.5}, {"randaug_m": 31}, {"randaug_n": -1}, {"std": (0, 1, 1)},
               {"ops": ("fliplr", "rotate")}):
        with pytest.raises(ImageError):
            AugPolicy(**kw)


def test_policy_scaled():
    p = AugPolicy.scaled(32)
    assert p.image_size == 32 and p.translate_max == 2 and p.crop_pad == 2
    assert AugPolicy().translate_max == 16 and AugPolicy().randaug_n == 2 and AugPolicy().randaug_m == 7


@given(seeds)
def test_augment_image_deterministic_and_shape(seed):
    img = (RngState(seed).uniform((20, 24, 3)) * 256).astype(np.uint8)
    p = AugPolicy.scaled(16)
    a = A.augment_image(img, p, RngState(seed))
    assert a.shape == (16, 16, 3) and a.dtype == np.uint8
    assert a.tobytes() == A.augment_image(img, p, RngState(seed)).tobytes()


def test_augment_flip_only_policy(rand_image):
    img = rand_image(8, 8)
    p = AugPolicy(image_size=8, ops=("fliplr",), fliplr_prob=1.0)
    assert A.augment_image(img, p, RngState(0)).tobytes() == A.flip_lr(img).tobytes()


@given(seeds)
def test_tta_variants_contract(seed):
    img = (RngState(seed).uniform((20, 20, 3)) * 256).astype(np.uint8)
    p = AugPolicy.scaled(16)
    one = A.tta_variants(img, p, RngState(seed), 1)
    assert len(one) == 1 and one[0].tobytes() == A.resize_bilinear(img, 16, 16).tobytes()
    five = A.tta_variants(img, p, RngState(seed), 5)
    again = A.tta_variants(img, p, RngState(seed), 5)
    assert len(five) == 5 and five[0].tobytes() == one[0].tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(five, again))


def test_tta_count_zero():
    with pytest.raises(ImageError):
        A.tta_variants(np.zeros((4, 4, 3), np.uint8), AugPolicy(image_size=4), 0, 0)
