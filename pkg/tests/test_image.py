"""Value types, metrics, and file round trips."""
import math

import numpy as np
import pytest

from ardeblur import image as im


def test_as_plane_rejects_wrong_rank():
    with pytest.raises(ValueError):
        im.as_plane(np.zeros(4))
    with pytest.raises(ValueError):
        im.as_plane(np.zeros((2, 3, 2)))


def test_as_plane_rejects_non_finite():
    a = np.zeros((3, 3))
    for bad in (np.nan, np.inf, -np.inf):
        a[1, 1] = bad
        with pytest.raises(ValueError):
            im.as_plane(a)


def test_as_plane_casts_dtype():
    p = im.as_plane(np.arange(6, dtype=np.int32).reshape(2, 3))
    assert p.dtype == np.float64


def test_as_kernel_requires_odd_dims():
    im.as_kernel(np.ones((3, 5)))
    im.as_kernel(np.ones((1, 1)))
    for shape in ((2, 3), (3, 4), (4, 4)):
        with pytest.raises(ValueError):
            im.as_kernel(np.ones(shape))


def test_normalize_psf_unit_sum():
    rng = np.random.default_rng(3)
    k = rng.random((5, 3)) + 0.1
    n = im.normalize_psf(k)
    assert abs(n.sum() - 1.0) < 1e-14
    # already normalized input is a fixed point
    assert np.allclose(im.normalize_psf(n), n, atol=1e-15)


def test_normalize_psf_zero_sum_raises():
    k = np.zeros((3, 3))
    k[0, 0], k[2, 2] = 1.0, -1.0
    with pytest.raises(ValueError):
        im.normalize_psf(k)


def test_psnr_known_value():
    a = np.zeros((8, 8))
    b = np.full((8, 8), 0.5)
    # mse 0.25 against peak 1.0
    assert abs(im.psnr(a, b) - 10.0 * math.log10(4.0)) < 1e-12


def test_psnr_identical_is_inf():
    a = np.random.default_rng(0).random((6, 6))
    assert im.psnr(a, a.copy()) == math.inf


def test_psnr_shape_mismatch_raises():
    with pytest.raises(ValueError):
        im.psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        im.psnr(im.Image.from_plane(np.zeros((4, 4))), np.zeros((5, 4)))


def test_psnr_accepts_images_and_planes():
    rng = np.random.default_rng(7)
    a = rng.random((6, 6))
    b = rng.random((6, 6))
    ref = im.psnr(a, b)
    assert im.psnr(im.Image.from_plane(a), b) == ref
    assert im.psnr(a, im.Image.from_plane(b)) == ref


def test_psnr_rgb_averages_channel_mse():
    rng = np.random.default_rng(8)
    planes_a = [rng.random((5, 5)) for _ in range(3)]
    planes_b = [rng.random((5, 5)) for _ in range(3)]
    mse = np.mean([im.mean_sq(x - y) for x, y in zip(planes_a, planes_b)])
    got = im.psnr(im.Image(planes_a), im.Image(planes_b))
    assert abs(got - 10.0 * math.log10(1.0 / mse)) < 1e-12


def test_ncc_basic_values():
    rng = np.random.default_rng(4)
    a = rng.random((7, 7))
    assert abs(im.ncc(a, a) - 1.0) < 1e-12
    assert abs(im.ncc(a, -a) + 1.0) < 1e-12
    # affine invariance
    assert abs(im.ncc(a, 3.0 * a + 5.0) - 1.0) < 1e-12
    # a constant carries no signal
    assert im.ncc(np.ones((3, 3)), a[:3, :3]) == 0.0


def test_mean_abs_mean_sq():
    a = np.array([[1.0, -2.0], [3.0, -4.0]])
    assert im.mean_abs(a) == 2.5
    assert im.mean_sq(a) == 7.5


def test_luminance_weights():
    r = np.full((4, 4), 1.0)
    g = np.zeros((4, 4))
    b = np.zeros((4, 4))
    assert np.allclose(im.luminance(im.Image((r, g, b))), 0.299)
    assert np.allclose(im.luminance(im.Image((g, r, b))), 0.587)
    assert np.allclose(im.luminance(im.Image((g, b, r))), 0.114)


def test_luminance_gray_passthrough():
    p = np.random.default_rng(1).random((5, 5))
    assert np.array_equal(im.luminance(im.Image.from_plane(p)), p)


def test_image_validation():
    p = np.zeros((4, 4))
    with pytest.raises(ValueError):
        im.Image((p, p))  # 2 channels is not a thing
    with pytest.raises(ValueError):
        im.Image((p, p, np.zeros((4, 5))))


def test_image_map():
    p = np.random.default_rng(2).random((4, 4))
    img = im.Image.from_plane(p)
    out = img.map(lambda x: 2.0 * x)
    assert np.allclose(out.planes[0], 2.0 * p)
    assert out.n_channels == 1


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    p = rng.random((16, 12))
    path = str(tmp_path / "t.pgm")
    im.save_image(p, path)
    back = im.load_image(path)
    assert back.n_channels == 1
    q = np.floor(np.clip(p, 0, 1) * 255.0 + 0.5) / 255.0
    assert np.array_equal(back.planes[0], q)
    assert np.max(np.abs(back.planes[0] - p)) <= 0.5 / 255.0 + 1e-12


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    img = im.Image(tuple(rng.random((8, 9)) for _ in range(3)))
    path = str(tmp_path / "t.ppm")
    im.save_image(img, path)
    back = im.load_image(path)
    assert back.n_channels == 3
    for orig, got in zip(img.planes, back.planes):
        assert np.max(np.abs(got - orig)) <= 0.5 / 255.0 + 1e-12


def test_pgm_channel_count_enforced(tmp_path):
    rgb = im.Image(tuple(np.zeros((4, 4)) for _ in range(3)))
    with pytest.raises(ValueError):
        im.save_image(rgb, str(tmp_path / "t.pgm"))
    with pytest.raises(ValueError):
        im.save_image(np.zeros((4, 4)), str(tmp_path / "t.ppm"))


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    p = rng.random((10, 11))
    path = str(tmp_path / "t.png")
    im.save_image(p, path)
    back = im.load_image(path)
    q = np.floor(np.clip(p, 0, 1) * 255.0 + 0.5) / 255.0
    assert np.array_equal(back.planes[0], q)

    rgb = im.Image(tuple(rng.random((7, 6)) for _ in range(3)))
    path3 = str(tmp_path / "t3.png")
    im.save_image(rgb, path3)
    back3 = im.load_image(path3)
    assert back3.n_channels == 3
    for orig, got in zip(rgb.planes, back3.planes):
        assert np.max(np.abs(got - orig)) <= 0.5 / 255.0 + 1e-12


def test_save_clamps_out_of_range(tmp_path):
    p = np.array([[-0.5, 0.25], [1.5, 1.0]])
    path = str(tmp_path / "c.pgm")
    im.save_image(np.pad(p, 1, mode="edge"), path)
    back = im.load_image(path).planes[0]
    assert back.min() == 0.0 and back.max() == 1.0


def test_unsupported_format_raises(tmp_path):
    with pytest.raises(ValueError):
        im.save_image(np.zeros((4, 4)), str(tmp_path / "t.tiff"))
    with pytest.raises(ValueError):
        im.load_image(str(tmp_path / "t.bmp"))


def test_kernel_text_round_trip_exact(tmp_path):
    rng = np.random.default_rng(10)
    k = rng.standard_normal((5, 3)) * np.exp(rng.uniform(-20, 3, (5, 3)))
    path = str(tmp_path / "k.txt")
    im.save_kernel(k, path)
    back = im.load_kernel(path)
    # %.17g is enough digits for float64 to survive the trip bit-exact
    assert np.array_equal(back, k)


def test_load_kernel_validates(tmp_path):
    path = str(tmp_path / "bad.txt")
    with open(path, "w") as f:
        f.write("3 3\n1 2 3\n")
    with pytest.raises(ValueError):
        im.load_kernel(path)
