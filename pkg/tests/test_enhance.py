import numpy as np
import pytest

from scenecam.errors import ParameterError
from scenecam.schemas.features import EnhanceKind
from scenecam.services.dsp import LogMelImage
from scenecam.services.enhance import (
    GaussianKernel,
    dog,
    enhance,
    gaussian_blur,
    median_filter,
    remove_drift,
    sobel,
    sobel_gradients,
)


def impulse(shape=(31, 31)) -> LogMelImage:
    values = np.zeros(shape)
    values[shape[0] // 2, shape[1] // 2] = 1.0
    return LogMelImage(values)


def reflect_median(values: np.ndarray, kt: int, kf: int) -> np.ndarray:
    """Per-pixel median over a whole-sample reflected neighbourhood."""
    rt, rf = kt // 2, kf // 2
    padded = np.pad(values, ((rt, rt), (rf, rf)), mode="reflect")
    out = np.empty_like(values)
    for t in range(values.shape[0]):
        for f in range(values.shape[1]):
            out[t, f] = np.median(padded[t : t + kt, f : f + kf])
    return out


class TestGaussian:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, np.sqrt(2.0), 3.0])
    def test_kernel_support_and_sum(self, sigma):
        kernel = GaussianKernel.build(sigma)
        assert kernel.radius == int(np.ceil(3 * sigma))
        assert kernel.weights.size == 2 * kernel.radius + 1
        assert kernel.weights.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(kernel.weights, kernel.weights[::-1])

    def test_impulse_response_is_separable(self):
        weights = GaussianKernel.build(1.0).weights
        out = gaussian_blur(impulse(), 1.0).values
        r = weights.size // 2
        np.testing.assert_allclose(out[15 - r : 16 + r, 15 - r : 16 + r], np.outer(weights, weights), atol=1e-15)

    def test_constant_image_is_preserved(self):
        out = gaussian_blur(LogMelImage(np.full((20, 12), -3.5)), 1.4)
        np.testing.assert_allclose(out.values, -3.5)

    def test_blurs_compose_in_the_interior(self, rng):
        img = LogMelImage(rng.standard_normal((60, 60)))
        twice = gaussian_blur(gaussian_blur(img, 1.0), 1.0).values
        once = gaussian_blur(img, np.sqrt(2.0)).values
        # truncation and renormalization keep this approximate
        np.testing.assert_allclose(twice[10:-10, 10:-10], once[10:-10, 10:-10], atol=2e-2)

    def test_blurs_compose_on_a_smooth_image(self):
        t, m = np.mgrid[0:60, 0:60] - 29.5
        bump = LogMelImage(np.exp(-(t**2 + m**2) / (2 * 120.0**2)))
        twice = gaussian_blur(gaussian_blur(bump, 1.0), 1.0).values
        once = gaussian_blur(bump, np.sqrt(2.0)).values
        assert np.abs(twice - once)[10:-10, 10:-10].max() < 1e-6

    def test_rejects_bad_sigma(self):
        with pytest.raises(ParameterError):
            GaussianKernel.build(0.0)


class TestDog:
    def test_constant_image_vanishes(self):
        np.testing.assert_allclose(dog(LogMelImage(np.full((30, 20), 7.0))).values, 0.0, atol=1e-12)

    def test_linear_ramp_vanishes_in_the_interior(self):
        t, f = np.meshgrid(np.arange(40.0), np.arange(30.0), indexing="ij")
        out = dog(LogMelImage(0.3 * t - 0.7 * f + 2.0)).values
        np.testing.assert_allclose(out[5:-5, 5:-5], 0.0, atol=1e-9)

    def test_linearity(self, rng):
        a = rng.standard_normal((25, 18))
        b = rng.standard_normal((25, 18))
        lhs = dog(LogMelImage(2.0 * a - 0.5 * b)).values
        rhs = 2.0 * dog(LogMelImage(a)).values - 0.5 * dog(LogMelImage(b)).values
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_impulse_has_positive_centre(self):
        out = dog(impulse()).values
        assert out[15, 15] > 0
        assert out.min() < 0


class TestSobel:
    @pytest.fixture
    def step(self):
        # image A (time on x) has columns 0,0,1,1,1; values is its transpose
        a = np.tile(np.array([0.0, 0.0, 1.0, 1.0, 1.0]), (5, 1))
        return LogMelImage(a.T)

    def test_step_edge(self, step):
        out = sobel(step).values
        np.testing.assert_allclose(out[[1, 2], :], 4.0)
        np.testing.assert_allclose(out[[0, 3, 4], :], 0.0)

    def test_time_edge_appears_only_in_time_gradient(self, step):
        gx, gy = sobel_gradients(step)
        assert np.abs(gx).max() == pytest.approx(4.0)
        np.testing.assert_allclose(gy, 0.0)

    def test_transpose_covariance(self, rng):
        values = rng.standard_normal((12, 9))
        np.testing.assert_allclose(sobel(LogMelImage(values.T)).values, sobel(LogMelImage(values)).values.T, atol=1e-12)

    def test_scale_covariance(self, rng):
        values = rng.standard_normal((12, 9))
        np.testing.assert_allclose(sobel(LogMelImage(-3.0 * values)).values, 3.0 * sobel(LogMelImage(values)).values)

    def test_constant_image_has_no_gradient(self):
        np.testing.assert_allclose(sobel(LogMelImage(np.full((8, 8), 4.0))).values, 0.0)


class TestMedian:
    def test_matches_reflected_neighbourhood(self, rng):
        for _ in range(100):
            t, m = rng.integers(4, 16, size=2)
            kt, kf = (int(k) for k in rng.choice([1, 3, 5, 7], size=2))
            values = rng.standard_normal((t, m))
            if kt // 2 >= t or kf // 2 >= m:
                continue
            expected = reflect_median(values, kt, kf)
            np.testing.assert_array_equal(median_filter(LogMelImage(values), kt, kf).values, expected)

    def test_impulse_is_rejected(self):
        out = median_filter(impulse((21, 21)), 3, 3).values
        np.testing.assert_array_equal(out, 0.0)

    def test_identity_kernel(self, rng):
        values = rng.standard_normal((6, 5))
        np.testing.assert_array_equal(median_filter(LogMelImage(values), 1, 1).values, values)

    @pytest.mark.parametrize("kernel", [(4, 3), (3, 0), (-1, 3)])
    def test_rejects_even_or_non_positive_kernels(self, kernel):
        with pytest.raises(ParameterError):
            median_filter(LogMelImage(np.zeros((5, 5))), *kernel)


class TestRemoveDrift:
    def test_ramp_is_removed_and_spike_kept(self):
        t, f = np.meshgrid(np.arange(80.0), np.arange(20.0), indexing="ij")
        values = 0.05 * t + 0.0 * f
        values[40, 10] += 5.0
        out = remove_drift(LogMelImage(values), (11, 3)).values
        assert out[40, 10] == pytest.approx(5.0)
        np.testing.assert_allclose(np.delete(out[10:-10].ravel(), 30 * 20 + 10), 0.0, atol=1e-12)

    def test_drift_plus_background_reconstructs_input(self, rng):
        img = LogMelImage(rng.standard_normal((30, 16)))
        residual = remove_drift(img, (5, 3)).values
        np.testing.assert_allclose(residual + median_filter(img, 5, 3).values, img.values)


class TestDispatch:
    def test_logmel_is_identity(self, rng):
        img = LogMelImage(rng.standard_normal((10, 8)))
        assert enhance(img, EnhanceKind.LOGMEL) is img

    @pytest.mark.parametrize(("kind", "fn"), [("dog", dog), ("sobel", sobel)])
    def test_named_kinds(self, rng, kind, fn):
        img = LogMelImage(rng.standard_normal((20, 12)))
        np.testing.assert_array_equal(enhance(img, kind).values, fn(img).values)

    def test_median_uses_given_kernel(self, rng):
        img = LogMelImage(rng.standard_normal((20, 12)))
        np.testing.assert_array_equal(enhance(img, "median", (5, 3)).values, remove_drift(img, (5, 3)).values)

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            enhance(LogMelImage(np.zeros((4, 4))), "wavelet")
