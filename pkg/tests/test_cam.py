import numpy as np
import pytest

from scenecam.errors import ParameterError, ShapeError, StateError, UnsupportedError
from scenecam.services.cam import (
    DEFAULT_CAM_ROW,
    Cam,
    cam_gap,
    default_cam_layer,
    event_activation_report,
    gap_layer_index,
    grad_cam,
    render_map_overlay,
    render_overlay,
    resolve_layer,
    sample_cam,
    upsample,
)
from scenecam.services.dsp import LogMelImage
from scenecam.services.nn.builders import build_cnn_fc
from scenecam.services.nn.specs import Conv, MaxPool, ReLU
from scenecam.services.rendering import grayscale_raster

from .helpers import TINY_INPUT, tiny_gap_net


def forward_random(net, rng, class_id=None):
    x = rng.standard_normal(net.input_shape)
    probs = net.eval().forward(x, retain=True)
    return int(np.argmax(probs)) if class_id is None else class_id


class TestCamIdentity:
    def test_grad_cam_at_the_pooled_maps_is_cam_over_pixel_count(self, rng):
        for seed in range(20):
            net = tiny_gap_net(seed=seed)
            c = forward_random(net, rng)
            gap = gap_layer_index(net)
            cam = cam_gap(net, c)
            grad = grad_cam(net, c, gap - 1)
            z = cam.pixel_count
            assert grad.layer_index == cam.layer_index == gap - 1
            np.testing.assert_allclose(grad.channel_weights * z, cam.channel_weights, rtol=1e-9)
            a, b = cam.map.ravel(), grad.map.ravel()
            if np.linalg.norm(a) > 0:
                cosine = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
                assert cosine >= 1 - 1e-9
            np.testing.assert_allclose(grad.map * z, cam.map, rtol=1e-8, atol=1e-12 * max(1.0, np.abs(a).max()))

    def test_logit_is_mean_of_cam_plus_bias(self, rng):
        for seed in range(20):
            net = tiny_gap_net(seed=seed)
            forward_random(net, rng)
            head = net.layers[gap_layer_index(net) + 1]
            head.params["b"] = rng.standard_normal(head.params["b"].shape)
            net.forward(rng.standard_normal(net.input_shape), retain=True)
            logits = net.logits()[0]
            for c in range(net.n_classes):
                assert cam_gap(net, c).map.mean() + head.params["b"][c] == pytest.approx(logits[c], rel=1e-9, abs=1e-12)

    def test_cam_is_linear_in_head_weights(self, rng):
        net = tiny_gap_net(seed=5)
        forward_random(net, rng)
        before = cam_gap(net, 1).map
        net.layers[gap_layer_index(net) + 1].params["W"][:, 1] *= -2.5
        np.testing.assert_allclose(cam_gap(net, 1).map, -2.5 * before)

    def test_cam_keeps_sign(self, rng):
        net = tiny_gap_net(seed=2)
        forward_random(net, rng)
        head = net.layers[gap_layer_index(net) + 1]
        head.params["W"][:, 0] = -np.abs(head.params["W"][:, 0])
        assert np.all(cam_gap(net, 0).map <= 0)


class TestCamErrors:
    def test_fc_network_has_no_gap_cam(self, rng):
        net = build_cnn_fc(4, TINY_INPUT, width=0.05, fc_dim=8)
        forward_random(net, rng)
        with pytest.raises(UnsupportedError):
            cam_gap(net, 0)

    def test_requires_a_retained_pass(self):
        net = tiny_gap_net()
        with pytest.raises(StateError):
            cam_gap(net, 0)
        with pytest.raises(StateError):
            grad_cam(net, 0, 0)

    def test_rejects_non_spatial_layers(self, rng):
        net = tiny_gap_net()
        forward_random(net, rng)
        for layer in (-1, gap_layer_index(net), net.logits_index, len(net.layers)):
            with pytest.raises(ParameterError):
                grad_cam(net, 0, layer)

    def test_rejects_unknown_class(self, rng):
        net = tiny_gap_net(n_classes=3)
        forward_random(net, rng)
        with pytest.raises(ParameterError):
            cam_gap(net, 3)
        with pytest.raises(ParameterError):
            grad_cam(net, -1, 0)

    def test_rejects_unknown_row(self):
        net = tiny_gap_net()
        with pytest.raises(ParameterError):
            resolve_layer(net, 0)
        with pytest.raises(ParameterError):
            resolve_layer(net, 99)


def test_default_row_on_full_size_input_gives_coarse_map(rng):
    net = build_cnn_fc(15, (1, 100, 128), seed=0, width=0.0625)
    layer = resolve_layer(net, DEFAULT_CAM_ROW)
    assert default_cam_layer(net) == layer
    net.eval().forward(rng.standard_normal((1, 100, 128)), retain=True)
    cam = grad_cam(net, 3, layer)
    assert cam.map.shape == (24, 31)
    assert cam.pixel_count == 24 * 31
    assert upsample(cam.map, (100, 128)).shape == (100, 128)


def test_default_row_is_the_fifth_conv_before_the_last_pooling():
    net = tiny_gap_net()
    layer = resolve_layer(net, DEFAULT_CAM_ROW)
    convs = [spec for spec in net.specs[: layer + 1] if isinstance(spec, Conv)]
    assert len(convs) == 5
    assert convs[-1].out_ch == convs[-2].out_ch
    assert isinstance(net.specs[layer], ReLU)
    assert isinstance(net.specs[layer + 1], MaxPool)


def test_upsample_preserves_constants():
    np.testing.assert_allclose(upsample(np.full((3, 4), 2.5), (30, 17)), 2.5)


class TestOverlay:
    @pytest.fixture
    def image(self, rng):
        return rng.standard_normal((40, 16))

    def test_zero_map_gives_the_grayscale_base(self, image):
        overlay = render_map_overlay(image, np.zeros_like(image), alpha=0.7)
        base = grayscale_raster(image)
        assert (overlay.width, overlay.height) == (40, 16)
        assert overlay.rgb.shape == (16, 40, 3)
        for channel in range(3):
            np.testing.assert_array_equal(overlay.rgb[..., channel], base)

    def test_positive_evidence_is_red(self, image):
        activation = np.zeros_like(image)
        activation[10, 3] = 2.0
        rgb = render_map_overlay(image, activation, alpha=1.0).rgb
        # display row for mel bin 3 counts from the top
        assert tuple(rgb[16 - 1 - 3, 10]) == (255, 0, 0)

    def test_negative_evidence_is_blue(self, image):
        activation = np.zeros_like(image)
        activation[5, 0] = -0.1
        rgb = render_map_overlay(image, activation, alpha=1.0).rgb
        assert tuple(rgb[15, 5]) == (0, 0, 255)

    def test_signs_are_scaled_independently(self, image):
        activation = np.zeros_like(image)
        activation[0, 0] = 100.0
        activation[1, 0] = -0.001
        rgb = render_map_overlay(image, activation, alpha=1.0).rgb
        assert tuple(rgb[15, 1]) == (0, 0, 255)

    def test_alpha_range(self, image):
        with pytest.raises(ParameterError):
            render_map_overlay(image, np.zeros_like(image), alpha=1.5)

    def test_shape_mismatch(self, image):
        with pytest.raises(ShapeError):
            render_map_overlay(image, np.zeros((3, 3)))

    def test_cam_is_upsampled_to_the_image(self, image):
        cam = Cam(np.ones((4, 2)), 0, 0, np.ones(1), 8)
        overlay = render_overlay(LogMelImage(image), cam, alpha=0.5)
        assert overlay.rgb.shape == (16, 40, 3)
        assert np.all(overlay.rgb[..., 0] >= overlay.rgb[..., 1])


class TestActivationReport:
    @pytest.fixture
    def image(self):
        return LogMelImage(np.arange(200, dtype=np.float64).reshape(20, 10))

    def test_uniform_activation(self, image):
        report = event_activation_report(image, np.ones(image.shape))
        assert report.ratio == pytest.approx(1.0)
        assert report.quantile == 0.95

    def test_activation_away_from_events(self, image):
        activation = (image.values <= np.quantile(image.values, 0.95)).astype(float)
        report = event_activation_report(image, activation)
        assert report.high_energy_mean == 0.0
        assert report.ratio == 0.0

    def test_activation_on_events(self, image):
        activation = np.where(image.values > np.quantile(image.values, 0.95), -3.0, 1.0)
        assert event_activation_report(image, activation).ratio == pytest.approx(3.0)

    def test_silent_map(self, image):
        assert event_activation_report(image, np.zeros(image.shape)).ratio == 1.0

    def test_constant_image_is_undefined(self):
        report = event_activation_report(LogMelImage(np.ones((10, 10))), np.ones((10, 10)))
        assert np.isnan(report.ratio)

    def test_records(self, image):
        records = event_activation_report(image, np.ones(image.shape)).to_records()
        assert [r.split("=")[0] for r in records] == [
            "activation.high_energy_mean",
            "activation.other_mean",
            "activation.ratio",
            "activation.quantile",
        ]

    def test_bad_quantile(self, image):
        with pytest.raises(ParameterError):
            event_activation_report(image, np.ones(image.shape), energy_quantile=1.0)


def test_sample_cam_stitches_segments(rng):
    net = tiny_gap_net(seed=1)
    segments = [LogMelImage(rng.standard_normal(TINY_INPUT[1:])) for _ in range(3)]
    stitched = sample_cam(net, segments, class_id=2, layer_index=resolve_layer(net, 4), hop_frames=10)
    assert stitched.shape == (40, 24)
    assert net.cache is None
