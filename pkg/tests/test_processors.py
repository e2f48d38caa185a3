import numpy as np
import pytest

from tilekit.errors import ChecksumError, FormatError, ShapeError
from tilekit.imagecore import ImageBuffer
from tilekit.processors import (
    Activation, CnnProcessor, CnnWeights, ConvKernel, ConvLayer,
    ProcessorDescriptor, ConvProcessor, IdentityProcessor, NearestUpscaler,
    cnn_forward, conv2d, conv2d_apply, load_weights, nearest_upsample, save_weights,
)


def naive_conv2d(arr, kernel):
    """Quadruple-loop reference with zero border."""
    r = kernel.shape[0] // 2
    h, w, c = arr.shape
    out = np.zeros_like(arr, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w:
                        out[y, x] += kernel[dy + r, dx + r] * arr[yy, xx]
    return out


class TestConv2d:
    def test_delta_kernel_is_identity(self, rng):
        img = rng.random((9, 11, 3)).astype(np.float32)
        out = conv2d(img, ConvKernel.delta(2).weights)
        assert np.array_equal(out, img)

    def test_normalized_kernel_keeps_constant_interior(self):
        img = np.full((8, 8, 1), 0.7, np.float32)
        out = conv2d(img, ConvKernel.box(1).weights)
        assert np.allclose(out[1:-1, 1:-1], 0.7, atol=1e-7)

    def test_box_on_ones_hand_values(self):
        img = np.ones((3, 3, 1), np.float32)
        out = conv2d(img, ConvKernel.box(1).weights)[:, :, 0]
        expect = np.array([
            [4 / 9, 6 / 9, 4 / 9],
            [6 / 9, 9 / 9, 6 / 9],
            [4 / 9, 6 / 9, 4 / 9],
        ])
        assert np.abs(out - expect).max() <= 1e-6

    def test_matches_naive_reference(self, rng):
        # float64 input keeps both routes in double precision, so any
        # disagreement is an indexing bug, not accumulation noise
        img = rng.random((16, 16, 2))
        kern = rng.random((5, 5)).astype(np.float32)
        fast = conv2d(img, kern)
        slow = naive_conv2d(img, kern)
        assert np.abs(fast - slow).max() <= 1e-6

    def test_buffer_wrapper_preserves_kind(self, rng):
        img = ImageBuffer(rng.random((8, 8, 3)).astype(np.float32))
        out = conv2d_apply(img, ConvKernel.box(1))
        assert isinstance(out, ImageBuffer)


class TestSimpleProcessors:
    def test_identity(self, rng):
        img = rng.random((5, 5, 3)).astype(np.float32)
        assert np.array_equal(IdentityProcessor().process(img), img)

    def test_nearest_upscaler_block_replicates(self):
        img = np.arange(4, dtype=np.float32).reshape(2, 2, 1)
        out = NearestUpscaler(4).process(img)
        assert out.shape == (8, 8, 1)
        assert np.array_equal(out, np.repeat(np.repeat(img, 4, 0), 4, 1))

    def test_descriptor_validation(self):
        with pytest.raises(ShapeError):
            ProcessorDescriptor("bad", scale=0)
        with pytest.raises(ShapeError):
            ProcessorDescriptor("bad", receptive_field=-1)

    def test_purity_repeated_calls(self, rng):
        img = rng.random((12, 12, 1)).astype(np.float32)
        proc = ConvProcessor(ConvKernel.gaussian(2, 1.0))
        assert np.array_equal(proc.process(img), proc.process(img))


def _fixture_net(rng, in_ch=2, mid=3, out_ch=2):
    layers = [
        ConvLayer(in_ch, mid, rng.normal(size=(3, 3, in_ch, mid)),
                  rng.normal(size=(mid,)), Activation.RELU),
        ConvLayer(mid, out_ch, rng.normal(size=(3, 3, mid, out_ch)),
                  rng.normal(size=(out_ch,)), Activation.IDENTITY),
    ]
    return CnnWeights(layers)


def naive_cnn_forward(x, weights):
    h = x.astype(np.float64)
    for layer in weights.layers:
        hh, ww = h.shape[:2]
        out = np.zeros((hh, ww, layer.out_ch))
        for y in range(hh):
            for xx in range(ww):
                acc = layer.bias.copy()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        yy, xc = y + dy, xx + dx
                        if 0 <= yy < hh and 0 <= xc < ww:
                            acc = acc + h[yy, xc] @ layer.weights[dy + 1, dx + 1]
                out[y, xx] = acc
        h = np.maximum(out, 0.0) if layer.activation is Activation.RELU else out
    return h


class TestCnn:
    def test_zero_weights_zero_output(self):
        layers = [ConvLayer(2, 2, np.zeros((3, 3, 2, 2)), np.zeros(2), Activation.IDENTITY)]
        x = np.random.default_rng(1).random((6, 6, 2))
        assert np.array_equal(cnn_forward(x, CnnWeights(layers)), np.zeros((6, 6, 2)))

    def test_delta_layer_passthrough(self, rng):
        w = np.zeros((3, 3, 3, 3))
        w[1, 1] = np.eye(3)
        net = CnnWeights([ConvLayer(3, 3, w, np.zeros(3), Activation.IDENTITY)])
        x = rng.random((7, 5, 3))
        assert np.array_equal(cnn_forward(x, net), x)

    def test_two_layer_matches_naive_reference(self, rng):
        net = _fixture_net(rng)
        x = rng.random((9, 8, 2))
        fast = cnn_forward(x, net)
        slow = naive_cnn_forward(x, net)
        assert np.abs(fast - slow).max() <= 1e-9

    def test_chain_mismatch_rejected(self, rng):
        layers = [
            ConvLayer(2, 3, np.zeros((3, 3, 2, 3)), np.zeros(3)),
            ConvLayer(4, 2, np.zeros((3, 3, 4, 2)), np.zeros(2)),
        ]
        with pytest.raises(ShapeError):
            CnnWeights(layers)

    def test_declared_rf_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            CnnWeights(_fixture_net(rng).layers, receptive_field=7)


class TestReceptiveFieldHonesty:
    @pytest.mark.parametrize("radius", [1, 2, 4])
    def test_conv_impulse_stays_within_radius(self, radius, rng):
        kern = ConvKernel(radius, rng.random((2 * radius + 1,) * 2).astype(np.float32))
        proc = ConvProcessor(kern)
        img = rng.random((33, 33, 1)).astype(np.float32)
        base = proc.process(img)
        poked = img.copy()
        poked[16, 16, 0] += 1.0
        diff = np.abs(proc.process(poked) - base)[:, :, 0]
        ys, xs = np.nonzero(diff > 0)
        assert proc.descriptor.receptive_field == radius
        assert np.max(np.abs(ys - 16)) <= radius
        assert np.max(np.abs(xs - 16)) <= radius

    def test_cnn_impulse_stays_within_declared_rf(self, rng):
        net = _fixture_net(rng)
        proc = CnnProcessor(net)
        img = rng.random((21, 21, 2)).astype(np.float32)
        base = proc.process(img)
        poked = img.copy()
        poked[10, 10, 1] += 0.5
        diff = np.abs(proc.process(poked) - base).sum(axis=2)
        ys, xs = np.nonzero(diff > 0)
        r = proc.descriptor.receptive_field
        assert r == 2
        assert np.max(np.abs(ys - 10)) <= r and np.max(np.abs(xs - 10)) <= r


class TestWeightsFile:
    def test_roundtrip(self, rng, tmp_path):
        net = _fixture_net(rng)
        path = tmp_path / "net.bin"
        save_weights(net, path)
        back = load_weights(path)
        assert back.scale == 1 and back.receptive_field == 2
        for a, b in zip(net.layers, back.layers):
            assert np.allclose(a.weights, b.weights, atol=1e-7)  # f32 storage
            assert np.allclose(a.bias, b.bias, atol=1e-7)
            assert a.activation is b.activation

    def test_fixture_descriptor(self, rng, tmp_path):
        path = tmp_path / "net.bin"
        save_weights(_fixture_net(rng), path)
        proc = CnnProcessor(load_weights(path))
        assert proc.descriptor.scale == 1
        assert proc.descriptor.receptive_field == 2

    def test_truncated_file(self, rng, tmp_path):
        path = tmp_path / "net.bin"
        save_weights(_fixture_net(rng), path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 10])
        with pytest.raises(FormatError):
            load_weights(path)

    def test_corrupt_payload_checksum(self, rng, tmp_path):
        path = tmp_path / "net.bin"
        save_weights(_fixture_net(rng), path)
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            load_weights(path)

    def test_rf_mismatch_in_header(self, rng, tmp_path):
        import json

        path = tmp_path / "net.bin"
        save_weights(_fixture_net(rng), path)
        raw = path.read_bytes()
        hlen = int.from_bytes(raw[:4], "little")
        header = json.loads(raw[4 : 4 + hlen])
        header["receptive_field"] = 9
        blob = json.dumps(header).encode()
        path.write_bytes(len(blob).to_bytes(4, "little") + blob + raw[4 + hlen :])
        with pytest.raises(ShapeError):
            load_weights(path)

    def test_not_a_weights_file(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"\x00\x01")
        with pytest.raises(FormatError):
            load_weights(path)


class TestUpscalingCnn:
    def test_scaled_processor_output_dims(self, rng):
        w = np.zeros((3, 3, 1, 1))
        w[1, 1, 0, 0] = 1.0
        net = CnnWeights([ConvLayer(1, 1, w, np.zeros(1), Activation.IDENTITY)], scale=2)
        proc = CnnProcessor(net)
        x = rng.random((6, 6, 1)).astype(np.float32)
        out = proc.process(x)
        assert out.shape == (12, 12, 1)
        assert np.array_equal(out, nearest_upsample(x, 2))
        assert proc.descriptor.receptive_field == 1  # ceil(1 / 2)
