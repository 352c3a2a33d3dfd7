import numpy as np
import pytest
from PIL import Image

from mgnet.errors import UnsupportedFormat
from mgnet.imaging import (
    adapt_apply,
    adapt_train,
    gaussian_flow_nll,
    image_pixels,
    load_image,
    save_image,
    subsample_pixels,
)
from mgnet.models import ModelSpec, forward, init_params
from mgnet.training import TrainConfig, flow_nll
from mgnet.transport import standard_gaussian


def byte_ramp(h, w):
    """All byte values 0..255 cycled through an (h, w, 3) image."""
    vals = np.arange(h * w * 3, dtype=np.uint8).reshape(h, w, 3)
    return vals


class TestLoadSave:
    def test_round_trip_preserves_bytes(self, tmp_path):
        raw = byte_ramp(16, 16)
        path = tmp_path / "img.png"
        Image.fromarray(raw, mode="RGB").save(path)
        values = load_image(path)
        assert values.shape == (16, 16, 3)
        assert values.dtype == np.float64
        assert np.array_equal(values, raw.astype(np.float64) / 255.0)
        out = tmp_path / "out.png"
        save_image(out, values)
        assert np.array_equal(np.asarray(Image.open(out)), raw)

    def test_save_rounds_half_up(self, tmp_path):
        vals = np.array([[[0.5, 1.0, 0.0]]])
        path = tmp_path / "px.png"
        save_image(path, vals)
        byte = np.asarray(Image.open(path))[0, 0]
        # 0.5 * 255 + 0.5 = 128.0 exactly
        assert list(byte) == [128, 255, 0]

    def test_save_clips_out_of_range(self, tmp_path):
        vals = np.array([[[-0.5, 1.5, 0.25]]])
        path = tmp_path / "px.png"
        save_image(path, vals)
        byte = np.asarray(Image.open(path))[0, 0]
        assert list(byte) == [0, 255, 64]

    def test_save_rejects_bad_shape(self, tmp_path):
        with pytest.raises(UnsupportedFormat):
            save_image(tmp_path / "x.png", np.zeros((4, 4)))
        with pytest.raises(UnsupportedFormat):
            save_image(tmp_path / "x.png", np.zeros((4, 4, 4)))

    def test_alpha_discarded(self, tmp_path):
        rgba = np.dstack([byte_ramp(4, 4), np.full((4, 4), 7, dtype=np.uint8)])
        path = tmp_path / "a.png"
        Image.fromarray(rgba, mode="RGBA").save(path)
        values = load_image(path)
        assert values.shape == (4, 4, 3)
        assert np.array_equal(values, byte_ramp(4, 4).astype(np.float64) / 255.0)

    def test_rejects_other_modes(self, tmp_path):
        gray = Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L")
        gpath = tmp_path / "gray.png"
        gray.save(gpath)
        with pytest.raises(UnsupportedFormat):
            load_image(gpath)
        pal = Image.fromarray(byte_ramp(4, 4), mode="RGB").convert("P")
        ppath = tmp_path / "pal.png"
        pal.save(ppath)
        with pytest.raises(UnsupportedFormat):
            load_image(ppath)
        deep = Image.fromarray(np.zeros((4, 4), dtype=np.uint16))
        dpath = tmp_path / "deep.png"
        deep.save(dpath)
        with pytest.raises(UnsupportedFormat):
            load_image(dpath)

    def test_unreadable_file_raises_oserror(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
        with pytest.raises(OSError):
            load_image(path)
        with pytest.raises(OSError):
            load_image(tmp_path / "missing.png")


class TestPixels:
    def test_image_pixels_reshape(self):
        img = np.arange(24, dtype=np.float64).reshape(2, 4, 3) / 24.0
        px = image_pixels(img)
        assert px.shape == (8, 3)
        assert np.array_equal(px[5], img[1, 1])

    def test_subsample_under_cap_is_identity(self):
        px = np.random.default_rng(0).random((50, 3))
        out = subsample_pixels(px, 100, 1)
        assert np.array_equal(out, px)

    def test_subsample_caps_and_is_deterministic(self):
        px = np.random.default_rng(0).random((500, 3))
        a = subsample_pixels(px, 64, 1)
        b = subsample_pixels(px, 64, 1)
        c = subsample_pixels(px, 64, 2)
        assert a.shape == (64, 3)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        # every row must come from the source cloud
        matches = (a[:, None, :] == px[None, :, :]).all(-1).any(1)
        assert matches.all()


class TestGaussianFlowNll:
    def test_reduces_to_standard_flow_loss(self):
        spec = ModelSpec(arch="mmgn", n=3, hidden=4, modules=2, gamma=0.3)
        model = init_params(spec, 1)
        x = np.random.default_rng(2).random((64, 3))
        a = gaussian_flow_nll(model, x, standard_gaussian(3))
        b = flow_nll(model, x)
        assert float(a) == float(b)


class TestAdapt:
    def _clouds(self, count=4000):
        rng = np.random.default_rng(5)
        src = 0.25 + 0.08 * rng.standard_normal((count, 3))
        tgt = 0.6 + np.array([0.05, 0.1, 0.07]) * rng.standard_normal((count, 3))
        return np.clip(src, 0, 1), np.clip(tgt, 0, 1)

    def test_adapt_train_reduces_kl(self):
        src, tgt = self._clouds()
        spec = ModelSpec(arch="mmgn", n=3, hidden=4, modules=1, gamma=0.1)
        cfg = TrainConfig(batch_size=512, epochs=4, learning_rate=2e-2, loss="flow_nll")
        result, model, report = adapt_train(src, tgt, spec, cfg, seed=0)
        assert len(result.kl_history) == 4
        assert result.final_kl == result.kl_history[-1]
        assert result.final_kl < result.kl_history[0]
        assert result.pixels_used == src.shape[0]
        assert result.target_mean.shape == (3,)

    def test_adapt_train_zero_epochs_still_reports_kl(self):
        src, tgt = self._clouds(500)
        spec = ModelSpec(arch="mmgn", n=3, hidden=2, modules=1, gamma=0.1)
        cfg = TrainConfig(batch_size=256, epochs=0, learning_rate=1e-2, loss="flow_nll")
        result, _, _ = adapt_train(src, tgt, spec, cfg, seed=0)
        assert len(result.kl_history) == 1
        assert result.final_kl == result.kl_history[0]

    def test_adapt_train_subsamples(self):
        src, tgt = self._clouds(2000)
        spec = ModelSpec(arch="mmgn", n=3, hidden=2, modules=1, gamma=0.1)
        cfg = TrainConfig(batch_size=256, epochs=1, learning_rate=1e-2, loss="flow_nll")
        result, _, _ = adapt_train(src, tgt, spec, cfg, seed=0, max_pixels=800)
        assert result.pixels_used == 800

    def test_apply_shape_and_order_invariance(self):
        spec = ModelSpec(arch="cmgn", n=3, hidden=3, depth=1, gamma=0.2)
        model = init_params(spec, 7)
        rng = np.random.default_rng(8)
        img = rng.random((6, 5, 3))
        out = adapt_apply(model, img)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0
        flat = adapt_apply(model, img.reshape(-1, 3))
        assert np.array_equal(out.reshape(-1, 3), flat)
        perm = rng.permutation(30)
        shuffled = adapt_apply(model, img.reshape(-1, 3)[perm])
        assert np.array_equal(shuffled, flat[perm])

    def test_apply_matches_forward_plus_clip(self):
        spec = ModelSpec(arch="cmgn", n=3, hidden=3, depth=1, gamma=0.2)
        model = init_params(spec, 7)
        px = np.random.default_rng(9).random((40, 3))
        expected = np.clip(forward(model, px), 0.0, 1.0)
        assert np.array_equal(adapt_apply(model, px), expected)
