import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microfrac import imaging as I


class TestColormap:
    def test_table_shape_and_determinism(self):
        t1 = I.build_colormap()
        t2 = I.build_colormap()
        assert t1.shape == (256, 3) and t1.dtype == np.uint8
        assert np.array_equal(t1, t2)

    def test_top_entries_grayscale_band(self):
        table = I.build_colormap()
        top = table[-32:].astype(float).mean(axis=1)
        assert np.all(top >= 20.0) and np.all(top <= 100.0)
        # the band mean anchors the attention center beta = 60
        assert 40.0 <= top.mean() <= 80.0


class TestRenderMicrostructure:
    def test_all_matrix_white(self):
        img = I.render_microstructure(np.zeros((8, 8), dtype=bool))
        assert np.array_equal(img, np.full((8, 8, 3), 255, dtype=np.uint8))

    def test_black_fraction_matches_grid(self):
        rng = np.random.default_rng(0)
        phase = rng.random((64, 64)) < 0.3
        img = I.render_microstructure(phase)
        black = np.all(img == 0, axis=2)
        assert black.mean() == phase.mean()

    def test_threshold_round_trip(self):
        rng = np.random.default_rng(1)
        phase = rng.random((32, 32)) < 0.5
        img = I.render_microstructure(phase)
        recovered = I.to_grayscale(img) < 128
        assert np.array_equal(recovered, phase)


class TestRenderVonMises:
    def test_constant_field_uniform(self):
        field = np.full((5, 5), 40.0)
        img = I.render_von_mises(field)
        idx = round(40.0 / 93.0 * 255)
        assert np.all(img.reshape(-1, 3) == I.COLORMAP[idx])

    def test_masked_cells_take_zero_color(self):
        field = np.full((4, 4), 50.0)
        field[1, 2] = np.nan
        img = I.render_von_mises(field)
        assert np.array_equal(img[1, 2], I.COLORMAP[0])

    def test_degenerate_range_uniform_zero_color(self):
        img = I.render_von_mises(np.ones((3, 3)), v_range=(5.0, 5.0))
        assert np.all(img.reshape(-1, 3) == I.COLORMAP[0])

    def test_grayscale_threshold_isolates_top_stress(self):
        # Gaussian weight >= 0.5 around beta=60 selects exactly an upper
        # level set of the stress field (no low-stress leak-through).
        field = np.linspace(40.0, 93.0, 200).reshape(10, 20)
        img = I.render_von_mises(field)
        gray = I.to_grayscale(img)
        w = np.exp(-((gray - 60.0) ** 2) / (2.0 * 25.5**2))
        selected = w >= 0.5
        assert selected.any() and (~selected).any()
        assert field[selected].min() > field[~selected].max()


class TestGrayscale:
    def test_extremes_and_mean(self):
        img = np.array([[[255, 255, 255], [0, 0, 0], [30, 60, 90]]], dtype=np.uint8)
        gray = I.to_grayscale(img)
        assert gray[0, 0] == 255.0
        assert gray[0, 1] == 0.0
        assert gray[0, 2] == 60.0

    def test_rejects_single_channel(self):
        with pytest.raises(ValueError):
            I.to_grayscale(np.zeros((4, 4)))


class TestRenderCrack:
    def test_constant_ux_single_tone_with_blue_fibers(self):
        phase = np.zeros((6, 6), dtype=bool)
        phase[2:4, 2:4] = True
        img = I.render_crack(np.full((6, 6), 1.25), phase)
        assert np.all(img[phase] == I.BLUE)
        assert np.all(img[~phase] == I.BLACK)

    def test_step_function_two_tones(self):
        ux = np.zeros((8, 8))
        ux[:, 4:] = 1.0
        img = I.render_crack(ux, np.zeros((8, 8), dtype=bool))
        assert np.all(img[:, :4] == I.BLACK)
        assert np.all(img[:, 4:] == I.WHITE)

    def test_blue_fraction_equals_fiber_fraction(self):
        rng = np.random.default_rng(2)
        phase = rng.random((32, 32)) < 0.4
        img = I.render_crack(rng.normal(size=(32, 32)), phase)
        blue = np.all(img == I.BLUE, axis=2)
        assert blue.mean() == phase.mean()


class TestResizeAndFlip:
    def test_downsample_block_mean(self):
        img = np.zeros((8, 8, 3), dtype=np.uint8)
        img[:4] = 100
        out = I.resize(img, 4)
        assert out.shape == (4, 4, 3)
        assert np.all(out[:2] == 100) and np.all(out[2:] == 0)

    def test_upsample_preserves_binary_palette(self):
        rng = np.random.default_rng(3)
        img = np.where(rng.random((37, 37, 1)) < 0.5, 0, 255).astype(np.uint8)
        img = np.repeat(img, 3, axis=2)
        out = I.resize(img, 256)
        assert out.shape == (256, 256, 3)
        assert set(np.unique(out)) <= {0, 255}

    def test_fractional_downsample_conserves_mean(self):
        rng = np.random.default_rng(4)
        img = rng.integers(0, 256, size=(300, 300, 3)).astype(np.uint8)
        out = I.resize(img, 256)
        assert abs(out.mean() - img.mean()) < 1.0

    def test_flip_is_involution(self):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(33, 17, 3)).astype(np.uint8)
        assert np.array_equal(I.flip_vertical(I.flip_vertical(img)), img)

    def test_flip_mirrors_rows(self):
        img = np.arange(4 * 2 * 3, dtype=np.uint8).reshape(4, 2, 3)
        assert np.array_equal(I.flip_vertical(img)[0], img[3])


class TestSplit:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_disjoint_and_complete_for_all_seeds(self, seed):
        ids = [f"s{i:03d}" for i in range(20)]
        train, val = I.split_ids(ids, 5, seed)
        assert len(val) == 5 and len(train) == 15
        assert set(train) | set(val) == set(ids)
        assert set(train) & set(val) == set()

    def test_seeded_reproducible(self):
        ids = [f"s{i}" for i in range(30)]
        assert I.split_ids(ids, 7, 42) == I.split_ids(ids, 7, 42)

    def test_oversized_validation_rejected(self):
        with pytest.raises(ValueError):
            I.split_ids(["a", "b"], 2, 0)


class TestManifestAndPng:
    def test_manifest_round_trip(self, tmp_path):
        samples = [
            I.TripleSample("s000", "a.png", "b.png", "c.png", False, "train"),
            I.TripleSample("s001", "d.png", "e.png", "f.png", True, "val"),
        ]
        path = tmp_path / "manifest.jsonl"
        I.write_manifest(samples, path)
        assert I.read_manifest(path) == samples

    def test_manifest_bytes_stable(self, tmp_path):
        samples = [I.TripleSample("x", "1", "2", "3", False, "train")]
        p1, p2 = tmp_path / "m1", tmp_path / "m2"
        I.write_manifest(samples, p1)
        I.write_manifest(samples, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        img = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        path = tmp_path / "img.png"
        I.save_png(img, path)
        assert np.array_equal(I.load_png(path), img)

    def test_invalid_split_rejected(self):
        with pytest.raises(ValueError):
            I.TripleSample("s", "a", "b", "c", False, "test")
