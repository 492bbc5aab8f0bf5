"""Shapes corpus, planted-ICA data, and PNM file IO."""

import warnings

import numpy as np
import pytest

from lfgan.datasets import (
    Factor,
    FactorSpec,
    PlantedIcaSpec,
    default_factor_spec,
    image_grid,
    load_folder,
    load_pnm,
    planted_ica,
    render,
    save_image,
    shapes_corpus,
)


# --- oracles -----------------------------------------------------------------

def centroid_x(img, bg):
    """Mass centroid of the shape along x, in [0,1] image units.

    Subtracting the background level leaves weight only where the square
    (and its anti-aliased rim) is, so this tracks the square's center.
    """
    img01 = (img + 1.0) / 2.0
    weight = img01 - bg
    size = img.shape[1]
    xs = (np.arange(size) + 0.5) / size
    return float((weight * xs[None, :]).sum() / weight.sum())


def shape_area(img, bg, shade):
    """Total coverage in pixels, inverted from the compositing equation."""
    img01 = (img + 1.0) / 2.0
    return float(((img01 - bg) / (shade - bg)).sum())


def mid_factors(spec):
    return np.array([(f.low + f.high) / 2.0 for f in spec.factors])


# --- rendering ---------------------------------------------------------------

class TestRender:
    def test_same_factors_identical_images(self):
        spec = default_factor_spec()
        f = mid_factors(spec)
        np.testing.assert_array_equal(render(spec, f), render(spec, f))

    def test_output_range_and_shape(self):
        spec = default_factor_spec()
        img = render(spec, mid_factors(spec))
        assert img.shape == (32, 32)
        assert img.min() >= -1.0 and img.max() <= 1.0

    def test_out_of_range_factor_rejected(self):
        spec = default_factor_spec()
        f = mid_factors(spec)
        f[2] = spec.factors[2].high + 0.05
        with pytest.raises(ValueError, match="outside"):
            render(spec, f)

    def test_wrong_factor_count_rejected(self):
        spec = default_factor_spec()
        with pytest.raises(ValueError, match="expected 6 factors"):
            render(spec, np.zeros(4))

    def test_scale_min_area_smaller_than_max(self):
        spec = default_factor_spec()
        f = mid_factors(spec)
        lo, hi = f.copy(), f.copy()
        lo[2], hi[2] = spec.factors[2].low, spec.factors[2].high
        bg, shade = f[5], f[4]
        area_lo = shape_area(render(spec, lo), bg, shade)
        area_hi = shape_area(render(spec, hi), bg, shade)
        assert area_lo < area_hi
        # sanity scale: coverage ≈ (2·half·size)² pixels
        assert area_hi == pytest.approx((2 * hi[2] * 32) ** 2, rel=0.1)

    def test_x_sweep_centroid_strictly_increasing(self):
        spec = default_factor_spec()
        f = mid_factors(spec)
        cents = []
        for x in np.linspace(spec.factors[0].low, spec.factors[0].high, 9):
            g = f.copy()
            g[0] = x
            cents.append(centroid_x(render(spec, g), bg=f[5]))
        diffs = np.diff(cents)
        assert (diffs > 0).all()
        # and the centroid actually tracks the requested position
        assert cents[0] == pytest.approx(spec.factors[0].low, abs=0.02)
        assert cents[-1] == pytest.approx(spec.factors[0].high, abs=0.02)

    def test_rotation_changes_image_continuously(self):
        spec = default_factor_spec()
        f = mid_factors(spec)
        g = f.copy()
        g[3] = f[3] + 0.01
        delta = np.abs(render(spec, g) - render(spec, f)).max()
        assert 0 < delta < 0.2

    def test_background_sets_far_corner_value(self):
        spec = default_factor_spec()
        f = mid_factors(spec)
        f[5] = 0.2
        img01 = (render(spec, f) + 1.0) / 2.0
        assert img01[0, 0] == pytest.approx(0.2, abs=1e-9)

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError, match="empty range"):
            Factor("x", 0.5, 0.5, "x-pos")

    def test_too_many_factors_rejected(self):
        fs = tuple(Factor(f"f{i}", 0.0, 1.0, f"r{i}") for i in range(9))
        with pytest.raises(ValueError, match="1..8"):
            FactorSpec(factors=fs)


class TestShapesCorpus:
    def test_shapes_and_determinism(self):
        imgs, facs = shapes_corpus(8, seed=3)
        imgs2, facs2 = shapes_corpus(8, seed=3)
        assert imgs.shape == (8, 1024) and facs.shape == (8, 6)
        np.testing.assert_array_equal(imgs, imgs2)
        np.testing.assert_array_equal(facs, facs2)

    def test_factors_within_ranges(self):
        spec = default_factor_spec()
        _, facs = shapes_corpus(64, seed=0, spec=spec)
        lo = np.array([f.low for f in spec.factors])
        hi = np.array([f.high for f in spec.factors])
        assert (facs >= lo).all() and (facs <= hi).all()


# --- planted ICA -------------------------------------------------------------

class TestPlantedIca:
    def test_identity_mixing_no_noise_returns_latents(self):
        spec = PlantedIcaSpec(d_f=3, rank=3, mixing=np.eye(3),
                              noise_sigma=0.0, n=100, seed=5)
        y, m_star, h = planted_ica(spec)
        np.testing.assert_array_equal(y, h)
        np.testing.assert_array_equal(m_star, np.eye(3))

    def test_mean_matches_mixing_times_latent_mean(self):
        spec = PlantedIcaSpec(d_f=6, rank=4, n=100_000, seed=11)
        y, m_star, h = planted_ica(spec)
        # E[h_j] = 2·(2/7) − 1 for Beta(2, 5) mapped to [−1, 1]
        expected = m_star @ np.full(4, 2.0 * (2.0 / 7.0) - 1.0)
        se = y.std(axis=0, ddof=1) / np.sqrt(spec.n)
        assert (np.abs(y.mean(axis=0) - expected) <= 3.0 * se).all()

    def test_covariance_matches_model(self):
        spec = PlantedIcaSpec(d_f=5, rank=5, n=100_000, seed=2,
                              noise_sigma=0.05)
        y, m_star, h = planted_ica(spec)
        model_cov = m_star @ np.cov(h.T) @ m_star.T \
            + spec.noise_sigma ** 2 * np.eye(5)
        emp_cov = np.cov(y.T)
        rel = np.linalg.norm(emp_cov - model_cov) / np.linalg.norm(model_cov)
        assert rel <= 0.05

    def test_default_mixing_full_rank_and_deterministic(self):
        a = PlantedIcaSpec(d_f=8, rank=8, seed=4)
        b = PlantedIcaSpec(d_f=8, rank=8, seed=4)
        np.testing.assert_array_equal(a.mixing, b.mixing)
        assert np.linalg.matrix_rank(a.mixing) == 8

    def test_rank_deficient_mixing_rejected(self):
        m = np.ones((4, 2))  # two identical columns
        with pytest.raises(ValueError, match="full column rank"):
            PlantedIcaSpec(d_f=4, rank=2, mixing=m)

    def test_centered_signals_zero_mean_skewed_bounded(self):
        spec = PlantedIcaSpec(d_f=4, rank=4, mixing=np.eye(4), n=100_000,
                              noise_sigma=0.0, signal_dist="centered-beta",
                              seed=3)
        _, _, h = planted_ica(spec)
        assert (np.abs(h.mean(axis=0)) < 0.01).all()
        assert h.min() >= -1.0 and h.max() <= 1.0
        skew = np.mean((h - h.mean(0)) ** 3, axis=0) / h.std(axis=0) ** 3
        assert (skew > 0.4).all()

    def test_unknown_signal_dist_rejected(self):
        spec = PlantedIcaSpec(d_f=2, rank=2, n=4, signal_dist="gaussian")
        with pytest.raises(ValueError, match="signal_dist"):
            planted_ica(spec)


# --- PNM IO ------------------------------------------------------------------

class TestPnmIo:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = np.round(rng.uniform(0, 255, size=(12, 7))) / 127.5 - 1.0
        p = tmp_path / "a.pgm"
        save_image(p, img)
        np.testing.assert_allclose(load_pnm(p), img, atol=1e-12)

    def test_ppm_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = np.round(rng.uniform(0, 255, size=(5, 9, 3))) / 127.5 - 1.0
        p = tmp_path / "b.ppm"
        save_image(p, img)
        np.testing.assert_allclose(load_pnm(p), img, atol=1e-12)

    def test_header_layout(self, tmp_path):
        p = tmp_path / "c.pgm"
        save_image(p, np.zeros((2, 3)))
        data = p.read_bytes()
        assert data.startswith(b"P5\n3 2\n255\n")
        assert len(data) == len(b"P5\n3 2\n255\n") + 6

    def test_header_comments_tolerated(self):
        body = bytes([10, 20, 30, 40])
        data = b"P5 # magic\n# a comment line\n2 2\n255\n" + body
        img = load_pnm(data)
        np.testing.assert_allclose(
            img, np.array([[10, 20], [30, 40]]) / 127.5 - 1.0)

    def test_truncated_payload_rejected(self, tmp_path):
        p = tmp_path / "t.pgm"
        save_image(p, np.zeros((4, 4)))
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(ValueError, match="truncated"):
            load_pnm(p)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="magic"):
            load_pnm(b"P3\n1 1\n255\n0")

    def test_values_clip_to_byte_range(self, tmp_path):
        p = tmp_path / "clip.pgm"
        save_image(p, np.array([[-2.0, 2.0]]))
        np.testing.assert_allclose(load_pnm(p), np.array([[-1.0, 1.0]]))


class TestLoadFolder:
    def _write_corpus(self, root, n=3, size=32):
        imgs, _ = shapes_corpus(n, seed=7)
        for i in range(n):
            save_image(root / f"img_{i:03d}.pgm", imgs[i].reshape(size, size))
        return imgs

    def test_loads_in_filename_order(self, tmp_path):
        imgs = self._write_corpus(tmp_path)
        loaded = load_folder(tmp_path, size=32)
        assert loaded.shape == (3, 1024)
        # bytes quantize to 1/127.5 steps
        np.testing.assert_allclose(loaded, imgs, atol=1.0 / 127.5)

    def test_mixed_valid_and_corrupt(self, tmp_path):
        self._write_corpus(tmp_path, n=2)
        (tmp_path / "bad_1.pgm").write_bytes(b"P5\n9 9\n255\nshort")
        (tmp_path / "bad_2.ppm").write_bytes(b"garbage")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            loaded = load_folder(tmp_path, size=32)
        skips = [w for w in caught if "skipping unreadable" in str(w.message)]
        assert loaded.shape[0] == 2
        assert len(skips) == 2

    def test_empty_folder_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no readable images"):
            load_folder(tmp_path)

    def test_resizes_to_requested_size(self, tmp_path):
        img = np.linspace(-1, 1, 64 * 64).reshape(64, 64)
        save_image(tmp_path / "big.pgm", img)
        loaded = load_folder(tmp_path, size=32)
        assert loaded.shape == (1, 1024)
        assert abs(loaded.mean() - img.mean()) < 0.02

    def test_color_ppm_converts_to_gray(self, tmp_path):
        img = -np.ones((32, 32, 3))
        img[:, :, 1] = 1.0  # pure green
        save_image(tmp_path / "g.ppm", img)
        loaded = load_folder(tmp_path, size=32)
        # luma of (0, 255, 0) with unit weights summing via 0.587
        expected = 0.587 * 1.0 + (0.299 + 0.114) * -1.0
        np.testing.assert_allclose(loaded, expected, atol=1e-2)


class TestImageGrid:
    def test_tiles_row_major(self):
        imgs = np.stack([np.full(4, v) for v in (0.1, 0.2, 0.3)])
        grid = image_grid(imgs, cols=2, size=2)
        assert grid.shape == (4, 4)
        assert (grid[:2, :2] == 0.1).all()
        assert (grid[:2, 2:] == 0.2).all()
        assert (grid[2:, :2] == 0.3).all()
        assert (grid[2:, 2:] == -1.0).all()
