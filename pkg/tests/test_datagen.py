import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from approxsp.datagen import (BIMODAL_DEFAULT, GridImage, NoiseSpec, Stream, apply_noise,
                              bimodal_noise, flip_noise, gaussian_noise, make_base_image,
                              make_dataset, read_grid, write_grid)


def random_binary(rng, h, w):
    return GridImage(h, w, rng.integers(0, 2, (h, w)).astype(float))


class TestStream:
    def test_uniform_matches_numpy_generator(self):
        # numpy's Generator.random uses the same (word >> 11) * 2**-53 map
        ref = np.random.Generator(np.random.Philox(key=[7, 3])).random(1000)
        np.testing.assert_array_equal(Stream(7, 3).uniform(1000), ref)

    def test_pinned_first_words(self):
        raw = np.random.Philox(key=[0, 0]).random_raw(2)
        u = Stream(0, 0).uniform(2)
        assert u.tolist() == [float(int(w) >> 11) * 2.0 ** -53 for w in raw]

    def test_streams_differ(self):
        assert not np.array_equal(Stream(1, 0).uniform(8), Stream(1, 1).uniform(8))
        assert not np.array_equal(Stream(1, 0).uniform(8), Stream(2, 0).uniform(8))

    def test_normal_box_muller(self):
        u = Stream(4, 0).uniform(6).reshape(3, 2)
        want = np.sqrt(-2 * np.log(1 - u[:, 0])) * np.cos(2 * np.pi * u[:, 1])
        np.testing.assert_allclose(Stream(4, 0).normal(3), want, rtol=1e-15)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Stream(-1)


class TestFlip:
    def test_prob_zero_identity(self):
        img = make_base_image("disk", 7, 9)
        assert np.array_equal(flip_noise(img, 0.0, 1).pixels, img.pixels)

    def test_prob_one_complement(self):
        img = make_base_image("halves", 4, 6)
        assert np.array_equal(flip_noise(img, 1.0, 1).pixels, 1 - img.pixels)

    @pytest.mark.parametrize("seed", range(5))
    def test_fraction_concentrates(self, seed):
        img = make_base_image("halves", 10, 10)
        frac = np.mean(flip_noise(img, 0.2, seed).pixels != img.pixels)
        assert 0.1 <= frac <= 0.3

    def test_independence_at_half(self):
        rng = np.random.default_rng(0)
        img = random_binary(rng, 64, 64)
        obs = flip_noise(img, 0.5, 11).pixels
        table = np.array([[np.sum((img.pixels == a) & (obs == b)) for b in (0, 1)] for a in (0, 1)])
        _, pval, _, _ = stats.chi2_contingency(table)
        assert pval > 1e-3

    def test_errors(self):
        with pytest.raises(ValueError):
            flip_noise(GridImage(1, 2, [0.5, 1.0]), 0.2, 0)
        with pytest.raises(ValueError):
            flip_noise(GridImage(1, 2, [0.0, 1.0]), 1.5, 0)


class TestGaussian:
    def test_small_sigma_limit(self):
        img = make_base_image("stripes", 5, 8)
        obs = gaussian_noise(img, 1e-12, 3).pixels
        np.testing.assert_allclose(obs, img.pixels, atol=1e-10)

    def test_moments_64(self):
        img = make_base_image("disk", 64, 64)
        diff = gaussian_noise(img, 0.3, 5).pixels - img.pixels
        assert abs(diff.mean()) <= 3 * 0.3 / 64
        assert abs(diff.std() - 0.3) <= 0.03

    def test_not_clamped(self):
        img = make_base_image("halves", 64, 64)
        obs = gaussian_noise(img, 0.3, 0).pixels
        assert obs.min() < 0 and obs.max() > 1

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            gaussian_noise(make_base_image("halves", 2, 2), 0.0, 0)


class TestBimodal:
    def test_class_zero_sample_near_a_component(self):
        img = GridImage(1, 1, [0.0])
        x = bimodal_noise(img, seed=2).pixels[0, 0]
        assert min(abs(x - 0.08), abs(x - 0.46)) < 6 * 0.03

    def test_degenerate_components(self):
        mix = (((0.5, 1e-9, 0.5), (0.5, 1e-9, 0.5)),) * 2
        obs = bimodal_noise(make_base_image("disk", 8, 8), mix, seed=1).pixels
        np.testing.assert_allclose(obs, 0.5, atol=1e-7)

    def test_class_means_64(self):
        img = make_base_image("checker-blocks", 64, 64)
        obs = bimodal_noise(img, seed=9).pixels
        for cls, comps in enumerate(BIMODAL_DEFAULT):
            mean = sum(m * wt for m, _, wt in comps)
            assert abs(obs[img.pixels == cls].mean() - mean) <= 0.05

    @pytest.mark.parametrize("mix", [
        (((0.1, 0.1, 1.0),),),
        (((0.1, 0.1, 0.6),), ((0.1, 0.1, 1.0),)),
        (((0.1, 0.0, 1.0),), ((0.1, 0.1, 1.0),)),
    ])
    def test_invalid_mixture(self, mix):
        with pytest.raises(ValueError):
            bimodal_noise(GridImage(1, 1, [0.0]), mix)
        with pytest.raises(ValueError):
            NoiseSpec("bimodal", mixtures=mix)


class TestBaseImages:
    def test_halves(self):
        px = make_base_image("halves", 10, 10).pixels
        assert px[:, :5].sum() == 0 and px[:, 5:].sum() == 50

    @pytest.mark.parametrize("h, w", [(7, 7), (9, 13), (64, 64)])
    def test_disk_symmetric(self, h, w):
        px = make_base_image("disk", h, w).pixels
        assert np.array_equal(px, px[::-1, ::-1]) and px.sum() > 0

    def test_stripes(self):
        px = make_base_image("stripes", 64, 64, period=4).pixels
        starts = np.flatnonzero(np.diff(px[0]) == 1)
        assert len(starts) == 16 and np.all(px == px[0])

    def test_checker(self):
        px = make_base_image("checker-blocks", 8, 8).pixels
        assert px[0, 0] == 0 and px[0, 4] == 1 and px[4, 4] == 0

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_base_image("spiral", 4, 4)


class TestReproducibility:
    @settings(max_examples=20, deadline=None)
    @given(st.sampled_from(["flip", "gaussian", "bimodal"]), st.integers(0, 2 ** 32 - 1),
           st.integers(0, 50))
    def test_same_seed_bit_identical(self, kind, seed, stream):
        img = make_base_image("disk", 9, 11)
        a = apply_noise(img, NoiseSpec(kind), seed, stream).pixels
        b = apply_noise(img, NoiseSpec(kind), seed, stream).pixels
        assert a.tobytes() == b.tobytes()

    def test_dataset_streams(self):
        base = make_base_image("halves", 4, 4)
        ds = make_dataset(base, NoiseSpec("gaussian"), 3, seed=5, first_stream=10)
        assert len(ds) == 3 and ds.labels().shape == (3, 16)
        np.testing.assert_array_equal(ds.observed[1].pixels, gaussian_noise(base, 0.3, 5, 11).pixels)
        with pytest.raises(ValueError):
            make_dataset(base, NoiseSpec(), 0, seed=0)


class TestGridFile:
    @settings(max_examples=40)
    @given(st.integers(1, 6), st.integers(1, 6), st.data())
    def test_round_trip(self, h, w, data):
        vals = data.draw(st.lists(st.floats(allow_nan=False, allow_infinity=False),
                                  min_size=h * w, max_size=h * w))
        img = GridImage(h, w, vals)
        import tempfile
        from pathlib import Path
        with tempfile.TemporaryDirectory() as d:
            write_grid(Path(d) / "g.txt", img)
            back = read_grid(Path(d) / "g.txt")
        assert (back.height, back.width) == (h, w)
        assert back.pixels.tobytes() == img.pixels.tobytes()

    def test_labels_written_as_integers(self, tmp_path):
        write_grid(tmp_path / "y.txt", make_base_image("halves", 2, 4))
        assert (tmp_path / "y.txt").read_text() == "2 4\n0 0 1 1\n0 0 1 1\n"

    @pytest.mark.parametrize("text", ["", "2\n0 1\n", "2 2\n0 1\n", "1 2\n0 1 1\n"])
    def test_malformed(self, tmp_path, text):
        (tmp_path / "bad.txt").write_text(text)
        with pytest.raises(ValueError):
            read_grid(tmp_path / "bad.txt")
