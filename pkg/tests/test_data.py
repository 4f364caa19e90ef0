"""Synthetic generator contracts, spectral artifact measurements, the
separability gate, PPM I/O, dataset layout, and stratified batching."""

import json
import os

import numpy as np
import pytest

from rcdn import data
from rcdn.data import (DatasetSpec, FAKE_DOMAINS, ImageSample, build_dataset,
                       gen_fake, gen_real, load_manifest, load_ppm, load_split,
                       probe_separability, radial_profile, save_ppm,
                       spectral_features, stratified_batches, synth_image)
from rcdn.errors import PpmParseError, ValidationError
from rcdn.prng import Xoshiro256pp, mix_key

SIZE = 64
N_SPECTRAL = 100  # samples behind each spectral-statistics assertion


@pytest.fixture(scope="module")
def real_stats():
    feats = [spectral_features(s.pixels) for s in gen_real(0, N_SPECTRAL, SIZE)]
    high, checker = np.array(feats).T
    return high.mean(), checker.mean()


class TestGeneratorBasics:
    def test_determinism_bytes(self):
        a = synth_image("FE", seed=5, idx=17, size=32)
        b = synth_image("FE", seed=5, idx=17, size=32)
        assert a.tobytes() == b.tobytes()

    def test_distinct_across_seed_domain_id(self):
        base = synth_image("I2I", 0, 0, 32)
        assert not np.array_equal(base, synth_image("I2I", 1, 0, 32))
        assert not np.array_equal(base, synth_image("I2I", 0, 1, 32))
        assert not np.array_equal(base, synth_image("T2I", 0, 0, 32))

    def test_pixel_range(self):
        for domain in ("REAL", *FAKE_DOMAINS):
            img = synth_image(domain, 0, 3, 32)
            assert img.min() >= 0.0 and img.max() <= 1.0
            assert np.isfinite(img).all()

    def test_unknown_domain_rejected(self):
        with pytest.raises(ValidationError):
            synth_image("GAN", 0, 0, 32)
        with pytest.raises(ValidationError):
            gen_fake("REAL", 0, 1, 32)

    def test_gen_lists_labels_and_ids(self):
        reals = gen_real(0, 3, 16, id_start=10)
        fakes = gen_fake("T2I", 0, 2, 16)
        assert [s.id for s in reals] == [10, 11, 12]
        assert all(s.label == 0 and s.domain == "REAL" for s in reals)
        assert all(s.label == 1 and s.domain == "T2I" for s in fakes)


class TestSpectralSignatures:
    def test_real_radial_profile_decays(self):
        n_bins = SIZE // 4
        profiles = np.stack([radial_profile(s.pixels, n_bins)
                             for s in gen_real(0, N_SPECTRAL, SIZE)])
        mean_profile = profiles.mean(axis=0)
        assert (np.diff(mean_profile) < 0).all()

    def test_i2i_checkerboard_peaks(self, real_stats):
        _, checker_real = real_stats
        feats = [spectral_features(s.pixels)
                 for s in gen_fake("I2I", 0, N_SPECTRAL, SIZE)]
        checker_i2i = np.array(feats)[:, 1].mean()
        assert checker_i2i >= 3.0 * checker_real

    def test_t2i_high_band_deficit(self, real_stats):
        high_real, _ = real_stats
        feats = [spectral_features(s.pixels)
                 for s in gen_fake("T2I", 0, N_SPECTRAL, SIZE)]
        high_t2i = np.array(feats)[:, 0].mean()
        assert high_t2i < 0.5 * high_real

    def test_fe_patch_locality(self):
        # replay the generator's own draw sequence to recover the base
        # texture and the patch rectangle, then check the change footprint
        seed, idx = 0, 12
        rng = Xoshiro256pp(mix_key(seed, data._DOMAIN_CODE["FE"], idx, SIZE))
        base = data._base_texture(rng, SIZE)
        strength = data._strength(rng)
        patched, (x0, y0, pw, ph) = data._patch_artifact(rng, base, SIZE, strength)
        pad = data.FE_FEATHER
        outside = np.ones((SIZE, SIZE), dtype=bool)
        outside[max(0, y0 - pad):y0 + ph + pad, max(0, x0 - pad):x0 + pw + pad] = False
        assert np.array_equal(patched[outside], base[outside])
        assert not np.array_equal(patched[~outside], base[~outside])


class TestSeparabilityGate:
    @pytest.mark.parametrize("domain", FAKE_DOMAINS)
    def test_probe_in_band(self, domain):
        acc = probe_separability(domain, seed=0, size=SIZE)
        assert 0.90 <= acc <= 0.995, f"{domain} probe accuracy {acc}"


class TestPpm:
    def test_header_bytes_exact(self, tmp_path, rng):
        path = tmp_path / "img.ppm"
        save_ppm(path, rng.uniform(0, 1, (64, 64, 3)))
        blob = path.read_bytes()
        assert blob.startswith(b"P6\n64 64\n255\n")
        assert len(blob) == len(b"P6\n64 64\n255\n") + 64 * 64 * 3

    def test_round_trip_quantization_bound(self, tmp_path, rng):
        img = rng.uniform(0, 1, (16, 12, 3))
        path = tmp_path / "img.ppm"
        save_ppm(path, img)
        back = load_ppm(path)
        assert back.shape == (16, 12, 3)
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-12

    def test_non_square_dimension_order(self, tmp_path):
        img = np.zeros((4, 6, 3))
        img[1, 5] = 1.0
        path = tmp_path / "img.ppm"
        save_ppm(path, img)
        assert path.read_bytes().startswith(b"P6\n6 4\n255\n")
        assert load_ppm(path)[1, 5, 0] == 1.0

    def test_comments_in_header(self, tmp_path):
        raster = bytes(2 * 2 * 3)
        path = tmp_path / "img.ppm"
        path.write_bytes(b"P6\n# a comment\n2 2\n255\n" + raster)
        assert load_ppm(path).shape == (2, 2, 3)

    def test_bad_magic_offset(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(12))
        with pytest.raises(PpmParseError) as err:
            load_ppm(path)
        assert err.value.offset == 0

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\n2 x\n255\n" + bytes(12))
        with pytest.raises(PpmParseError) as err:
            load_ppm(path)
        assert "height" in str(err.value)

    def test_unsupported_maxval(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(PpmParseError):
            load_ppm(path)

    def test_short_raster_reports_offset(self, tmp_path):
        path = tmp_path / "bad.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(PpmParseError) as err:
            load_ppm(path)
        assert "expected 12" in str(err.value)


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("ds") / "mini")
    spec = DatasetSpec(per_domain_train=5, per_domain_test=3,
                       image_size=16, seed=2)
    manifest = build_dataset(spec, root)
    return root, spec, manifest


class TestDatasetBuild:
    def test_layout_and_counts(self, built):
        root, spec, _ = built
        for domain in data.DOMAINS:
            train = os.listdir(os.path.join(root, domain, "train"))
            test = os.listdir(os.path.join(root, domain, "test"))
            assert len(train) == 5 and len(test) == 3
        assert os.path.exists(os.path.join(root, "manifest.json"))

    def test_split_ids_disjoint(self, built):
        root, _, _ = built
        for domain in data.DOMAINS:
            train_ids = {s.id for s in load_split(root, domain, "train")}
            test_ids = {s.id for s in load_split(root, domain, "test")}
            assert not train_ids & test_ids

    def test_manifest_contents(self, built):
        root, spec, manifest = built
        on_disk = load_manifest(root)
        assert on_disk == manifest
        assert on_disk["seed"] == 2
        assert on_disk["counts"]["FE"] == {"train": 5, "test": 3}
        assert on_disk["generator_version"] == data.GENERATOR_VERSION

    def test_pixels_survive_quantization_only(self, built):
        root, spec, _ = built
        sample = load_split(root, "T2I", "train")[0]
        direct = synth_image("T2I", spec.seed, sample.id, spec.image_size)
        assert np.abs(sample.pixels - direct).max() <= 0.5 / 255.0 + 1e-12

    def test_shortfall_detected(self, built):
        root, _, _ = built
        victim = os.path.join(root, "I2I", "test", "6.ppm")
        os.rename(victim, victim + ".bak")
        try:
            with pytest.raises(ValidationError, match="shortfall"):
                load_split(root, "I2I", "test")
        finally:
            os.rename(victim + ".bak", victim)

    def test_invalid_spec(self):
        with pytest.raises(ValidationError):
            DatasetSpec(per_domain_train=0).validate()
        with pytest.raises(ValidationError):
            DatasetSpec(image_size=4).validate()


def _toy_samples(n_real, n_fake):
    px = np.zeros((2, 2, 3))
    return ([ImageSample(px, 0, "REAL", i) for i in range(n_real)]
            + [ImageSample(px, 1, "FE", 1000 + i) for i in range(n_fake)])


class TestStratifiedBatches:
    def test_balanced_split(self):
        batches = stratified_batches(_toy_samples(16, 16), 8, seed=0)
        assert len(batches) == 4
        for b in batches:
            assert sum(1 for s in b if s.label == 0) == 4

    def test_minimum_class_representation(self):
        batches = stratified_batches(_toy_samples(6, 26), 8, seed=1)
        for b in batches:
            n_real = sum(1 for s in b if s.label == 0)
            assert 2 <= n_real <= 6

    def test_each_retained_sample_once(self):
        samples = _toy_samples(15, 17)
        batches = stratified_batches(samples, 8, seed=3)
        seen = [id(s) for b in batches for s in b]
        assert len(seen) == len(set(seen))
        assert len(seen) <= len(samples)

    def test_same_seed_same_batches(self):
        samples = _toy_samples(10, 10)
        a = stratified_batches(samples, 4, seed=9)
        b = stratified_batches(samples, 4, seed=9)
        assert [[s.id for s in batch] for batch in a] \
            == [[s.id for s in batch] for batch in b]

    def test_different_seed_differs(self):
        samples = _toy_samples(10, 10)
        a = stratified_batches(samples, 4, seed=1)
        b = stratified_batches(samples, 4, seed=2)
        assert [[s.id for s in batch] for batch in a] \
            != [[s.id for s in batch] for batch in b]

    def test_validation(self):
        with pytest.raises(ValidationError):
            stratified_batches(_toy_samples(4, 4), 7, seed=0)  # odd
        with pytest.raises(ValidationError):
            stratified_batches(_toy_samples(4, 4), 2, seed=0)  # too small
        with pytest.raises(ValidationError):
            stratified_batches(_toy_samples(8, 0), 4, seed=0)  # class absent
