"""Ingestion, data matrices, FFT magnitude, resampling and normalization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from conftest import make_dataset
from eigenpattern.dataset import (
    ImageMeta,
    Label,
    balance,
    fft_magnitude,
    fit_normalization,
    apply_normalization,
    from_data_matrix,
    invert_normalization,
    load_dataset,
    load_images,
    read_image,
    save_dataset,
    to_data_matrix,
    train_test_split,
    write_manifest,
)
from eigenpattern.errors import DegenerateFeatureError, IngestionError, ValidationError
from eigenpattern.linalg import ReducedFeatures

HEADER = "file,label,experiment,velocity_m_per_min,tonal_value_pct,raster_lines_per_cm,esa\n"


def write_png(path, arr):
    Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(path)


@pytest.fixture
def image_dir(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for k, lab in enumerate("AABBCC"):
        write_png(tmp_path / f"im{k}.png", rng.integers(0, 256, (6, 6)))
        rows.append(f"im{k}.png,{lab},B3-01,15,{5 * (k + 1)},60,0\n")
    (tmp_path / "manifest.csv").write_text(HEADER + "".join(rows))
    return tmp_path


class TestLabel:
    @pytest.mark.parametrize("tok,val", [("A", 0), ("b", 1), (" C ", 2), (2, 2), (Label.B_MIXED, 1)])
    def test_parse(self, tok, val):
        assert Label.parse(tok) == val

    def test_unknown(self):
        with pytest.raises(ValueError):
            Label.parse("D")

    def test_token(self):
        assert [l.token for l in Label] == ["A", "B", "C"]


class TestIngestion:
    def test_six_files(self, image_dir):
        ds = load_dataset(image_dir, image_dir / "manifest.csv")
        assert ds.label_counts == (2, 2, 2)
        assert ds.side == 6
        assert ds.meta[2].tonal_value == 15.0 and ds.meta[0].experiment == "B3-01"
        assert ds.pixels.min() >= 0 and ds.pixels.max() <= 1

    def test_pixel_scaling(self, tmp_path):
        write_png(tmp_path / "x.png", np.full((4, 4), 255))
        np.testing.assert_array_equal(read_image(tmp_path / "x.png"), np.ones((4, 4)))

    def test_rgb_luma(self, tmp_path):
        rgb = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb[..., 0] = 100
        rgb[..., 1] = 200
        rgb[..., 2] = 50
        Image.fromarray(rgb).save(tmp_path / "c.png")
        expected = (0.299 * 100 + 0.587 * 200 + 0.114 * 50) / 255.0
        np.testing.assert_allclose(read_image(tmp_path / "c.png"), expected, atol=1e-12)

    def test_missing_file(self, image_dir):
        (image_dir / "im3.png").unlink()
        with pytest.raises(IngestionError, match="im3.png"):
            load_dataset(image_dir, image_dir / "manifest.csv")

    def test_unknown_label(self, image_dir):
        m = image_dir / "manifest.csv"
        m.write_text(m.read_text().replace("im4.png,C", "im4.png,D"))
        with pytest.raises(IngestionError, match="im4.png"):
            load_dataset(image_dir, m)

    def test_inconsistent_size(self, image_dir):
        write_png(image_dir / "im5.png", np.zeros((7, 7)))
        with pytest.raises(IngestionError, match="im5.png"):
            load_dataset(image_dir, image_dir / "manifest.csv")

    def test_undecodable(self, image_dir):
        (image_dir / "im1.png").write_bytes(b"not an image")
        with pytest.raises(IngestionError, match="line 3"):
            load_dataset(image_dir, image_dir / "manifest.csv")

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.csv").write_text("")
        with pytest.raises(IngestionError):
            load_dataset(tmp_path, tmp_path / "m.csv")

    def test_unlabeled_allowed_when_not_required(self, image_dir):
        m = image_dir / "manifest.csv"
        m.write_text(m.read_text().replace("im0.png,A", "im0.png,"))
        with pytest.raises(IngestionError):
            load_dataset(image_dir, m)
        ds = load_images(image_dir, m, require_labels=False)
        assert not ds.is_labeled and ds[0].label is None

    def test_save_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        pixels = rng.integers(0, 256, (3, 5, 5)) / 255.0
        from eigenpattern.dataset import PatternDataset

        meta = tuple(ImageMeta("E", 30.0, 10.0 * k, 60.0, bool(k % 2)) for k in range(3))
        ds = PatternDataset(pixels, np.array([0, 1, 2]), meta, ("a.png", "b.png", "c.png"))
        manifest = save_dataset(ds, tmp_path / "out")
        back = load_dataset(tmp_path / "out", manifest)
        np.testing.assert_allclose(back.pixels, pixels, atol=1e-12)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.meta == meta


class TestDataMatrix:
    def test_full_size_shape_rule(self):
        x = to_data_matrix(np.zeros((3, 260, 260)))
        assert x.shape == (67600, 3)

    def test_zero_image(self):
        x = to_data_matrix(np.zeros((1, 4, 4)))
        assert x.shape == (16, 1) and not x.any()

    def test_row_major(self):
        img = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(to_data_matrix(img[None])[:, 0], np.arange(9.0))

    def test_round_trip(self, tiny_dataset):
        x = to_data_matrix(tiny_dataset)
        np.testing.assert_array_equal(from_data_matrix(x, 8), tiny_dataset.pixels)


class TestFftMagnitude:
    def test_dc_only(self):
        c, s = 0.3, 8
        mag = fft_magnitude(np.full((1, s, s), c))[:, 0]
        assert mag[0] == pytest.approx(c * s * s, rel=1e-12)
        assert np.all(np.abs(mag[1:]) <= 1e-9)

    def test_cosine_stripe_bins(self):
        s, f = 16, 3
        j = np.arange(s)
        img = np.tile(np.cos(2 * np.pi * f * j / s), (s, 1))
        mag = fft_magnitude(img[None])[:, 0].reshape(s, s)
        big = np.argwhere(mag > 1e-9)
        assert sorted(map(tuple, big)) == [(0, f), (0, s - f)]
        np.testing.assert_allclose(mag[0, f], s * s / 2, rtol=1e-12)

    def test_real_valued(self, tiny_dataset):
        mag = fft_magnitude(tiny_dataset)
        assert mag.dtype == np.float64 and mag.shape == (64, 12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 12), st.integers(-20, 20), st.integers(-20, 20), st.integers(0, 10_000))
    def test_shift_invariance(self, s, dy, dx, seed):
        img = np.random.default_rng(seed).uniform(size=(s, s))
        a = fft_magnitude(img[None])
        b = fft_magnitude(np.roll(img, (dy, dx), axis=(0, 1))[None])
        assert np.abs(a - b).max() <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 16), st.integers(0, 10_000))
    def test_parseval(self, s, seed):
        img = np.random.default_rng(seed).uniform(size=(s, s))
        mag = fft_magnitude(img[None])
        lhs = np.sum(img**2) * s * s
        assert abs(lhs - np.sum(mag**2)) <= 1e-6 * lhs


class TestBalance:
    def test_skewed_counts_default(self):
        ds = make_dataset(np.repeat([0, 1, 2], [9362, 3725, 13793]), side=1)
        assert balance(ds, seed=0).label_counts == (3725, 3725, 3725)
        assert balance(ds, seed=0, per_class=3720).label_counts == (3720, 3720, 3720)

    def test_already_balanced(self, tiny_dataset):
        out = balance(tiny_dataset, seed=1)
        np.testing.assert_array_equal(out.pixels, tiny_dataset.pixels)

    def test_per_class_too_large(self, tiny_dataset):
        with pytest.raises(ValidationError):
            balance(tiny_dataset, seed=0, per_class=5)

    def test_missing_class(self):
        with pytest.raises(ValidationError):
            balance(make_dataset([0, 0, 1]), seed=0)

    def test_deterministic(self):
        ds = make_dataset(np.repeat([0, 1, 2], [10, 4, 7]))
        assert balance(ds, 5).names == balance(ds, 5).names
        assert balance(ds, 5).names != balance(ds, 6).names

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 15), min_size=3, max_size=3), st.integers(0, 1000))
    def test_equal_counts_and_subset(self, counts, seed):
        ds = make_dataset(np.repeat([0, 1, 2], counts))
        out = balance(ds, seed)
        assert out.label_counts == (min(counts),) * 3
        assert set(out.names) <= set(ds.names)
        assert len(set(out.names)) == len(out)


class TestSplit:
    def test_reference_sizes(self):
        ds = make_dataset(np.zeros(26880, dtype=int), side=1)
        train, test = train_test_split(ds, 0.8, seed=0)
        assert (len(train), len(test)) == (21504, 5376)

    def test_ten(self, tiny_dataset):
        ds = make_dataset(np.arange(10) % 3)
        train, test = train_test_split(ds, 0.8, seed=0)
        assert (len(train), len(test)) == (8, 2)

    def test_deterministic(self):
        ds = make_dataset(np.arange(50) % 3)
        a = train_test_split(ds, 0.8, seed=4)
        b = train_test_split(ds, 0.8, seed=4)
        assert a[0].names == b[0].names and a[1].names == b[1].names

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.1])
    def test_bad_fraction(self, tiny_dataset, f):
        with pytest.raises(ValidationError):
            train_test_split(tiny_dataset, f, seed=0)

    def test_empty_side(self):
        with pytest.raises(ValidationError):
            train_test_split(make_dataset([0, 1]), 0.9, seed=0)

    def test_stratified(self):
        ds = make_dataset(np.repeat([0, 1, 2], [10, 20, 30]))
        train, _ = train_test_split(ds, 0.8, seed=0, stratify=True)
        assert train.label_counts == (8, 16, 24)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 200), st.floats(0.05, 0.95), st.integers(0, 1000))
    def test_partition(self, m, f, seed):
        ds = make_dataset(np.arange(m) % 3, side=1)
        n_train = int(np.floor(f * m + 0.5))
        if n_train in (0, m):
            with pytest.raises(ValidationError):
                train_test_split(ds, f, seed)
            return
        train, test = train_test_split(ds, f, seed)
        assert len(train) == n_train
        assert set(train.names).isdisjoint(test.names)
        assert set(train.names) | set(test.names) == set(ds.names)


class TestNormalization:
    def test_row_246(self):
        stats = fit_normalization(np.array([[2.0, 4.0, 6.0]]))
        assert stats.mean[0] == 4.0 and stats.std[0] == 2.0
        out = apply_normalization(stats, np.array([[2.0, 4.0, 6.0]]))
        np.testing.assert_allclose(out, [[-1.0, 0.0, 1.0]])

    def test_training_stats(self):
        c = np.random.default_rng(0).normal(3, 5, size=(4, 50))
        out = apply_normalization(fit_normalization(c), c)
        assert np.abs(out.mean(axis=1)).max() <= 1e-12
        np.testing.assert_allclose(out.std(axis=1, ddof=1), 1.0, atol=1e-12)

    def test_held_out_manual(self):
        rng = np.random.default_rng(1)
        tr, te = rng.normal(size=(3, 20)), rng.normal(size=(3, 5))
        stats = fit_normalization(tr)
        manual = (te - tr.mean(axis=1, keepdims=True)) / tr.std(axis=1, ddof=1, keepdims=True)
        np.testing.assert_allclose(apply_normalization(stats, te), manual, atol=1e-14)

    def test_round_trip(self):
        c = np.random.default_rng(2).normal(size=(5, 30))
        stats = fit_normalization(c)
        np.testing.assert_allclose(invert_normalization(stats, apply_normalization(stats, c)), c, atol=1e-12)

    def test_reduced_features(self):
        c = np.random.default_rng(3).normal(size=(2, 10))
        rf = ReducedFeatures(basis=np.eye(2), coords=c)
        out = apply_normalization(fit_normalization(rf), rf)
        assert isinstance(out, ReducedFeatures) and out.basis is rf.basis

    def test_zero_variance(self):
        with pytest.raises(DegenerateFeatureError):
            fit_normalization(np.array([[1.0, 2.0], [5.0, 5.0]]))

    def test_one_sample(self):
        with pytest.raises(ValidationError):
            fit_normalization(np.array([[1.0]]))


def test_write_manifest_unlabeled(tmp_path):
    write_manifest(tmp_path / "m.csv", ["a.png"], [None], [ImageMeta()])
    assert tmp_path.joinpath("m.csv").read_text().splitlines()[1].startswith("a.png,,")
