"""Training / evaluation workflow."""

import numpy as np
import pytest

from eigenpattern.classify import model_to_bytes
from eigenpattern.dataset import to_data_matrix
from eigenpattern.errors import ValidationError
from eigenpattern.linalg import economy_svd, randomized_svd
from eigenpattern.metrics import reports_to_csv
from eigenpattern.pipeline import (
    RunConfig,
    SweepRow,
    cycle_seeds,
    plateau_rank,
    reduce_split,
    render_mode,
    run_fit,
    run_sweep,
    sweep_from_csv,
    sweep_to_csv,
)


def row(r, err, clf="knn"):
    return SweepRow(r, clf, err, 0.0, 100.0, 100.0, 100.0, 0.0)


class TestRunConfig:
    def test_defaults(self):
        c = RunConfig()
        assert (c.variant, c.target_rank, c.rank, c.classifier) == ("fft", 50, 7, "knn")
        assert (c.balance, c.normalize, c.train_fraction, c.cycles) == (False, False, 0.8, 5)

    @pytest.mark.parametrize(
        "kw",
        [
            {"rank": 60},
            {"ranks": (1, 51)},
            {"variant": "wavelet"},
            {"classifier": "svm"},
            {"train_fraction": 1.0},
            {"cycles": 0},
            {"neighbors": 0},
            {"per_class": 0},
            {"target_rank": 0},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            RunConfig(**kw).validate()

    def test_r_above_k_fails_before_work(self, synth_small, monkeypatch):
        import eigenpattern.pipeline as pl

        monkeypatch.setattr(pl, "reduce_split", lambda *a, **k: pytest.fail("work started"))
        with pytest.raises(ValidationError):
            run_fit(synth_small, RunConfig(rank=60))


class TestFit:
    def test_five_reports_reproducible(self, synth_small):
        cfg = RunConfig(target_rank=20, cycles=5, seed=3)
        a, b = run_fit(synth_small, cfg), run_fit(synth_small, cfg)
        assert len(a.reports) == 5
        assert reports_to_csv(a.reports, a.aggregate) == reports_to_csv(b.reports, b.aggregate)
        assert model_to_bytes(a.model) == model_to_bytes(b.model)

    def test_cycles_differ(self):
        seeds = cycle_seeds(0, 5)
        assert len(set(seeds)) == 5 and seeds == cycle_seeds(0, 5)

    def test_synthetic_separates(self, synth_small):
        res = run_fit(synth_small, RunConfig(target_rank=20, cycles=2))
        assert res.aggregate.mean_error <= 10.0

    def test_model_records_normalization_and_provenance(self, synth_small):
        cfg = RunConfig(target_rank=20, cycles=1, normalize=True, classifier="lda")
        res = run_fit(synth_small, cfg)
        model = res.model
        assert model.normalization is not None and model.truncation_rank == 7
        split = reduce_split(synth_small, cfg, cycle_seeds(cfg.seed, 1)[0])
        assert model.provenance["dataset_digest"] == split.train_digest

    def test_balance_applied(self):
        from eigenpattern.synth import gen_dataset

        ds = gen_dataset(side=64, counts=(20, 8, 30), seed=1)
        res = run_fit(ds, RunConfig(target_rank=10, cycles=1, balance=True))
        assert res.reports[0].sample_count == 24 - 19

    def test_train_basis_reused_on_test(self, synth_small):
        cfg = RunConfig(target_rank=10, cycles=1)
        split = reduce_split(synth_small, cfg, seed=4)
        assert split.u.shape == (64 * 64, 10)
        assert split.train_coords.shape[0] == split.test_coords.shape[0] == 10

    def test_rank_above_matrix_shape(self):
        from eigenpattern.synth import gen_dataset

        ds = gen_dataset(per_class=2, side=64)
        with pytest.raises(ValidationError):
            run_fit(ds, RunConfig(target_rank=50, rank=7, cycles=1))


class TestSweep:
    def test_row_count(self, synth_small):
        rows = run_sweep(synth_small, RunConfig(target_rank=12, ranks=tuple(range(1, 11)), cycles=2))
        assert len(rows) == 40
        assert {r.classifier for r in rows} == {"knn", "tree", "gnb", "lda"}

    def test_csv_round_trip(self, synth_small):
        rows = run_sweep(synth_small, RunConfig(target_rank=8, ranks=(2, 4), classifiers=("knn", "gnb"), cycles=2))
        assert sweep_from_csv(sweep_to_csv(rows)) == rows

    def test_sweep_matches_fit(self, synth_small):
        cfg = RunConfig(target_rank=10, ranks=(3,), classifiers=("tree",), classifier="tree", rank=3, cycles=2)
        (srow,) = run_sweep(synth_small, cfg)
        fit = run_fit(synth_small, cfg)
        assert srow.mean_error == fit.aggregate.mean_error

    def test_bad_header(self):
        with pytest.raises(ValidationError):
            sweep_from_csv("a,b\n1,2\n")


class TestPlateau:
    def test_smallest_within_tolerance(self):
        rows = [row(1, 40.0), row(2, 10.0), row(3, 2.5), row(4, 2.0), row(5, 1.8)]
        assert plateau_rank(rows, "knn") == 3
        assert plateau_rank(rows, "knn", tolerance=0.1) == 5

    def test_missing_classifier(self):
        with pytest.raises(ValidationError):
            plateau_rank([row(1, 0.0)], "lda")


class TestRenderMode:
    def test_dc_only_fft_mode_is_constant(self):
        mode = np.zeros(64)
        mode[0] = 1.0
        img = render_mode(mode, 8, fft_domain=True)
        assert np.all(img == img.flat[0])

    def test_plain_mode_min_max(self):
        img = render_mode(np.arange(16.0), 4, fft_domain=False)
        assert img.min() == 0.0 and img.max() == 1.0 and img.shape == (4, 4)

    def test_plain_mode_one_is_mean_image(self, synth_small):
        x = to_data_matrix(synth_small)
        u = randomized_svd(x, 10).u
        mean = x.mean(axis=1)
        cos = abs(u[:, 0] @ mean) / np.linalg.norm(mean)
        assert cos >= 0.99

    def test_economy_mode_one_is_mean_image(self, synth_small):
        x = to_data_matrix(synth_small)
        u1 = economy_svd(x).u[:, 0]
        assert u1 @ x.mean(axis=1) / np.linalg.norm(x.mean(axis=1)) >= 0.99
