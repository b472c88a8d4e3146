"""Regime maps: majorities, border extraction and export."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eigenpattern.dataset import ImageMeta
from eigenpattern.errors import MissingCellError, ValidationError
from eigenpattern.regime import (
    NonMonotoneColumnWarning,
    build_regime_map,
    export_regime_map,
    extract_borders,
    majority_class,
    regime_map_from_csv,
    regime_map_to_csv,
)
from eigenpattern.synth import SYNTH_TONAL_VALUES, SYNTH_VELOCITIES, synthetic_regime_class

A, B, C = 0, 1, 2
VEL = (15.0, 30.0, 60.0, 90.0, 120.0, 180.0, 240.0)


def meta(v, t, exp="B3-01", raster=60.0):
    return ImageMeta(experiment=exp, velocity=v, tonal_value=t, raster_frequency=raster)


def predictions_from_grid(majority, velocities, tonal, per_cell=1):
    return [
        (meta(v, t), int(majority[i][j]))
        for i, v in enumerate(velocities)
        for j, t in enumerate(tonal)
        for _ in range(per_cell)
    ]


def synthetic_map(per_cell=3):
    maj = [[synthetic_regime_class(v, t) for t in SYNTH_TONAL_VALUES] for v in SYNTH_VELOCITIES]
    return build_regime_map(predictions_from_grid(maj, SYNTH_VELOCITIES, SYNTH_TONAL_VALUES, per_cell))


class TestMajority:
    def test_clear(self):
        assert majority_class([5, 1, 0]) == A

    def test_tie_is_b(self):
        assert majority_class([3, 0, 3]) == B
        assert majority_class([2, 2, 2]) == B
        assert majority_class([0, 4, 4]) == B

    def test_empty(self):
        with pytest.raises(ValidationError):
            majority_class([0, 0, 0])


class TestExtractBorders:
    def test_aabc(self):
        lo, up = extract_borders([[A, A, B, C]], [10, 20, 30, 40])
        assert lo == (25.0,) and up == (35.0,)

    def test_all_a(self):
        assert extract_borders([[A, A, A]], [10, 20, 30]) == ((None,), (None,))

    def test_all_c(self):
        assert extract_borders([[C, C, C]], [10, 20, 30]) == ((None,), (None,))

    def test_direct_a_to_c(self):
        lo, up = extract_borders([[A, C]], [10, 20])
        assert lo == (15.0,) and up == (15.0,)

    def test_starts_in_b(self):
        lo, up = extract_borders([[B, B, C]], [10, 20, 30])
        assert lo == (None,) and up == (25.0,)

    def test_half_step_tonal_grid(self):
        # 15 m/min column of the kNN map: A up to 15 %, B at 20 %, C from 25 %
        tonal = list(range(5, 101, 5))
        col = [A if t <= 15 else (B if t == 20 else C) for t in tonal]
        lo, up = extract_borders([col], tonal)
        assert lo == (17.5,) and up == (22.5,)

    def test_non_monotone_warns(self):
        with pytest.warns(NonMonotoneColumnWarning, match="velocity 30"):
            lo, up = extract_borders([[A, C, A, B]], [10, 20, 30, 40], velocities=[30.0])
        assert lo == (15.0,) and up == (15.0,)

    def test_lower_never_above_upper(self):
        # an A->B step above the first C would cross the upper border
        with pytest.warns(NonMonotoneColumnWarning):
            lo, up = extract_borders([[B, C, A, B]], [10, 20, 30, 40])
        assert up == (15.0,) and lo == (None,)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 2), min_size=1, max_size=20), min_size=1, max_size=7))
    def test_never_cross(self, grid):
        width = min(len(c) for c in grid)
        grid = [c[:width] for c in grid]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMonotoneColumnWarning)
            lo, up = extract_borders(grid, [5.0 * (j + 1) for j in range(width)])
        for l, u in zip(lo, up):
            if l is not None and u is not None:
                assert l <= u

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 12), st.integers(0, 12), st.integers(0, 12))
    def test_relabel_symmetry(self, na, nb, nc):
        """Swapping A and C mirrors the column; reading the mirror upwards swaps the borders."""
        col = [A] * na + [B] * nb + [C] * nc
        if not col:
            return
        tonal = [10.0 * (j + 1) for j in range(len(col))]
        lo, up = extract_borders([col], tonal)
        swapped = [2 - c for c in reversed(col)]
        lo2, up2 = extract_borders([swapped], [-t for t in reversed(tonal)])
        assert lo2 == tuple(None if u is None else -u for u in up)
        assert up2 == tuple(None if l is None else -l for l in lo)


class TestBuildRegimeMap:
    def test_cell_majorities(self):
        preds = [(meta(15, 10), A)] * 5 + [(meta(15, 10), B)] + [(meta(15, 20), A)] * 3 + [(meta(15, 20), C)] * 3
        rmap = build_regime_map(preds)
        assert rmap.majority.tolist() == [[A, B]]
        np.testing.assert_array_equal(rmap.counts[0, 0], [5, 1, 0])

    def test_full_grid_size(self):
        tonal = [float(t) for t in range(5, 101, 5)]
        preds = [(meta(v, t), A) for v in VEL for t in tonal for _ in range(48)]
        assert len(preds) == 6720
        rmap = build_regime_map(preds)
        assert rmap.counts.shape == (7, 20, 3)
        assert np.all(rmap.counts.sum(axis=2) == 48)

    def test_missing_cell(self):
        preds = [(meta(15, 10), A), (meta(30, 20), C)]
        with pytest.raises(MissingCellError) as exc:
            build_regime_map(preds)
        assert set(exc.value.missing) == {(15.0, 20.0), (30.0, 10.0)}
        assert "15" in str(exc.value)

    def test_explicit_grid_missing(self):
        with pytest.raises(MissingCellError):
            build_regime_map([(meta(15, 10), A)], velocities=[15, 30], tonal_values=[10])

    def test_mixed_experiments(self):
        with pytest.raises(ValidationError):
            build_regime_map([(meta(15, 10), A), (meta(15, 20, exp="B3-02"), A)])

    def test_mixed_raster(self):
        with pytest.raises(ValidationError):
            build_regime_map([(meta(15, 10), A), (meta(15, 20, raster=54.0), A)])

    def test_empty(self):
        with pytest.raises(ValidationError):
            build_regime_map([])

    def test_duplication_invariance(self):
        rng = np.random.default_rng(0)
        preds = [(meta(v, t), int(rng.integers(3))) for v in VEL[:3] for t in (10.0, 20.0, 30.0) for _ in range(3)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMonotoneColumnWarning)
            a = build_regime_map(preds)
            b = build_regime_map(preds + preds)
        np.testing.assert_array_equal(a.majority, b.majority)
        assert (a.lower_border, a.upper_border) == (b.lower_border, b.upper_border)

    def test_deterministic_order(self):
        preds = predictions_from_grid([[C, A], [A, A]], [30.0, 15.0], [20.0, 10.0])
        a = build_regime_map(preds)
        b = build_regime_map(list(reversed(preds)))
        assert a == b and a.velocities == (15.0, 30.0)

    def test_synthetic_layout_borders(self):
        rmap = synthetic_map()
        for i, (lo, up) in enumerate(zip(rmap.lower_border, rmap.upper_border)):
            assert lo == pytest.approx(20.0 + 7.5 * i, abs=2.5)
            assert up - lo == pytest.approx(10.0, abs=5.0)
            assert lo < up


class TestExport:
    def test_csv_counts(self):
        rmap = synthetic_map()
        lines = regime_map_to_csv(rmap).splitlines()
        cells_end = lines.index("")
        assert cells_end - 3 == 140  # two comment lines and one header
        assert len(lines) - cells_end - 2 <= 14
        assert lines[2] == "velocity,tonal_value,count_A,count_B,count_C,majority"

    def test_csv_round_trip(self):
        rmap = synthetic_map()
        assert regime_map_from_csv(regime_map_to_csv(rmap)) == rmap

    def test_csv_round_trip_with_absent_border(self):
        rmap = build_regime_map(predictions_from_grid([[A, A], [A, C]], [15.0, 30.0], [10.0, 20.0]))
        back = regime_map_from_csv(regime_map_to_csv(rmap))
        assert back == rmap and back.lower_border == (None, 15.0)

    def test_export_files(self, tmp_path):
        rmap = synthetic_map()
        export_regime_map(rmap, tmp_path / "m.csv")
        svg = export_regime_map(rmap, tmp_path / "m.svg").read_text()
        assert regime_map_from_csv((tmp_path / "m.csv").read_text()) == rmap
        assert 'id="border-lower"' in svg and 'id="border-upper"' in svg
        assert "<script" not in svg
        assert "Printing velocity" in svg or "<path" in svg

    def test_svg_without_borders(self, tmp_path):
        rmap = build_regime_map(predictions_from_grid([[A, A], [A, A]], [15.0, 30.0], [10.0, 20.0]))
        svg = export_regime_map(rmap, tmp_path / "m.svg").read_text()
        assert 'id="cells' in svg
        assert "border-lower" not in svg and "border-upper" not in svg

    def test_svg_reproducible(self, tmp_path):
        rmap = synthetic_map()
        a = export_regime_map(rmap, tmp_path / "a.svg").read_bytes()
        b = export_regime_map(rmap, tmp_path / "b.svg").read_bytes()
        assert a == b

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValidationError):
            export_regime_map(synthetic_map(), tmp_path / "m.xyz")
