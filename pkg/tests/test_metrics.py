import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratseg.grids import LabelMap, OARCatalog, OAREntry, Stratum
from stratseg.metrics import (
    MetricReport,
    asd,
    boundary_mask,
    case_metrics,
    detection_distance,
    dsc,
    hd,
)

# ---------------------------------------------------------------------------
# Brute-force oracles: direct transcription of the definitions, kept
# independent of the KD-tree implementations they check.
# ---------------------------------------------------------------------------

SIX_NEIGHBORS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


def boundary_oracle(mask):
    fg = mask.astype(bool)
    out = np.zeros_like(fg)
    for idx in np.argwhere(fg):
        for d in SIX_NEIGHBORS:
            n = tuple(idx + d)
            if any(c < 0 or c >= s for c, s in zip(n, fg.shape)) or not fg[n]:
                out[tuple(idx)] = True
                break
    return out


def _points(mask, spacing):
    return np.argwhere(boundary_oracle(mask)).astype(float) * np.asarray(spacing)


def _pairwise(pa, pb):
    return np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))


def hd_oracle(a, b, spacing=(1, 1, 1)):
    if not a.any() or not b.any():
        return math.nan
    d = _pairwise(_points(a, spacing), _points(b, spacing))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def asd_oracle(a, b, spacing=(1, 1, 1)):
    if not a.any() or not b.any():
        return math.nan
    d = _pairwise(_points(a, spacing), _points(b, spacing))
    return float(np.concatenate([d.min(axis=1), d.min(axis=0)]).mean())


def random_mask_pair(seed, shape):
    rng = np.random.default_rng(seed)
    a = rng.random(shape) < 0.35
    b = rng.random(shape) < 0.35
    return a, b


class TestDsc:
    def test_equal_nonempty(self):
        a = np.zeros((4, 4, 4), bool)
        a[1:3, 1:3, 1:3] = True
        assert dsc(a, a) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4, 4), bool)
        b = np.zeros((4, 4, 4), bool)
        a[0, 0, 0] = True
        b[3, 3, 3] = True
        assert dsc(a, b) == 0.0

    def test_half_overlap(self):
        a = np.zeros((4, 4, 4), bool)
        b = np.zeros((4, 4, 4), bool)
        a[0, 0, :4] = True
        b[0, 0, 2:4] = True
        b[0, 1, 0:2] = True
        # |a|=4, |b|=4, |a∩b|=2 -> 2*2/8
        assert dsc(a, b) == 0.5

    def test_degenerate_empties(self):
        empty = np.zeros((3, 3, 3), bool)
        one = empty.copy()
        one[1, 1, 1] = True
        assert dsc(empty, empty) == 1.0
        assert dsc(empty, one) == 0.0
        assert dsc(one, empty) == 0.0

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_symmetry(self, seed):
        a, b = random_mask_pair(seed, (5, 5, 5))
        assert dsc(a, b) == dsc(b, a)


class TestSurfaceDistances:
    def test_identical_masks_are_zero(self):
        a = np.zeros((5, 5, 5), bool)
        a[1:4, 1:4, 1:4] = True
        assert hd(a, a) == 0.0
        assert asd(a, a) == 0.0

    def test_single_voxels_offset(self):
        a = np.zeros((8, 8, 8), bool)
        b = np.zeros((8, 8, 8), bool)
        a[0, 0, 0] = True
        b[3, 4, 0] = True
        assert hd(a, b) == pytest.approx(5.0, abs=1e-12)
        assert asd(a, b) == pytest.approx(5.0, abs=1e-12)

    def test_concentric_cubes_match_frozen_oracle_values(self):
        a = np.zeros((9, 9, 9), bool)
        a[3:6, 3:6, 3:6] = True
        b = np.zeros((9, 9, 9), bool)
        b[2:7, 2:7, 2:7] = True
        # frozen from the brute-force oracle above
        assert asd(a, b) == pytest.approx(1.167484634725665, abs=1e-12)
        assert hd(a, b) == pytest.approx(math.sqrt(3.0), abs=1e-12)

    def test_empty_mask_is_undefined(self):
        a = np.zeros((3, 3, 3), bool)
        b = a.copy()
        b[1, 1, 1] = True
        assert math.isnan(hd(a, b))
        assert math.isnan(asd(b, a))

    def test_boundary_extraction_matches_oracle(self):
        for seed in range(10):
            a, _ = random_mask_pair(seed, (6, 6, 6))
            np.testing.assert_array_equal(boundary_mask(a), boundary_oracle(a))

    def test_full_grid_boundary_is_shell(self):
        a = np.ones((4, 4, 4), bool)
        bm = boundary_mask(a)
        assert not bm[1:3, 1:3, 1:3].any()
        assert bm.sum() == 4 ** 3 - 2 ** 3

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_oracle_equivalence_small_random(self, seed):
        a, b = random_mask_pair(seed, (4, 4, 4))
        if not a.any() or not b.any():
            return
        assert hd(a, b) == pytest.approx(hd_oracle(a, b), abs=1e-12)
        assert asd(a, b) == pytest.approx(asd_oracle(a, b), abs=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_asd_bounded_by_hd(self, seed):
        a, b = random_mask_pair(seed, (5, 5, 5))
        if not a.any() or not b.any():
            return
        assert asd(a, b) <= hd(a, b) + 1e-12

    def test_distances_scale_with_spacing(self):
        a, b = random_mask_pair(7, (6, 6, 6))
        base_hd = hd(a, b, (1, 1, 1))
        base_asd = asd(a, b, (1, 1, 1))
        assert hd(a, b, (2, 2, 2)) == pytest.approx(2 * base_hd, rel=1e-12)
        assert asd(a, b, (2, 2, 2)) == pytest.approx(2 * base_asd, rel=1e-12)
        assert dsc(a, b) == dsc(a, b)  # spacing-free

    def test_anisotropic_spacing(self):
        a = np.zeros((4, 4, 4), bool)
        b = np.zeros((4, 4, 4), bool)
        a[0, 0, 0] = True
        b[0, 0, 2] = True
        assert hd(a, b, (1, 1, 1.9)) == pytest.approx(3.8, abs=1e-12)


class TestDetectionDistance:
    def test_identical_centers(self):
        assert detection_distance((3, 4, 5), (3, 4, 5)) == 0.0

    def test_anisotropic_offset(self):
        assert detection_distance((0, 0, 2), (0, 0, 0), (1, 1, 1.9)) == pytest.approx(3.8)


def tiny_catalog():
    return OARCatalog(
        (
            OAREntry(1, "big", Stratum.ANCHOR, (20, 20, 20)),
            OAREntry(2, "soft", Stratum.MID, (10, 10, 10)),
            OAREntry(3, "tiny", Stratum.SH, (5, 5, 5)),
        )
    )


class TestReport:
    def test_perfect_prediction(self, tmp_path):
        catalog = tiny_catalog()
        rng = np.random.default_rng(0)
        data = rng.integers(0, 4, size=(8, 8, 8)).astype(np.int16)
        gt = LabelMap(data, 3)
        report = MetricReport(catalog)
        report.add_case("case0", gt, gt)
        for row in report.per_organ():
            assert row["dsc"] == 1.0
            assert row["hd_mm"] == 0.0
            assert row["asd_mm"] == 0.0
        means = report.means()
        assert means["overall"]["dsc"] == 1.0
        report.write_csv(tmp_path / "report.csv")
        report.write_json(tmp_path / "report.json")
        text = (tmp_path / "report.csv").read_text()
        assert "MEAN(overall)" in text

    def test_stratum_means_recompute(self):
        catalog = tiny_catalog()
        rng = np.random.default_rng(1)
        gt = LabelMap(rng.integers(0, 4, size=(8, 8, 8)).astype(np.int16), 3)
        pred = LabelMap(rng.integers(0, 4, size=(8, 8, 8)).astype(np.int16), 3)
        report = MetricReport(catalog)
        report.add_case("c", pred, gt)
        per_organ = {row["organ"]: row for row in report.per_organ()}
        means = report.means()
        assert means["anchor"]["dsc"] == pytest.approx(per_organ["big"]["dsc"])
        expected_overall = np.mean([row["dsc"] for row in report.per_organ()])
        assert means["overall"]["dsc"] == pytest.approx(expected_overall)

    def test_undefined_excluded_with_counts(self):
        catalog = tiny_catalog()
        gt_data = np.zeros((6, 6, 6), dtype=np.int16)
        gt_data[0, 0, 0] = 1
        gt_data[1, 1, 1] = 2
        # organ 3 absent from both gt and pred -> hd/asd undefined
        gt = LabelMap(gt_data, 3)
        report = MetricReport(catalog)
        report.add_case("c", gt, gt)
        rows = {r["organ"]: r for r in report.per_organ()}
        assert rows["tiny"]["hd_defined"] == 0
        assert rows["tiny"]["dsc"] == 1.0  # both empty
        means = report.means()
        assert means["overall"]["hd_defined"] == 2

    def test_case_metrics_shape_mismatch(self):
        catalog = tiny_catalog()
        a = LabelMap(np.zeros((4, 4, 4), dtype=np.int16), 3)
        b = LabelMap(np.zeros((5, 5, 5), dtype=np.int16), 3)
        with pytest.raises(Exception):
            case_metrics("c", a, b, catalog)
