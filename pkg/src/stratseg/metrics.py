"""Segmentation and detection metrics: DSC, Hausdorff, average surface distance.

Surface distances operate on boundary voxels: a foreground voxel is boundary
when at least one of its six face neighbors is background, with voxels on the
grid faces always counting as boundary. Distances are physical (mm), computed
from voxel indices scaled by spacing. The maximum Hausdorff distance is used,
not the 95th percentile. When either mask is empty, hd/asd are undefined and
reported as NaN; such entries are excluded from means and counted separately.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ShapeError
from .grids import LabelMap, OARCatalog, Stratum


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a six-connected background neighbor (grid faces count as background)."""
    fg = mask.astype(bool)
    padded = np.pad(fg, 1, mode="constant", constant_values=False)
    interior = np.ones_like(fg)
    for axis in range(3):
        lo = tuple(slice(1, -1) if a != axis else slice(0, -2) for a in range(3))
        hi = tuple(slice(1, -1) if a != axis else slice(2, None) for a in range(3))
        interior &= padded[lo] & padded[hi]
    return fg & ~interior


def _boundary_points_mm(mask: np.ndarray, spacing) -> np.ndarray:
    pts = np.argwhere(boundary_mask(mask)).astype(np.float64)
    return pts * np.asarray(spacing, dtype=np.float64)


def dsc(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap of two binary masks; both-empty is 1.0, one-empty is 0.0."""
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a.astype(bool)
    b = b.astype(bool)
    na, nb = int(a.sum()), int(b.sum())
    if na == 0 and nb == 0:
        return 1.0
    if na == 0 or nb == 0:
        return 0.0
    inter = int((a & b).sum())
    return 2.0 * inter / (na + nb)


def _surface_distances(a: np.ndarray, b: np.ndarray, spacing) -> tuple[np.ndarray, np.ndarray] | None:
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        return None
    pa = _boundary_points_mm(a, spacing)
    pb = _boundary_points_mm(b, spacing)
    d_ab = cKDTree(pb).query(pa, k=1)[0]
    d_ba = cKDTree(pa).query(pb, k=1)[0]
    return d_ab, d_ba


def hd(a: np.ndarray, b: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> float:
    """Maximum symmetric Hausdorff distance between mask boundaries, in mm."""
    dists = _surface_distances(a, b, spacing)
    if dists is None:
        return math.nan
    d_ab, d_ba = dists
    return float(max(d_ab.max(), d_ba.max()))


def asd(a: np.ndarray, b: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> float:
    """Average symmetric surface distance: mean over both boundaries pooled, in mm."""
    dists = _surface_distances(a, b, spacing)
    if dists is None:
        return math.nan
    d_ab, d_ba = dists
    return float(np.concatenate([d_ab, d_ba]).mean())


def detection_distance(pred_center, true_center, spacing=(1.0, 1.0, 1.0)) -> float:
    """Euclidean mm distance between two voxel-index points."""
    delta = (np.asarray(pred_center, dtype=np.float64) - np.asarray(true_center, dtype=np.float64))
    return float(np.linalg.norm(delta * np.asarray(spacing, dtype=np.float64)))


@dataclass(frozen=True)
class OrganMetrics:
    """One organ's scores on one case; hd/asd are NaN when undefined."""

    case_id: str
    organ_id: int
    name: str
    stratum: Stratum
    dsc: float
    hd_mm: float
    asd_mm: float


def case_metrics(case_id: str, pred: LabelMap, gt: LabelMap, catalog: OARCatalog) -> list[OrganMetrics]:
    """Per-organ DSC/HD/ASD of a predicted label map against ground truth."""
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    rows = []
    for entry in catalog.entries:
        a = pred.data == entry.organ_id
        b = gt.data == entry.organ_id
        rows.append(
            OrganMetrics(
                case_id=case_id,
                organ_id=entry.organ_id,
                name=entry.name,
                stratum=entry.stratum,
                dsc=dsc(a, b),
                hd_mm=hd(a, b, gt.spacing),
                asd_mm=asd(a, b, gt.spacing),
            )
        )
    return rows


def _mean_defined(values: list[float]) -> tuple[float, int]:
    defined = [v for v in values if not math.isnan(v)]
    if not defined:
        return math.nan, 0
    return float(np.mean(defined)), len(defined)


class MetricReport:
    """Aggregates per-case organ metrics into per-organ, per-stratum and overall means."""

    def __init__(self, catalog: OARCatalog):
        self.catalog = catalog
        self.rows: list[OrganMetrics] = []

    def add_case(self, case_id: str, pred: LabelMap, gt: LabelMap) -> None:
        self.rows.extend(case_metrics(case_id, pred, gt, self.catalog))

    def per_organ(self) -> list[dict]:
        out = []
        for entry in self.catalog.entries:
            rows = [r for r in self.rows if r.organ_id == entry.organ_id]
            if not rows:
                continue
            d, _ = _mean_defined([r.dsc for r in rows])
            h, nh = _mean_defined([r.hd_mm for r in rows])
            a, na = _mean_defined([r.asd_mm for r in rows])
            out.append(
                {
                    "organ": entry.name,
                    "stratum": entry.stratum.value,
                    "dsc": d,
                    "hd_mm": h,
                    "asd_mm": a,
                    "cases": len(rows),
                    "hd_defined": nh,
                    "asd_defined": na,
                }
            )
        return out

    def means(self) -> dict:
        per_organ = self.per_organ()
        out = {}
        groups = [(s.value, [r for r in per_organ if r["stratum"] == s.value]) for s in Stratum]
        groups.append(("overall", per_organ))
        for key, rows in groups:
            if not rows:
                continue
            d, nd = _mean_defined([r["dsc"] for r in rows])
            h, nh = _mean_defined([r["hd_mm"] for r in rows])
            a, na = _mean_defined([r["asd_mm"] for r in rows])
            out[key] = {
                "dsc": d,
                "hd_mm": h,
                "asd_mm": a,
                "organs": len(rows),
                "hd_defined": nh,
                "asd_defined": na,
            }
        return out

    @staticmethod
    def _fmt(value: float) -> str:
        return "" if math.isnan(value) else f"{value:.6f}"

    def write_csv(self, path) -> None:
        means = self.means()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["organ", "stratum", "dsc", "hd_mm", "asd_mm", "note"])
            for row in self.per_organ():
                note = ""
                if row["hd_defined"] < row["cases"] or row["asd_defined"] < row["cases"]:
                    note = f"hd defined {row['hd_defined']}/{row['cases']}, asd defined {row['asd_defined']}/{row['cases']}"
                writer.writerow(
                    [row["organ"], row["stratum"], self._fmt(row["dsc"]), self._fmt(row["hd_mm"]), self._fmt(row["asd_mm"]), note]
                )
            for key, m in means.items():
                note = f"{m['organs']} organs; hd defined {m['hd_defined']}, asd defined {m['asd_defined']}"
                writer.writerow(
                    [f"MEAN({key})", key if key != "overall" else "", self._fmt(m["dsc"]), self._fmt(m["hd_mm"]), self._fmt(m["asd_mm"]), note]
                )

    def write_json(self, path) -> None:
        def clean(value):
            if isinstance(value, float):
                return None if math.isnan(value) else round(value, 6)
            return value

        payload = {
            "per_organ": [{k: clean(v) for k, v in row.items()} for row in self.per_organ()],
            "means": {key: {k: clean(v) for k, v in m.items()} for key, m in self.means().items()},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
