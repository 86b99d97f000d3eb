"""Core grid types: volumes, label maps, probability maps, heat maps, crop geometry.

Conventions used throughout the package:

* 3D grids are indexed ``[x, y, z]``; 4D grids are channel-first ``[c, x, y, z]``.
* ``spacing`` is mm per voxel and ``origin`` is the mm position of voxel (0,0,0).
* Background is class 0 and always gets an explicit probability channel.
* All types are immutable after construction (frozen dataclasses, read-only
  arrays); the operations below are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import BoundsError, ConfigError, ShapeError

Triple = tuple[float, float, float]


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


def _check_geometry(spacing, origin) -> tuple[Triple, Triple]:
    spacing = tuple(float(s) for s in spacing)
    origin = tuple(float(o) for o in origin)
    if len(spacing) != 3 or len(origin) != 3:
        raise ConfigError(f"spacing/origin must be 3-vectors, got {spacing}, {origin}")
    if any(s <= 0 for s in spacing):
        raise ConfigError(f"spacing components must be > 0, got {spacing}")
    return spacing, origin


@dataclass(frozen=True)
class Volume:
    """Scalar 3D intensity grid with physical voxel geometry."""

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"Volume data must be 3D, got shape {self.data.shape}")
        spacing, origin = _check_geometry(self.spacing, self.origin)
        object.__setattr__(self, "data", _freeze(self.data.astype(np.float32, copy=False)))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class LabelMap:
    """Integer class-index grid; 0 is background, organ ids run 1..class_count."""

    data: np.ndarray
    class_count: int
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeError(f"LabelMap data must be 3D, got shape {self.data.shape}")
        if self.class_count < 1:
            raise ConfigError(f"class_count must be positive, got {self.class_count}")
        data = self.data.astype(np.int16, copy=False)
        if data.size and (data.min() < 0 or data.max() > self.class_count):
            raise ConfigError(
                f"label values must lie in [0, {self.class_count}], "
                f"got range [{data.min()}, {data.max()}]"
            )
        spacing, origin = _check_geometry(self.spacing, self.origin)
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ProbMaps:
    """Per-class pseudo-probability grids, channel-first (class, x, y, z).

    Channel 0 is background. When produced by a softmax head the channels sum
    to 1 per voxel (within 1e-5); callers constructing maps by hand are
    responsible for that themselves.
    """

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ShapeError(f"ProbMaps data must be 4D, got shape {self.data.shape}")
        spacing, origin = _check_geometry(self.spacing, self.origin)
        object.__setattr__(self, "data", _freeze(self.data.astype(np.float32, copy=False)))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def class_channels(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]


@dataclass(frozen=True)
class HeatMapSet:
    """Per-target Gaussian activation maps, channel-first (target, x, y, z)."""

    data: np.ndarray
    sigma_mm: float
    channel_keys: tuple[str, ...]
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ShapeError(f"HeatMapSet data must be 4D, got shape {self.data.shape}")
        if len(self.channel_keys) != self.data.shape[0]:
            raise ConfigError(
                f"{len(self.channel_keys)} channel keys for {self.data.shape[0]} channels"
            )
        if self.sigma_mm <= 0:
            raise ConfigError(f"sigma_mm must be > 0, got {self.sigma_mm}")
        spacing, origin = _check_geometry(self.spacing, self.origin)
        object.__setattr__(self, "data", _freeze(self.data.astype(np.float32, copy=False)))
        object.__setattr__(self, "channel_keys", tuple(self.channel_keys))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]


class Stratum(Enum):
    ANCHOR = "anchor"
    MID = "mid"
    SH = "sh"


@dataclass(frozen=True)
class OAREntry:
    organ_id: int
    name: str
    stratum: Stratum
    max_extent_mm: Triple
    merge_group: str | None = None


@dataclass(frozen=True)
class OARCatalog:
    """Organ roster with stratum assignments and per-organ maximum extents."""

    entries: tuple[OAREntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.organ_id for e in entries]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ConfigError(f"organ ids must be unique and contiguous from 1, got {sorted(ids)}")
        for e in entries:
            if e.stratum is Stratum.SH and any(x <= 0 for x in e.max_extent_mm):
                raise ConfigError(f"SH organ {e.name!r} needs positive max_extent_mm")
        object.__setattr__(self, "entries", entries)

    @property
    def class_count(self) -> int:
        return len(self.entries)

    def entry(self, organ_id: int) -> OAREntry:
        for e in self.entries:
            if e.organ_id == organ_id:
                return e
        raise KeyError(f"no organ with id {organ_id}")

    def ids_for(self, stratum: Stratum) -> tuple[int, ...]:
        return tuple(e.organ_id for e in self.entries if e.stratum is stratum)

    def branch_class_count(self, stratum: Stratum) -> int:
        """Foreground classes of one branch (background channel not counted)."""
        return len(self.ids_for(stratum))

    def branch_labels(self, labels: LabelMap, stratum: Stratum) -> LabelMap:
        """Remap global organ ids to branch-local indices 1..C, others to 0."""
        ids = self.ids_for(stratum)
        lut = np.zeros(self.class_count + 1, dtype=np.int16)
        for local, organ_id in enumerate(ids, start=1):
            lut[organ_id] = local
        return LabelMap(lut[labels.data], len(ids), labels.spacing, labels.origin)

    def sh_channels(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        """Detector channel layout: one channel per SH organ or merge group.

        Channel order follows first appearance in organ-id order; merged
        organs (same merge_group) share a single channel.
        """
        out: list[tuple[str, list[int]]] = []
        index: dict[str, int] = {}
        for e in self.entries:
            if e.stratum is not Stratum.SH:
                continue
            key = e.merge_group or e.name
            if key in index:
                out[index[key]][1].append(e.organ_id)
            else:
                index[key] = len(out)
                out.append((key, [e.organ_id]))
        return tuple((key, tuple(ids)) for key, ids in out)

    def to_dict(self) -> dict:
        return {
            "organs": [
                {
                    "organ_id": e.organ_id,
                    "name": e.name,
                    "stratum": e.stratum.value,
                    "max_extent_mm": list(e.max_extent_mm),
                    **({"merge_group": e.merge_group} if e.merge_group else {}),
                }
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "OARCatalog":
        entries = []
        for item in payload["organs"]:
            entries.append(
                OAREntry(
                    organ_id=int(item["organ_id"]),
                    name=str(item["name"]),
                    stratum=Stratum(item["stratum"]),
                    max_extent_mm=tuple(float(x) for x in item["max_extent_mm"]),
                    merge_group=item.get("merge_group"),
                )
            )
        return cls(tuple(entries))


@dataclass(frozen=True)
class VOI:
    """Axis-aligned crop box in voxel coordinates of a source grid."""

    start: tuple[int, int, int]
    size: tuple[int, int, int]
    source_shape: tuple[int, int, int]

    def __post_init__(self):
        start = tuple(int(v) for v in self.start)
        size = tuple(int(v) for v in self.size)
        source_shape = tuple(int(v) for v in self.source_shape)
        if any(v < 1 for v in size):
            raise BoundsError(f"VOI size must be >= 1 per axis, got {size}")
        if any(s < 0 for s in start):
            raise BoundsError(f"VOI start must be >= 0, got {start}")
        if any(s + n > d for s, n, d in zip(start, size, source_shape)):
            raise BoundsError(f"VOI start+size {tuple(s + n for s, n in zip(start, size))} exceeds source shape {source_shape}")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "source_shape", source_shape)

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(s, s + n) for s, n in zip(self.start, self.size))

    @property
    def stop(self) -> tuple[int, int, int]:
        return tuple(s + n for s, n in zip(self.start, self.size))


GridLike = Volume | LabelMap | ProbMaps | HeatMapSet


def crop(vol: GridLike, voi: VOI):
    """Extract the VOI from a grid of any kind, shifting the origin accordingly."""
    if voi.source_shape != vol.shape:
        raise BoundsError(f"VOI declared for shape {voi.source_shape}, grid has {vol.shape}")
    origin = tuple(o + s * sp for o, s, sp in zip(vol.origin, voi.start, vol.spacing))
    if isinstance(vol, (ProbMaps, HeatMapSet)):
        data = vol.data[(slice(None),) + voi.slices]
    else:
        data = vol.data[voi.slices]
    if isinstance(vol, LabelMap):
        return LabelMap(data, vol.class_count, vol.spacing, origin)
    return replace(vol, data=data, origin=origin)


def voi_around_point(
    center: tuple[int, int, int],
    extent_mm: tuple[float, float, float],
    spacing: Triple,
    factor: float,
    source_shape: tuple[int, int, int],
) -> VOI:
    """Build a VOI of physical size ``factor * extent_mm`` centered at a voxel.

    Per axis the size is round-half-up of ``factor * extent_mm / spacing``,
    clamped to the full span where it exceeds the source. Out-of-bounds boxes
    are repaired by translation (never shrunk or padded), so the result is
    always a valid VOI.
    """
    if factor <= 0:
        raise ConfigError(f"factor must be > 0, got {factor}")
    if any(e <= 0 for e in extent_mm):
        raise ConfigError(f"extent_mm must be > 0 per axis, got {tuple(extent_mm)}")
    size = []
    for e, sp, dim in zip(extent_mm, spacing, source_shape):
        n = int(math.floor(factor * e / sp + 0.5))
        size.append(max(1, min(n, dim)))
    start = [
        int(np.clip(c - n // 2, 0, dim - n))
        for c, n, dim in zip(center, size, source_shape)
    ]
    return VOI(tuple(start), tuple(size), tuple(source_shape))


def one_hot(labels: LabelMap) -> ProbMaps:
    """Indicator channels for classes 0..C; channel sums are exactly 1."""
    channels = labels.class_count + 1
    data = np.zeros((channels,) + labels.shape, dtype=np.float32)
    for c in range(channels):
        data[c] = labels.data == c
    return ProbMaps(data, labels.spacing, labels.origin)


def argmax_labels(probs: ProbMaps) -> LabelMap:
    """Per-voxel argmax of probability channels back to a label grid."""
    data = np.argmax(probs.data, axis=0).astype(np.int16)
    return LabelMap(data, probs.class_channels - 1, probs.spacing, probs.origin)
