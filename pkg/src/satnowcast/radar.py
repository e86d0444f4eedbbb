"""Radar conversion, range masking, compositing and precipitation binarization.

Rain rate thresholds for the three nested precipitation levels default to
0.08 / 0.5 / 2.5 mm/h (light / moderate / heavy); comparisons are inclusive,
so a pixel exactly at a threshold belongs to that level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .geo import GeoGrid, great_circle_km, remap
from .raster import RasterStack

# Marshall-Palmer Z = a * R**b with the canonical constants.
MARSHALL_PALMER_A = 200.0
MARSHALL_PALMER_B = 1.6

DEFAULT_THRESHOLDS_MM_H = (0.08, 0.5, 2.5)
LEVEL_NAMES = ("light", "moderate", "heavy")


def reflectivity_to_rainrate(dbz):
    """Convert radar reflectivity (dBZ) to rain rate (mm/h).

    Inverts ``Z = 200 * R**1.6`` with ``Z = 10**(dBZ/10)``; strictly
    increasing in dBZ, approaching zero for very negative reflectivity.
    """
    dbz = np.asarray(dbz, dtype=np.float64)
    z = 10.0 ** (dbz / 10.0)
    r = (z / MARSHALL_PALMER_A) ** (1.0 / MARSHALL_PALMER_B)
    if r.ndim == 0:
        return float(r)
    return r


@dataclass
class RadarScan:
    """One radar's rain-rate observation with its reliability radius."""

    center_lat: float
    center_lon: float
    rain_rate: RasterStack
    timestamp: int  # end-of-scan convention
    max_range_km: float = 200.0

    def __post_init__(self):
        if self.max_range_km <= 0:
            raise ValueError("max_range_km must be positive")
        if len(self.rain_rate.channels) != 1:
            raise ShapeError("radar scan must carry exactly one rain-rate channel")


@dataclass
class CompositeField:
    """Merged rain rate with the union coverage of the contributing radars."""

    rain_rate: np.ndarray
    coverage_mask: np.ndarray
    grid: GeoGrid
    timestamp: int = 0

    def __post_init__(self):
        self.rain_rate = np.ascontiguousarray(self.rain_rate, dtype=np.float32)
        self.coverage_mask = np.ascontiguousarray(self.coverage_mask, dtype=bool)
        if self.rain_rate.shape != self.coverage_mask.shape:
            raise ShapeError("rain_rate and coverage_mask shapes differ")


@dataclass
class PrecipLevels:
    """Nested binary precipitation masks (heavy implies moderate implies light)."""

    light: np.ndarray
    moderate: np.ndarray
    heavy: np.ndarray
    coverage_mask: np.ndarray
    thresholds_mm_h: tuple = DEFAULT_THRESHOLDS_MM_H

    def __post_init__(self):
        for name in ("light", "moderate", "heavy", "coverage_mask"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=bool))
        shapes = {self.light.shape, self.moderate.shape, self.heavy.shape, self.coverage_mask.shape}
        if len(shapes) != 1:
            raise ShapeError("precipitation level masks have inconsistent shapes")

    def level(self, name: str) -> np.ndarray:
        return {"light": self.light, "moderate": self.moderate, "heavy": self.heavy}[name]

    def nested(self) -> bool:
        return bool(
            np.all(self.moderate <= self.light)
            and np.all(self.heavy <= self.moderate)
            and np.all(self.light <= self.coverage_mask)
        )

    def stack(self) -> np.ndarray:
        """Masks as a (3, rows, cols) float32 array (light, moderate, heavy)."""
        return np.stack([self.light, self.moderate, self.heavy]).astype(np.float32)


def range_mask(scan: RadarScan, grid: GeoGrid) -> np.ndarray:
    """Boolean raster marking pixels within the scan's reliable range."""
    lats = grid.pixel_lats()[:, None]
    lons = grid.pixel_lons()[None, :]
    dist = great_circle_km(lats, lons, scan.center_lat, scan.center_lon)
    return dist <= scan.max_range_km


def composite(scans: list[RadarScan], grid: GeoGrid, timestamp: int = 0) -> CompositeField:
    """Merge scans onto a grid taking the per-pixel maximum rain rate.

    A pixel contributes from a scan only where the scan's own validity and
    its range mask both hold; coverage is the union of range-masked validity.
    The maximum resolves radar disagreement (missed precipitation is far more
    common than false detection) and makes the result independent of scan
    ordering. An empty scan list yields an all-invalid composite.
    """
    rain = np.full(grid.shape, np.nan, dtype=np.float32)
    coverage = np.zeros(grid.shape, dtype=bool)
    for scan in scans:
        stack = scan.rain_rate
        if stack.grid != grid:
            stack = remap(stack, grid, method="bilinear")
        in_range = range_mask(scan, grid)
        usable = in_range & stack.valid_mask
        # +0.0 canonicalizes negative zeros so the max is order-invariant bitwise;
        # fmax ignores the NaN placeholders of not-yet-covered pixels.
        values = stack.channels[0].data + np.float32(0.0)
        rain = np.where(usable, np.fmax(rain, values), rain)
        coverage |= usable
    rain[~coverage] = np.nan
    return CompositeField(rain_rate=rain, coverage_mask=coverage, grid=grid, timestamp=timestamp)


def binarize(comp: CompositeField, thresholds_mm_h: tuple = DEFAULT_THRESHOLDS_MM_H) -> PrecipLevels:
    """Threshold a composite into nested light/moderate/heavy masks.

    Comparison is inclusive (rate >= threshold); pixels outside coverage are
    false at every level.
    """
    t_light, t_moderate, t_heavy = thresholds_mm_h
    if not (t_light <= t_moderate <= t_heavy):
        raise ValueError("thresholds must be non-decreasing")
    cov = comp.coverage_mask
    with np.errstate(invalid="ignore"):
        light = cov & (comp.rain_rate >= t_light)
        moderate = cov & (comp.rain_rate >= t_moderate)
        heavy = cov & (comp.rain_rate >= t_heavy)
    return PrecipLevels(
        light=light,
        moderate=moderate,
        heavy=heavy,
        coverage_mask=cov,
        thresholds_mm_h=tuple(thresholds_mm_h),
    )
