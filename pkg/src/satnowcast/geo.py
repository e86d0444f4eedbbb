"""Geographic grids, equirectangular projection math, remapping and solar geometry.

Conventions
-----------
- Grids are axis-aligned boxes in the equirectangular projection (plate
  carree): pixel (row, col) spacing is uniform in degrees.
- Row 0 sits at the ``lat_max`` edge, column 0 at the ``lon_min`` edge.
- Pixel *centers* live at half-integer offsets: the center of pixel
  ``(0, 0)`` maps to fractional coordinates ``(0.0, 0.0)`` and the grid
  corner ``(lat_max, lon_min)`` maps to ``(-0.5, -0.5)``.
- All angles are degrees, all distances kilometers, all times UTC seconds
  since the Unix epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import DomainError, InvalidGridError

EARTH_RADIUS_KM = 6371.0

# Validity window of the low-accuracy solar position approximation.
_SOLAR_EPOCH_MIN = -631152000  # 1950-01-01T00:00:00Z
_SOLAR_EPOCH_MAX = 4133980800  # 2101-01-01T00:00:00Z


@dataclass(frozen=True)
class GeoGrid:
    """Equirectangular grid definition.

    Parameters
    ----------
    lat_min, lat_max, lon_min, lon_max : float
        Grid edges in degrees. ``lat_min < lat_max`` and
        ``lon_min < lon_max`` are required.
    rows, cols : int
        Pixel counts along latitude and longitude.
    """

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    rows: int
    cols: int

    def __post_init__(self):
        if not (self.lat_min < self.lat_max) or not (self.lon_min < self.lon_max):
            raise InvalidGridError(
                f"degenerate grid extent: lat [{self.lat_min}, {self.lat_max}], "
                f"lon [{self.lon_min}, {self.lon_max}]"
            )
        if self.rows < 1 or self.cols < 1:
            raise InvalidGridError(f"non-positive grid size {self.rows}x{self.cols}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def lat_step(self) -> float:
        return (self.lat_max - self.lat_min) / self.rows

    @property
    def lon_step(self) -> float:
        return (self.lon_max - self.lon_min) / self.cols

    def latlon_to_pixel(self, lat, lon):
        """Map latitude/longitude to fractional pixel coordinates.

        Linear in each argument; points outside the grid yield out-of-range
        fractional coordinates rather than errors.

        Returns
        -------
        (row, col) : float or ndarray
            ``col = (lon - lon_min) / (lon_max - lon_min) * cols - 0.5`` and
            the row analogously, counted downward from ``lat_max``.
        """
        lat = np.asarray(lat, dtype=np.float64)
        lon = np.asarray(lon, dtype=np.float64)
        row = (self.lat_max - lat) / (self.lat_max - self.lat_min) * self.rows - 0.5
        col = (lon - self.lon_min) / (self.lon_max - self.lon_min) * self.cols - 0.5
        if row.ndim == 0:
            return float(row), float(col)
        return row, col

    def pixel_to_latlon(self, row, col):
        """Exact algebraic inverse of :meth:`latlon_to_pixel`."""
        row = np.asarray(row, dtype=np.float64)
        col = np.asarray(col, dtype=np.float64)
        lat = self.lat_max - (row + 0.5) / self.rows * (self.lat_max - self.lat_min)
        lon = self.lon_min + (col + 0.5) / self.cols * (self.lon_max - self.lon_min)
        if lat.ndim == 0:
            return float(lat), float(lon)
        return lat, lon

    def pixel_lats(self) -> np.ndarray:
        """Latitudes of pixel-row centers, row 0 first (northernmost)."""
        return self.pixel_to_latlon(np.arange(self.rows), np.zeros(self.rows))[0]

    def pixel_lons(self) -> np.ndarray:
        """Longitudes of pixel-column centers, column 0 first (westernmost)."""
        return self.pixel_to_latlon(np.zeros(self.cols), np.arange(self.cols))[1]

    def to_dict(self) -> dict:
        return {
            "lat_min": self.lat_min,
            "lat_max": self.lat_max,
            "lon_min": self.lon_min,
            "lon_max": self.lon_max,
            "rows": self.rows,
            "cols": self.cols,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeoGrid":
        return cls(
            lat_min=float(d["lat_min"]),
            lat_max=float(d["lat_max"]),
            lon_min=float(d["lon_min"]),
            lon_max=float(d["lon_max"]),
            rows=int(d["rows"]),
            cols=int(d["cols"]),
        )


def great_circle_km(lat1, lon1, lat2, lon2):
    """Haversine distance on a sphere of radius 6371.0 km.

    Accepts scalars or broadcastable arrays; symmetric in its endpoints and
    zero exactly when they coincide.
    """
    lat1 = np.radians(np.asarray(lat1, dtype=np.float64))
    lon1 = np.radians(np.asarray(lon1, dtype=np.float64))
    lat2 = np.radians(np.asarray(lat2, dtype=np.float64))
    lon2 = np.radians(np.asarray(lon2, dtype=np.float64))
    sin_dlat = np.sin((lat2 - lat1) / 2.0)
    sin_dlon = np.sin((lon2 - lon1) / 2.0)
    h = sin_dlat**2 + np.cos(lat1) * np.cos(lat2) * sin_dlon**2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    if d.ndim == 0:
        return float(d)
    return d


@dataclass(frozen=True)
class SolarContext:
    """Time and place for a solar altitude query."""

    utc_time: float
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise DomainError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise DomainError(f"longitude {self.lon} outside [-180, 180]")


def _solar_geometry(utc_time: float):
    """Fractional-year solar declination (rad) and equation of time (min).

    Low-accuracy NOAA approximation, good to roughly half a degree of
    altitude between 1950 and 2100.
    """
    if not (_SOLAR_EPOCH_MIN <= utc_time <= _SOLAR_EPOCH_MAX):
        raise DomainError(
            f"epoch {utc_time} outside the 1950-2100 validity range of the "
            "solar approximation"
        )
    dt = datetime.fromtimestamp(utc_time, tz=timezone.utc)
    frac_hour = dt.hour + dt.minute / 60.0 + dt.second / 3600.0 + dt.microsecond / 3.6e9
    gamma = 2.0 * math.pi / 365.0 * (dt.timetuple().tm_yday - 1 + (frac_hour - 12.0) / 24.0)
    eqtime = 229.18 * (
        0.000075
        + 0.001868 * math.cos(gamma)
        - 0.032077 * math.sin(gamma)
        - 0.014615 * math.cos(2 * gamma)
        - 0.040849 * math.sin(2 * gamma)
    )
    decl = (
        0.006918
        - 0.399912 * math.cos(gamma)
        + 0.070257 * math.sin(gamma)
        - 0.006758 * math.cos(2 * gamma)
        + 0.000907 * math.sin(2 * gamma)
        - 0.002697 * math.cos(3 * gamma)
        + 0.00148 * math.sin(3 * gamma)
    )
    minutes = frac_hour * 60.0
    return decl, eqtime, minutes


def solar_altitude_array(utc_time: float, lat, lon):
    """Solar altitude in degrees above the horizon, vectorized over location."""
    decl, eqtime, minutes = _solar_geometry(utc_time)
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    # True solar time in minutes, with the UTC reference (no zone offset).
    tst = minutes + eqtime + 4.0 * lon
    ha = np.radians(tst / 4.0 - 180.0)
    lat_r = np.radians(lat)
    sin_alt = np.sin(lat_r) * math.sin(decl) + np.cos(lat_r) * math.cos(decl) * np.cos(ha)
    return np.degrees(np.arcsin(np.clip(sin_alt, -1.0, 1.0)))


def solar_altitude(ctx: SolarContext) -> float:
    """Solar altitude for a single :class:`SolarContext`, in degrees."""
    return float(solar_altitude_array(ctx.utc_time, ctx.lat, ctx.lon))


def solar_altitude_plane(grid: GeoGrid, utc_time: float) -> np.ndarray:
    """Per-pixel solar altitude plane (degrees) for a grid at one time."""
    lats = grid.pixel_lats()[:, None]
    lons = grid.pixel_lons()[None, :]
    return solar_altitude_array(utc_time, lats, lons).astype(np.float32)


def _sample_bilinear(data, valid, rows_f, cols_f):
    """Bilinear sampling with validity-renormalized weights.

    Neighbor weights are renormalized over valid neighbors so they always
    sum to 1 where any contribution exists; positions outside the pixel
    footprint of the raster are reported as not ok.
    """
    h, w = data.shape
    inside = (
        (rows_f >= -0.5) & (rows_f <= h - 0.5) & (cols_f >= -0.5) & (cols_f <= w - 0.5)
    )
    r0 = np.floor(rows_f)
    c0 = np.floor(cols_f)
    fr = rows_f - r0
    fc = cols_f - c0
    r0i = np.clip(r0.astype(np.int64), 0, h - 1)
    r1i = np.clip(r0.astype(np.int64) + 1, 0, h - 1)
    c0i = np.clip(c0.astype(np.int64), 0, w - 1)
    c1i = np.clip(c0.astype(np.int64) + 1, 0, w - 1)

    # Zero out invalid pixels first: 0-weight * NaN fill would poison the sums.
    vd = np.where(valid, data, 0).astype(np.float64)
    acc = np.zeros(rows_f.shape, dtype=np.float64)
    wsum = np.zeros(rows_f.shape, dtype=np.float64)
    for ri, wr in ((r0i, 1.0 - fr), (r1i, fr)):
        for ci, wc in ((c0i, 1.0 - fc), (c1i, fc)):
            wgt = wr * wc * valid[ri, ci]
            acc += wgt * vd[ri, ci]
            wsum += wgt
    ok = inside & (wsum > 1e-12)
    out = np.zeros(rows_f.shape, dtype=np.float64)
    np.divide(acc, wsum, out=out, where=ok)
    return out, ok


def _sample_nearest(data, valid, rows_f, cols_f):
    h, w = data.shape
    inside = (
        (rows_f >= -0.5) & (rows_f <= h - 0.5) & (cols_f >= -0.5) & (cols_f <= w - 0.5)
    )
    ri = np.clip(np.rint(rows_f).astype(np.int64), 0, h - 1)
    ci = np.clip(np.rint(cols_f).astype(np.int64), 0, w - 1)
    ok = inside & valid[ri, ci]
    return data[ri, ci].astype(np.float64), ok


def remap(src, dst_grid: GeoGrid, method: str = "bilinear"):
    """Resample a :class:`~satnowcast.raster.RasterStack` onto another grid.

    Parameters
    ----------
    src : RasterStack
        Source stack; its grid defines the sampling domain.
    dst_grid : GeoGrid
        Target grid. Remapping to a grid equal to ``src.grid`` returns a
        bit-exact copy.
    method : {"bilinear", "nearest"}
        Use nearest for categorical/mask channels, bilinear for continuous
        fields.

    Destination pixels whose source location falls outside the source grid
    footprint are marked invalid and carry the channel fill value.
    """
    from .raster import Channel, RasterStack  # deferred to avoid an import cycle

    if method not in ("bilinear", "nearest"):
        raise ValueError(f"unknown remap method {method!r}")
    if src.grid == dst_grid:
        return src.copy()

    lats = dst_grid.pixel_lats()
    lons = dst_grid.pixel_lons()
    rows_f, _ = src.grid.latlon_to_pixel(lats, np.full(dst_grid.rows, src.grid.lon_min))
    _, cols_f = src.grid.latlon_to_pixel(np.full(dst_grid.cols, src.grid.lat_max), lons)
    rows_f = np.broadcast_to(rows_f[:, None], (dst_grid.rows, dst_grid.cols))
    cols_f = np.broadcast_to(cols_f[None, :], (dst_grid.rows, dst_grid.cols))

    sampler = _sample_bilinear if method == "bilinear" else _sample_nearest
    channels = []
    ok_any = None
    for ch in src.channels:
        vals, ok = sampler(ch.data, src.valid_mask, rows_f, cols_f)
        out = vals.astype(np.float32)
        out[~ok] = ch.fill_value
        channels.append(Channel(ch.name, ch.units, out, ch.fill_value))
        ok_any = ok
    if ok_any is None:
        # Empty channel list: validity still reflects the geometric overlap.
        ok_any = (
            (rows_f >= -0.5)
            & (rows_f <= src.grid.rows - 0.5)
            & (cols_f >= -0.5)
            & (cols_f <= src.grid.cols - 0.5)
        )
    return RasterStack(
        grid=dst_grid,
        timestamp=src.timestamp,
        channels=channels,
        valid_mask=np.ascontiguousarray(ok_any),
    )
