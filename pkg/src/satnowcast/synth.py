"""Deterministic synthetic scenes standing in for satellite, radar and NWP feeds.

The generator builds an analytic latent rain-rate field (a sum of advected
anisotropic Gaussian cells with per-step growth/decay) that can be sampled at
any time. Around it:

- *satellite* channels are fixed smooth nonlinear transforms of the latent
  field, contaminated by a smooth non-precipitating "haze" confounder, a
  static pseudo-relief visible in some wavelengths, and white noise. One
  channel carries a 5x5 neighborhood average of the latent signal, so models
  with spatial context can out-detect any pointwise mapping.
- *nwp* frames live on a coarse lattice (every 8th pixel, every 18th
  10-minute step) and include a direct coarse view of the haze confounder,
  which is how an NWP-aware detector gains over a satellite-only one.
- *truth* is the latent rain rate itself.

Everything is a pure function of :class:`SynthConfig`; the same seed yields
byte-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GenerationError, OutOfRangeError
from .geo import GeoGrid
from .radar import DEFAULT_THRESHOLDS_MM_H
from .raster import Channel, RasterStack

STEP_S = 600  # base lattice step (10 minutes)
SAT_STEP_S = 900  # satellite revisit (15 minutes)
NWP_STEP_S = 10800  # NWP availability (3 hours = 18 base steps)
NWP_COARSEN = 8  # NWP spatial coarsening factor

SAT_CHANNEL_PREFIX = "ir_ch"
TOPOGRAPHY_CHANNEL = "topography"
NWP_CHANNEL_NAMES = ("nwp_precip_rate", "nwp_cloud_water", "nwp_cape")

# Per-channel transform coefficients, cycled when more channels are requested:
# (gain, saturation, bias, haze coupling, relief coupling, noise scale).
_CHANNEL_COEFFS = (
    (1.00, 1.50, 0.00, 0.60, 0.00, 1.0),
    (0.90, 1.20, 0.05, 0.30, 0.00, 0.33),  # neighborhood-coded channel
    (0.80, 0.80, -0.10, 0.50, 0.15, 1.0),
    (0.60, 2.20, 0.10, -0.40, 0.30, 1.0),
    (1.10, 0.60, 0.00, 0.45, 0.10, 1.0),
    (0.70, 1.80, -0.05, -0.25, 0.25, 1.0),
)
_NEIGHBORHOOD_CHANNEL = 1  # index of the 5x5-averaged channel


@dataclass
class SynthConfig:
    """Knobs of the synthetic scene generator."""

    seed: int = 0
    rows: int = 160
    cols: int = 160
    n_blobs: int = 12
    advect_velocity: tuple = (2.0, 0.5)  # (u, v) pixels per 10-minute step
    growth_rate: float = 0.0
    decay_rate: float = 0.0
    n_satellite_channels: int = 12
    noise_sigma: float = 0.05
    relief_amplitude: float = 0.3
    rain_fraction_target: float = 0.15
    grid: GeoGrid | None = None

    def __post_init__(self):
        if not (0.0 <= self.growth_rate < 1.0 and 0.0 <= self.decay_rate < 1.0):
            raise ValueError("growth/decay rates must lie in [0, 1)")
        if self.n_satellite_channels < 1:
            raise ValueError("need at least one satellite channel")
        if not (0.0 < self.rain_fraction_target < 1.0):
            raise ValueError("rain_fraction_target must lie in (0, 1)")
        if self.grid is None:
            self.grid = GeoGrid(
                lat_min=54.0,
                lat_max=58.0,
                lon_min=35.0,
                lon_max=41.0,
                rows=self.rows,
                cols=self.cols,
            )


class _BlobField:
    """Sum of advected anisotropic Gaussian cells, evaluable at any time."""

    def __init__(self, centers, amps, inv_cov, velocity, step_gain):
        self.centers = centers  # (k, 2) row/col at t=0
        self.amps = amps  # (k,)
        self.inv_cov = inv_cov  # (k, 2, 2)
        self.velocity = velocity  # (du, dv) px per step
        self.step_gain = step_gain  # amplitude multiplier per step

    def eval(self, rows, cols, steps: float):
        rr = rows[:, None]
        cc = cols[None, :]
        du, dv = self.velocity
        gain = self.step_gain**steps
        out = np.zeros((rows.size, cols.size), dtype=np.float64)
        for k in range(self.centers.shape[0]):
            cy = self.centers[k, 0] + dv * steps
            cx = self.centers[k, 1] + du * steps
            dy = rr - cy
            dx = cc - cx
            a, b_, c = self.inv_cov[k, 0, 0], self.inv_cov[k, 0, 1], self.inv_cov[k, 1, 1]
            q = a * dy * dy + 2.0 * b_ * dy * dx + c * dx * dx
            out += self.amps[k] * gain * np.exp(-0.5 * q)
        return out


def _random_blob_field(rng, cfg: SynthConfig, n, sigma_range, amp_range, velocity, signed=False):
    margin = 0.25
    centers = np.stack(
        [
            rng.uniform(-margin * cfg.rows, (1 + margin) * cfg.rows, n),
            rng.uniform(-margin * cfg.cols, (1 + margin) * cfg.cols, n),
        ],
        axis=1,
    )
    amps = rng.uniform(amp_range[0], amp_range[1], n)
    if signed:
        amps *= rng.choice([-1.0, 1.0], n)
    inv_cov = np.zeros((n, 2, 2))
    for k in range(n):
        s1 = rng.uniform(*sigma_range)
        s2 = s1 * rng.uniform(0.5, 1.0)
        ang = rng.uniform(0, math.pi)
        ca, sa = math.cos(ang), math.sin(ang)
        rot = np.array([[ca, -sa], [sa, ca]])
        cov = rot @ np.diag([s1**2, s2**2]) @ rot.T
        inv_cov[k] = np.linalg.inv(cov)
    gain = (1.0 + cfg.growth_rate) * (1.0 - cfg.decay_rate)
    return _BlobField(centers, amps, inv_cov, velocity, gain)


def _sat_coeffs(k: int):
    return _CHANNEL_COEFFS[k % len(_CHANNEL_COEFFS)]


def _satellite_channels(latent, haze, relief, rng, cfg: SynthConfig):
    channels = []
    for k in range(cfg.n_satellite_channels):
        gain, sat, bias, haze_w, relief_w, noise_scale = _sat_coeffs(k)
        signal = np.tanh(sat * latent)
        if k % len(_CHANNEL_COEFFS) == _NEIGHBORHOOD_CHANNEL:
            signal = ndimage.uniform_filter(signal, size=5, mode="nearest")
        data = gain * signal + bias + haze_w * haze + relief_w * relief
        data = data + rng.normal(0.0, cfg.noise_sigma * noise_scale, data.shape)
        channels.append(
            Channel(f"{SAT_CHANNEL_PREFIX}{k:02d}", "K", data.astype(np.float32))
        )
    return channels


def gen_synthetic_scene(cfg: SynthConfig, n_steps: int):
    """Generate aligned satellite / NWP / truth series.

    Truth frames sit on the 10-minute lattice (``n_steps`` of them),
    satellite frames on the 15-minute lattice over the same span, and NWP
    frames on a 3-hour lattice guaranteed to bracket the span. Blob
    amplitudes are calibrated so the mean rainy fraction tracks
    ``rain_fraction_target``; configurations that cannot reach it within
    +-20% after 100 redraws raise :class:`GenerationError`.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid
    rows = np.arange(cfg.rows, dtype=np.float64)
    cols = np.arange(cfg.cols, dtype=np.float64)
    light_thr = DEFAULT_THRESHOLDS_MM_H[0]
    span_s = (n_steps - 1) * STEP_S

    relief = ndimage.gaussian_filter(rng.normal(0, 1, (cfg.rows, cfg.cols)), 12.0, mode="nearest")
    peak = np.abs(relief).max()
    relief = (relief / peak * cfg.relief_amplitude) if peak > 0 else relief

    haze_velocity = (-0.5 * cfg.advect_velocity[0], 0.4 * cfg.advect_velocity[1])
    haze = _random_blob_field(
        rng, cfg, max(4, cfg.n_blobs // 2), (18.0, 36.0), (0.25, 0.6), haze_velocity, signed=True
    )

    latent = None
    for _ in range(100):
        cand = _random_blob_field(
            rng, cfg, cfg.n_blobs, (5.0, 14.0), (0.3, 2.5), cfg.advect_velocity
        )
        base = cand.eval(rows, cols, 0.0)
        # Scale amplitudes so the first frame hits the target fraction.
        q = np.quantile(base, 1.0 - cfg.rain_fraction_target)
        if q <= 0:
            continue
        cand.amps *= light_thr / q
        fracs = [
            np.mean(cand.eval(rows, cols, i) >= light_thr) for i in range(n_steps)
        ]
        mean_frac = float(np.mean(fracs))
        if abs(mean_frac - cfg.rain_fraction_target) <= 0.2 * cfg.rain_fraction_target:
            latent = cand
            break
    if latent is None:
        raise GenerationError(
            f"could not reach rain fraction {cfg.rain_fraction_target} within 20% "
            "after 100 blob redraws"
        )

    truth = []
    for i in range(n_steps):
        rain = latent.eval(rows, cols, float(i)).astype(np.float32)
        truth.append(
            RasterStack(
                grid=grid,
                timestamp=i * STEP_S,
                channels=[Channel("rain_rate", "mm/h", rain)],
            )
        )

    satellite = []
    topo = Channel(TOPOGRAPHY_CHANNEL, "1", relief.astype(np.float32))
    t = 0
    while t <= span_s:
        steps = t / STEP_S
        lat_field = latent.eval(rows, cols, steps)
        haze_field = haze.eval(rows, cols, steps)
        chans = _satellite_channels(lat_field, haze_field, relief, rng, cfg)
        chans.append(Channel(topo.name, topo.units, topo.data.copy()))
        satellite.append(RasterStack(grid=grid, timestamp=t, channels=chans))
        t += SAT_STEP_S

    coarse_grid = GeoGrid(
        lat_min=grid.lat_min,
        lat_max=grid.lat_max,
        lon_min=grid.lon_min,
        lon_max=grid.lon_max,
        rows=max(2, cfg.rows // NWP_COARSEN),
        cols=max(2, cfg.cols // NWP_COARSEN),
    )
    c_rows = (np.arange(coarse_grid.rows) + 0.5) * (cfg.rows / coarse_grid.rows) - 0.5
    c_cols = (np.arange(coarse_grid.cols) + 0.5) * (cfg.cols / coarse_grid.cols) - 0.5
    nwp = []
    n_nwp = max(1, math.ceil(span_s / NWP_STEP_S)) + 1
    for j in range(n_nwp):
        t_nwp = j * NWP_STEP_S
        steps = t_nwp / STEP_S
        lat_c = latent.eval(c_rows, c_cols, steps)
        haze_c = haze.eval(c_rows, c_cols, steps)
        cape_c = 0.5 * lat_c**2 / (1.0 + lat_c)
        fields = (lat_c, haze_c, cape_c)
        chans = [
            Channel(
                name,
                "1",
                (f + rng.normal(0, 0.05, f.shape)).astype(np.float32),
            )
            for name, f in zip(NWP_CHANNEL_NAMES, fields)
        ]
        nwp.append(RasterStack(grid=coarse_grid, timestamp=t_nwp, channels=chans))

    return satellite, nwp, truth


def regrid_nwp(
    nwp_coarse: list[RasterStack],
    target_grid: GeoGrid,
    target_times: list[int],
) -> list[RasterStack]:
    """Bring coarse NWP frames to a target grid and time lattice.

    Bilinear in space, linear in time. Target times must lie within the
    coarse time span; extrapolation raises :class:`OutOfRangeError`.
    """
    from .geo import remap

    if not nwp_coarse:
        raise OutOfRangeError("no coarse NWP frames supplied")
    frames = sorted(nwp_coarse, key=lambda s: s.timestamp)
    times = [s.timestamp for s in frames]
    remapped: dict[int, RasterStack] = {}

    def get(i: int) -> RasterStack:
        if i not in remapped:
            remapped[i] = remap(frames[i], target_grid, method="bilinear")
        return remapped[i]

    out = []
    for t in target_times:
        if t < times[0] or t > times[-1]:
            raise OutOfRangeError(
                f"target time {t} outside NWP span [{times[0]}, {times[-1]}]"
            )
        i = next((j for j, tj in enumerate(times) if tj == t), None)
        if i is not None:
            frame = get(i).copy()
            frame.timestamp = t
            out.append(frame)
            continue
        i = max(j for j, tj in enumerate(times) if tj < t)
        f0, f1 = get(i), get(i + 1)
        w = (t - times[i]) / (times[i + 1] - times[i])
        ok = f0.valid_mask & f1.valid_mask
        channels = []
        for c0, c1 in zip(f0.channels, f1.channels):
            data = ((1.0 - w) * c0.data.astype(np.float64) + w * c1.data.astype(np.float64)).astype(
                np.float32
            )
            data[~ok] = c0.fill_value
            channels.append(Channel(c0.name, c0.units, data, c0.fill_value))
        out.append(RasterStack(grid=target_grid, timestamp=t, channels=channels, valid_mask=ok))
    return out
