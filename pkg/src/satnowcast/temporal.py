"""Framerate conversion between observation lattices and scan-timeline math.

The interpolator blends two anchor frames warped toward the target time with
time-proportional weights. It is meant to run on detection *probability*
fields: the raw imagery mixes moving cloud with static relief, while the
detection output is a single moving layer that optical flow can track.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CadenceError, OutOfRangeError, ShapeError
from .flow import FlowField, FlowParams, estimate_flow, warp
from .raster import Channel, RasterStack


@dataclass(frozen=True)
class InterpolationWeights:
    """Endpoint weights ``a`` (toward frame 0) and ``b`` (toward frame 1)."""

    a: float
    b: float

    @classmethod
    def from_times(cls, t0: float, t1: float, t: float) -> "InterpolationWeights":
        if not (t0 <= t <= t1):
            raise OutOfRangeError(f"time {t} outside [{t0}, {t1}]")
        if t1 <= t0:
            raise CadenceError("anchor frames must be strictly ordered in time")
        b = (t - t0) / (t1 - t0)
        # 1 - b keeps a + b == 1 exactly in IEEE double for b in [0, 1].
        return cls(a=1.0 - b, b=b)


class ObservationTime(NamedTuple):
    utc_time: float
    clamped: bool


@dataclass(frozen=True)
class ScanTimeline:
    """Satellite sweep timing: south-to-north scan stamped at its start.

    Radar frames follow the opposite convention and are stamped when the
    scan ends (``radar_convention``).
    """

    scan_start: float
    scan_duration_s: float = 900.0
    lat_south: float = -81.0
    lat_north: float = 81.0
    radar_convention: str = "end-of-scan"

    def __post_init__(self):
        if self.scan_duration_s <= 0:
            raise ValueError("scan_duration_s must be positive")
        if not (self.lat_south < self.lat_north):
            raise ValueError("lat_south must be below lat_north")


def effective_observation_time(timeline: ScanTimeline, lat: float) -> ObservationTime:
    """Actual observation time of a latitude within a south-to-north sweep.

    Linear in latitude between the sweep extremes; latitudes outside the
    sweep are clamped and flagged.
    """
    clamped = not (timeline.lat_south <= lat <= timeline.lat_north)
    lat_c = min(max(lat, timeline.lat_south), timeline.lat_north)
    frac = (lat_c - timeline.lat_south) / (timeline.lat_north - timeline.lat_south)
    return ObservationTime(timeline.scan_start + timeline.scan_duration_s * frac, clamped)


def pairing_offset(timeline: ScanTimeline, radar_timestamp: float, lat: float) -> float:
    """Signed stamp offset: radar end-of-scan time minus satellite effective
    observation time at ``lat``. Positive means the radar stamp is later."""
    return radar_timestamp - effective_observation_time(timeline, lat).utc_time


def select_radar_frame(timeline: ScanTimeline, lat: float, radar_timestamps) -> int:
    """Pick the radar stamp closest to the satellite's effective observation
    time at ``lat``; ties resolve to the later stamp (end-of-scan bias)."""
    if len(radar_timestamps) == 0:
        raise ValueError("no radar timestamps to select from")
    t_eff = effective_observation_time(timeline, lat).utc_time
    best = None
    for ts in sorted(radar_timestamps):
        if best is None or abs(ts - t_eff) <= abs(best - t_eff):
            best = ts
    return best


def max_stamp_discrepancy(timeline: ScanTimeline, lats, radar_timestamps) -> float:
    """Largest |paired radar stamp - satellite stamp| over the given
    latitudes; the reported worst case of the two stamping conventions."""
    return max(
        abs(select_radar_frame(timeline, lat, radar_timestamps) - timeline.scan_start)
        for lat in lats
    )


def interpolate_field(
    f0,
    f1,
    t0: float,
    t1: float,
    t: float,
    flow_back: FlowField,
    flow_fwd: FlowField,
    valid0=None,
    valid1=None,
    fill: float = float("nan"),
):
    """Interpolate one 2-D field between two anchors.

    ``flow_back`` maps a pixel location to its source in ``f0`` over the full
    interval (the flow estimated from frame 1 to frame 0); ``flow_fwd`` maps
    into ``f1``. The result is

        out = a * warp(f0, b * flow_back) + b * warp(f1, a * flow_fwd)

    with ``a = (t1-t)/(t1-t0)`` and ``b = 1-a``. Endpoints reproduce their
    anchor exactly; elsewhere a pixel is valid only when both warped
    contributions are.

    Returns ``(field, valid)``.
    """
    f0 = np.asarray(f0, dtype=np.float32)
    f1 = np.asarray(f1, dtype=np.float32)
    if f0.shape != f1.shape:
        raise ShapeError(f"anchor shapes differ: {f0.shape} vs {f1.shape}")
    if f0.shape != flow_back.shape or f0.shape != flow_fwd.shape:
        raise ShapeError("flow shape does not match the frames")
    wts = InterpolationWeights.from_times(t0, t1, t)

    v0 = np.ones(f0.shape, dtype=bool) if valid0 is None else np.asarray(valid0, dtype=bool)
    v1 = np.ones(f1.shape, dtype=bool) if valid1 is None else np.asarray(valid1, dtype=bool)
    if wts.b == 0.0:
        out = f0.copy()
        out[~v0] = np.float32(fill)
        return out, v0.copy()
    if wts.a == 0.0:
        out = f1.copy()
        out[~v1] = np.float32(fill)
        return out, v1.copy()

    w0, ok0 = warp(f0, flow_back.scaled(wts.b), fill=0.0, valid=v0)
    w1, ok1 = warp(f1, flow_fwd.scaled(wts.a), fill=0.0, valid=v1)
    ok = ok0 & ok1
    out = (np.float32(wts.a) * w0 + np.float32(wts.b) * w1).astype(np.float32)
    out[~ok] = np.float32(fill)
    return out, ok


def pair_flows(stacks: list[RasterStack], channel: int = 0, params: FlowParams | None = None):
    """Estimate (backward, forward) flow pairs for consecutive stacks.

    The flow is computed on one channel (by pipeline convention the lightest
    precipitation probability, channel 0) and shared by all channels.
    """
    flows = []
    for s0, s1 in zip(stacks[:-1], stacks[1:]):
        a = s0.channels[channel].data
        b = s1.channels[channel].data
        flow_back = estimate_flow(b, a, params)  # maps into the earlier frame
        flow_fwd = estimate_flow(a, b, params)  # maps into the later frame
        flows.append((flow_back, flow_fwd))
    return flows


def convert_framerate(
    stacks: list[RasterStack],
    flows=None,
    out_step_s: int = 600,
    flow_params: FlowParams | None = None,
) -> list[RasterStack]:
    """Resample a uniform time series of rasters onto a finer lattice.

    The output lattice runs from the first to the last input timestamp in
    ``out_step_s`` steps. Frames that coincide with an input timestamp pass
    through bit-exactly; the rest are interpolated with the per-pair flows
    (estimated on channel 0 when not supplied).
    """
    if len(stacks) < 2:
        raise CadenceError("need at least two frames to convert framerate")
    times = [s.timestamp for s in stacks]
    diffs = {t1 - t0 for t0, t1 in zip(times[:-1], times[1:])}
    if len(diffs) != 1 or min(diffs) <= 0:
        raise CadenceError(f"input series is not uniformly spaced: steps {sorted(diffs)}")
    if flows is None:
        flows = pair_flows(stacks, params=flow_params)
    if len(flows) != len(stacks) - 1:
        raise ShapeError("one flow pair per consecutive stack pair is required")

    out = []
    by_time = {s.timestamp: s for s in stacks}
    for t in range(times[0], times[-1] + 1, out_step_s):
        if t in by_time:
            out.append(by_time[t].copy())
            continue
        i = max(j for j, tj in enumerate(times) if tj < t)
        s0, s1 = stacks[i], stacks[i + 1]
        flow_back, flow_fwd = flows[i]
        channels = []
        ok_all = None
        for ch0, ch1 in zip(s0.channels, s1.channels):
            field, ok = interpolate_field(
                ch0.data,
                ch1.data,
                times[i],
                times[i + 1],
                t,
                flow_back,
                flow_fwd,
                valid0=s0.valid_mask,
                valid1=s1.valid_mask,
                fill=ch0.fill_value,
            )
            channels.append(Channel(ch0.name, ch0.units, field, ch0.fill_value))
            ok_all = ok if ok_all is None else (ok_all & ok)
        if ok_all is None:
            ok_all = s0.valid_mask & s1.valid_mask
        out.append(
            RasterStack(grid=s0.grid, timestamp=t, channels=channels, valid_mask=ok_all)
        )
    return out
