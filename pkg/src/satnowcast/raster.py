"""Raster containers, the RFLD v1 on-disk format, and dataset manifests.

RFLD v1 layout
--------------
::

    bytes 0..7    magic ``RFLD0001``
    bytes 8..11   uint32 little-endian header length ``L``
    bytes 12..    UTF-8 JSON header (grid, timestamp, channel metadata,
                  mask encoding), ``L`` bytes
    payload       per channel: rows*cols float32 little-endian, row-major;
                  then the validity mask bit-packed row-major
                  (``numpy.packbits``, big bit order)
    trailer       uint32 little-endian CRC32 of the payload

The format round-trips every field bit-exactly, including NaN payloads.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    MalformedHeaderError,
    ShapeError,
    TruncatedPayloadError,
)
from .geo import GeoGrid

MAGIC = b"RFLD0001"


@dataclass
class Channel:
    """One named 2-D float32 field of a raster stack."""

    name: str
    units: str
    data: np.ndarray
    fill_value: float = float("nan")

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ShapeError(f"channel {self.name!r} data must be 2-D")


@dataclass
class RasterStack:
    """Georeferenced multichannel raster with a shared validity mask.

    Invariants: all channels share the grid shape, and fill values never
    appear on valid pixels (the default NaN fill guarantees this for any
    finite data).
    """

    grid: GeoGrid
    timestamp: int
    channels: list[Channel] = field(default_factory=list)
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        self.timestamp = int(self.timestamp)
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.grid.shape, dtype=bool)
        self.valid_mask = np.ascontiguousarray(self.valid_mask, dtype=bool)
        if self.valid_mask.shape != self.grid.shape:
            raise ShapeError(
                f"valid mask shape {self.valid_mask.shape} != grid {self.grid.shape}"
            )
        for ch in self.channels:
            if ch.data.shape != self.grid.shape:
                raise ShapeError(
                    f"channel {ch.name!r} shape {ch.data.shape} != grid {self.grid.shape}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def channel_names(self) -> list[str]:
        return [ch.name for ch in self.channels]

    def channel(self, name: str) -> Channel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(f"no channel named {name!r}")

    def data_array(self) -> np.ndarray:
        """Stack channel data into a (C, rows, cols) float32 array."""
        if not self.channels:
            return np.zeros((0,) + self.grid.shape, dtype=np.float32)
        return np.stack([ch.data for ch in self.channels])

    def copy(self) -> "RasterStack":
        return RasterStack(
            grid=self.grid,
            timestamp=self.timestamp,
            channels=[
                Channel(ch.name, ch.units, ch.data.copy(), ch.fill_value)
                for ch in self.channels
            ],
            valid_mask=self.valid_mask.copy(),
        )

    def equals(self, other: "RasterStack") -> bool:
        """Bit-for-bit equality including masks, metadata and NaN payloads."""
        if self.grid != other.grid or self.timestamp != other.timestamp:
            return False
        if self.channel_names() != other.channel_names():
            return False
        if not np.array_equal(self.valid_mask, other.valid_mask):
            return False
        for a, b in zip(self.channels, other.channels):
            if a.units != b.units:
                return False
            if a.data.tobytes() != b.data.tobytes():
                return False
            if np.float32(a.fill_value).tobytes() != np.float32(b.fill_value).tobytes():
                return False
        return True


def write_raster(stack: RasterStack, path) -> None:
    """Serialize a stack to RFLD v1."""
    header = {
        "grid": stack.grid.to_dict(),
        "timestamp": stack.timestamp,
        "channels": [
            {"name": ch.name, "units": ch.units, "fill_value": _float_repr(ch.fill_value)}
            for ch in stack.channels
        ],
        "mask": {"encoding": "packbits-big"},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = bytearray()
    for ch in stack.channels:
        payload += np.ascontiguousarray(ch.data, dtype="<f4").tobytes()
    payload += np.packbits(stack.valid_mask.ravel()).tobytes()
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
        f.write(struct.pack("<I", crc))


def read_raster(path) -> RasterStack:
    """Read an RFLD v1 file, verifying structure and checksum."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4:
        raise MalformedHeaderError(f"{path}: file shorter than the fixed header")
    if blob[: len(MAGIC)] != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic bytes {blob[:8]!r}")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_start = len(MAGIC) + 4
    header_end = header_start + header_len
    if header_end > len(blob):
        raise MalformedHeaderError(f"{path}: declared header length overruns the file")
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
        grid = GeoGrid.from_dict(header["grid"])
        timestamp = int(header["timestamp"])
        channel_meta = header["channels"]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedHeaderError(f"{path}: invalid header JSON ({exc})") from exc

    rows, cols = grid.rows, grid.cols
    n_px = rows * cols
    channel_bytes = 4 * n_px * len(channel_meta)
    mask_bytes = (n_px + 7) // 8
    payload_len = channel_bytes + mask_bytes
    payload_end = header_end + payload_len
    if payload_end + 4 > len(blob):
        raise TruncatedPayloadError(
            f"{path}: need {payload_len + 4} payload+crc bytes, have {len(blob) - header_end}"
        )
    payload = blob[header_end:payload_end]
    (stored_crc,) = struct.unpack_from("<I", blob, payload_end)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != stored_crc:
        raise ChecksumError(f"{path}: payload CRC {crc:#x} != stored {stored_crc:#x}")

    channels = []
    off = 0
    for meta in channel_meta:
        data = np.frombuffer(payload, dtype="<f4", count=n_px, offset=off).reshape(rows, cols)
        off += 4 * n_px
        channels.append(
            Channel(meta["name"], meta["units"], data.copy(), float(meta["fill_value"]))
        )
    packed = np.frombuffer(payload, dtype=np.uint8, count=mask_bytes, offset=off)
    valid = np.unpackbits(packed, count=n_px).astype(bool).reshape(rows, cols)
    return RasterStack(grid=grid, timestamp=timestamp, channels=channels, valid_mask=valid)


def _float_repr(x: float):
    """JSON-safe float: NaN/inf encode as strings, round-trip exactly."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


ROLES = ("satellite", "radar", "nwp", "truth")


@dataclass
class ManifestEntry:
    timestamp: int
    role: str
    path: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown manifest role {self.role!r}")


@dataclass
class DatasetManifest:
    """Time-ordered index of raster files, one JSON line per entry."""

    entries: list[ManifestEntry] = field(default_factory=list)
    cadence_s: int = 600

    def __post_init__(self):
        self.entries.sort(key=lambda e: (e.timestamp, e.role, e.path))

    def add(self, timestamp: int, role: str, path: str) -> None:
        self.entries.append(ManifestEntry(int(timestamp), role, str(path)))
        self.entries.sort(key=lambda e: (e.timestamp, e.role, e.path))

    def select(self, role: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.role == role]

    def timestamps(self, role: str) -> list[int]:
        return [e.timestamp for e in self.select(role)]

    def gaps(self) -> dict[str, list[int]]:
        """Missing timestamps per role, judged on each role's own lattice.

        A role's cadence is its smallest positive timestamp difference; any
        lattice point between its first and last timestamp without an entry
        is flagged. Gaps are reported, never raised.
        """
        out: dict[str, list[int]] = {}
        for role in ROLES:
            ts = sorted(set(self.timestamps(role)))
            if len(ts) < 2:
                continue
            diffs = np.diff(ts)
            step = int(diffs.min())
            if step <= 0:
                continue
            expected = range(ts[0], ts[-1] + 1, step)
            missing = sorted(set(expected) - set(ts))
            if missing:
                out[role] = missing
        return out

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"cadence_s": self.cadence_s}, sort_keys=True) + "\n")
            for e in self.entries:
                f.write(
                    json.dumps(
                        {"timestamp": e.timestamp, "role": e.role, "path": e.path},
                        sort_keys=True,
                    )
                    + "\n"
                )

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        entries = []
        cadence = 600
        with open(path, "r", encoding="utf-8") as f:
            for i, line in enumerate(f):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if i == 0 and "cadence_s" in rec and "timestamp" not in rec:
                    cadence = int(rec["cadence_s"])
                    continue
                entries.append(
                    ManifestEntry(int(rec["timestamp"]), rec["role"], rec["path"])
                )
        return cls(entries=entries, cadence_s=cadence)
