"""Satellite-driven precipitation detection and nowcasting on synthetic data."""

from .geo import GeoGrid, SolarContext, great_circle_km, remap, solar_altitude
from .raster import Channel, DatasetManifest, RasterStack, read_raster, write_raster
from .radar import (
    CompositeField,
    PrecipLevels,
    RadarScan,
    binarize,
    composite,
    range_mask,
    reflectivity_to_rainrate,
)
from .flow import FlowField, FlowParams, estimate_flow, warp
from .synth import SynthConfig, gen_synthetic_scene, regrid_nwp
from .temporal import ScanTimeline, convert_framerate, interpolate_field

__version__ = "0.1.0"

__all__ = [
    "GeoGrid",
    "SolarContext",
    "great_circle_km",
    "remap",
    "solar_altitude",
    "Channel",
    "DatasetManifest",
    "RasterStack",
    "read_raster",
    "write_raster",
    "CompositeField",
    "PrecipLevels",
    "RadarScan",
    "binarize",
    "composite",
    "range_mask",
    "reflectivity_to_rainrate",
    "FlowField",
    "FlowParams",
    "estimate_flow",
    "warp",
    "SynthConfig",
    "gen_synthetic_scene",
    "regrid_nwp",
    "ScanTimeline",
    "convert_framerate",
    "interpolate_field",
]
