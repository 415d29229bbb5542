"""Floorplan localization from depth rays, histogram-filter tracking and room-style clustering."""

__version__ = "0.1.0"
