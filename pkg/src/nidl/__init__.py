"""Skin-temperature estimation from magnified skin video."""

__version__ = "0.1.0"
