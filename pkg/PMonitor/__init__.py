"""Periodic persistent-monitoring schedules for a single mobile sensor."""
__version__ = "0.1.0"
