"""Daily NO2 estimation at arbitrary sites from monitors, site campaigns and traffic."""

__version__ = "0.1.0"
