"""Double difference-in-differences estimators for panel and repeated
cross-section data."""

__version__ = "0.1.0"
