"""Ray-traced channel datasets and DNN-based user localization."""

__version__ = "0.1.0"
