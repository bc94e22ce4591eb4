"""Feature extraction frontend for the topicseg segmentation engine."""

__version__ = "0.1.0"
