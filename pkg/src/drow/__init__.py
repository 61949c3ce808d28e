"""Distance-robust wheelchair/walker detection in 2D laser range data."""
__version__ = "0.1.0"
