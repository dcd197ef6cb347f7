"""Few-shot class-incremental learning with meta-learned calibration."""

__version__ = "1.0.0"
