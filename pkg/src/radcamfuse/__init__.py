"""Camera-radar fusion for vehicle detection and free-space segmentation in BEV-polar space."""

__version__ = "0.1.0"
