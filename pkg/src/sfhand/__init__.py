"""Streaming language-guided 3D hand forecasting, desk scale."""

__version__ = "0.1.0"
