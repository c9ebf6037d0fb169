"""Tactile-prediction-driven stem pushing: simulator, forecasting and control."""

__version__ = "0.1.0"
