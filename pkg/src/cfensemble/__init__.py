"""Homogeneous ensembles of weight-aware collaborative-filtering models."""

__version__ = "0.1.0"
