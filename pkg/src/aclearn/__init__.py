"""Adversarial constraint learning: structured predictors trained against label simulators."""

__version__ = "0.1.0"
