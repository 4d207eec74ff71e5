"""Experiment harness: configuration, datasets, runs, and the command line."""
