"""Experiment harness: configs, datasets, training loops, CLI."""
