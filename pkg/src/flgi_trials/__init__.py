"""Simulation and allocation-probability-based inference for block-randomized
bandit clinical trials using the forward-looking Gittins index rule."""

__version__ = "0.1.0"
