"""Simulator and hybrid-action learner for task offloading over a space-air-ground network."""

__version__ = "0.1.0"
