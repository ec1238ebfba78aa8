"""Expected-goals modeling, shot-outcome simulation, and multi-calibrated
average-player baselines for finishing-skill analysis."""

__version__ = "0.1.0"
