"""Desk-scale engine for adversarial joint-distribution matching on a 2D
Gaussian-mixture toy task, with analytic oracles for the game's theory."""

__version__ = "0.1.0"
