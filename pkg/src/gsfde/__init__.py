"""Simulation and verification toolkit for stochastic functional
differential equations driven by G-Brownian motion with fading memory."""

__version__ = "0.1.0"
