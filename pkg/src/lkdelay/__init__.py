"""Stability analysis and controller synthesis for coupled differential-difference
delay systems with complete quadratic Lyapunov-Krasovskii functionals."""

__version__ = "0.1.0"
