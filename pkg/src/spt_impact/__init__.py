"""Stochastic portfolio theory with nonlinear, decaying price impact."""
from __future__ import annotations

__version__ = "0.1.0"
