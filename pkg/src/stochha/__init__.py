"""Stochastic hybrid automata with composed (kernel) and decomposed (race) scheduling."""

from __future__ import annotations

__version__ = "0.1.0"
