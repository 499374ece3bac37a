"""Solver for 2D ball-to-target physics puzzles: guide path, local regions,
event-based block optimisation and learned contact models."""
from .level import Level, Placement, PlacedBlock, read_level
from .physics import simulate
from .solver import SolveReport, solve

__all__ = ["Level", "Placement", "PlacedBlock", "read_level", "simulate", "solve", "SolveReport"]
__version__ = "0.1.0"
