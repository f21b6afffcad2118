"""Figure rendering for spin-system simulation outputs.

Consumes the simulation CLI's file outputs (CSV series, PBM snapshots,
JSON reports) and renders publication-style PNG figures.  This package
never runs simulations itself; it is a pure function of its input files.
"""

from .io import ParseError, read_csv, read_pbm
from .render import FigureSpec, render

__all__ = ["FigureSpec", "ParseError", "read_csv", "read_pbm", "render"]
