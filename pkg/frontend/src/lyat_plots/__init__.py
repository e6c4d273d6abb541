"""Offline figure generation from closed-loop simulation trace CSVs."""

from .render import (FIGURE_KINDS, FigureSpec, PlotError, read_trace, render,
                     render_control_time, render_rms_time, render_traj3d)

__version__ = "0.1.0"
