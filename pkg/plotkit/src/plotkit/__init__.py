"""Figure rendering for nonadiab CSV outputs.

Three figure kinds mirror the engine's three output schemas one-to-one:
``series`` (stacked population/coherence panels), ``snapshot`` (potentials
with trajectory markers plus density panels) and ``scan`` (channel
probabilities against the initial momentum).  The package reads only the
delimited files and the JSON figure description; it never imports the
simulation engine.
"""

__version__ = "0.1.0"

from .render import FigureSpec, PlotError, load_spec, render

__all__ = ["__version__", "FigureSpec", "PlotError", "load_spec", "render"]
