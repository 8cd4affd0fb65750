from .render import FIGURE_KINDS, FigureSpec, PlotError, build_figure, render

__all__ = ["FIGURE_KINDS", "FigureSpec", "PlotError", "build_figure", "render"]
