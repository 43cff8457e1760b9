"""Figure rendering for fluidbatch experiment CSVs."""

from .render import CsvSchemaError, FigureSpec, build_figure, render

__version__ = "0.1.0"
