"""Figure regeneration from ldbench CSV artifacts (plotting only)."""

__version__ = "0.1.0"

from .recipes import FigureRecipe, render, render_all  # noqa: F401
