from .container import PersistentContainer
from .grid import MAX_DEPTH, MISSING, Element, Grid, GridError, MacroElement
from .reference import CUBE, SIMPLEX

__all__ = [
    "CUBE",
    "SIMPLEX",
    "MAX_DEPTH",
    "MISSING",
    "Element",
    "Grid",
    "GridError",
    "MacroElement",
    "PersistentContainer",
]
