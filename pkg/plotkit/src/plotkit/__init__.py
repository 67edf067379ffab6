"""Turn fedroute study exports into figures.

The package reads only the exported CSV files, never the simulator's
internals; the figure-spec JSON written by ``fedroute export-plots-data``
names the inputs and the grouping. See :mod:`plotkit.figures` for the
three figure kinds.
"""

from .figures import render
from .spec import FigureSpec, load_spec
from .tables import SCHEMA, SchemaError, Table, read_table

__all__ = [
    "FigureSpec",
    "SCHEMA",
    "SchemaError",
    "Table",
    "load_spec",
    "read_table",
    "render",
]
