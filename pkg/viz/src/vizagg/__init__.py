"""Static figures from coagg harness output tables."""

from .figures import (
    KINDS,
    SCHEMAS,
    FigureSpec,
    MissingInput,
    SchemaMismatch,
    build_figure,
    read_table,
    render,
)

__all__ = [
    "KINDS",
    "SCHEMAS",
    "FigureSpec",
    "MissingInput",
    "SchemaMismatch",
    "build_figure",
    "read_table",
    "render",
]
