"""Embedded relational engine (row store, small SQL dialect)."""

from .engine import RelationalEngine
from .relation import FLOAT64, INT64, TEXT, Relation
from .sql import SqlSyntaxError, parse

__all__ = ["RelationalEngine", "Relation", "SqlSyntaxError", "parse", "INT64", "FLOAT64", "TEXT"]
