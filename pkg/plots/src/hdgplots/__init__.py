"""Figure scripts over the hdgplasma CSV contract."""

from .csvio import SchemaError, read_table

__all__ = ["SchemaError", "read_table"]
