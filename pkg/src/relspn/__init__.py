"""Relational sum-product network ensembles for cardinality estimation
and approximate query answering over relational data."""

__version__ = "0.1.0"
