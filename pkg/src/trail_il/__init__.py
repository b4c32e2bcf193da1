"""Imitation through learned action representations on tabular and small continuous MDPs."""

__version__ = "0.1.0"
