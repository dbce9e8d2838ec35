"""Bundled data: remission times (months) of 128 bladder-cancer patients.

``load_bladder(125)`` drops the three values (0.08, one 2.02, 3.48) whose
removal reproduces the published 125-observation summary used in the chart
example.  Both files keep the original record order, which defines how the
data split into phase-I subgroups.
"""
from __future__ import annotations

import csv
from importlib import resources

import numpy as np

from .exceptions import DomainError

__all__ = ["load_bladder", "read_values"]


def load_bladder(n: int = 125) -> np.ndarray:
    if n not in (125, 128):
        raise DomainError("n must be 125 or 128")
    with resources.files(__package__).joinpath(f"data/bladder_{n}.csv").open() as fh:
        return read_values(fh)


def read_values(fh) -> np.ndarray:
    """First column of a CSV with an optional header row, as floats."""
    out = []
    for row in csv.reader(fh):
        if not row or not row[0].strip():
            continue
        try:
            out.append(float(row[0]))
        except ValueError:
            if out:
                raise DomainError(f"non-numeric value {row[0]!r}") from None
    return np.asarray(out, dtype=float)
