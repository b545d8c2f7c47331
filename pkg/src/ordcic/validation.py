"""Input validation helpers shared by the estimators and the CLI."""

import numpy as np
import pandas as pd

from .errors import InputError
from .model import ObservationSet

__all__ = [
    "check_columns",
    "check_outcome",
    "check_binary_column",
    "check_finite_block",
    "resolve_block",
    "build_cells",
]

_MAX_OFFENDERS = 10


def check_columns(df, columns):
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise InputError(f"missing columns: {missing}")


def check_outcome(y):
    """Outcome levels must be integers in {0, 1, 2}; offenders listed by row."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise InputError("outcome must be one-dimensional")
    numeric = pd.to_numeric(pd.Series(arr), errors="coerce")
    bad = numeric.isna() | ~numeric.isin([0, 1, 2])
    if bad.any():
        rows = np.nonzero(bad.to_numpy())[0][:_MAX_OFFENDERS].tolist()
        raise InputError(f"outcome must be 0, 1 or 2; offending rows {rows}")
    return numeric.to_numpy(dtype=int)


def check_binary_column(values, name):
    arr = np.asarray(values)
    numeric = pd.to_numeric(pd.Series(arr), errors="coerce")
    bad = numeric.isna() | ~numeric.isin([0, 1])
    if bad.any():
        rows = np.nonzero(bad.to_numpy())[0][:_MAX_OFFENDERS].tolist()
        raise InputError(f"column {name!r} must be 0/1; offending rows {rows}")
    return numeric.to_numpy(dtype=int)


def check_finite_block(df, columns, block_name):
    if not columns:
        return np.empty((len(df), 0))
    check_columns(df, columns)
    block = df[list(columns)].apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(block.to_numpy(dtype=float)).all(axis=1)
    if bad.any():
        rows = np.nonzero(bad)[0][:_MAX_OFFENDERS].tolist()
        raise InputError(
            f"{block_name} covariates contain non-finite values; offending rows {rows}"
        )
    return block.to_numpy(dtype=float)


def resolve_block(X, columns, block_name):
    """Extract a covariate block from a DataFrame (by name) or array (by index)."""
    if columns is None or len(columns) == 0:
        return np.empty((len(X), 0))
    if isinstance(X, pd.DataFrame):
        return check_finite_block(X, list(columns), block_name)
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise InputError("array input must be two-dimensional")
    idx = list(columns)
    if not all(isinstance(i, (int, np.integer)) for i in idx):
        raise InputError(
            f"{block_name} columns must be integer indices for array input"
        )
    block = arr[:, idx]
    if not np.all(np.isfinite(block)):
        rows = np.nonzero(~np.isfinite(block).all(axis=1))[0][:_MAX_OFFENDERS]
        raise InputError(
            f"{block_name} covariates contain non-finite values; offending rows "
            f"{rows.tolist()}"
        )
    return block


def build_cells(X, y, x_cols, z_cols, group_col, time_col):
    """Partition rows into the four group-time ObservationSets.

    Raises when a cell is empty; cell row counts are in each set's ``n``.
    """
    if not isinstance(X, pd.DataFrame):
        raise InputError("group/time partitioning needs a DataFrame input")
    check_columns(X, [group_col, time_col])
    y = check_outcome(y)
    if len(y) != len(X):
        raise InputError(f"outcome has {len(y)} rows but data has {len(X)}")
    g = check_binary_column(X[group_col], group_col)
    t = check_binary_column(X[time_col], time_col)
    x_block = resolve_block(X, x_cols, "consumption")
    z_block = resolve_block(X, z_cols, "reporting")
    cells = {}
    for gg in (0, 1):
        for tt in (0, 1):
            mask = (g == gg) & (t == tt)
            if not mask.any():
                raise InputError(f"cell (group={gg}, time={tt}) is empty")
            cells[(gg, tt)] = ObservationSet(
                outcomes=y[mask], x=x_block[mask], z=z_block[mask], tag=(gg, tt)
            )
    return cells
