"""Long-format panel containers and the within (time-demeaning) transform.

Data is held as stacked arrays grouped by unit, with an offsets vector
marking unit boundaries; per-unit blocks are exposed as views, so the
downstream per-unit math never copies. Units keep their first-appearance
order and observations are sorted by time within each unit.

Typical entry points::

    panel = load_csv("wages.csv", ColumnMap(y="lwage", x=("exper", "union")))
    demeaned = within_transform(panel)

Singleton units (a single observation) are legal: they demean to zero
rows, add nothing to the fit, and are listed in ``panel.singletons`` so
callers can decide whether to drop them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ParseError

__all__ = [
    "ColumnMap",
    "PanelDataset",
    "DemeanedPanel",
    "load_csv",
    "within_transform",
]


@dataclass(frozen=True)
class ColumnMap:
    """Names of the CSV columns holding the response, regressors, and keys."""

    y: str
    x: tuple[str, ...]
    unit: str = "unit"
    time: str = "time"

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        if len(set(self.x)) != len(self.x):
            raise ConfigurationError(f"duplicate regressor names in {self.x}")


@dataclass(frozen=True)
class _Blocks:
    """Stacked panel arrays with per-unit boundaries.

    Parameters
    ----------
    units : tuple
        Unit labels in storage order (first appearance in the source).
    times : ndarray, shape (n,)
        Time labels, grouped by unit and strictly increasing within each.
    y : ndarray, shape (n,)
    x : ndarray, shape (n, k)
        Regressor matrix, column-major storage.
    offsets : ndarray, shape (N+1,)
        ``offsets[i]:offsets[i+1]`` slices out unit i.
    column_names : tuple of str
    """

    units: tuple
    times: np.ndarray
    y: np.ndarray
    x: np.ndarray
    offsets: np.ndarray
    column_names: tuple

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        self._validate()

    @property
    def N(self) -> int:
        return len(self.units)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @cached_property
    def t_lengths(self) -> np.ndarray:
        """Observations per unit, in unit order."""
        return np.diff(self.offsets)

    @cached_property
    def singletons(self) -> tuple:
        """Labels of units with a single observation (zero rows once demeaned)."""
        return tuple(u for u, t in zip(self.units, self.t_lengths) if t == 1)

    def y_block(self, i: int) -> np.ndarray:
        return self.y[self.offsets[i]:self.offsets[i + 1]]

    def x_block(self, i: int) -> np.ndarray:
        return self.x[self.offsets[i]:self.offsets[i + 1]]

    def times_block(self, i: int) -> np.ndarray:
        return self.times[self.offsets[i]:self.offsets[i + 1]]

    def blocks(self) -> Iterator[tuple]:
        """Yield (unit label, times, y block, x block) per unit."""
        for i, u in enumerate(self.units):
            yield u, self.times_block(i), self.y_block(i), self.x_block(i)

    # shape checks shared by both container types
    def _validate(self):
        y, x, offsets = self.y, self.x, self.offsets
        if y.ndim != 1 or x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise DataError(
                f"inconsistent shapes: y {y.shape}, x {x.shape}"
            )
        if self.times.shape[0] != y.shape[0]:
            raise DataError(
                f"times has {self.times.shape[0]} entries for {y.shape[0]} rows"
            )
        if len(self.column_names) != x.shape[1]:
            raise DataError(
                f"{len(self.column_names)} column names for k={x.shape[1]} regressors"
            )
        if (
            offsets.ndim != 1
            or offsets.shape[0] != len(self.units) + 1
            or offsets[0] != 0
            or offsets[-1] != y.shape[0]
            or np.any(np.diff(offsets) < 1)
        ):
            raise DataError("offsets do not partition the rows into nonempty units")


class PanelDataset(_Blocks):
    """Validated long-format panel: unique (unit, time) keys, finite values."""

    def _validate(self):
        super()._validate()
        if len(set(self.units)) != len(self.units):
            raise DataError("duplicate unit labels")
        if not np.isfinite(self.y).all():
            i = int(np.flatnonzero(~np.isfinite(self.y))[0])
            raise DataError(f"non-finite response at row {i} (unit {self._unit_at(i)!r})")
        if not np.isfinite(self.x).all():
            i = int(np.flatnonzero(~np.isfinite(self.x).all(axis=1))[0])
            raise DataError(f"non-finite regressor at row {i} (unit {self._unit_at(i)!r})")
        self._check_times_sorted()

    def _unit_at(self, row: int):
        i = int(np.searchsorted(self.offsets, row, side="right")) - 1
        return self.units[i]

    def _check_times_sorted(self):
        n = self.n
        if n == len(self.units):
            return
        interior = np.ones(n, dtype=bool)
        interior[self.offsets[:-1]] = False
        idx = np.flatnonzero(interior)
        cur, prev = self.times[idx], self.times[idx - 1]
        bad = np.flatnonzero(~(cur > prev))
        if bad.size:
            row = int(idx[bad[0]])
            u, t = self._unit_at(row), _plain_label(self.times[row])
            if cur[bad[0]] == prev[bad[0]]:
                raise DataError(f"duplicate (unit, time) pair ({u!r}, {t!r})")
            raise DataError(
                f"times for unit {u!r} are not sorted "
                f"(saw {t!r} after {_plain_label(prev[bad[0]])!r})"
            )

    @classmethod
    def from_arrays(
        cls,
        units: Sequence,
        times: Sequence,
        y: Sequence[float],
        x,
        column_names: Sequence[str],
    ) -> "PanelDataset":
        """Build a panel from parallel long-format arrays.

        Rows may arrive in any order; they are grouped by unit (keeping
        first-appearance unit order) and sorted by time within unit.

        Parameters
        ----------
        units, times : sequences of length n
            Row keys. Labels must be mutually comparable within a column.
        y : sequence of float, length n
        x : array-like, shape (n, k)
        column_names : k regressor names

        Raises
        ------
        DataError
            On duplicate (unit, time) pairs or non-finite values.
        """
        units = [_plain_label(u) for u in units]
        n = len(units)
        yv = np.array(y, dtype=float).reshape(n)
        xv = np.array(x, dtype=float).reshape(n, -1)
        codes = np.empty(n, dtype=np.int64)
        first_seen: dict = {}
        for i, u in enumerate(units):
            codes[i] = first_seen.setdefault(u, len(first_seen))
        tarr = _label_array(times)
        order = np.lexsort((tarr, codes))
        codes = codes[order]
        offsets = np.searchsorted(codes, np.arange(len(first_seen) + 1))
        return cls(
            units=tuple(first_seen),
            times=tarr[order],
            y=yv[order],
            x=np.asfortranarray(xv[order]),
            offsets=offsets,
            column_names=tuple(column_names),
        )


class DemeanedPanel(_Blocks):
    """Within-transformed panel: every block has zero column means per unit."""


def _plain_label(value):
    # numpy scalars repr as np.int64(3) under numpy 2; unwrap for messages
    return value.item() if isinstance(value, np.generic) else value


def _label_array(labels: Sequence) -> np.ndarray:
    arr = np.asarray(list(labels))
    if arr.ndim != 1:
        raise DataError(f"labels must be one-dimensional, got shape {arr.shape}")
    return arr


def _parse_labels(raw: list) -> list:
    # prefer integer labels when every value parses; "2" < "10" then sorts right
    try:
        return [int(s) for s in raw]
    except (TypeError, ValueError):
        return [s.strip() if isinstance(s, str) else s for s in raw]


def load_csv(path, columns) -> PanelDataset:
    """Read a long-format CSV into a :class:`PanelDataset`.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV with a header row, comma delimiter, '.' decimal separator.
    columns : ColumnMap or mapping
        Which columns hold the unit key, time key, response, and regressors.
        A mapping form ``{"y": ..., "x": [...], "unit": ..., "time": ...}``
        is accepted.

    Returns
    -------
    PanelDataset

    Raises
    ------
    ConfigurationError
        If a named column is missing from the header.
    ParseError
        If a cell fails to parse as a finite number (message carries the
        1-based row number).
    DataError
        If a (unit, time) pair repeats.
    """
    cm = ColumnMap(**columns) if isinstance(columns, Mapping) else columns
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        pos = {name: j for j, name in enumerate(header)}
        wanted = (cm.unit, cm.time, cm.y, *cm.x)
        missing = [c for c in wanted if c not in pos]
        if missing:
            raise ConfigurationError(
                f"{path}: missing column(s) {missing}; header has {header}"
            )
        want_idx = [pos[c] for c in wanted]
        units_raw: list = []
        times_raw: list = []
        numeric: list = []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {rownum}: expected {len(header)} fields, got {len(row)}"
                )
            cells = [row[j] for j in want_idx]
            units_raw.append(cells[0])
            times_raw.append(cells[1])
            vals = []
            for name, cell in zip(wanted[2:], cells[2:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
                if not np.isfinite(v):
                    raise ParseError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"value {cell!r} is not finite"
                    )
                vals.append(v)
            numeric.append(vals)
    if not numeric:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(numeric, dtype=float)
    return PanelDataset.from_arrays(
        units=_parse_labels(units_raw),
        times=_parse_labels(times_raw),
        y=data[:, 0],
        x=data[:, 1:],
        column_names=cm.x,
    )


def within_transform(data: PanelDataset) -> DemeanedPanel:
    """Subtract each unit's time averages from its y and x blocks.

    The transform uses only group membership, never the time values, so
    gaps or non-contiguous time labels are irrelevant. Any column that is
    constant within a unit (a fixed effect in particular) maps to zeros
    for that unit; singleton units map to all-zero rows.

    Parameters
    ----------
    data : PanelDataset

    Returns
    -------
    DemeanedPanel
        Same units, times, and shapes; values demeaned within unit.
    """
    starts = data.offsets[:-1]
    t = data.t_lengths
    ybar = np.add.reduceat(data.y, starts) / t
    yd = data.y - np.repeat(ybar, t)
    xbar = np.add.reduceat(data.x, starts, axis=0) / t[:, None]
    xd = data.x - np.repeat(xbar, t, axis=0)
    return DemeanedPanel(
        units=data.units,
        times=data.times,
        y=yd,
        x=np.asfortranarray(xd),
        offsets=data.offsets,
        column_names=data.column_names,
    )
