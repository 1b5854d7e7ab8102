"""Reading BMS cycle logs and putting discharge segments on a common grid.

CSV layout (header required, ``.`` decimal separator, UTF-8)::

    cell_id,cycle,t_s,voltage_V,current_A[,temp_C]

Rows may be interleaved across cycles; they are bucketed by
``(cell_id, cycle)``. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

DEFAULT_COLUMNS = {
    "cell_id": "cell_id",
    "cycle": "cycle",
    "t": "t_s",
    "V": "voltage_V",
    "I": "current_A",
    "T": "temp_C",
}


class IngestError(ValueError):
    pass


class ParseError(IngestError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class LogValidationError(IngestError):
    pass


class EmptySegmentError(IngestError):
    pass


class ConfigError(IngestError):
    pass


@dataclass(frozen=True)
class IngestConfig:
    columns: dict = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    # +1: discharge current logged positive; -1: logged negative
    discharge_sign: int = 1
    n: int = 150

    def __post_init__(self):
        if self.discharge_sign not in (1, -1):
            raise ConfigError("discharge_sign must be +1 or -1")
        if self.n < 2:
            raise ConfigError("grid length n must be at least 2")
        missing = {"cell_id", "cycle", "t", "V", "I"} - set(self.columns)
        if missing:
            raise ConfigError(f"column mapping lacks {sorted(missing)}")


@dataclass(frozen=True, eq=False)
class CycleLog:
    """Raw samples of one cycle of one cell."""

    cell_id: str
    cycle_index: int
    t: np.ndarray
    V: np.ndarray
    I: np.ndarray
    T: np.ndarray | None = None

    def __post_init__(self):
        arrays = {k: np.asarray(getattr(self, k), dtype=float)
                  for k in ("t", "V", "I")}
        for k, a in arrays.items():
            object.__setattr__(self, k, a)
        if self.T is not None:
            object.__setattr__(self, "T", np.asarray(self.T, dtype=float))
        n = self.t.size
        label = f"cell {self.cell_id!r} cycle {self.cycle_index}"
        if self.cycle_index < 1:
            raise LogValidationError(f"{label}: cycle index must be >= 1")
        if n < 2:
            raise LogValidationError(f"{label}: needs at least 2 samples")
        if self.V.size != n or self.I.size != n or (
                self.T is not None and self.T.size != n):
            raise LogValidationError(f"{label}: channel lengths differ")
        if np.any(np.diff(self.t) <= 0):
            raise LogValidationError(f"{label}: timestamps not strictly increasing")
        if np.any(self.V <= 0):
            raise LogValidationError(f"{label}: non-positive voltage")

    def __len__(self):
        return self.t.size

    def __eq__(self, other):
        if not isinstance(other, CycleLog):
            return NotImplemented
        same_T = (self.T is None and other.T is None) or (
            self.T is not None and other.T is not None
            and np.array_equal(self.T, other.T))
        return (self.cell_id == other.cell_id
                and self.cycle_index == other.cycle_index
                and np.array_equal(self.t, other.t)
                and np.array_equal(self.V, other.V)
                and np.array_equal(self.I, other.I)
                and same_T)

    def take(self, idx) -> "CycleLog":
        return CycleLog(self.cell_id, self.cycle_index, self.t[idx],
                        self.V[idx], self.I[idx],
                        None if self.T is None else self.T[idx])


@dataclass(frozen=True, eq=False)
class ResampledCycle:
    """Discharge segment on a uniform grid starting at ``t = 0``."""

    cell_id: str
    cycle_index: int
    t: np.ndarray
    V: np.ndarray
    I: np.ndarray

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def dt(self) -> float:
        return float(self.t[-1] / (self.t.size - 1))

    @property
    def duration(self) -> float:
        return float(self.t[-1])


def parse_cycle_log(stream: str | TextIO,
                    cfg: IngestConfig | None = None) -> list[CycleLog]:
    """Parse delimited text into one :class:`CycleLog` per cell and cycle.

    Output is sorted by ``(cell_id, cycle)``. Within a cycle the row order is
    kept; a timestamp that does not increase raises ``LogValidationError``.
    """
    cfg = cfg or IngestConfig()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    cols = cfg.columns
    lines = ((no, line) for no, line in enumerate(stream, start=1)
             if line.strip() and not line.lstrip().startswith("#"))
    try:
        header_no, header_line = next(lines)
    except StopIteration:
        raise ParseError("no header row") from None
    header = next(csv.reader([header_line]))
    header = [h.strip() for h in header]
    pos = {}
    for key in ("cell_id", "cycle", "t", "V", "I", "T"):
        name = cols.get(key)
        if name is None:
            continue
        if name in header:
            pos[key] = header.index(name)
        elif key != "T":
            raise ParseError(f"missing column {name!r}", header_no)

    buckets: dict[tuple[str, int], list[tuple]] = {}
    for no, line in lines:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", no)
        try:
            cell = row[pos["cell_id"]].strip()
            cycle = int(row[pos["cycle"]])
            vals = tuple(float(row[pos[k]]) for k in ("t", "V", "I"))
            temp = float(row[pos["T"]]) if "T" in pos and row[pos["T"]].strip() else None
        except ValueError as exc:
            raise ParseError(str(exc), no) from None
        buckets.setdefault((cell, cycle), []).append(vals + (temp,))

    logs = []
    for (cell, cycle), rows in sorted(buckets.items()):
        arr = np.array([r[:3] for r in rows], dtype=float)
        temps = [r[3] for r in rows]
        T = None if any(x is None for x in temps) else np.array(temps)
        if arr.shape[0] > 1 and np.any(np.diff(arr[:, 0]) <= 0):
            raise LogValidationError(
                f"cell {cell!r} cycle {cycle}: timestamps not strictly increasing")
        logs.append(CycleLog(cell, cycle, arr[:, 0], arr[:, 1], arr[:, 2], T))
    return logs


def write_cycle_logs(logs: Iterable[CycleLog], fh: TextIO,
                     comment: str | None = None) -> None:
    """Write logs in the ingest CSV layout; floats round-trip exactly."""
    logs = list(logs)
    with_temp = bool(logs) and all(log.T is not None for log in logs)
    if comment:
        fh.write(f"# {comment}\n")
    names = ["cell_id", "cycle", "t_s", "voltage_V", "current_A"]
    if with_temp:
        names.append("temp_C")
    fh.write(",".join(names) + "\n")
    for log in logs:
        for i in range(len(log)):
            fields = [log.cell_id, str(log.cycle_index), repr(float(log.t[i])),
                      repr(float(log.V[i])), repr(float(log.I[i]))]
            if with_temp:
                fields.append(repr(float(log.T[i])))
            fh.write(",".join(fields) + "\n")


def _longest_true_run(mask: np.ndarray) -> tuple[int, int]:
    best = (0, 0)
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        if (not flag or i == mask.size - 1) and start is not None:
            stop = i + 1 if flag else i
            if stop - start > best[1] - best[0]:
                best = (start, stop)
            start = None
    return best


def segment_discharge(log: CycleLog, cfg: IngestConfig | None = None) -> CycleLog:
    """Longest contiguous run of discharge samples, earliest on ties.

    With ``discharge_sign = -1`` the current is flipped so the returned
    segment always has discharge positive.
    """
    cfg = cfg or IngestConfig()
    mask = cfg.discharge_sign * log.I > 0
    start, stop = _longest_true_run(mask)
    label = f"cell {log.cell_id!r} cycle {log.cycle_index}"
    if stop == start:
        raise EmptySegmentError(f"{label}: no discharge samples")
    if stop - start < 2:
        raise EmptySegmentError(f"{label}: discharge segment has a single sample")
    if start == 0 and stop == len(log) and cfg.discharge_sign == 1:
        return log
    seg = log.take(slice(start, stop))
    if cfg.discharge_sign == -1:
        seg = CycleLog(seg.cell_id, seg.cycle_index, seg.t, seg.V, -seg.I, seg.T)
    return seg


def resample_cycle(seg: CycleLog, n: int = 150) -> ResampledCycle:
    """Linear interpolation of V and I onto ``n`` uniform points from 0."""
    if n < 2:
        raise ConfigError("grid length n must be at least 2")
    t_rel = seg.t - seg.t[0]
    grid = np.linspace(0.0, t_rel[-1], n)
    return ResampledCycle(
        seg.cell_id, seg.cycle_index, grid,
        np.interp(grid, t_rel, seg.V), np.interp(grid, t_rel, seg.I))


def prepare_cycles(logs: Iterable[CycleLog],
                   cfg: IngestConfig | None = None) -> list[ResampledCycle]:
    cfg = cfg or IngestConfig()
    return [resample_cycle(segment_discharge(log, cfg), cfg.n) for log in logs]
