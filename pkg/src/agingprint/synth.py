"""Synthetic aging datasets with known ground truth.

Each lifespan preset maps a cycle number to a capacity and a fingerprint
``(R_dyn, R_W)``. A cycle is generated by discharging the FOECM at a constant
C-rate of the current capacity until the terminal voltage falls below the
cutoff, then adding Gaussian noise to the voltage.

Schedules (``c`` in cycles, ``E`` the end-of-life cycle)::

    SoH(c)   = 1 - 0.2 (c / E)^q          reaches 0.80 at c = E
    R_dyn(c) = R_dyn0 + a c
    R_W(c)   = R_W0 + b c^p

``a`` and ``b`` are solved so that the preset passes through its anchor
fingerprint at SoH 0.90. The anchors and shapes are calibration choices made
to contrast tail-dominated short-life cells with polarization-dominated
long-life cells; they are not measured trajectories.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .ingest import CycleLog
from .physics import FoecmParams, simulate_foecm


class GenerationError(RuntimeError):
    pass


class ScheduleRangeError(ValueError):
    pass


@dataclass(frozen=True)
class AgingProfile:
    name: str
    eol_cycle: int
    soh_exponent: float
    R_dyn0: float
    R_dyn_slope: float
    R_W0: float
    R_W_coef: float
    R_W_exponent: float
    noise_sigma: float = 0.005
    cutoff_V: float = 2.0
    rate: float = 4.0
    Q0: float = 1.1
    dt: float = 2.0
    temp_C: float = 30.0
    physics: FoecmParams = field(default_factory=FoecmParams)

    def __post_init__(self):
        if self.eol_cycle < 1:
            raise ValueError("eol_cycle must be positive")
        if self.R_dyn_slope < 0 or self.R_W_coef < 0:
            raise ValueError("resistance schedules must be non-decreasing")
        if self.soh_exponent <= 0 or self.R_W_exponent <= 0:
            raise ValueError("schedule exponents must be positive")

    def soh(self, c: float) -> float:
        return 1.0 - 0.2 * (c / self.eol_cycle) ** self.soh_exponent

    def cycle_at_soh(self, s: float) -> float:
        return self.eol_cycle * ((1.0 - s) / 0.2) ** (1.0 / self.soh_exponent)


# name: (eol, q, (R_dyn, R_W) at BOL, (R_dyn, R_W) at SoH 0.90, p)
PRESET_ANCHORS = {
    "short": (648, 2.0, (0.060, 0.012), (0.071, 0.038), 2.0),
    "medium": (1155, 1.7, (0.059, 0.011), (0.076, 0.027), 1.5),
    "long": (1636, 1.4, (0.058, 0.010), (0.081, 0.017), 1.0),
}


def make_profile(name: str, eol_cycle: int, soh_exponent: float,
                 bol: tuple[float, float], anchor: tuple[float, float],
                 R_W_exponent: float, anchor_soh: float = 0.90,
                 **kwargs) -> AgingProfile:
    """Build a profile whose schedules pass through ``anchor`` at ``anchor_soh``."""
    c_a = eol_cycle * ((1.0 - anchor_soh) / 0.2) ** (1.0 / soh_exponent)
    slope = (anchor[0] - bol[0]) / c_a
    coef = (anchor[1] - bol[1]) / c_a ** R_W_exponent
    return AgingProfile(name=name, eol_cycle=eol_cycle,
                        soh_exponent=soh_exponent, R_dyn0=bol[0],
                        R_dyn_slope=slope, R_W0=bol[1], R_W_coef=coef,
                        R_W_exponent=R_W_exponent, **kwargs)


def preset(name: str, **kwargs) -> AgingProfile:
    """Lifespan preset ``short``, ``medium`` or ``long``."""
    try:
        eol, q, bol, anchor, p = PRESET_ANCHORS[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; "
                         f"choose from {sorted(PRESET_ANCHORS)}") from None
    return make_profile(name, eol, q, bol, anchor, p, **kwargs)


def aging_schedule(profile: AgingProfile, c: float) -> tuple[float, float, float]:
    """``(Q_c, R_dyn_c, R_W_c)`` at cycle ``c``, for ``0 <= c <= eol``."""
    if c < 0 or c > profile.eol_cycle:
        raise ScheduleRangeError(
            f"cycle {c} outside schedule support [0, {profile.eol_cycle}]")
    Q = profile.Q0 * profile.soh(c)
    R_dyn = profile.R_dyn0 + profile.R_dyn_slope * c
    R_W = profile.R_W0 + profile.R_W_coef * c ** profile.R_W_exponent
    return Q, R_dyn, R_W


def cycle_truth(profile: AgingProfile, c: float) -> FoecmParams:
    Q, R_dyn, R_W = aging_schedule(profile, c)
    return replace(profile.physics, Q=Q, R_dyn=R_dyn, R_W=R_W, soc0=1.0)


def simulate_discharge(profile: AgingProfile, truth: FoecmParams,
                       cell_id: str = "cell", cycle_index: int = 1,
                       rng: np.random.Generator | None = None,
                       horizon: float = 1.5):
    """Constant-current discharge of ``truth`` until the cutoff voltage.

    Returns the emitted log and the noise-free simulated voltage over the
    whole horizon (useful for checking the cutoff scan).
    """
    I_amp = profile.rate * truth.Q
    n_max = int(math.ceil(horizon * 3600.0 / profile.rate / profile.dt)) + 1
    I = np.full(n_max, I_amp)
    V = simulate_foecm(I, profile.dt, truth)
    below = np.flatnonzero(V < profile.cutoff_V)
    if below.size == 0:
        raise GenerationError(
            f"{cell_id} cycle {cycle_index}: cutoff {profile.cutoff_V} V "
            f"not reached within {n_max} samples")
    k = int(below[0])
    if k < 2:
        raise GenerationError(f"{cell_id} cycle {cycle_index}: starts below cutoff")
    V_out = V[:k].copy()
    if profile.noise_sigma > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_sigma > 0")
        V_out = V_out + rng.normal(0.0, profile.noise_sigma, k)
    t = np.arange(k) * profile.dt
    log = CycleLog(cell_id, cycle_index, t, V_out, I[:k],
                   np.full(k, profile.temp_C))
    return log, V


def cell_rng(seed: int, cell_id: str, cycle: int | None = None) -> np.random.Generator:
    """Independent stream per ``(seed, cell[, cycle])``, order-independent."""
    key = [int(seed), zlib.crc32(cell_id.encode("utf-8"))]
    if cycle is not None:
        key.append(int(cycle))
    return np.random.default_rng(key)


def generate_cycle(profile: AgingProfile, c: int, seed: int,
                   cell_id: str | None = None):
    """Generate cycle ``c`` (``c >= 1``) of ``profile``.

    Returns ``(log, truth, soh_true)`` where ``truth`` is the exact
    parameter set used and ``soh_true = Q_c / Q_0``.
    """
    if c < 1:
        raise ScheduleRangeError("logged cycles start at 1")
    cell_id = cell_id or profile.name
    truth = cycle_truth(profile, c)
    rng = cell_rng(seed, cell_id, c)
    log, _ = simulate_discharge(profile, truth, cell_id, c, rng)
    return log, truth, truth.Q / profile.Q0


@dataclass(frozen=True)
class TruthRecord:
    cell_id: str
    cycle: int
    Q_Ah: float
    R_dyn_ohm: float
    R_W_ohm: float
    soh_true: float


@dataclass
class SynthDataset:
    logs: list[CycleLog]
    truth: list[TruthRecord]
    profiles: dict[str, AgingProfile]

    def truth_map(self) -> dict[tuple[str, int], TruthRecord]:
        return {(r.cell_id, r.cycle): r for r in self.truth}

    def category(self, cell_id: str) -> str:
        return category_of(cell_id)


def category_of(cell_id: str) -> str:
    """Lifespan category encoded as the prefix of a synthetic cell id."""
    return cell_id.rsplit("-", 1)[0]


def jitter_profile(profile: AgingProfile, rng: np.random.Generator,
                   spread: float = 0.04) -> AgingProfile:
    """Cell-to-cell manufacturing spread around a preset."""
    f_eol, f_dyn, f_w = 1.0 + spread * np.clip(rng.standard_normal(3), -2.5, 2.5)
    return replace(profile,
                   eol_cycle=max(2, int(round(profile.eol_cycle * f_eol))),
                   R_dyn0=profile.R_dyn0 * f_dyn,
                   R_dyn_slope=profile.R_dyn_slope * f_dyn,
                   R_W0=profile.R_W0 * f_w,
                   R_W_coef=profile.R_W_coef * f_w)


def sample_cycles(eol: int, count: int) -> list[int]:
    """``count`` evenly spread cycle numbers in ``[1, eol]``, both ends included."""
    return sorted({int(round(x)) for x in np.linspace(1, eol, max(count, 2))})


def generate_dataset(profiles: Sequence[AgingProfile] | Iterable[str],
                     cells_per_profile: int, seed: int,
                     cycles_per_cell: int = 40,
                     spread: float = 0.04) -> SynthDataset:
    """Labelled logs for ``cells_per_profile`` jittered cells of each preset."""
    profiles = [preset(p) if isinstance(p, str) else p for p in profiles]
    if not profiles:
        raise ValueError("at least one profile is required")
    jobs = [(prof, i, seed, cycles_per_cell, spread)
            for prof in profiles for i in range(cells_per_profile)]
    return merge_cells(generate_cell(*job) for job in jobs)


def generate_cell(profile: AgingProfile, index: int, seed: int,
                  cycles_per_cell: int = 40, spread: float = 0.04):
    """One jittered cell: ``(cell_id, cell_profile, logs, truth_records)``.

    Depends only on its arguments, so cells can be generated in any order or
    in separate processes.
    """
    cell_id = f"{profile.name}-{index:02d}"
    cell = jitter_profile(profile, cell_rng(seed, cell_id), spread)
    logs, truth = [], []
    for c in sample_cycles(cell.eol_cycle, cycles_per_cell):
        log, p, soh = generate_cycle(cell, c, seed, cell_id)
        logs.append(log)
        truth.append(TruthRecord(cell_id, c, p.Q, p.R_dyn, p.R_W, soh))
    return cell_id, cell, logs, truth


def merge_cells(cells) -> SynthDataset:
    logs, truth, used = [], [], {}
    for cell_id, cell, cell_logs, cell_truth in cells:
        used[cell_id] = cell
        logs += cell_logs
        truth += cell_truth
    return SynthDataset(logs, truth, used)


TRUTH_HEADER = "cell_id,cycle,Q_Ah,R_dyn_ohm,R_W_ohm,soh_true"


def write_truth(records: Iterable[TruthRecord], fh: TextIO,
                comment: str | None = None) -> None:
    if comment:
        fh.write(f"# {comment}\n")
    fh.write(TRUTH_HEADER + "\n")
    for r in records:
        nums = (r.Q_Ah, r.R_dyn_ohm, r.R_W_ohm, r.soh_true)
        fh.write(f"{r.cell_id},{r.cycle}," + ",".join(repr(float(x)) for x in nums) + "\n")


def read_truth(fh: TextIO) -> list[TruthRecord]:
    rows = csv.DictReader(line for line in fh if not line.startswith("#"))
    return [TruthRecord(r["cell_id"], int(r["cycle"]), float(r["Q_Ah"]),
                        float(r["R_dyn_ohm"]), float(r["R_W_ohm"]),
                        float(r["soh_true"])) for r in rows]
