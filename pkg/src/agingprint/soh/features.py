"""Multi-channel inputs for the SoH estimator.

Channels on the resampled grid:

0. terminal voltage ``V``
1. voltage relative to OCV, ``V - V0(SoC)``, with SoC counted against the
   nominal capacity
2. ``dV/dt`` by central differences, one-sided at the ends
3. normalised time ``t / t_end``

The single-channel variant keeps channel 0 only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ingest import ResampledCycle
from ..physics import OcvModel, coulomb_count, default_ocv, ocv

CHANNEL_NAMES = ("voltage", "relative_voltage", "dv_dt", "time_fraction")


class DegenerateChannelError(ValueError):
    pass


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Raw channels ``(C, n)`` plus cycle metadata."""

    channels: np.ndarray
    cell_id: str = ""
    cycle_index: int = 0
    duration: float = float("nan")
    stats: NormStats | None = field(default=None, compare=False)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def normalized(self, stats: NormStats | None = None) -> np.ndarray:
        stats = stats or self.stats
        if stats is None:
            return self.channels
        return (self.channels - stats.mean[:, None]) / stats.std[:, None]


def build_features(cycle: ResampledCycle, ocv_model: OcvModel | None = None,
                   stats: NormStats | None = None, capacity_Ah: float = 1.1,
                   n_channels: int = 4) -> FeatureTensor:
    if n_channels not in (1, 4):
        raise ValueError("n_channels must be 1 or 4")
    V = np.asarray(cycle.V, dtype=float)
    if n_channels == 1:
        ch = V[None, :]
    else:
        ocv_model = ocv_model or default_ocv()
        soc = coulomb_count(cycle.I, cycle.dt, 1.0, capacity_Ah)
        rel = V - ocv(soc, ocv_model)
        dvdt = np.gradient(V, cycle.t)
        frac = np.asarray(cycle.t) / cycle.t[-1]
        ch = np.vstack([V, rel, dvdt, frac])
    return FeatureTensor(ch, cycle.cell_id, cycle.cycle_index,
                         float(cycle.t[-1]), stats)


def fit_stats(features) -> NormStats:
    """Per-channel mean and standard deviation over every sample and step."""
    stacked = np.stack([f.channels for f in features])
    mean = stacked.mean(axis=(0, 2))
    std = stacked.std(axis=(0, 2))
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        names = [CHANNEL_NAMES[i] if stacked.shape[1] == 4 else "voltage" for i in bad]
        raise DegenerateChannelError(f"zero variance in channel(s) {names}")
    return NormStats(mean, std)


def feature_dataset(cycles, labels: dict, n_channels: int = 4,
                    ocv_model: OcvModel | None = None, capacity_Ah: float = 1.1):
    """``(FeatureTensor, soh)`` pairs for every cycle with a label.

    ``labels`` maps ``(cell_id, cycle_index)`` to SoH; unlabelled cycles are
    skipped.
    """
    ocv_model = ocv_model or default_ocv()
    return [(build_features(c, ocv_model, capacity_Ah=capacity_Ah,
                            n_channels=n_channels), float(labels[key]))
            for c in cycles if (key := (c.cell_id, c.cycle_index)) in labels]
