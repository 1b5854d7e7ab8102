"""SoH-domain fingerprint curves and their lookup table.

Cycle-wise ``(soh_hat, R)`` points are projected onto a monotone curve by
weighted isotonic regression (pool adjacent violators), then sampled at
``k`` evenly spaced SoH values. Queries between reference points are
linearly interpolated and clamped outside the table range.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

NON_INCREASING = "non-increasing"
NON_DECREASING = "non-decreasing"
DIRECTIONS = (NON_INCREASING, NON_DECREASING)
LOOKUP_MAGIC = "agingprint-lookup-v1"


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class MappingConfig:
    eps0: float = 1e-6
    f_min: float = 0.01
    k: int = 25
    soh_range: tuple[float, float] = (0.80, 1.00)
    # resistances grow with aging, i.e. fall with SoH
    direction_dyn: str = NON_INCREASING
    direction_w: str = NON_INCREASING

    def __post_init__(self):
        if not self.eps0 > 0:
            raise MappingError("eps0 must be positive")
        if not 0 <= self.f_min <= 1:
            raise MappingError("f_min must lie in [0, 1]")
        if self.k < 2:
            raise MappingError("k must be at least 2")
        lo, hi = self.soh_range
        if not lo < hi:
            raise MappingError("soh_range must be increasing")
        for d in (self.direction_dyn, self.direction_w):
            if d not in DIRECTIONS:
                raise MappingError(f"direction must be one of {DIRECTIONS}")


def weights_rdyn(eps1, eps0: float = 1e-6) -> np.ndarray:
    """``1 / (eps + eps0)``: well-fitted cycles count more."""
    if not eps0 > 0:
        raise MappingError("eps0 must be positive")
    return 1.0 / (np.asarray(eps1, dtype=float) + eps0)


def weights_rw(tail_fractions, f_min: float = 0.01) -> np.ndarray:
    """Tail coverage as weight, floored at ``f_min``."""
    return np.maximum(np.asarray(tail_fractions, dtype=float), f_min)


def pava(y, w=None, increasing: bool = True) -> np.ndarray:
    """Weighted least-squares monotone fit of ``y`` in the given order."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if y.size == 0:
        raise MappingError("isotonic fit of an empty sequence")
    if y.shape != w.shape:
        raise MappingError("values and weights differ in length")
    if np.any(w <= 0):
        raise MappingError("weights must be positive")
    sign = 1.0 if increasing else -1.0
    # blocks as parallel stacks: weighted mean, total weight, length
    means, totals, counts = [], [], []
    for yi, wi in zip(sign * y, w):
        means.append(yi)
        totals.append(wi)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, n2 = means.pop(), totals.pop(), counts.pop()
            m1, w1, n1 = means.pop(), totals.pop(), counts.pop()
            wt = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt)
            totals.append(wt)
            counts.append(n1 + n2)
    return sign * np.repeat(means, counts)


@dataclass(frozen=True)
class IsotonicCurve:
    """Monotone step curve over SoH.

    ``s`` holds the distinct SoH values in ascending order and ``y`` the
    fitted value at each. Between breakpoints the curve keeps the value of
    the breakpoint to the left; outside the support it is extended flat.
    """

    s: np.ndarray
    y: np.ndarray
    direction: str
    weights: np.ndarray | None = None

    def __call__(self, s):
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        idx = np.searchsorted(self.s, s_arr, side="right") - 1
        out = self.y[np.clip(idx, 0, self.y.size - 1)]
        return float(out[0]) if np.ndim(s) == 0 else out

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.s.tolist(), self.y.tolist()))


def isotonic_fit(s, y, w=None, direction: str = NON_INCREASING) -> IsotonicCurve:
    """Weighted isotonic regression of ``y`` on ``s``.

    Points are sorted by ``s``; points sharing an ``s`` are first pooled into
    their weighted mean so the solution is unique.
    """
    if direction not in DIRECTIONS:
        raise MappingError(f"direction must be one of {DIRECTIONS}")
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if s.size == 0:
        raise MappingError("isotonic fit needs at least one point")
    if not (s.shape == y.shape == w.shape):
        raise MappingError("s, y and w must have equal length")
    order = np.argsort(s, kind="stable")
    s, y, w = s[order], y[order], w[order]
    us, inverse = np.unique(s, return_inverse=True)
    wsum = np.bincount(inverse, weights=w)
    ymean = np.bincount(inverse, weights=w * y) / wsum
    fitted = pava(ymean, wsum, increasing=(direction == NON_DECREASING))
    return IsotonicCurve(us, fitted, direction, wsum)


@dataclass(frozen=True)
class LookupTable:
    soh_refs: np.ndarray
    r_dyn: np.ndarray
    r_w: np.ndarray
    direction_dyn: str = NON_INCREASING
    direction_w: str = NON_INCREASING
    built_from: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": LOOKUP_MAGIC,
            "soh_refs": self.soh_refs.tolist(),
            "r_dyn_ohm": self.r_dyn.tolist(),
            "r_w_ohm": self.r_w.tolist(),
            "direction": {"r_dyn": self.direction_dyn, "r_w": self.direction_w},
            "built_from": self.built_from,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LookupTable":
        if d.get("format") != LOOKUP_MAGIC:
            raise MappingError("not a lookup table document")
        return cls(np.array(d["soh_refs"], dtype=float),
                   np.array(d["r_dyn_ohm"], dtype=float),
                   np.array(d["r_w_ohm"], dtype=float),
                   d["direction"]["r_dyn"], d["direction"]["r_w"],
                   d.get("built_from", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "LookupTable":
        return cls.from_dict(json.loads(text))


def build_lookup(curve_dyn: IsotonicCurve, curve_w: IsotonicCurve,
                 cfg: MappingConfig | None = None,
                 built_from: dict | None = None) -> LookupTable:
    """Sample both curves at ``k`` evenly spaced SoH reference points."""
    cfg = cfg or MappingConfig()
    refs = np.linspace(cfg.soh_range[0], cfg.soh_range[1], cfg.k)
    return LookupTable(refs, np.asarray(curve_dyn(refs)), np.asarray(curve_w(refs)),
                       curve_dyn.direction, curve_w.direction,
                       dict(built_from or {}))


def query_lookup(tbl: LookupTable, s: float) -> tuple[float, float]:
    """Linear interpolation between neighbouring references, clamped."""
    return (float(np.interp(s, tbl.soh_refs, tbl.r_dyn)),
            float(np.interp(s, tbl.soh_refs, tbl.r_w)))


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def map_fingerprints(fingerprints: Sequence, cfg: MappingConfig | None = None,
                     cell_id: str = "", extra: dict | None = None):
    """Curves and lookup table from fingerprints carrying ``soh_hat``.

    Cycles whose tail was never gated keep the floor weight ``f_min``.
    Returns ``(curve_dyn, curve_w, table)``.
    """
    cfg = cfg or MappingConfig()
    fps = list(fingerprints)
    if not fps:
        raise MappingError("no fingerprints to map")
    if any(fp.soh_hat is None or not np.isfinite(fp.soh_hat) for fp in fps):
        raise MappingError("every fingerprint needs a predicted SoH")
    s = np.array([fp.soh_hat for fp in fps])
    curve_dyn = isotonic_fit(s, [fp.R_dyn_c for fp in fps],
                             weights_rdyn([fp.eps1 for fp in fps], cfg.eps0),
                             cfg.direction_dyn)
    curve_w = isotonic_fit(s, [fp.R_W_c for fp in fps],
                           weights_rw([fp.tail_fraction for fp in fps], cfg.f_min),
                           cfg.direction_w)
    built = {"cell_id": cell_id, "cycles": len(fps),
             "config_hash": config_hash(asdict(cfg))}
    built.update(extra or {})
    return curve_dyn, curve_w, build_lookup(curve_dyn, curve_w, cfg, built)


def curves_table(curves: Iterable[tuple[str, IsotonicCurve, IsotonicCurve]],
                 soh_grid) -> list[dict]:
    """Rows ``cell_id, soh, R_dyn, R_W`` for external plotting."""
    rows = []
    for cell, cd, cw in curves:
        for s in soh_grid:
            rows.append({"cell_id": cell, "soh": float(s),
                         "R_dyn_ohm": cd(float(s)), "R_W_ohm": cw(float(s))})
    return rows
