"""Per-cycle fingerprint identification by two-stage least squares.

Stage 1 fits ``R_dyn`` over the whole discharge curve. Stage 2 holds
``R_dyn`` fixed, simulates the full trajectory from ``t = 0`` and fits
``R_W`` on the low-voltage samples only.

Two stage-1 predictors are available:

``"tail-free"``
    The Warburg element is switched off while fitting ``R_dyn``.
``"profiled"`` (default)
    Every candidate ``R_dyn`` is scored with the tail term at its own
    stage-2 optimum. The tail-free predictor lets ``R_dyn`` soak up the
    curve-wide part of the Warburg drop (it grows like ``sqrt(t)`` under
    constant current), which then drags the stage-2 ``R_W`` well below its
    true value; profiling removes that coupling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, TextIO

import numpy as np

from .ingest import ResampledCycle
from .optimize import golden_section
from .physics import (EcmParams, FoecmParams, coulomb_count, ocv,
                      simulate_cpe_parallel, simulate_ecm,
                      warburg_unit_response)

STAGE1_MODES = ("profiled", "tail-free")


class IdentError(ValueError):
    pass


class TailUnobservableError(IdentError):
    """No grid point falls below the low-voltage gate."""


@dataclass(frozen=True)
class IdentConfig:
    V_g: float = 2.4
    R_dyn_bracket: tuple[float, float] = (0.0, 1.0)
    R_W_bracket: tuple[float, float] = (0.0, 1.0)
    tol: float = 1e-6
    stage1: str = "profiled"
    # fixed physics; its R_dyn and R_W fields are ignored
    theta: FoecmParams = field(default_factory=FoecmParams)
    memory: int | None = None

    def __post_init__(self):
        for name in ("R_dyn_bracket", "R_W_bracket"):
            lo, hi = getattr(self, name)
            if not (0 <= lo < hi):
                raise IdentError(f"{name} must satisfy 0 <= lower < upper")
        if not 0.5 < self.V_g < 6.0:
            raise IdentError(f"gate voltage {self.V_g} V outside plausible range")
        if not self.tol > 0:
            raise IdentError("tolerance must be positive")
        if self.stage1 not in STAGE1_MODES:
            raise IdentError(f"stage1 must be one of {STAGE1_MODES}")

    def with_capacity(self, Q: float) -> "IdentConfig":
        return replace(self, theta=replace(self.theta, Q=float(Q)))


@dataclass(frozen=True)
class CycleFingerprint:
    cycle_index: int
    R_dyn_c: float
    R_W_c: float
    eps1: float
    eps2: float
    tail_fraction: float
    soh_hat: float | None = None
    tail_observed: bool = True
    rmse: float = float("nan")
    cell_id: str = ""

    def with_soh(self, soh_hat: float) -> "CycleFingerprint":
        return replace(self, soh_hat=float(soh_hat))


class _Predictor:
    """Caches the parameter-independent parts of the FOECM prediction."""

    def __init__(self, cycle: ResampledCycle, theta: FoecmParams,
                 memory: int | None = None):
        self.cycle = cycle
        self.theta = theta
        self.memory = memory
        self.dt = cycle.dt
        soc = coulomb_count(cycle.I, self.dt, theta.soc0, theta.Q)
        self.base = ocv(soc, theta.ocv) - cycle.I * theta.R0
        self.unit_w = warburg_unit_response(cycle.I, self.dt, theta.tau_W, memory)

    def v_dyn(self, R_dyn: float) -> np.ndarray:
        th = self.theta
        return simulate_cpe_parallel(self.cycle.I, self.dt, R_dyn, th.cpe_Q,
                                     th.cpe_alpha, self.memory)

    def predict(self, R_dyn: float, R_W: float) -> np.ndarray:
        return self.base - self.v_dyn(R_dyn) - R_W * self.unit_w


def gate_tail(cycle: ResampledCycle, V_g: float) -> np.ndarray:
    """Ascending indices of grid points with ``V <= V_g``."""
    return np.flatnonzero(np.asarray(cycle.V) <= V_g)


def _best_rw(resid_no_tail: np.ndarray, unit_w: np.ndarray, gate: np.ndarray,
             cfg: IdentConfig) -> tuple[float, float]:
    r = resid_no_tail[gate]
    u = unit_w[gate]

    def sse(R_W):
        e = r + R_W * u
        return float(np.dot(e, e))

    return golden_section(sse, *cfg.R_W_bracket, tol=cfg.tol)


def fit_rdyn(cycle: ResampledCycle, cfg: IdentConfig | None = None,
             _pred: _Predictor | None = None) -> tuple[float, float]:
    """Stage 1: ``(R_dyn_c, eps1)`` with ``eps1`` the attained sum of squares."""
    cfg = cfg or IdentConfig()
    pred = _pred or _Predictor(cycle, cfg.theta, cfg.memory)
    V = np.asarray(cycle.V)
    gate = gate_tail(cycle, cfg.V_g) if cfg.stage1 == "profiled" else None
    profiled = gate is not None and gate.size > 0

    def sse(R_dyn):
        # measured minus model without the tail term
        r = V - pred.base + pred.v_dyn(R_dyn)
        if profiled:
            R_W, _ = _best_rw(r, pred.unit_w, gate, cfg)
            r = r + R_W * pred.unit_w
        return float(np.dot(r, r))

    return golden_section(sse, *cfg.R_dyn_bracket, tol=cfg.tol)


def fit_rw(cycle: ResampledCycle, R_dyn_c: float,
           cfg: IdentConfig | None = None,
           _pred: _Predictor | None = None) -> tuple[float, float, float]:
    """Stage 2: ``(R_W_c, eps2, tail_fraction)`` on the gated samples.

    Raises :class:`TailUnobservableError` when the gate is empty.
    """
    cfg = cfg or IdentConfig()
    gate = gate_tail(cycle, cfg.V_g)
    if gate.size == 0:
        raise TailUnobservableError(
            f"cycle {cycle.cycle_index}: no samples at or below {cfg.V_g} V")
    pred = _pred or _Predictor(cycle, cfg.theta, cfg.memory)
    r = np.asarray(cycle.V) - pred.base + pred.v_dyn(R_dyn_c)
    R_W, eps2 = _best_rw(r, pred.unit_w, gate, cfg)
    return R_W, eps2, gate.size / cycle.n


def extract_fingerprint(cycle: ResampledCycle,
                        cfg: IdentConfig | None = None) -> CycleFingerprint:
    """Stage 1 then stage 2. An empty gate yields a flagged fingerprint with
    ``R_W`` at its lower bound and zero tail fraction instead of an error."""
    cfg = cfg or IdentConfig()
    pred = _Predictor(cycle, cfg.theta, cfg.memory)
    R_dyn, eps1 = fit_rdyn(cycle, cfg, pred)
    try:
        R_W, eps2, frac = fit_rw(cycle, R_dyn, cfg, pred)
        observed = True
    except TailUnobservableError:
        R_W, eps2, frac, observed = cfg.R_W_bracket[0], 0.0, 0.0, False
    resid = np.asarray(cycle.V) - pred.predict(R_dyn, R_W)
    rmse = math.sqrt(float(np.mean(resid ** 2)))
    return CycleFingerprint(cycle.cycle_index, R_dyn, R_W, eps1, eps2, frac,
                            tail_observed=observed, rmse=rmse,
                            cell_id=cycle.cell_id)


# --- baseline models for the fidelity comparison -------------------------

FIDELITY_MODELS = ("ecm", "foecm-base", "foecm")


@dataclass(frozen=True)
class ModelFit:
    model: str
    params: dict
    rmse: float
    eps: float
    fingerprint: CycleFingerprint | None = None


def fit_ecm(cycle: ResampledCycle, cfg: IdentConfig,
            C1: float | None = None) -> ModelFit:
    """One RC pair with fixed capacitance; fits its resistance.

    ``C1`` defaults to ``cpe_Q``, which makes this model the integer-order
    limit (``cpe_alpha = 1``) of the tail-free FOECM.
    """
    th = cfg.theta
    C1 = th.cpe_Q if C1 is None else C1
    V = np.asarray(cycle.V)
    lo, hi = cfg.R_dyn_bracket
    lo = max(lo, 1e-9)

    def sse(R1):
        p = EcmParams(th.R0, [(R1, C1)], th.Q, th.soc0)
        e = V - simulate_ecm(cycle.I, cycle.dt, p, th.ocv)
        return float(np.dot(e, e))

    R1, eps = golden_section(sse, lo, hi, tol=cfg.tol)
    return ModelFit("ecm", {"R1": R1, "C1": C1}, math.sqrt(eps / V.size), eps)


def fit_model(cycle: ResampledCycle, model: str, cfg: IdentConfig | None = None,
              ecm_C1: float | None = None) -> ModelFit:
    """Fit one of ``ecm``, ``foecm-base`` (no tail element) or ``foecm``."""
    cfg = cfg or IdentConfig()
    if model == "ecm":
        return fit_ecm(cycle, cfg, ecm_C1)
    if model == "foecm-base":
        base_cfg = replace(cfg, stage1="tail-free")
        R_dyn, eps1 = fit_rdyn(cycle, base_cfg)
        return ModelFit(model, {"R_dyn": R_dyn}, math.sqrt(eps1 / cycle.n), eps1)
    if model == "foecm":
        fp = extract_fingerprint(cycle, cfg)
        return ModelFit(model, {"R_dyn": fp.R_dyn_c, "R_W": fp.R_W_c}, fp.rmse,
                        fp.rmse ** 2 * cycle.n, fp)
    raise IdentError(f"unknown model {model!r}; choose from {FIDELITY_MODELS}")


# --- CSV exchange ---------------------------------------------------------

FINGERPRINT_COLUMNS = ("cell_id", "cycle", "R_dyn_ohm", "R_W_ohm", "eps1_V2",
                       "eps2_V2", "tail_fraction", "soh_hat", "rmse_mV",
                       "tail_flag")


def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_fingerprints(fps: Iterable[CycleFingerprint], fh: TextIO,
                       comment: str | None = None) -> None:
    """``tail_flag`` is 1 when no sample reached the gate voltage."""
    if comment:
        fh.write(f"# {comment}\n")
    fh.write(",".join(FINGERPRINT_COLUMNS) + "\n")
    for fp in fps:
        fields = [fp.cell_id, str(fp.cycle_index), _num(fp.R_dyn_c), _num(fp.R_W_c),
                  _num(fp.eps1), _num(fp.eps2), _num(fp.tail_fraction),
                  _num(fp.soh_hat), _num(1e3 * fp.rmse),
                  "0" if fp.tail_observed else "1"]
        fh.write(",".join(fields) + "\n")


def read_fingerprints(fh: TextIO) -> list[CycleFingerprint]:
    def val(row, key, default=float("nan")):
        text = (row.get(key) or "").strip()
        return float(text) if text else default

    rows = csv.DictReader(line for line in fh if not line.startswith("#"))
    missing = set(FINGERPRINT_COLUMNS[:8]) - set(rows.fieldnames or ())
    if missing:
        raise IdentError(f"fingerprint file lacks column(s) {sorted(missing)}")
    out = []
    for r in rows:
        soh = val(r, "soh_hat", None)
        out.append(CycleFingerprint(
            int(r["cycle"]), val(r, "R_dyn_ohm"), val(r, "R_W_ohm"),
            val(r, "eps1_V2"), val(r, "eps2_V2"), val(r, "tail_fraction"),
            soh_hat=soh, tail_observed=(r.get("tail_flag", "0").strip() != "1"),
            rmse=val(r, "rmse_mV") / 1e3, cell_id=r["cell_id"]))
    return out
