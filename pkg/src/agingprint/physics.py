"""Time-domain battery circuit models.

Two model families share the same voltage decomposition, open-circuit
voltage minus the under-load losses:

* ECM: ohmic drop plus ``m`` resistor-capacitor pairs, advanced with the
  exact zero-order-hold map.
* FOECM: ohmic drop, one resistor in parallel with a constant phase element
  (CPE) and a half-order Warburg tail element carrying the full current.

Fractional operators are discretised with Grünwald-Letnikov (GL) weights.
Currents are in amperes with discharge positive, capacities in amp-hours and
time in seconds. Every internal state starts at zero at the first sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class ParameterError(ValueError):
    """A physical parameter is outside its admissible range."""


@dataclass(frozen=True)
class OcvModel:
    """Monotone piecewise-linear open-circuit voltage table."""

    soc_knots: np.ndarray
    v_knots: np.ndarray

    def __post_init__(self):
        soc = np.asarray(self.soc_knots, dtype=float)
        v = np.asarray(self.v_knots, dtype=float)
        if soc.ndim != 1 or soc.shape != v.shape or soc.size < 2:
            raise ParameterError("OCV table needs two equal-length 1-D knot arrays")
        if np.any(np.diff(soc) <= 0):
            raise ParameterError("soc_knots must be strictly increasing")
        if soc[0] != 0.0 or soc[-1] != 1.0:
            raise ParameterError("soc_knots must cover [0, 1]")
        if np.any(np.diff(v) < 0):
            raise ParameterError("v_knots must be non-decreasing with SoC")
        object.__setattr__(self, "soc_knots", soc)
        object.__setattr__(self, "v_knots", v)

    def __call__(self, soc):
        return ocv(soc, self)

    @classmethod
    def from_csv(cls, path) -> "OcvModel":
        """Read a two-column ``soc,ocv_V`` table with a header row."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("soc,ocv_V\n")
            for s, v in zip(self.soc_knots, self.v_knots):
                fh.write(f"{float(s)!r},{float(v)!r}\n")


def default_ocv() -> OcvModel:
    """Five-knot synthetic table, 2.0 V empty to 3.3 V full.

    Shaped like an LFP cell: a long flat plateau and a steep knee near empty.
    """
    return OcvModel(
        np.array([0.0, 0.04, 0.2, 0.85, 1.0]),
        np.array([2.0, 2.6, 3.15, 3.26, 3.3]),
    )


def ocv(soc, m: OcvModel):
    """Interpolate the OCV table; SoC outside [0, 1] is clamped."""
    out = np.interp(soc, m.soc_knots, m.v_knots)
    return float(out) if np.ndim(out) == 0 else out


def coulomb_count(I, dt: float, soc0: float, Q: float) -> np.ndarray:
    """State of charge from trapezoidal charge throughput.

    ``Q`` is in amp-hours, ``dt`` in seconds. The result is not clamped.
    """
    if not Q > 0:
        raise ParameterError(f"capacity must be positive, got {Q}")
    I = np.asarray(I, dtype=float)
    charge = np.zeros_like(I)
    if I.size > 1:
        charge[1:] = np.cumsum(0.5 * (I[1:] + I[:-1])) * dt
    return soc0 - charge / (3600.0 * Q)


@dataclass(frozen=True)
class GlKernel:
    """Grünwald-Letnikov weights for an operator of order ``alpha``.

    Positive ``alpha`` is a fractional derivative, negative a fractional
    integral. ``weights[j]`` multiplies the sample ``j`` steps in the past.
    """

    alpha: float
    weights: np.ndarray
    dt: float = 1.0

    @property
    def L(self) -> int:
        return self.weights.size

    @property
    def scale(self) -> float:
        return self.dt ** (-self.alpha)


def gl_weights(alpha: float, L: int, dt: float = 1.0) -> GlKernel:
    """Weights ``w_0 = 1, w_j = w_{j-1} (1 - (alpha + 1) / j)``."""
    if L < 1:
        raise ParameterError("GL memory length must be at least 1")
    w = np.empty(L)
    w[0] = 1.0
    for j in range(1, L):
        w[j] = w[j - 1] * (1.0 - (alpha + 1.0) / j)
    return GlKernel(alpha=float(alpha), weights=w, dt=float(dt))


@dataclass(frozen=True)
class EcmParams:
    R0: float
    pairs: Sequence[tuple[float, float]]
    Q: float
    soc0: float = 1.0

    def __post_init__(self):
        if self.R0 < 0:
            raise ParameterError("R0 must be non-negative")
        if len(self.pairs) < 1:
            raise ParameterError("ECM needs at least one RC pair")
        for R, C in self.pairs:
            if not (R > 0 and C > 0):
                raise ParameterError("RC pair values must be positive")
        if not self.Q > 0:
            raise ParameterError("capacity must be positive")


@dataclass(frozen=True)
class FoecmParams:
    """Full fractional-order model parameter set.

    ``cpe_Q`` and ``cpe_alpha`` describe the CPE impedance ``1 / (Q (jw)^a)``.
    The CPE defaults are synthetic values, not measured ones.
    """

    R0: float = 0.02
    R_dyn: float = 0.07
    cpe_Q: float = 50.0
    cpe_alpha: float = 0.7
    R_W: float = 0.02
    tau_W: float = 600.0
    Q: float = 1.1
    soc0: float = 1.0
    ocv: OcvModel = field(default_factory=default_ocv)

    def __post_init__(self):
        if self.R0 < 0 or self.R_dyn < 0 or self.R_W < 0:
            raise ParameterError("resistances must be non-negative")
        if not self.cpe_Q > 0:
            raise ParameterError("cpe_Q must be positive")
        if not 0 < self.cpe_alpha < 1:
            raise ParameterError("cpe_alpha must lie in (0, 1)")
        if not self.tau_W > 0:
            raise ParameterError("tau_W must be positive")
        if not self.Q > 0:
            raise ParameterError("capacity must be positive")

    def with_fingerprint(self, R_dyn: float, R_W: float) -> "FoecmParams":
        return replace(self, R_dyn=float(R_dyn), R_W=float(R_W))


def _rc_response(I: np.ndarray, dt: float, R: float, C: float) -> np.ndarray:
    # current held constant on [t_k, t_k+1)
    a = math.exp(-dt / (R * C))
    b = R * (1.0 - a)
    v = np.zeros_like(I)
    for k in range(1, I.size):
        v[k] = a * v[k - 1] + b * I[k - 1]
    return v


def simulate_ecm(I, dt: float, p: EcmParams, m: OcvModel) -> np.ndarray:
    """Terminal voltage of the OCV-R0-RC-pairs model."""
    I = np.asarray(I, dtype=float)
    soc = coulomb_count(I, dt, p.soc0, p.Q)
    V = ocv(soc, m) - I * p.R0
    for R, C in p.pairs:
        V = V - _rc_response(I, dt, R, C)
    return V


def simulate_cpe_parallel(I, dt: float, R_dyn: float, cpe_Q: float,
                          cpe_alpha: float, L: int | None = None) -> np.ndarray:
    """Voltage across a resistor in parallel with a CPE.

    Solves ``cpe_Q * D^a v + v / R_dyn = I`` implicitly at every step with
    ``v(0) = 0`` and a zero pre-history. ``L`` caps the GL memory; ``None``
    keeps the whole trajectory.
    """
    I = np.asarray(I, dtype=float)
    n = I.size
    v = np.zeros(n)
    if R_dyn == 0.0 or n < 2:
        return v
    if not cpe_Q > 0 or not 0 < cpe_alpha <= 1:
        raise ParameterError("invalid CPE parameters")
    L = n if L is None else int(L)
    kern = gl_weights(cpe_alpha, min(L, n), dt)
    w = kern.weights
    c = cpe_Q * kern.scale
    denom = c * w[0] + 1.0 / R_dyn
    for k in range(1, n):
        m = min(k, w.size - 1)
        hist = np.dot(w[1:m + 1], v[k - 1::-1][:m]) if m else 0.0
        v[k] = (I[k] - c * hist) / denom
    return v


def cpe_branch_currents(v_dyn, R_dyn: float, I):
    """Split the terminal current into the resistor and CPE paths."""
    v_dyn = np.asarray(v_dyn, dtype=float)
    I_R = v_dyn / R_dyn if R_dyn > 0 else np.zeros_like(v_dyn)
    return I_R, np.asarray(I, dtype=float) - I_R


def warburg_unit_response(I, dt: float, tau_W: float,
                          L: int | None = None) -> np.ndarray:
    """Warburg voltage per ohm of ``R_W``.

    The half-order integral is split into the initial current, integrated
    in closed form, plus a GL sum over the deviations from it. A constant
    current is therefore reproduced exactly.
    """
    if not tau_W > 0:
        raise ParameterError(f"tau_W must be positive, got {tau_W}")
    I = np.asarray(I, dtype=float)
    n = I.size
    if n == 0:
        return np.zeros(0)
    L = n if L is None else int(L)
    kern = gl_weights(-0.5, min(L, n), dt)
    w = kern.weights
    dev = I - I[0]
    conv = np.zeros(n)
    if np.any(dev):
        # explicit causal sums keep earlier outputs independent of n
        for k in range(1, n):
            m = min(k + 1, w.size)
            conv[k] = np.dot(w[:m], dev[k::-1][:m])
        conv *= kern.scale
    t = np.arange(n) * dt
    base = I[0] * np.sqrt(t) / math.gamma(1.5)
    return (conv + base) / math.sqrt(tau_W)


def simulate_warburg(I, dt: float, R_W: float, tau_W: float,
                     L: int | None = None) -> np.ndarray:
    """Tail voltage ``(R_W / sqrt(tau_W)) * D^(-1/2) I``."""
    return R_W * warburg_unit_response(I, dt, tau_W, L)


def simulate_foecm(I, dt: float, p: FoecmParams,
                   L: int | None = None) -> np.ndarray:
    """Terminal voltage ``V0(SoC) - I R0 - v_dyn - v_W``."""
    I = np.asarray(I, dtype=float)
    soc = coulomb_count(I, dt, p.soc0, p.Q)
    v_dyn = simulate_cpe_parallel(I, dt, p.R_dyn, p.cpe_Q, p.cpe_alpha, L)
    v_w = simulate_warburg(I, dt, p.R_W, p.tau_W, L)
    return ocv(soc, p.ocv) - I * p.R0 - v_dyn - v_w
