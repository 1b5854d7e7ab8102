"""Synthetic benchmarks: model fidelity across the lifespan and SoH accuracy."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .identify import FIDELITY_MODELS, IdentConfig, fit_model
from .ingest import prepare_cycles
from .soh.features import feature_dataset
from .soh.train import TrainConfig, evaluate_soh, split_dataset, train_soh
from .synth import category_of, generate_cycle, generate_dataset, preset

# fraction of lifespan remaining
LIFESPAN_STAGES = (1.0, 0.67, 0.33, 0.0)


def stage_cycle(eol_cycle: int, remaining: float) -> int:
    return max(1, int(round((1.0 - remaining) * eol_cycle)))


@dataclass(frozen=True)
class FidelityRow:
    profile: str
    remaining: float
    cycle: int
    rmse_mV: dict

    @property
    def improvement(self) -> float:
        """Relative RMSE reduction of the full model over the ECM."""
        return 1.0 - self.rmse_mV["foecm"] / self.rmse_mV["ecm"]


def fidelity_table(profiles=("short", "medium", "long"), stages=LIFESPAN_STAGES,
                   seed: int = 0, noise_sigma: float | None = None,
                   cfg: IdentConfig | None = None) -> list[FidelityRow]:
    """Per-cycle voltage-fitting RMSE of each model at each lifespan stage.

    The identification uses the true capacity of the cycle so that only the
    circuit structure differs between models.
    """
    cfg = cfg or IdentConfig()
    rows = []
    for name in profiles:
        prof = preset(name) if isinstance(name, str) else name
        if noise_sigma is not None:
            prof = replace(prof, noise_sigma=noise_sigma)
        for rem in stages:
            c = stage_cycle(prof.eol_cycle, rem)
            log, truth, _ = generate_cycle(prof, c, seed)
            cycle = prepare_cycles([log])[0]
            ccfg = cfg.with_capacity(truth.Q)
            rmse = {m: 1e3 * fit_model(cycle, m, ccfg).rmse for m in FIDELITY_MODELS}
            rows.append(FidelityRow(prof.name, rem, c, rmse))
    return rows


@dataclass
class SohArm:
    channels: int
    overall: tuple[float, float]
    per_category: dict
    seconds: float
    estimator: object


def soh_benchmark(cells: int = 4, cycles_per_cell: int = 30, seed: int = 0,
                  train_cfg: TrainConfig | None = None, channels=(1, 4),
                  profiles=("short", "medium", "long")) -> dict[int, SohArm]:
    """Train one global estimator per channel arm and score its test split."""
    train_cfg = train_cfg or TrainConfig(split="by-cell")
    ds = generate_dataset(list(profiles), cells, seed, cycles_per_cell)
    cycles = prepare_cycles(ds.logs)
    labels = {(r.cell_id, r.cycle): r.soh_true for r in ds.truth}
    arms = {}
    for ch in channels:
        samples = feature_dataset(cycles, labels, ch)
        t0 = time.perf_counter()
        est = train_soh(samples, train_cfg)
        seconds = time.perf_counter() - t0
        _, _, test = split_dataset(samples, train_cfg)
        per_cat = {}
        for cat in sorted({category_of(f.cell_id) for f, _ in test}):
            sub = [s for s in test if category_of(s[0].cell_id) == cat]
            per_cat[cat] = evaluate_soh(est, sub)
        arms[ch] = SohArm(ch, evaluate_soh(est, test), per_cat, seconds, est)
    return arms


def format_fidelity(rows: list[FidelityRow]) -> str:
    lines = [f"{'profile':8s} {'remaining':>9s} {'cycle':>6s} "
             + " ".join(f"{m:>11s}" for m in FIDELITY_MODELS) + f" {'gain':>6s}"]
    for r in rows:
        lines.append(f"{r.profile:8s} {r.remaining:9.0%} {r.cycle:6d} "
                     + " ".join(f"{r.rmse_mV[m]:8.3f} mV" for m in FIDELITY_MODELS)
                     + f" {r.improvement:6.1%}")
    return "\n".join(lines)


def format_soh(arms: dict[int, SohArm]) -> str:
    chans = sorted(arms)
    cats = sorted({c for a in arms.values() for c in a.per_category})
    head = f"{'category':10s}" + "".join(
        f" {f'MAE {c}ch':>10s} {f'RMSE {c}ch':>10s}" for c in chans)
    lines = [head]
    for cat in cats + ["all"]:
        vals = []
        for c in chans:
            mae, rmse = arms[c].overall if cat == "all" else arms[c].per_category[cat]
            vals.append(f" {mae:10.4f} {rmse:10.4f}")
        lines.append(f"{cat:10s}" + "".join(vals))
    return "\n".join(lines)
