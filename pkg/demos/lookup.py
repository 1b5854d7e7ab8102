"""From fingerprints to an SoH-indexed lookup table.

Fingerprints of one un-jittered cell per preset are labelled with their true
SoH, projected onto monotone curves and sampled into a 25-point table. The
table is then queried at a few SoH values, as a battery management system
would do once it has an SoH estimate.

    python3 demos/lookup.py [--seed N]
"""

import argparse

from agingprint.identify import IdentConfig, extract_fingerprint
from agingprint.ingest import prepare_cycles
from agingprint.mapping import map_fingerprints, query_lookup
from agingprint.synth import generate_dataset


def table_for(name, seed):
    ds = generate_dataset([name], 1, seed, cycles_per_cell=30, spread=0.0)
    truth = ds.truth_map()
    fps = []
    for c in prepare_cycles(ds.logs):
        r = truth[(c.cell_id, c.cycle_index)]
        fps.append(extract_fingerprint(c, IdentConfig().with_capacity(r.Q_Ah))
                   .with_soh(r.soh_true))
    return map_fingerprints(fps, cell_id=f"{name}-00")[2]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name in ("short", "medium", "long"):
        tbl = table_for(name, args.seed)
        print(f"\n{name}: (R_dyn, R_W) in ohm")
        for s in (1.0, 0.95, 0.90, 0.85, 0.80):
            rd, rw = query_lookup(tbl, s)
            print(f"  SoH {s:.2f}: {rd:.4f}  {rw:.4f}")


if __name__ == "__main__":
    main()
