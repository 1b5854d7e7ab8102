"""How much does each circuit element buy?

Fits three models to the same synthetic discharge at four points of a cell's
life and prints the per-cycle voltage RMSE:

    ecm         one RC pair
    foecm-base  resistor parallel to a constant-phase element
    foecm       the same plus a Warburg tail element

The tail element matters most near end of life, where diffusion limits the
last part of the discharge.

    python3 demos/fidelity.py [--seed N] [--noise VOLTS]
"""

import argparse

from agingprint.benchmark import LIFESPAN_STAGES, fidelity_table, format_fidelity


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=None,
                    help="voltage noise sigma (default: preset value, 5 mV)")
    args = ap.parse_args()
    rows = fidelity_table(("short", "medium", "long"), LIFESPAN_STAGES,
                          seed=args.seed, noise_sigma=args.noise)
    print(format_fidelity(rows))
    print("\n'remaining' is the fraction of life left; 'gain' is the RMSE reduction "
          "of foecm over ecm.")


if __name__ == "__main__":
    main()
