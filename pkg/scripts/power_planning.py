"""Sample-size planning for RMSEA tests at the IUIPC-10 degrees of freedom.

Prints the required N for close fit (.05 vs .08), exact fit (0 vs .05) and
not-close fit (.05 vs .01), plus the power curve around the planned size.

    python3 scripts/power_planning.py --df 32
"""

import argparse

from cfakit.power import CLOSE_FIT, NOT_CLOSE_FIT, PowerQuery, required_n, rmsea_power

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--df", type=int, default=32)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--power", type=float, default=0.80)
    args = ap.parse_args()

    queries = {
        "close fit (.05 vs .08)": PowerQuery(args.df, args.alpha, 0.05, 0.08, CLOSE_FIT),
        "exact fit (0 vs .05)": PowerQuery(args.df, args.alpha, 0.0, 0.05, CLOSE_FIT),
        "not-close fit (.05 vs .01)": PowerQuery(args.df, args.alpha, 0.05, 0.01, NOT_CLOSE_FIT),
    }
    for name, q in queries.items():
        n = required_n(q, args.power)
        print(f"{name:<28} N = {n:>5}  (power {rmsea_power(q, n):.3f})")
    print("\nN      " + "  ".join(f"{k.split(' (')[0]:>13}" for k in queries))
    for n in range(250, 401, 25):
        print(f"{n:<7}" + "  ".join(f"{rmsea_power(q, n):13.3f}" for q in queries.values()))
