"""Base-sample IUIPC-8 analysis from the bundled summary statistics.

Fits the one-, two- and three-factor models plus the second-order model
(ML on the covariance matrix), tests the nested chain, and prints the
reliability and validity report for the second-order model.

    python3 scripts/reproduce_iuipc8.py [--json]
"""

import argparse
import sys

from cfakit.cli import main


def run(argv):
    print(f"$ cfakit {' '.join(argv)}", flush=True)
    code = main(argv)
    print()
    return code


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--json", action="store_true")
    fmt = ["--format", "json"] if ap.parse_args().json else []
    chain = ["iuipc8_1f.cfa", "iuipc8_2f.cfa", "iuipc8_3f.cfa", "iuipc8.cfa", "iuipc10.cfa"]
    codes = [
        run(["compare", "--summary", "sample_b.sum", "--model", *chain, *fmt]),
        run(["fit", "--summary", "sample_b_iuipc8.sum", "--model", "iuipc8.cfa", "--analytic-gradient", *fmt]),
        run(["reliability", "--summary", "sample_b_iuipc8.sum", "--model", "iuipc8.cfa", *fmt]),
    ]
    sys.exit(max(codes))
