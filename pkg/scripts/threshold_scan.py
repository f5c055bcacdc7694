"""Scan leads around d*(c) and report which kinds of equilibria survive, as CSV."""
import argparse
import csv
import sys

from assessment_voting.equilibrium import (asymmetric_roots, d_star, d_star_sharp, mixed_certificate,
                                           one_sided_certificate, totally_mixed_roots)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--costs", default="0.1,0.2,0.3", help="comma list of costs")
    parser.add_argument("--below", type=int, default=3, help="leads scanned below d*")
    parser.add_argument("--above", type=int, default=25, help="leads scanned above d*")
    args = parser.parse_args()

    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["c", "d", "d_star", "d_star_sharp", "one_sided_roots", "mixed_roots",
                     "one_sided_certified", "mixed_certified"])
    for c in (float(v) for v in args.costs.split(",")):
        ds = d_star(c)
        for d in range(max(1, ds - args.below), ds + args.above + 1):
            one = asymmetric_roots(c, d) if d >= 2 else []
            mixed = totally_mixed_roots(c, d)
            writer.writerow([c, d, ds, d_star_sharp(c), ";".join(f"{y:.10g}" for y in one),
                             ";".join(f"{a:.10g}/{b:.10g}" for a, b in mixed),
                             one_sided_certificate(c, d)[1] if d >= 2 else "",
                             mixed_certificate(c, d)[1]])


if __name__ == "__main__":
    main()
