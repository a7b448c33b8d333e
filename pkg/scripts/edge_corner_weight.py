"""Edge study: literal unit-weight corner jumps versus radius-weighted corner jumps.

Prints the relative H1 error (%) for p = 2..6 with N = p - 1 layers at uniform
degree p.  The weighting only touches the jump terms on the face shared by the
first layer and the x3-only corner strip.
"""
import argparse

from hpsem.functional import LeastSquaresSystem
from hpsem.problems import build_mesh, catalog
from hpsem.solver import solve

WEIGHTS = {
    "unit": None,
    "r^(2/3)": lambda fw: fw.G ** (2 / 3),
    "r": lambda fw: fw.G,
    "r^2": lambda fw: fw.G ** 2,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degrees", default="2,3,4,5,6")
    ap.add_argument("--weights", default=",".join(WEIGHTS))
    args = ap.parse_args()
    pr = catalog("edge-dirichlet")
    degrees = [int(p) for p in args.degrees.split(",")]
    print("weight," + ",".join(f"p={p}" for p in degrees))
    for name in args.weights.split(","):
        errs = []
        for p in degrees:
            mesh = build_mesh(pr, p, N=p - 1, mu1=99.0, mu2=99.0)
            system = LeastSquaresSystem(pr, mesh, corner_weight=WEIGHTS[name])
            _, rep = solve(pr, mesh, tol=1e-8, max_iter=5000, system=system)
            errs.append(rep.rel_error_h1)
        print(name + "," + ",".join(f"{e:.4g}" for e in errs), flush=True)


if __name__ == "__main__":
    main()
