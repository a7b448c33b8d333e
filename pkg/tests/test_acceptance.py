"""Acceptance criteria, each at its stated tolerance; one PASS/FAIL line per criterion."""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hpsem.cli import linear_fit
from hpsem.functional import LeastSquaresSystem, dense_normal_assembly
from hpsem.mesh import brick_grid, build_regular_mesh
from hpsem.precond import condition_number_study
from hpsem.problems import build_mesh, catalog, catalog_names, polynomial_variant
from hpsem.solver import solve

from conftest import ACCEPTANCE

TESTS = Path(__file__).parent


def report(capsys, number, title, checks, detail=""):
    ok = all(checks.values())
    failed = ", ".join(k for k, v in checks.items() if not v)
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
    if detail:
        line += f" | {detail}"
    if not ok:
        line += f" | failed: {failed}"
    ACCEPTANCE.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def _fmt(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


def _sweep(name, values, mesh_for, tol=1e-8, max_iter=5000):
    pr = catalog(name)
    rows = []
    for v in values:
        mesh = mesh_for(pr, v)
        _, rep = solve(pr, mesh, tol=tol, max_iter=max_iter)
        rows.append(rep)
    return rows


def _hp_mesh(pr, p):
    # N = p - 1 layers, every layer at degree p
    return build_mesh(pr, p, N=p - 1, mu1=99.0, mu2=99.0)


def test_criterion_1_condition_table(capsys):
    table = [3.7, 4.904066, 5.274482, 5.482393, 5.624800, 5.726732, 5.801924, 5.859078]
    t0 = time.perf_counter()
    kappa = [condition_number_study(W) for W in (2, 4, 6, 8, 10, 12, 14, 16)]
    dt = time.perf_counter() - t0
    match = [float(f"{k:.4g}") == float(f"{t:.4g}") for k, t in zip(kappa, table)]
    report(capsys, 1, "condition numbers for W = 2..16", {"four digits": all(match), "runtime < 10 s": dt < 10},
           f"kappa = {_fmt(kappa)}, {dt:.1f} s")


def test_criterion_2_oracle_equivalence(capsys):
    cases = {
        "1 regular W=3": (catalog("poisson-homogeneous"),
                          build_regular_mesh(brick_grid([-1] * 3, [1] * 3, [1] * 3), 3)),
        "8 regular W=2": (catalog("poisson-homogeneous"), build_mesh(catalog("poisson-homogeneous"), 2)),
        "edge N=3 W=2": (catalog("edge-dirichlet"), build_mesh(catalog("edge-dirichlet"), 2, N=3)),
        "vertex N=2 W=2": (catalog("vertex-dirichlet"), build_mesh(catalog("vertex-dirichlet"), 2, N=2)),
    }
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for key, (pr, mesh) in cases.items():
        system = LeastSquaresSystem(pr, mesh)
        X, YG = dense_normal_assembly(pr, mesh, system)
        U = rng.standard_normal(system.n)
        ref = X @ U - YG
        worst[key] = np.abs(system.residual(U) - ref).max() / max(1.0, np.abs(ref).max())
    dt = time.perf_counter() - t0
    checks = {k: v <= 1e-10 for k, v in worst.items()}
    checks["runtime < 60 s"] = dt < 60
    report(capsys, 2, "matrix-free residual equals dense X U - YG", checks,
           ", ".join(f"{k}: {v:.1e}" for k, v in worst.items()) + f", {dt:.1f} s")


def test_criterion_3_polynomial_recovery(capsys):
    names = [n for n in catalog_names() if catalog(n).constant_coefficients]
    rng = np.random.default_rng(7)
    checks, worst_f, worst_e = {}, 0.0, 0.0
    for name in names:
        pr = catalog(name)
        mesh = build_mesh(pr, 3, N=2, mu1=99.0, mu2=99.0)
        var = polynomial_variant(pr, mesh, 3, rng)
        _, rep = solve(var, mesh, tol=1e-13, max_iter=5000)
        checks[name] = rep.functional_final < 1e-16 and rep.rel_error_h1 < 1e-8
        worst_f, worst_e = max(worst_f, rep.functional_final), max(worst_e, rep.rel_error_h1)
    report(capsys, 3, f"exact recovery of degree-3 polynomials on {len(names)} problems", checks,
           f"max functional {worst_f:.1e}, max error {worst_e:.1e} %")


def test_criterion_4_smooth_exponential(capsys):
    reference = [0.131056e2, 0.178835e1, 0.607343e-1, 0.872751e-3]
    W = [2, 4, 6, 8]
    t0 = time.perf_counter()
    rows = _sweep("poisson-homogeneous", W, lambda pr, w: build_mesh(pr, w))
    dt = time.perf_counter() - t0
    err = [r.rel_error_h1 for r in rows]
    slope, _, r2 = linear_fit(W, np.log10(err))
    ratio = [e / r for e, r in zip(err, reference)]
    checks = {"converged": all(r.converged for r in rows), "monotone": bool(np.all(np.diff(err) < 0)),
              "slope <= -0.8": slope <= -0.8, "R2 >= 0.98": r2 >= 0.98, "W=8 <= 1e-2 %": err[-1] <= 1e-2,
              "runtime < 300 s": dt < 300}
    report(capsys, 4, "smooth Poisson p-sweep", checks,
           f"error % = {_fmt(err)}, slope {slope:.3f}, R2 {r2:.4f}, ratio to reference {_fmt(ratio)}, "
           f"iterations {[r.iterations for r in rows]}, {dt:.0f} s")


def test_criterion_5_vertex(capsys):
    reference = [0.100821e1, 0.841462e-1, 0.309263e-2, 0.273612e-3, 0.733920e-4]
    P = [2, 3, 4, 5, 6]
    t0 = time.perf_counter()
    rows = _sweep("vertex-dirichlet", P, _hp_mesh)
    dt = time.perf_counter() - t0
    err = [r.rel_error_h1 for r in rows]
    dof = [r.dof for r in rows]
    _, _, r2 = linear_fit(np.array(dof, float) ** 0.25, np.log10(err))
    checks = {"converged": all(r.converged for r in rows), "monotone": bool(np.all(np.diff(err) < 0)),
              "p=6 <= 1e-2 %": err[-1] <= 1e-2, "R2 >= 0.95": r2 >= 0.95, "runtime < 600 s": dt < 600}
    report(capsys, 5, "vertex singularity hp-sweep", checks,
           f"DOF {dof}, error % = {_fmt(err)}, R2 {r2:.4f}, "
           f"ratio to reference {_fmt([e / r for e, r in zip(err, reference)])}, {dt:.0f} s")


def test_criterion_6_edge(capsys):
    reference = [0.464542, 0.131359, 0.402204e-1, 0.123974e-1, 0.364617e-2]
    P = [2, 3, 4, 5, 6]
    t0 = time.perf_counter()
    rows = _sweep("edge-dirichlet", P, _hp_mesh)
    dt = time.perf_counter() - t0
    err = [r.rel_error_h1 for r in rows]
    checks = {"converged": all(r.converged for r in rows), "monotone": bool(np.all(np.diff(err) < 0)),
              "p=6 <= 1e-1 %": err[-1] <= 1e-1, "runtime < 600 s": dt < 600}
    report(capsys, 6, "edge singularity hp-sweep", checks,
           f"DOF {[r.dof for r in rows]}, error % = {_fmt(err)}, "
           f"ratio to reference {_fmt([e / r for e, r in zip(err, reference)])}, {dt:.0f} s")


def test_criterion_7_invariant_suites(capsys):
    files = ["test_basis.py", "test_mesh.py", "test_norms.py", "test_functional.py", "test_precond.py",
             "test_solver.py", "test_problems.py"]
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / f) for f in files]], capture_output=True, text=True, cwd=TESTS.parent)
    dt = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(capsys, 7, "module invariant and property suites",
           {"all pass": proc.returncode == 0, "runtime < 120 s": dt < 120}, f"{summary}, {dt:.0f} s")


def test_criterion_8_vertex_edge(capsys):
    reference = [0.473188e1, 0.106067e1, 0.363064]
    P = [2, 3, 4]
    t0 = time.perf_counter()
    rows = _sweep("vertexedge-dirichlet", P, _hp_mesh)
    dt = time.perf_counter() - t0
    err = [r.rel_error_h1 for r in rows]
    checks = {"converged": all(r.converged for r in rows), "monotone": bool(np.all(np.diff(err) < 0)),
              "p=4 <= 5 %": err[-1] <= 5.0}
    report(capsys, 8, "vertex-edge singularity hp-sweep", checks,
           f"DOF {[r.dof for r in rows]}, error % = {_fmt(err)}, "
           f"ratio to reference {_fmt([e / r for e, r in zip(err, reference)])}, {dt:.0f} s")
