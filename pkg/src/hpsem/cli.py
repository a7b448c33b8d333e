"""Command line harness: solves, convergence sweeps, condition study, mesh dumps.

Configs are flat ``key = value`` files, for example::

    problem = poisson-homogeneous
    sweep = p
    values = 2, 4, 6, 8

Exit codes: 0 on success, 1 on a config error, 2 if any sweep point did not
converge.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .mesh import CoordFrame, build_regular_mesh
from .problems import build_mesh, catalog, catalog_names
from .solver import solve

log = logging.getLogger("hpsem")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2
TABLE_DEGREES = (2, 4, 6, 8, 10, 12, 14, 16)


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    problem: str = ""
    sweep: str = "p"                  # p | h | hp
    values: list = field(default_factory=list)
    W: int = 4                        # degree for h-sweeps and single solves
    N: int = 3                        # layers for p-sweeps on singular domains
    hp_ratio: float = 1.0             # hp-sweep: N = round(hp_ratio * p) + hp_offset
    hp_offset: int = -1
    uniform_degree: bool = True       # all layers at the cap W (otherwise graded)
    mu_v: float = 0.15
    mu_e: float = 0.15
    mu1: float = 1.0
    mu2: float = 1.0
    tol: float = 1e-8
    max_iter: int = 5000
    out: str = "out"
    history: bool = False

    def validate(self):
        if not self.problem:
            raise ConfigError("config needs a problem name")
        if self.problem not in catalog_names():
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.sweep not in ("p", "h", "hp"):
            raise ConfigError(f"sweep must be p, h or hp, got {self.sweep!r}")
        if not self.values:
            raise ConfigError("sweep list is empty")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.sweep == "h" and CoordFrame(catalog(self.problem).frame) is not CoordFrame.REGULAR:
            raise ConfigError("h-sweeps need a brick domain")
        return self


def _coerce(name, text):
    kind = {f.name: f.type for f in fields(StudyConfig)}[name]
    try:
        if name == "values":
            return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
        if kind == "bool":
            return text.strip().lower() in ("1", "true", "yes", "on")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def load_config(path, overrides=None) -> StudyConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string("[study]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    known = {f.name for f in fields(StudyConfig)}
    kw = {}
    for key, val in parser["study"].items():
        if key not in {k.lower() for k in known}:
            raise ConfigError(f"unknown config key {key!r}")
        name = next(k for k in known if k.lower() == key)
        kw[name] = _coerce(name, val)
    for k, v in (overrides or {}).items():
        if v is not None:
            kw[k] = v
    return StudyConfig(**kw).validate()


# ------------------------------------------------------------------ studies

def refine_bricks(bricks, h):
    """Split every brick into cubes of side about h."""
    out = []
    for b in bricks:
        b = np.asarray(b, dtype=float).reshape(3, 2)
        n = [max(1, int(round((hi - lo) / h))) for lo, hi in b]
        edges = [np.linspace(lo, hi, k + 1) for (lo, hi), k in zip(b, n)]
        for k in range(n[2]):
            for j in range(n[1]):
                for i in range(n[0]):
                    out.append(np.array([[edges[0][i], edges[0][i + 1]],
                                         [edges[1][j], edges[1][j + 1]],
                                         [edges[2][k], edges[2][k + 1]]]))
    return out


def point_mesh(cfg: StudyConfig, value):
    """Problem and mesh for one sweep point."""
    pr = catalog(cfg.problem)
    regular = CoordFrame(pr.frame) is CoordFrame.REGULAR
    spec = dict(mu_v=cfg.mu_v, mu_e=cfg.mu_e, mu1=cfg.mu1, mu2=cfg.mu2)
    if cfg.sweep == "h":
        return pr, build_regular_mesh(refine_bricks(pr.domain, value), cfg.W, pr.boundary)
    W = int(round(value))
    if regular:
        return pr, build_mesh(pr, W)
    if cfg.sweep == "hp":
        N = max(1, int(round(cfg.hp_ratio * W)) + cfg.hp_offset)
    else:
        N = cfg.N
    if cfg.uniform_degree:
        spec.update(mu1=float(W), mu2=float(W))
    return pr, build_mesh(pr, W, N=N, **spec)


def run_study(cfg: StudyConfig, on_row=None):
    """One row per sweep point; failures are recorded and the sweep continues."""
    rows = []
    for value in cfg.values:
        pr, mesh = point_mesh(cfg, value)
        row = {"sweep": cfg.sweep, "value": value, "dof": mesh.dof_reported(), "unknowns": mesh.n_dof}
        try:
            _, rep = solve(pr, mesh, tol=cfg.tol, max_iter=cfg.max_iter)
            row.update(iterations=rep.iterations, rel_error_percent=rep.rel_error_h1,
                       functional_final=rep.functional_final, wall_time=rep.wall_time,
                       converged=rep.converged, history=rep.residual_history)
        except (ArithmeticError, RuntimeError) as exc:
            log.error("sweep point %s failed: %s", value, exc)
            row.update(iterations=-1, rel_error_percent=float("nan"), functional_final=float("nan"),
                       wall_time=0.0, converged=False, history=[])
        rows.append(row)
        if on_row:
            on_row(row)
    return rows


def table_format(x):
    """0.123456E+01 display format: six-digit mantissa in [0.1, 1)."""
    if x is None or not np.isfinite(x):
        return "nan"
    if x == 0:
        return "0.000000E+00"
    e = int(np.floor(np.log10(abs(x)))) + 1
    m = x / 10.0**e
    if abs(round(m, 6)) >= 1.0:
        m, e = m / 10.0, e + 1
    return f"{m:.6f}E{e:+03d}"


def _g17(x):
    return "nan" if x is None else f"{x:.17g}"


STUDY_COLUMNS = ["sweep", "value", "dof", "unknowns", "iterations", "converged",
                 "rel_error_percent", "rel_error_display", "functional_final"]


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for r in rows:
        w.writerow([r["sweep"], f"{r['value']:g}", r["dof"], r["unknowns"], r["iterations"],
                    int(bool(r["converged"])), _g17(r["rel_error_percent"]),
                    table_format(r["rel_error_percent"]), _g17(r["functional_final"])])
    return buf.getvalue()


def timing_csv(rows):
    lines = ["value,wall_time"] + [f"{r['value']:g},{r['wall_time']:.6f}" for r in rows]
    return "\n".join(lines) + "\n"


DOF_EXPONENT = {CoordFrame.REGULAR: 1 / 3, CoordFrame.VERTEX: 1 / 4, CoordFrame.EDGE: 1 / 4,
                CoordFrame.VERTEX_EDGE: 1 / 5}


def linear_fit(x, y):
    """Least-squares slope, intercept and R^2; None for fewer than two points."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2:
        return None
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def emit_plot_data(rows, frame, out_dir=None):
    """Two-column series: W vs log10 error, DOF^a vs log10 error (a by region).

    Returns {"degree": (x, y, fit), "dof": (x, y, fit)} and writes
    plot_degree.dat / plot_dof.dat when out_dir is given.
    """
    a = DOF_EXPONENT[CoordFrame(frame)]
    ok = [r for r in rows if r["rel_error_percent"] is not None and np.isfinite(r["rel_error_percent"])
          and r["rel_error_percent"] > 0]
    y = np.log10([r["rel_error_percent"] for r in ok])
    series = {"degree": np.array([r["value"] for r in ok], dtype=float),
              "dof": np.array([r["dof"] for r in ok], dtype=float) ** a}
    out = {}
    for key, x in series.items():
        fit = linear_fit(x, y)
        out[key] = (x, y, fit)
        if out_dir is not None:
            head = [f"# x = {'degree' if key == 'degree' else f'dof^{a:.6g}'}, y = log10(rel_error_percent)"]
            if fit:
                head.append(f"# fit slope={fit[0]:.17g} intercept={fit[1]:.17g} r2={fit[2]:.17g}")
            body = [f"{xi:.17g} {yi:.17g}" for xi, yi in zip(x, y)]
            Path(out_dir, f"plot_{key}.dat").write_text("\n".join(head + body) + "\n")
    return out


def condition_rows(degrees=TABLE_DEGREES):
    from .precond import condition_number_study
    return [(W, condition_number_study(W)) for W in degrees]


def condition_csv(rows):
    lines = ["W,kappa,kappa_display"]
    lines += [f"{W},{k:.17g},{k:.14f}" for W, k in rows]
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------------- main

def _parser():
    p = argparse.ArgumentParser(prog="hpsem", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", type=int, dest="max_iter")
        sp.add_argument("--out")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("solve", help="solve the first sweep point and report"))
    sp = sub.add_parser("study", help="run a p-, h- or hp-sweep")
    common(sp)
    sp.add_argument("--history", action="store_true", help="dump residual histories")
    sp = sub.add_parser("condition-study", help="kappa(W) of the separable preconditioner")
    common(sp, config_required=False)
    sp.add_argument("--degrees", default=",".join(map(str, TABLE_DEGREES)),
                    help="comma-separated W list")
    common(sub.add_parser("mesh-dump", help="element table of the first sweep point"))
    return p


def _write(out_dir, name, text):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)
    return out / name


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "condition-study":
        try:
            degrees = [int(d) for d in args.degrees.split(",") if d.strip()]
            rows = condition_rows(degrees)
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        text = condition_csv(rows)
        if args.out:
            _write(args.out, "condition.csv", text)
        sys.stdout.write(text)
        return EXIT_OK
    try:
        cfg = load_config(args.config, {"tol": args.tol, "max_iter": args.max_iter, "out": args.out,
                                        "history": getattr(args, "history", None) or None})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "mesh-dump":
        _, mesh = point_mesh(cfg, cfg.values[0])
        text = mesh.to_csv()
        if args.out:
            _write(cfg.out, "mesh.csv", text)
        sys.stdout.write(text)
        return EXIT_OK

    if args.command == "solve":
        cfg.values = cfg.values[:1]

    def progress(row):
        log.info("value=%g dof=%d iterations=%d error=%s%%", row["value"], row["dof"],
                 row["iterations"], table_format(row["rel_error_percent"]))

    rows = run_study(cfg, on_row=progress)
    text = rows_to_csv(rows)
    _write(cfg.out, "study.csv", text)
    _write(cfg.out, "timing.csv", timing_csv(rows))
    emit_plot_data(rows, catalog(cfg.problem).frame, cfg.out)
    if cfg.history:
        for r in rows:
            hist = "iteration,residual\n" + "".join(f"{k},{v:.17g}\n" for k, v in enumerate(r["history"]))
            _write(cfg.out, f"history_{r['value']:g}.csv", hist)
    sys.stdout.write(text)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
