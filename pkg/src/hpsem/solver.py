"""Preconditioned conjugate gradients on the normal equations and error measures."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .basis import diff_matrix, gll_rule, along_axis, prolong_matrix, tensor_apply
from .mesh import ElementKind, frame_derivatives, frame_volume


@dataclass
class SolveReport:
    iterations: int
    residual_history: list = field(default_factory=list)
    functional_final: float = float("nan")
    rel_error_h1: float | None = None
    dof: int = 0
    wall_time: float = 0.0
    converged: bool = False

    def history_csv(self):
        lines = ["iteration,residual"]
        lines += [f"{k},{v:.17g}" for k, v in enumerate(self.residual_history)]
        return "\n".join(lines) + "\n"


class BreakdownError(RuntimeError):
    pass


def pcg_solve(residual_op, precond, U0, tol=1e-8, max_iter=1000, callback=None):
    """PCG on X U = YG where residual_op(U) = X U - YG.

    Stops when sqrt(<r, P r>) has dropped by `tol` relative to the start.
    Returns (U, SolveReport); the report's history holds sqrt(<r, P r>).
    `callback(k, U, r)` is called after every iteration.
    """
    t0 = time.perf_counter()
    U = np.array(U0, dtype=float)
    r0 = residual_op(np.zeros_like(U))      # -YG
    r = residual_op(U)
    z = precond(r)
    rz = float(r @ z)
    if not np.isfinite(rz):
        raise FloatingPointError("non-finite residual")
    hist = [np.sqrt(max(rz, 0.0))]
    rep = SolveReport(0, hist, dof=U.size)
    if hist[0] == 0.0:
        rep.converged = True
        rep.wall_time = time.perf_counter() - t0
        return U, rep
    p = -z
    for k in range(1, max_iter + 1):
        xp = residual_op(p) - r0
        pxp = float(p @ xp)
        if not np.isfinite(pxp):
            raise FloatingPointError("non-finite residual")
        if pxp <= 0.0:
            raise BreakdownError(f"<p, Xp> = {pxp:.3e} at iteration {k}")
        alpha = rz / pxp
        U += alpha * p
        r += alpha * xp
        z = precond(r)
        rz_new = float(r @ z)
        hist.append(np.sqrt(max(rz_new, 0.0)))
        rep.iterations = k
        if callback is not None:
            callback(k, U, r)
        if hist[-1] <= tol * hist[0]:
            rep.converged = True
            break
        p = -z + (rz_new / rz) * p
        rz = rz_new
    rep.wall_time = time.perf_counter() - t0
    return U, rep


def _element_fields(e, U, order):
    """Fine-grid points, weights (with volume), values and Cartesian gradients of U on e."""
    m = tuple(max(order, d) for d in (2 * d for d in e.degrees))
    rules = [gll_rule(k) for k in m]
    h = e.sizes
    lam = np.stack(np.meshgrid(*[r.nodes for r in rules], indexing="ij"), axis=-1)
    p = e.bounds[:, 0] + (lam + 1.0) * 0.5 * h
    cube = np.asarray(U)[e.dofs].reshape(e.shape, order="F")
    pm = [prolong_matrix(d, k) for d, k in zip(e.degrees, m)]
    u = tensor_apply(*pm, cube)
    grad_p = np.stack([along_axis(diff_matrix(rules[a]).entries, u, a) * (2.0 / h[a])
                       for a in range(3)], axis=-1)
    jac, _ = frame_derivatives(e.frame, p)
    grad = np.einsum("...ai,...a->...i", np.linalg.inv(jac), grad_p)
    w = np.einsum("i,j,k->ijk", *[r.weights for r in rules]) * np.prod(0.5 * h)
    w = w * frame_volume(e.frame, p)
    return p, w, u, grad


def h1_relative_error(problem, mesh, U, order=None):
    """Broken H1 error over the finite elements, in percent of the exact H1 norm."""
    if problem.exact is None and problem.native is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    num = den = 0.0
    for e in mesh.elements:
        if e.kind is not ElementKind.STANDARD or not e.finite:
            continue
        p, w, u, grad = _element_fields(e, U, 0 if order is None else order)
        _, ue, ge, _ = problem.solution(e.frame, p)
        num += float(np.sum(w * ((u - ue) ** 2 + np.sum((grad - ge) ** 2, axis=-1))))
        den += float(np.sum(w * (ue**2 + np.sum(ge**2, axis=-1))))
    return 100.0 * np.sqrt(num / den)


def solve(problem, mesh, precond=None, tol=1e-8, max_iter=1000, system=None):
    """Build the least-squares system, run PCG from zero and fill a report."""
    from .functional import LeastSquaresSystem
    from .precond import build_preconditioner

    t0 = time.perf_counter()
    sysm = system or LeastSquaresSystem(problem, mesh)
    P = precond or build_preconditioner(sysm)
    U, rep = pcg_solve(sysm.residual, P, np.zeros(sysm.n), tol=tol, max_iter=max_iter)
    rep.functional_final = sysm.value(U).total
    rep.dof = mesh.dof_reported()
    if problem.exact is not None or problem.native is not None:
        rep.rel_error_h1 = h1_relative_error(problem, mesh, U)
    rep.wall_time = time.perf_counter() - t0
    return U, rep
