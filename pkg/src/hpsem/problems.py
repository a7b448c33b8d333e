"""Model problems: coefficients, data, domains and exact solutions.

The operator is written in non-divergence form

    L u = - sum_ij a_ij u_{x_i x_j} + sum_i b_i u_{x_i} + c u,

with a symmetric positive definite.  Exact solutions return the triple
(u, grad u, Hess u) in Cartesian variables; the right-hand side and the
boundary data are derived from them.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .mesh import (CoordFrame, EdgeDomain, MeshSpec, VertexDomain, VertexEdgeDomain, brick_grid,
                   build_edge_mesh, build_regular_mesh, build_vertex_edge_mesh, build_vertex_mesh,
                   cartesian_to_frame, frame_derivatives, frame_to_cartesian)

DIRICHLET, NEUMANN = "dirichlet", "neumann"


def _const_a(x):
    return np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3))


def _zero_vec(x):
    return np.zeros(x.shape)


def _zero(x):
    return np.zeros(x.shape[:-1])


def _all_dirichlet(x, n):
    return DIRICHLET


@dataclass
class EllipticProblem:
    name: str
    frame: CoordFrame
    domain: object                       # list of bricks, or a singular domain
    a: Callable = _const_a
    b: Callable = _zero_vec
    c: Callable = _zero
    exact: Callable | None = None        # x -> (u, grad, hess)
    boundary: Callable = _all_dirichlet  # (x, outward normal) -> tag
    robin: float = 0.0                   # Neumann operator: d_nu u + robin * u
    conormal: bool = False               # d_nu = n.a.grad (True) or n.grad
    constant_coefficients: bool = False
    rhs: Callable | None = None
    description: str = ""
    native: tuple | None = None          # (frame, p -> (u, grad, hess)) for singular solutions

    def solution(self, frame, p):
        """Cartesian points and exact (u, grad, hess) at frame coordinates p."""
        frame = CoordFrame(frame)
        p = np.asarray(p, dtype=float)
        x = frame_to_cartesian(frame, p)
        if self.native is not None:
            nf, fn = self.native
            q = p if nf == frame else cartesian_to_frame(nf, x)
            return (x,) + tuple(fn(q))
        return (x,) + tuple(self.exact(x))

    def apply_operator(self, x, u, grad, hess):
        a, b, c = self.a(x), self.b(x), self.c(x)
        return -np.einsum("...ij,...ij->...", a, hess) + np.einsum("...i,...i->...", b, grad) + c * u

    def f_at(self, frame, p):
        x, u, g, h = self.solution(frame, p)
        if self.rhs is not None:
            return self.rhs(x)
        return self.apply_operator(x, u, g, h)

    def f(self, x):
        return self.f_at(CoordFrame.REGULAR, x)

    def g_at(self, frame, p):
        return self.solution(frame, p)[1]

    def neumann_vector(self, x, n):
        """Vector m with d_nu u = m . grad u."""
        if self.conormal:
            return np.einsum("...ij,...j->...i", self.a(x), n)
        return np.asarray(n, dtype=float)

    def h_at(self, frame, p, n):
        x, u, grad, _ = self.solution(frame, p)
        return np.einsum("...i,...i->...", self.neumann_vector(x, n), grad) + self.robin * u

    def with_exact(self, exact, name=None, native=None):
        """Same operator and boundary split, new manufactured solution."""
        return replace(self, exact=exact, native=native, rhs=None, name=name or self.name)


# --------------------------------------------------------- exact-solution kit

def separable(fx, fy, fz):
    """u = X(x) Y(y) Z(z); each factor returns (value, d1, d2)."""
    def exact(x):
        X, Y, Z = fx(x[..., 0]), fy(x[..., 1]), fz(x[..., 2])
        u = X[0] * Y[0] * Z[0]
        g = np.stack([X[1] * Y[0] * Z[0], X[0] * Y[1] * Z[0], X[0] * Y[0] * Z[1]], axis=-1)
        h = np.empty(x.shape[:-1] + (3, 3))
        h[..., 0, 0] = X[2] * Y[0] * Z[0]
        h[..., 1, 1] = X[0] * Y[2] * Z[0]
        h[..., 2, 2] = X[0] * Y[0] * Z[2]
        h[..., 0, 1] = h[..., 1, 0] = X[1] * Y[1] * Z[0]
        h[..., 0, 2] = h[..., 2, 0] = X[1] * Y[0] * Z[1]
        h[..., 1, 2] = h[..., 2, 1] = X[0] * Y[1] * Z[1]
        return u, g, h
    return exact


def summed(*parts):
    def exact(x):
        outs = [p(x) for p in parts]
        return tuple(sum(o[i] for o in outs) for i in range(3))
    return exact


def sin_(k, s=1.0):
    return lambda t: (s * np.sin(k * t), s * k * np.cos(k * t), -s * k * k * np.sin(k * t))


def cos_(k, s=1.0):
    return lambda t: (s * np.cos(k * t), -s * k * np.sin(k * t), -s * k * k * np.cos(k * t))


def exp_(k, s=1.0):
    return lambda t: (s * np.exp(k * t), s * k * np.exp(k * t), s * k * k * np.exp(k * t))


def sinh_(k, s=1.0):
    return lambda t: (s * np.sinh(k * t), s * k * np.cosh(k * t), s * k * k * np.sinh(k * t))


def one_(t):
    return np.ones_like(t), np.zeros_like(t), np.zeros_like(t)


def polynomial_exact(coef):
    """Tensor polynomial u = sum c[i,j,k] x^i y^j z^k."""
    coef = np.asarray(coef, dtype=float)
    p = np.polynomial.polynomial

    def exact(x):
        xs, ys, zs = x[..., 0], x[..., 1], x[..., 2]

        def ev(c, dx, dy, dz):
            c = p.polyder(c, dx, axis=0) if dx else c
            c = p.polyder(c, dy, axis=1) if dy else c
            c = p.polyder(c, dz, axis=2) if dz else c
            return p.polyval3d(xs, ys, zs, c)

        u = ev(coef, 0, 0, 0)
        g = np.stack([ev(coef, 1, 0, 0), ev(coef, 0, 1, 0), ev(coef, 0, 0, 1)], axis=-1)
        h = np.empty(x.shape[:-1] + (3, 3))
        for i in range(3):
            for j in range(i, 3):
                d = [0, 0, 0]
                d[i] += 1
                d[j] += 1
                h[..., i, j] = h[..., j, i] = ev(coef, *d)
        return u, g, h
    return exact


def frame_exact(frame, fa, fb, fc):
    """u = A(p1) B(p2) C(p3) in frame coordinates.

    Returns (native, exact): the native callable takes frame coordinates,
    `exact` takes Cartesian points; both give Cartesian derivatives.
    """
    frame = CoordFrame(frame)

    def native(p):
        A, B, C = fa(p[..., 0]), fb(p[..., 1]), fc(p[..., 2])
        u, gp, hp = separable(lambda t: A, lambda t: B, lambda t: C)(p)
        return (u,) + frame_to_cartesian_derivs(frame, p, gp, hp)

    def exact(x):
        return native(cartesian_to_frame(frame, x))
    return (frame, native), exact


def frame_polynomial_exact(frame, coef, origin=(0.0, 0.0, 0.0), length=(1.0, 1.0, 1.0)):
    """u = sum c[i,j,k] t1^i t2^j t3^k with t = (p - origin) / length in frame coordinates p."""
    frame = CoordFrame(frame)
    poly = polynomial_exact(coef)
    origin = np.asarray(origin, dtype=float)
    inv = 1.0 / np.asarray(length, dtype=float)

    def native(p):
        u, gt, ht = poly((np.asarray(p, dtype=float) - origin) * inv)
        gp = gt * inv
        hp = ht * inv[:, None] * inv[None, :]
        return (u,) + frame_to_cartesian_derivs(frame, p, gp, hp)

    def exact(x):
        return native(cartesian_to_frame(frame, x))
    return (frame, native), exact


def polynomial_variant(problem, mesh, W, rng):
    """Problem with a random polynomial solution the mesh can represent exactly.

    Regular frame: a Cartesian tensor polynomial of degree W.  Singular frames:
    a frame-coordinate polynomial whose traces and first derivatives on the
    faces of the reduced corner elements agree with a constant (vertex,
    vertex-edge) or an x3-polynomial (edge), so every jump vanishes.
    """
    frame = CoordFrame(problem.frame)
    c = rng.uniform(-1.0, 1.0, (W + 1,) * 3)
    if frame is CoordFrame.REGULAR:
        return problem.with_exact(polynomial_exact(c), name=problem.name + "-poly")
    if W < 2:
        raise ValueError("singular-frame polynomial variants need W >= 2")
    boxes = np.array([e.bounds for e in mesh.elements if e.finite])
    origin = boxes[:, :, 0].min(axis=0)
    length = boxes[:, :, 1].max(axis=0) - origin
    i, j, k = np.indices(c.shape)
    if frame is CoordFrame.VERTEX:
        keep = (k >= 2) | ((i == 0) & (j == 0) & (k == 0))
    elif frame is CoordFrame.EDGE:
        keep = (i >= 2) | ((i == 0) & (j == 0))
    else:
        keep = ((i >= 2) & (k >= 2)) | ((i == 0) & (j == 0) & (k == 0))
    native, exact = frame_polynomial_exact(frame, np.where(keep, c, 0.0), origin, length)
    return problem.with_exact(exact, name=problem.name + "-poly", native=native)


def frame_to_cartesian_derivs(frame, p, grad_p, hess_p):
    """Cartesian gradient and Hessian from frame-coordinate derivatives."""
    jac, hes = frame_derivatives(frame, p)
    ginv = np.linalg.inv(jac)                     # ginv[a, i] = dp_a / dx_i
    gx = np.einsum("...ai,...a->...i", ginv, grad_p)
    corr = hess_p - np.einsum("...k,...kab->...ab", gx, hes)
    hx = np.einsum("...ai,...ab,...bj->...ij", ginv, corr, ginv)
    return gx, hx


# --------------------------------------------------------------- boundaries

def planes(dirichlet, neumann, tol=1e-9):
    """Tag faces of an axis-aligned box by (axis, value) planes."""
    def tag(x, n):
        ax = int(np.argmax(np.abs(n)))
        for a, v in neumann:
            if a == ax and abs(x[ax] - v) < tol:
                return NEUMANN
        return DIRICHLET
    return tag


def _sphere_neumann(x, n):
    rho = np.linalg.norm(x)
    if abs(rho - 1.0) < 1e-9 and abs(np.dot(n, x / rho) - 1.0) < 1e-9:
        return NEUMANN
    return DIRICHLET


def _crack_tag(x, n):
    # Neumann on r = 1 and on x3 = 0, 1; Dirichlet on the crack faces
    if abs(n[2]) > 0.5:
        return NEUMANN
    r = np.hypot(x[0], x[1])
    if abs(r - 1.0) < 1e-9 and np.dot(n[:2], x[:2] / r) > 0.5:
        return NEUMANN
    return DIRICHLET


MIXED_SPLIT = planes(dirichlet=[(0, -1.0), (0, 1.0), (1, -1.0)],
                     neumann=[(1, 1.0), (2, -1.0), (2, 1.0)])


def cube_mesh(h, lo=-1.0, hi=1.0):
    n = int(round((hi - lo) / h))
    return brick_grid([lo] * 3, [hi] * 3, [n] * 3)


def lshape_bricks():
    """(-1,1)^3 minus the quarter x > 0, y > 0; 24 bricks of 0.5 x 0.5 x 1."""
    out = []
    for b in brick_grid([-1, -1, -1], [1, 1, 1], [4, 4, 2]):
        if b[0, 0] >= 0 and b[1, 0] >= 0:
            continue
        out.append(b)
    return out


# ------------------------------------------------------------------ catalog

def _laplace_cube():
    k = np.sqrt(2) * np.pi
    amp = 1.0 / (np.pi**2 * np.sinh(k))
    return EllipticProblem(
        "laplace-dirichlet-cube", CoordFrame.REGULAR, cube_mesh(0.5, 0.0, 1.0),
        exact=separable(sin_(np.pi), sin_(np.pi), sinh_(k, amp)),
        constant_coefficients=True, description="Laplace, Dirichlet, unit cube, h = 0.5")


def _poisson_homog():
    return EllipticProblem(
        "poisson-homogeneous", CoordFrame.REGULAR, cube_mesh(1.0),
        exact=separable(sin_(np.pi), sin_(np.pi), sin_(np.pi)),
        constant_coefficients=True, description="Poisson, homogeneous Dirichlet, (-1,1)^3, h = 1")


def _poisson_mixed():
    s = 2.0 / np.pi**2
    return EllipticProblem(
        "poisson-mixed", CoordFrame.REGULAR, cube_mesh(1.0),
        exact=summed(separable(sin_(np.pi / 2, s), cos_(np.pi / 2), one_),
                     separable(sin_(np.pi / 2, -s), one_, sin_(np.pi / 2))),
        boundary=MIXED_SPLIT, constant_coefficients=True,
        description="Poisson, mixed Dirichlet/Neumann, (-1,1)^3, h = 1")


def _helmholtz_mixed():
    return EllipticProblem(
        "helmholtz-mixed", CoordFrame.REGULAR, cube_mesh(1.0),
        c=lambda x: np.ones(x.shape[:-1]),
        exact=separable(exp_(1.0), cos_(1.0), sin_(1.0)),
        boundary=MIXED_SPLIT, constant_coefficients=True,
        description="-Lap u + u, mixed Dirichlet/Neumann, (-1,1)^3, h = 1")


def _diag(*fs):
    def a(x):
        out = np.zeros(x.shape[:-1] + (3, 3))
        for i, f in enumerate(fs):
            out[..., i, i] = f(x)
        return out
    return a


def _varcoef_robin():
    return EllipticProblem(
        "varcoef-robin", CoordFrame.REGULAR, cube_mesh(2.0 / 3.0),
        a=_diag(lambda x: 1.0 + 0.01 * x[..., 1] * np.sin(x[..., 0]),
                lambda x: 2.5 + 0.02 * np.cos(x[..., 0] ** 2 + x[..., 2]),
                lambda x: 3.0 + 0.03 * x[..., 1] * np.exp(x[..., 2])),
        c=lambda x: 0.15 * np.sin(2 * np.pi * (x[..., 1] + x[..., 2])),
        exact=summed(separable(cos_(np.pi), cos_(np.pi), exp_(1.0)),
                     separable(sin_(np.pi, -1.0), sin_(np.pi), exp_(1.0))),
        boundary=lambda x, n: NEUMANN, robin=1.0,
        description="variable coefficients, Robin data on the whole boundary, h = 2/3")


def _lshape_exact(x):
    s = 0.5 * np.pi * x.sum(axis=-1)
    e = np.exp(0.5 * np.pi * x[..., 2])
    k = 0.5 * np.pi
    u = np.sin(s) * e
    g = np.stack([k * np.cos(s) * e, k * np.cos(s) * e, k * e * (np.cos(s) + np.sin(s))], axis=-1)
    h = np.empty(x.shape[:-1] + (3, 3))
    h[..., 0, 0] = h[..., 1, 1] = h[..., 0, 1] = h[..., 1, 0] = -k * k * np.sin(s) * e
    h[..., 0, 2] = h[..., 2, 0] = h[..., 1, 2] = h[..., 2, 1] = k * k * e * (np.cos(s) - np.sin(s))
    h[..., 2, 2] = 2 * k * k * e * np.cos(s)
    return u, g, h


def _varcoef_lshape():
    return EllipticProblem(
        "varcoef-Lshape", CoordFrame.REGULAR, lshape_bricks(),
        a=_diag(lambda x: 0.5 + 0.01 * x[..., 1] * np.sin(x[..., 0]),
                lambda x: 1.5 + 0.02 * np.cos(x[..., 0] ** 2 + x[..., 2]),
                lambda x: 2.0 + 0.03 * x[..., 1] * np.exp(x[..., 2])),
        b=lambda x: 0.25 * np.stack([np.sin(2 * np.pi * (x[..., 1] + x[..., 2])),
                                     np.sin(2 * np.pi * (x[..., 2] + x[..., 0])),
                                     np.sin(2 * np.pi * (x[..., 0] + x[..., 1]))], axis=-1),
        c=lambda x: 2.5 - 0.025 * np.exp(0.5 * np.pi * x.sum(axis=-1)),
        exact=_lshape_exact,
        description="variable coefficients with first-order terms, Dirichlet, 24-brick L-domain")


def _nonselfadjoint_a(x):
    out = np.zeros(x.shape[:-1] + (3, 3))
    out[..., 0, 0] = 0.5 + 0.05 * np.exp(x.prod(axis=-1))
    out[..., 1, 1] = 1.0 + 0.015 * np.cos(x[..., 0] + x[..., 1])
    out[..., 2, 2] = 2.5 + 0.02 * np.exp(x[..., 1] + x[..., 2])
    off = 0.0005 * np.sin(np.pi * x.sum(axis=-1))   # d (u_xy + u_yz + u_zx), d = -0.001 sin
    for i, j in ((0, 1), (1, 2), (0, 2)):
        out[..., i, j] = out[..., j, i] = off
    return out


def _nonselfadjoint():
    return EllipticProblem(
        "nonselfadjoint-mixed", CoordFrame.REGULAR, cube_mesh(1.0),
        a=_nonselfadjoint_a,
        c=lambda x: 4.05 + 0.045 * np.cos(0.5 * np.pi * x.sum(axis=-1)),
        exact=summed(separable(sin_(np.pi), one_, cos_(np.pi)),
                     separable(one_, sin_(np.pi / 2), cos_(np.pi))),
        boundary=MIXED_SPLIT,
        description="mixed second derivatives, mixed Dirichlet/Neumann, (-1,1)^3, h = 1")


def _native(frame, fa, fb, fc):
    native, exact = frame_exact(frame, fa, fb, fc)
    return {"native": native, "exact": exact}


def _powexp(k, s=1.0):
    # t = log radius: e^{k t}
    return exp_(k, s)


def _vertex_dirichlet():
    return EllipticProblem(
        "vertex-dirichlet", CoordFrame.VERTEX, VertexDomain(1.0, (np.pi / 6, np.pi / 3), (0.0, 1.5 * np.pi)),
        **_native(CoordFrame.VERTEX, sin_(0.5), lambda t: one_(t), _powexp(0.5)),
        constant_coefficients=True, description="Poisson with a vertex singularity, Dirichlet")


def _vertex_mixed_chi(t):
    a, b = np.exp(0.1 * t), np.exp(1.1 * t)
    return a - b, 0.1 * a - 1.1 * b, 0.01 * a - 1.21 * b


def _vertex_mixed():
    return EllipticProblem(
        "vertex-mixed", CoordFrame.VERTEX, VertexDomain(1.0, (np.pi / 6, np.pi / 3), (0.0, 1.5 * np.pi)),
        **_native(CoordFrame.VERTEX, sin_(2.0), lambda t: one_(t), _vertex_mixed_chi),
        boundary=_sphere_neumann, constant_coefficients=True,
        description="Poisson with a vertex singularity, Neumann on rho = 1")


def _edge_dirichlet():
    return EllipticProblem(
        "edge-dirichlet", CoordFrame.EDGE, EdgeDomain(1.0, (0.0, 0.5 * np.pi), (0.0, 1.0)),
        **_native(CoordFrame.EDGE, _powexp(1.0 / 3.0), sin_(1.0 / 3.0),
                          lambda t: (t, np.ones_like(t), np.zeros_like(t))),
        constant_coefficients=True, description="Laplace with an edge singularity, Dirichlet")


def _edge_crack():
    return EllipticProblem(
        "edge-crack-mixed", CoordFrame.EDGE, EdgeDomain(1.0, (0.0, 2 * np.pi), (0.0, 1.0)),
        **_native(CoordFrame.EDGE, _powexp(0.5), sin_(0.5), lambda t: one_(t)),
        boundary=_crack_tag, constant_coefficients=True,
        description="Laplace on a cracked cylinder, Neumann on r = 1 and x3 = 0, 1")


def _sqrt_sin(t):
    s, c = np.sin(t), np.cos(t)
    return np.sqrt(s), 0.5 * c / np.sqrt(s), -0.25 * c * c * s**-1.5 - 0.5 * np.sqrt(s)


def _vertex_edge_dirichlet():
    return EllipticProblem(
        "vertexedge-dirichlet", CoordFrame.VERTEX_EDGE,
        VertexEdgeDomain(1.0, np.pi / 6, (0.0, 1.5 * np.pi)),
        **_native(CoordFrame.VERTEX, _sqrt_sin, sin_(0.5), _powexp(0.75)),
        constant_coefficients=True,
        description="Poisson with vertex, edge and vertex-edge singularities, Dirichlet")


_CATALOG = {
    "laplace-dirichlet-cube": _laplace_cube,
    "poisson-homogeneous": _poisson_homog,
    "poisson-mixed": _poisson_mixed,
    "helmholtz-mixed": _helmholtz_mixed,
    "varcoef-robin": _varcoef_robin,
    "varcoef-Lshape": _varcoef_lshape,
    "nonselfadjoint-mixed": _nonselfadjoint,
    "vertex-dirichlet": _vertex_dirichlet,
    "vertex-mixed": _vertex_mixed,
    "edge-dirichlet": _edge_dirichlet,
    "edge-crack-mixed": _edge_crack,
    "vertexedge-dirichlet": _vertex_edge_dirichlet,
}


def build_mesh(problem: EllipticProblem, W, N=None, **spec):
    """Mesh of the problem's domain: uniform degree W on bricks, or a geometric mesh with N layers."""
    frame = CoordFrame(problem.frame)
    if frame is CoordFrame.REGULAR:
        return build_regular_mesh(problem.domain, W, problem.boundary)
    if N is None:
        raise ValueError("geometric meshes need the layer count N")
    ms = MeshSpec(N=int(N), W=int(W), domain=problem.domain, **spec)
    builder = {CoordFrame.VERTEX: build_vertex_mesh, CoordFrame.EDGE: build_edge_mesh,
               CoordFrame.VERTEX_EDGE: build_vertex_edge_mesh}[frame]
    return builder(ms, problem.boundary)


def catalog_names():
    return list(_CATALOG)


def catalog(name: str) -> EllipticProblem:
    if name not in _CATALOG:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(_CATALOG)}")
    return _CATALOG[name]()
