"""Least-squares functional and its normal-equation residual.

The functional is a sum of squared linear residuals,

    R(U) = sum_terms (A_t U - b_t)^T M_t (A_t U - b_t),

where each term is either the weighted PDE residual on the fine GLL grid of
an element, or one component of a face term (jump, Dirichlet or Neumann
residual) measured in an L2 / H^{1/2} / |||.||| face form.  The residual
r(U) = X U - Y G = sum_t A_t^T M_t (A_t U - b_t) is computed element by
element without forming X; `dense_normal_assembly` builds X explicitly from
Kronecker products as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import (along_axis, diff_matrix, gll_rule, lagrange_matrix, prolong_matrix,
                    restrict_fine_to_coarse, tensor_apply)
from .mesh import (DIRICHLET, INTERIOR, NEUMANN, CoordFrame, ElementKind, face_normal,
                   frame_derivatives, frame_to_cartesian, frame_volume, region_weight)
from .norms import (FaceForm, face_orders, face_trace_ops, face_weights, frame_scale,
                    triple_multipliers)

SECOND = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


# ------------------------------------------------------------ element level

def pullback(problem, frame, p):
    """Frame-coordinate coefficients of L at points p.

    Returns (A2, b1, c, x, ginv) with L u = sum A2_ab u_ab + sum b1_a u_a + c u
    in terms of derivatives with respect to the frame coordinates p.
    """
    jac, hes = frame_derivatives(frame, p)
    ginv = np.linalg.inv(jac)
    # second derivatives of p_a with respect to x_i, x_j
    pxx = -np.einsum("...ak,...kbc,...bi,...cj->...aij", ginv, hes, ginv, ginv)
    x = frame_to_cartesian(frame, p)
    a = np.broadcast_to(problem.a(x), x.shape[:-1] + (3, 3))
    b = np.broadcast_to(problem.b(x), x.shape)
    c = np.broadcast_to(problem.c(x), x.shape[:-1])
    a2 = -np.einsum("...ai,...ij,...bj->...ab", ginv, a, ginv)
    b1 = -np.einsum("...ij,...aij->...a", a, pxx) + np.einsum("...ai,...i->...a", ginv, b)
    return a2, b1, c, x, ginv


@dataclass
class MappedOperator:
    """Master-cube form of the weighted operator on one element's fine grid."""
    element: object
    fine_orders: tuple
    quad: np.ndarray          # fine weights times the affine Jacobian
    second: dict              # (a, b) -> coefficient of u_{lam_a lam_b} (a < b doubled)
    first: np.ndarray         # (3, ...) coefficients of u_{lam_a}
    zeroth: np.ndarray
    rhs: np.ndarray           # weighted data on the fine grid
    points: np.ndarray        # frame coordinates of the fine grid

    def principal_sup(self):
        """sup over the element of |coefficient of u_{lam_a lam_a}| per direction."""
        return np.array([np.max(np.abs(self.second[(a, a)])) for a in range(3)])


def mapped_operator(problem, e):
    if e.kind is not ElementKind.STANDARD or not e.finite:
        raise ValueError("only finite standard elements carry a PDE residual")
    m = tuple(2 * d for d in e.degrees)
    rules = [gll_rule(k) for k in m]
    h = e.sizes
    lam = np.stack(np.meshgrid(*[r.nodes for r in rules], indexing="ij"), axis=-1)
    p = e.bounds[:, 0] + (lam + 1.0) * 0.5 * h
    a2, b1, c, x, _ = pullback(problem, e.frame, p)
    s = np.sqrt(frame_volume(e.frame, p) * region_weight(e.frame, p))
    sc = 2.0 / h
    second = {}
    for a, b in SECOND:
        mult = 1.0 if a == b else 2.0
        second[(a, b)] = mult * a2[..., a, b] * sc[a] * sc[b] * s
    first = np.stack([b1[..., a] * sc[a] * s for a in range(3)])
    quad = np.einsum("i,j,k->ijk", *[r.weights for r in rules]) * np.prod(0.5 * h)
    rhs = s * problem.f_at(e.frame, p)
    return MappedOperator(e, m, quad, second, first, c * s, rhs, p)


class ElementResidual:
    """Matrix-free forward and adjoint application of the PDE term."""

    def __init__(self, op: MappedOperator):
        self.op = op
        e = op.element
        self.shape = e.shape
        self.prolong = [prolong_matrix(d, m) for d, m in zip(e.degrees, op.fine_orders)]
        self.dm = [diff_matrix(gll_rule(m)).entries for m in op.fine_orders]

    def forward(self, u):
        op = self.op
        uf = tensor_apply(*self.prolong, u.reshape(self.shape, order="F"))
        d1 = [along_axis(self.dm[a], uf, a) for a in range(3)]
        out = op.zeroth * uf
        for a in range(3):
            out = out + op.first[a] * d1[a]
        for a, b in SECOND:
            out = out + op.second[(a, b)] * along_axis(self.dm[a], d1[b], a)
        return out

    def adjoint(self, y):
        """G^T of the transposed fine-grid operator applied to fine data y."""
        op = self.op
        acc = op.zeroth * y
        for a in range(3):
            acc = acc + along_axis(self.dm[a].T, op.first[a] * y, a)
        for a, b in SECOND:
            t = along_axis(self.dm[a].T, op.second[(a, b)] * y, a)
            acc = acc + along_axis(self.dm[b].T, t, b)
        e = op.element
        return restrict_fine_to_coarse(acc, e.degrees, op.fine_orders).reshape(-1, order="F")

    def dense(self):
        """Explicit fine-grid matrix of the forward map (Kronecker assembly)."""
        op = self.op
        pm = [lagrange_matrix(gll_rule(d).nodes, gll_rule(m).nodes)
              for d, m in zip(op.element.degrees, op.fine_orders)]
        dm = self.dm

        def kron3(m1, m2, m3):
            return np.kron(m3, np.kron(m2, m1))

        def factor(a, order):
            mats = list(pm)
            for _ in range(order):
                mats[a] = dm[a] @ mats[a]
            return mats

        def flat(arr):
            return arr.reshape(-1, order="F")

        mat = flat(op.zeroth)[:, None] * kron3(*pm)
        for a in range(3):
            mat += flat(op.first[a])[:, None] * kron3(*factor(a, 1))
        for a, b in SECOND:
            mats = factor(a, 1)
            mats[b] = dm[b] @ mats[b]
            mat += flat(op.second[(a, b)])[:, None] * kron3(*mats)
        return mat


# --------------------------------------------------------------- face level

@dataclass
class FaceComponent:
    pieces: list              # (side, deriv or None, coefficient scalar or face array)
    form: FaceForm
    data: np.ndarray | None = None


@dataclass
class FaceTerm:
    kind: str                 # interior / dirichlet / neumann
    region: str
    sides: list               # [(element, face), ...]
    orders: tuple
    components: list = field(default_factory=list)

    def __post_init__(self):
        self.ops = {}
        for s, (e, f) in enumerate(self.sides):
            for deriv in (None, 0, 1, 2):
                self.ops[(s, deriv)] = face_trace_ops(e.degrees, e.sizes, f, self.orders, deriv)

    def trace(self, side, deriv, u):
        e, f = self.sides[side]
        row, ta, tb = self.ops[(side, deriv)]
        face = np.tensordot(u.reshape(e.shape, order="F"), row, axes=([f // 2], [0]))
        return ta @ face @ tb.T

    def trace_adjoint(self, side, deriv, v):
        e, f = self.sides[side]
        row, ta, tb = self.ops[(side, deriv)]
        small = ta.T @ v @ tb
        return np.moveaxis(np.multiply.outer(small, row), -1, f // 2).reshape(-1, order="F")

    def component_residual(self, comp, locals_):
        v = -comp.data if comp.data is not None else 0.0
        for side, deriv, coef in comp.pieces:
            v = v + coef * self.trace(side, deriv, locals_[side])
        return v


def _face_points(e, f, orders):
    ax, side = divmod(f, 2)
    tang = [a for a in range(3) if a != ax]
    ra, rb = gll_rule(orders[0]), gll_rule(orders[1])
    p = np.empty((orders[0] + 1, orders[1] + 1, 3))
    lo, h = e.bounds[:, 0], e.sizes
    p[..., tang[0]] = (lo[tang[0]] + (ra.nodes + 1.0) * 0.5 * h[tang[0]])[:, None]
    p[..., tang[1]] = (lo[tang[1]] + (rb.nodes + 1.0) * 0.5 * h[tang[1]])[None, :]
    p[..., ax] = e.bounds[ax, side]
    return p


def _neumann_scale(frame, ax, p):
    frame = CoordFrame(frame)
    if frame is CoordFrame.REGULAR:
        return np.ones(p.shape[:-1])
    x = frame_to_cartesian(frame, p)
    rho = np.linalg.norm(x, axis=-1)
    r = np.hypot(x[..., 0], x[..., 1])
    if frame is CoordFrame.VERTEX:
        return rho / np.sin(p[..., 0]) if ax == 1 else rho
    if frame is CoordFrame.EDGE:
        return r**2 if ax == 2 else r
    phi = np.arctan(np.exp(p[..., 0]))
    return [rho * np.tan(phi), rho * np.sin(phi), rho * np.sin(phi) ** 2 / np.cos(phi)][ax]


def _face_setup(e, f, orders):
    ax = f // 2
    tang = [a for a in range(3) if a != ax]
    sizes = (e.sizes[tang[0]], e.sizes[tang[1]])
    box = e.bounds.copy()
    box[ax] = e.bounds[ax, f % 2]
    return ax, tang, sizes, face_weights(e.frame, box)


def interior_term(ea, fa, eb, fb):
    orders = face_orders(ea, fa, eb)
    frame = CoordFrame(ea.frame)
    ax, tang, sizes, fw = _face_setup(ea, fa, orders) if ea.finite else _face_setup(eb, fb, orders)
    term = FaceTerm(INTERIOR, frame.value, [(ea, fa), (eb, fb)], orders)

    def jump(deriv, form):
        return FaceComponent([(0, deriv, 1.0), (1, deriv, -1.0)], form)

    if frame is CoordFrame.REGULAR:
        term.components.append(jump(None, FaceForm(orders, 1.0, 0.0, 0.0)))
        for k in range(3):
            term.components.append(jump(k, FaceForm(orders, 1.0, 1.0, 1.0)))
        return term
    sc = frame_scale(sizes)
    if frame is CoordFrame.VERTEX:
        term.components.append(jump(None, FaceForm(orders, fw.R * sc[0], 0.0, 0.0)))
        for k in range(3):
            term.components.append(jump(k, FaceForm(orders, *(fw.R * sc))))
        return term
    tm = sc * triple_multipliers(frame, ax, fw)
    if frame is CoordFrame.EDGE:
        hw = fw.G if ax == 2 else 1.0
        last = fw.G**2
    else:
        hw = fw.F * (fw.E if ax == 2 else 1.0)
        last = fw.E**2
    term.components.append(jump(None, FaceForm(orders, hw * sc[0], 0.0, 0.0)))
    for k in range(3):
        mult = last if k == 2 else 1.0
        term.components.append(jump(k, FaceForm(orders, *(mult * tm))))
    return term


def dirichlet_term(problem, e, f):
    orders = face_orders(e, f)
    frame = CoordFrame(e.frame)
    ax, tang, sizes, fw = _face_setup(e, f, orders)
    p = _face_points(e, f, orders)
    g = problem.g_at(frame, p)
    dgs = []
    for i, (t, m) in enumerate(zip(tang, orders)):
        dm = diff_matrix(gll_rule(m)).entries * (2.0 / sizes[i])
        dgs.append(dm @ g if i == 0 else g @ dm.T)
    term = FaceTerm(DIRICHLET, frame.value, [(e, f)], orders)
    if frame is CoordFrame.REGULAR:
        term.components.append(FaceComponent([(0, None, 1.0)], FaceForm(orders, 1.0, 0.0, 0.0), g))
        for i, t in enumerate(tang):
            half = 0.5 * sizes[i]          # derivative along the master face
            term.components.append(FaceComponent([(0, t, half)], FaceForm(orders), half * dgs[i]))
        return term
    sc = frame_scale(sizes)
    if frame is CoordFrame.VERTEX:
        term.components.append(FaceComponent([(0, None, 1.0)], FaceForm(orders, fw.R * sc[0], 0.0, 0.0), g))
        for i, t in enumerate(tang):
            term.components.append(FaceComponent([(0, t, 1.0)], FaceForm(orders, *(fw.R * sc)), dgs[i]))
        return term
    tm = sc * triple_multipliers(frame, ax, fw)
    if frame is CoordFrame.EDGE:
        l2, last = 1.0, fw.G**2
    else:
        l2, last = fw.F, fw.E**2
    term.components.append(FaceComponent([(0, None, 1.0)], FaceForm(orders, l2 * sc[0], 0.0, 0.0), g))
    for i, t in enumerate(tang):
        mult = last if t == 2 else 1.0
        term.components.append(FaceComponent([(0, t, 1.0)], FaceForm(orders, *(mult * tm)), dgs[i]))
    return term


def neumann_term(problem, e, f):
    orders = face_orders(e, f)
    frame = CoordFrame(e.frame)
    ax, tang, sizes, fw = _face_setup(e, f, orders)
    p = _face_points(e, f, orders)
    n = face_normal(frame, p, ax, f % 2)
    jac, _ = frame_derivatives(frame, p)
    ginv = np.linalg.inv(jac)
    x = frame_to_cartesian(frame, p)
    mvec = problem.neumann_vector(x, n)
    coef = np.einsum("...ai,...i->...a", ginv, mvec)
    s = _neumann_scale(frame, ax, p)
    h = problem.h_at(frame, p, n)
    pieces = [(0, a, s * coef[..., a]) for a in range(3)]
    if problem.robin:
        pieces.append((0, None, s * problem.robin))
    if frame is CoordFrame.REGULAR:
        form = FaceForm(orders)
    elif frame is CoordFrame.VERTEX:
        form = FaceForm(orders, *(fw.R * frame_scale(sizes)))
    else:
        form = FaceForm(orders, *(frame_scale(sizes) * triple_multipliers(frame, ax, fw)))
    term = FaceTerm(NEUMANN, frame.value, [(e, f)], orders)
    term.components.append(FaceComponent(pieces, form, s * h))
    return term


# ------------------------------------------------------------------ global

@dataclass
class FunctionalValue:
    total: float
    breakdown: dict

    def part(self, name):
        return sum(v for (region, kind), v in self.breakdown.items() if kind == name)


class LeastSquaresSystem:
    """Precomputed element and face terms of the functional on one mesh."""

    def __init__(self, problem, mesh, corner_weight=None):
        """`corner_weight(fw)`, if given, multiplies every jump term on a face shared
        with a reduced corner element (fw: FaceWeights of the face).  The default
        leaves all terms at unit weight."""
        self.problem, self.mesh = problem, mesh
        self.elements = []
        for e in mesh.elements:
            if e.kind is ElementKind.STANDARD and e.finite:
                self.elements.append((e, ElementResidual(mapped_operator(problem, e))))
        self.faces = []
        for ea, fa, eb, fb in mesh.interior_faces():
            term = interior_term(ea, fa, eb, fb)
            reduced = ea.kind is not ElementKind.STANDARD or eb.kind is not ElementKind.STANDARD
            if corner_weight is not None and reduced:
                std, f = (ea, fa) if ea.finite else (eb, fb)
                w = float(corner_weight(_face_setup(std, f, term.orders)[3]))
                for comp in term.components:
                    comp.form.cl, comp.form.ca, comp.form.cb = (w * comp.form.cl, w * comp.form.ca,
                                                                w * comp.form.cb)
            self.faces.append(term)
        for e, f in mesh.boundary_faces():
            link = e.faces[f]
            if link.kind == DIRICHLET:
                self.faces.append(dirichlet_term(self.problem, e, f))
            elif link.kind == NEUMANN:
                self.faces.append(neumann_term(self.problem, e, f))
        self.n = mesh.n_dof

    # -- evaluation
    def value(self, U):
        U = np.asarray(U, dtype=float)
        parts = {}

        def add(key, v):
            parts[key] = parts.get(key, 0.0) + v

        for e, er in self.elements:
            r = er.forward(U[e.dofs]) - er.op.rhs
            add((e.frame.value, "pde_residual"), float(np.sum(er.op.quad * r * r)))
        names = {INTERIOR: "interior_jumps", DIRICHLET: "dirichlet_terms", NEUMANN: "neumann_terms"}
        for t in self.faces:
            loc = [U[e.dofs] for e, _ in t.sides]
            for comp in t.components:
                v = t.component_residual(comp, loc)
                add((t.region, names[t.kind]), comp.form.value(v))
        return FunctionalValue(float(sum(parts.values())), parts)

    def residual(self, U):
        """Half the gradient of the functional: X U - Y G."""
        U = np.asarray(U, dtype=float)
        out = np.zeros(self.n)
        for e, er in self.elements:
            r = er.forward(U[e.dofs]) - er.op.rhs
            out[e.dofs] += er.adjoint(er.op.quad * r)
        for t in self.faces:
            loc = [U[e.dofs] for e, _ in t.sides]
            for comp in t.components:
                mv = comp.form.apply(t.component_residual(comp, loc))
                for side, deriv, coef in comp.pieces:
                    e = t.sides[side][0]
                    np.add.at(out, e.dofs, t.trace_adjoint(side, deriv, coef * mv))
        return out

    def local_block(self, members, dofs):
        """Dense block X[dofs, dofs] from the terms touching the member elements."""
        ids = {e.id for e in members}
        dofs = np.asarray(dofs)
        k = len(dofs)
        blk = np.zeros((k, k))
        elems = [(e, er) for e, er in self.elements if e.id in ids]
        faces = [t for t in self.faces if any(e.id in ids for e, _ in t.sides)]
        for j in range(k):
            U = np.zeros(self.n)
            U[dofs[j]] = 1.0
            out = np.zeros(self.n)
            for e, er in elems:
                out[e.dofs] += er.adjoint(er.op.quad * er.forward(U[e.dofs]))
            for t in faces:
                loc = [U[e.dofs] for e, _ in t.sides]
                for comp in t.components:
                    v = 0.0
                    for side, deriv, coef in comp.pieces:
                        v = v + coef * t.trace(side, deriv, loc[side])
                    mv = comp.form.apply(v)
                    for side, deriv, coef in comp.pieces:
                        e = t.sides[side][0]
                        np.add.at(out, e.dofs, t.trace_adjoint(side, deriv, coef * mv))
            blk[:, j] = out[dofs]
        return blk

    def apply_X(self, U):
        return self.residual(U) - self.residual(np.zeros(self.n))


def functional_value(problem, mesh, U, system=None):
    return (system or LeastSquaresSystem(problem, mesh)).value(U)


def normal_residual(problem, mesh, U, system=None):
    return (system or LeastSquaresSystem(problem, mesh)).residual(U)


def dense_normal_assembly(problem, mesh, system=None, max_dof=2000):
    """Explicit X and Y G (test oracle)."""
    sysm = system or LeastSquaresSystem(problem, mesh)
    n = sysm.n
    if n > max_dof:
        raise ValueError(f"{n} unknowns exceed the dense budget of {max_dof}")
    X = np.zeros((n, n))
    YG = np.zeros(n)
    for e, er in sysm.elements:
        A = er.dense()
        w = er.op.quad.reshape(-1, order="F")
        idx = np.ix_(e.dofs, e.dofs)
        X[idx] += A.T @ (w[:, None] * A)
        YG[e.dofs] += A.T @ (w * er.op.rhs.reshape(-1, order="F"))
    for t in sysm.faces:
        for comp in t.components:
            na, nb = t.orders[0] + 1, t.orders[1] + 1
            B = np.zeros((na * nb, n))
            for side, deriv, coef in comp.pieces:
                e = t.sides[side][0]
                T = _dense_trace(t, side, deriv)
                c = np.broadcast_to(coef, (na, nb)).reshape(-1, order="F")
                np.add.at(B.T, e.dofs, (c[:, None] * T).T)
            M = comp.form.dense()
            X += B.T @ M @ B
            if comp.data is not None:
                YG += B.T @ M @ comp.data.reshape(-1, order="F")
    return X, YG


def _dense_trace(term, side, deriv):
    """Face-grid-by-element matrix of a trace, filled column by column."""
    e, f = term.sides[side]
    row, ta, tb = term.ops[(side, deriv)]
    ax = f // 2
    tang = [a for a in range(3) if a != ax]
    n1, n2, n3 = e.shape
    out = np.zeros((ta.shape[0] * tb.shape[0], n1 * n2 * n3))
    for k3 in range(n3):
        for k2 in range(n2):
            for k1 in range(n1):
                k = (k1, k2, k3)
                val = row[k[ax]] * np.outer(ta[:, k[tang[0]]], tb[:, k[tang[1]]])
                out[:, k1 + n1 * (k2 + n2 * k3)] = val.reshape(-1, order="F")
    return out
