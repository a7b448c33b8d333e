"""Discrete face norms: L2, H^{1/2}, H^{3/2} and the weighted |||.||| norms.

A face carries values on a tensor GLL grid of orders (Ma, Mb).  The H^{1/2}
seminorm in one direction is the double sum of squared difference
quotients over all ordered node pairs, with the coincident pairs replaced
by the squared derivative from the differentiation matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import diff_matrix, gll_rule, lagrange_matrix
from .mesh import CoordFrame


@lru_cache(maxsize=None)
def half_matrix_1d(m):
    """K with v^T K v = sum_{i != i'} w_i w_i' ((v_i - v_i')/(x_i - x_i'))^2 + sum_i w_i^2 (Dv)_i^2."""
    rule = gll_rule(m)
    x, w = rule.nodes, rule.weights
    d = diff_matrix(rule).entries
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    c = np.outer(w, w) / dx**2
    np.fill_diagonal(c, 0.0)
    # ordered pairs: each unordered pair appears twice
    k = 2.0 * (np.diag(c.sum(axis=1)) - c)
    k += d.T @ (w[:, None] ** 2 * d)
    k = 0.5 * (k + k.T)
    k.setflags(write=False)
    return k


@dataclass(frozen=True)
class HalfNormMatrix:
    orders: tuple
    entries: np.ndarray


def h_half_form(rule, rule_b=None) -> HalfNormMatrix:
    """Dense H^{1/2}(S) form on the (Ma+1)x(Mb+1) face grid, first index fastest."""
    rb = rule if rule_b is None else rule_b
    wa, wb = rule.weights, rb.weights
    ka, kb = half_matrix_1d(rule.order), half_matrix_1d(rb.order)
    mat = np.kron(np.diag(wb), np.diag(wa)) + np.kron(np.diag(wb), ka) + np.kron(kb, np.diag(wa))
    return HalfNormMatrix((rule.order, rb.order), mat)


class FaceForm:
    """Quadratic form cL*L2 + ca*Da + cb*Db on a face grid (matrix-free)."""

    def __init__(self, orders, cl=1.0, ca=1.0, cb=1.0):
        self.orders = tuple(int(m) for m in orders)
        self.wa = gll_rule(self.orders[0]).weights
        self.wb = gll_rule(self.orders[1]).weights
        self.ka = half_matrix_1d(self.orders[0])
        self.kb = half_matrix_1d(self.orders[1])
        self.cl, self.ca, self.cb = float(cl), float(ca), float(cb)

    def apply(self, v):
        """M v, so that the form value is sum(v * M v)."""
        out = self.cl * (self.wa[:, None] * self.wb[None, :]) * v
        if self.ca:
            out = out + self.ca * (self.ka @ v) * self.wb[None, :]
        if self.cb:
            out = out + self.cb * self.wa[:, None] * (v @ self.kb)
        return out

    def value(self, v):
        return float(np.sum(v * self.apply(v)))

    def dense(self):
        na, nb = self.orders[0] + 1, self.orders[1] + 1
        return (self.cl * np.kron(np.diag(self.wb), np.diag(self.wa))
                + self.ca * np.kron(np.diag(self.wb), self.ka)
                + self.cb * np.kron(self.kb, np.diag(self.wa))).reshape(na * nb, na * nb)


def l2_sq(v, orders):
    return FaceForm(orders, 1.0, 0.0, 0.0).value(v)


def h_half_norm_sq(v, orders):
    return FaceForm(orders).value(v)


def h_three_half_norm_sq(u, du_a, du_b, orders):
    """||u||_0^2 + ||du/da||_{1/2}^2 + ||du/db||_{1/2}^2 on the master face."""
    return l2_sq(u, orders) + h_half_norm_sq(du_a, orders) + h_half_norm_sq(du_b, orders)


def frame_scale(sizes):
    """Multipliers taking master-face sums to a frame face with sides (ha, hb)."""
    ha, hb = sizes
    return np.array([ha * hb / 4.0, hb / 2.0, ha / 2.0])


@dataclass(frozen=True)
class FaceWeights:
    R: float = 1.0    # sup e^chi            (vertex)
    E: float = 1.0    # sup sin(phi)         (vertex-edge)
    F: float = 1.0    # sup e^zeta           (vertex-edge)
    G: float = 1.0    # sup e^tau            (edge)

    def __post_init__(self):
        for v in (self.R, self.E, self.F, self.G):
            if not (np.isfinite(v) and v > 0):
                raise ValueError("face weights must be positive and finite")


def face_weights(frame, box):
    """Sup weights over a closed face given as a 3x2 box (one degenerate axis)."""
    frame = CoordFrame(frame)
    box = np.asarray(box, dtype=float)
    if not np.all(np.isfinite(box)):
        raise ValueError("infinite-measure face is excluded from the functional")
    hi = box[:, 1]
    if frame is CoordFrame.VERTEX:
        return FaceWeights(R=float(np.exp(hi[2])))
    if frame is CoordFrame.EDGE:
        return FaceWeights(G=float(np.exp(hi[0])))
    if frame is CoordFrame.VERTEX_EDGE:
        return FaceWeights(E=float(np.sin(np.arctan(np.exp(hi[0])))), F=float(np.exp(hi[2])))
    return FaceWeights()


def triple_multipliers(frame, normal_axis, fw: FaceWeights):
    """(L2, dir-a, dir-b) multipliers of |||.||| for a face normal to `normal_axis`."""
    frame = CoordFrame(frame)
    if frame is CoordFrame.EDGE:
        if normal_axis == 2:
            return np.array([fw.G, fw.G, fw.G])
        return np.array([1.0, 1.0, fw.G])          # second tangential axis is x3
    if frame is CoordFrame.VERTEX_EDGE:
        if normal_axis == 2:
            return fw.E * fw.F * np.ones(3)
        return fw.F * np.array([1.0, 1.0, fw.E])   # second tangential axis is zeta
    return np.ones(3)


def weighted_face_norm(frame, normal_axis, fw, values, sizes=None):
    """|||v|||^2 on a frame face; sizes default to the master face."""
    values = np.asarray(values, dtype=float)
    orders = (values.shape[0] - 1, values.shape[1] - 1)
    s = np.ones(3) if sizes is None else frame_scale(sizes)
    c = s * triple_multipliers(frame, normal_axis, fw)
    return FaceForm(orders, *c).value(values)


# ------------------------------------------------------------------ traces

def _interp(d, m):
    """Values at the order-m GLL grid of a degree-d nodal polynomial (d = 0: constant)."""
    if d == 0:
        return np.ones((m + 1, 1))
    return lagrange_matrix(gll_rule(d).nodes, gll_rule(m).nodes)


def _interp_diff(d, m):
    if d == 0:
        return np.zeros((m + 1, 1))
    return _interp(d, m) @ diff_matrix(gll_rule(d)).entries


@lru_cache(maxsize=None)
def _trace_pieces(d, m):
    a, b = _interp(d, m), _interp_diff(d, m)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def face_trace_ops(degrees, sizes, face, orders, deriv=None):
    """1D factors (normal row, Ta, Tb) of the trace of u or du/dp_deriv on a face.

    `sizes` are the element extents in frame coordinates (inf allowed along
    degree-0 directions).  The trace is row-contracted on the normal axis
    and mapped by Ta, Tb on the two tangential axes (in increasing order).
    """
    ax, side = divmod(face, 2)
    tang = [a for a in range(3) if a != ax]
    dn = degrees[ax]
    if dn == 0:
        row = np.ones(1)
    else:
        row = np.zeros(dn + 1)
        row[-1 if side else 0] = 1.0
    mats = []
    for t, m in zip(tang, orders):
        a, b = _trace_pieces(degrees[t], m)
        if deriv == t:
            mats.append(b * (2.0 / sizes[t]) if degrees[t] else b)
        else:
            mats.append(a)
    if deriv == ax:
        if dn == 0:
            row = np.zeros(1)
        else:
            dm = diff_matrix(gll_rule(dn)).entries
            row = dm[-1 if side else 0] * (2.0 / sizes[ax])
    return row, mats[0], mats[1]


def apply_trace(ops, ax, cube):
    row, ta, tb = ops
    face = np.tensordot(cube, row, axes=([ax], [0]))     # remaining axes in order
    return ta @ face @ tb.T


def apply_trace_adjoint(ops, ax, face_vals, shape):
    row, ta, tb = ops
    small = ta.T @ face_vals @ tb
    return np.moveaxis(np.multiply.outer(small, row), -1, ax).reshape(shape)


def face_orders(ea, fa, eb=None):
    """Fine face-grid orders: twice the larger tangential degree of the two sides."""
    ax = fa // 2
    tang = [a for a in range(3) if a != ax]
    da = [ea.degrees[t] for t in tang]
    if eb is None:
        return tuple(max(2 * d, 2) for d in da)
    db = [eb.degrees[t] for t in tang]
    return tuple(max(2 * max(x, y), 2) for x, y in zip(da, db))


def jump_face_values(ea, fa, ua, eb, fb, ub, orders=None):
    """Jump samples [u] and [du/dp_k], k = 0..2, on the shared fine face grid.

    The jump is (side a) - (side b).  Both elements must share the frame
    and the face geometry.
    """
    if ea.frame != eb.frame:
        raise ValueError("jump across different coordinate frames is not supported here")
    if fa // 2 != fb // 2:
        raise ValueError("faces are not parallel")
    orders = face_orders(ea, fa, eb) if orders is None else orders
    ax = fa // 2
    out = []
    for deriv in (None, 0, 1, 2):
        va = apply_trace(face_trace_ops(ea.degrees, ea.sizes, fa, orders, deriv), ax,
                         np.asarray(ua).reshape(ea.shape, order="F"))
        vb = apply_trace(face_trace_ops(eb.degrees, eb.sizes, fb, orders, deriv), ax,
                         np.asarray(ub).reshape(eb.shape, order="F"))
        out.append(va - vb)
    return out
