"""Legendre polynomials, GLL quadrature, differentiation and transforms.

All tensor data is stored with the first index running fastest, so a
flat vector v of a field with shape (n1, n2, n3) is ``field.reshape(-1,
order="F")`` and entry (i, j, k) sits at ``n1*n2*k + n1*j + i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def legendre_table(n, x):
    """Values L_0..L_n at the points x, shape (n+1, len(x)); L_m(1) = 1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((n + 1, x.size))
    out[0] = 1.0
    if n >= 1:
        out[1] = x
    for m in range(1, n):
        out[m + 1] = ((2 * m + 1) * x * out[m] - m * out[m - 1]) / (m + 1)
    return out


def legendre_deriv_table(n, x, table=None):
    """First derivatives L_0'..L_n' at x, from L'_{m+1} = L'_{m-1} + (2m+1) L_m."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if table is None:
        table = legendre_table(n, x)
    out = np.zeros((n + 1, x.size))
    if n >= 1:
        out[1] = 1.0
    for m in range(1, n):
        out[m + 1] = out[m - 1] + (2 * m + 1) * table[m]
    return out


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GllRule:
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return self.order + 1


@dataclass(frozen=True)
class DiffMatrix:
    order: int
    entries: np.ndarray

    def __matmul__(self, other):
        return self.entries @ other


@dataclass(frozen=True)
class LegendreTransform:
    order: int
    gamma: np.ndarray
    vandermonde: np.ndarray   # V[i, m] = L_m(xi_i)


@lru_cache(maxsize=None)
def gll_rule(n: int) -> GllRule:
    """Gauss-Lobatto-Legendre rule with n+1 points (exact to degree 2n-1)."""
    if int(n) != n or n < 1:
        raise ValueError(f"GLL rule needs order n >= 1, got {n}")
    n = int(n)
    # Chebyshev-Gauss-Lobatto start, Newton on (1-x^2) L_n'(x)
    x = -np.cos(np.pi * np.arange(n + 1) / n)
    for _ in range(100):
        p = legendre_table(n, x)
        step = (x * p[n] - p[n - 1]) / ((n + 1) * p[n])
        x = x - step
        if np.max(np.abs(step)) < 1e-14:
            break
    x[0], x[-1] = -1.0, 1.0
    x = 0.5 * (x - x[::-1])   # exact symmetry
    ln = legendre_table(n, x)[n]
    w = 2.0 / (n * (n + 1) * ln**2)
    w = 0.5 * (w + w[::-1])
    return GllRule(n, _frozen(x), _frozen(w))


def lagrange_matrix(nodes, targets):
    """Matrix evaluating the Lagrange interpolant through `nodes` at `targets`."""
    nodes = np.asarray(nodes, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if nodes.size == 1:
        return np.ones((targets.size, 1))
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bw = 1.0 / np.prod(diff, axis=1)
    d = targets[:, None] - nodes[None, :]
    hit = np.isclose(d, 0.0, atol=1e-15, rtol=0.0)
    d[hit] = 1.0
    terms = bw[None, :] / d
    mat = terms / terms.sum(axis=1, keepdims=True)
    rows = np.any(hit, axis=1)
    if np.any(rows):
        mat[rows] = hit[rows].astype(float)
    return mat


@lru_cache(maxsize=None)
def diff_matrix(rule: GllRule) -> DiffMatrix:
    """Nodal differentiation matrix on the GLL points of `rule`."""
    n = rule.order
    x = rule.nodes
    ln = legendre_table(n, x)[n]
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    d = (ln[:, None] / ln[None, :]) / dx
    np.fill_diagonal(d, 0.0)
    # negative-sum diagonal keeps rows summing to zero in floating point
    np.fill_diagonal(d, -d.sum(axis=1))
    return DiffMatrix(n, _frozen(d))


@lru_cache(maxsize=None)
def legendre_transform(rule: GllRule) -> LegendreTransform:
    n = rule.order
    gamma = 1.0 / (np.arange(n + 1) + 0.5)
    gamma[n] = 2.0 / n
    v = legendre_table(n, rule.nodes).T
    return LegendreTransform(n, _frozen(gamma), _frozen(v))


def _check_len(rule, vals):
    vals = np.asarray(vals, dtype=float)
    if vals.shape[0] != rule.order + 1:
        raise ValueError(f"expected {rule.order + 1} values along axis 0, got {vals.shape[0]}")
    return vals


def legendre_forward(rule: GllRule, nodal):
    """Modal coefficients of the degree-n interpolant of nodal data."""
    nodal = _check_len(rule, nodal)
    lt = legendre_transform(rule)
    shape = (-1,) + (1,) * (nodal.ndim - 1)
    modal = np.tensordot(lt.vandermonde.T, rule.weights.reshape(shape) * nodal, axes=1)
    return modal / lt.gamma.reshape(shape)


def legendre_inverse(rule: GllRule, modal):
    modal = _check_len(rule, modal)
    return np.tensordot(legendre_transform(rule).vandermonde, modal, axes=1)


def along_axis(mat, arr, axis):
    """Apply a matrix to one axis of a 3D array."""
    out = np.tensordot(mat, arr, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def tensor_apply(m1, m2, m3, arr):
    """(m3 kron m2 kron m1) acting on a field stored as shape (n1, n2, n3)."""
    out = np.tensordot(arr, m1, axes=([0], [1]))      # (n2, n3, a)
    out = np.tensordot(out, m2, axes=([0], [1]))      # (n3, a, b)
    return np.tensordot(out, m3, axes=([0], [1]))     # (a, b, c)


def _as_cube(values, shape):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        if values.size != int(np.prod(shape)):
            raise ValueError(f"expected {int(np.prod(shape))} values, got {values.size}")
        return values.reshape(shape, order="F"), True
    if values.shape != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {values.shape}")
    return values, False


def _triple(v):
    if np.isscalar(v):
        return (int(v),) * 3
    return tuple(int(a) for a in v)


def restrict_fine_to_coarse(fine, n, fine_orders=None):
    """Apply (G^N)^T to fine-grid data by the five-step Legendre algorithm.

    `n` is the coarse degree (int or triple); the fine grid has order 2n per
    direction unless `fine_orders` says otherwise.  Returns data of the same
    layout (flat or cube) as the input.
    """
    cn = _triple(n)
    fm = tuple(2 * c for c in cn) if fine_orders is None else _triple(fine_orders)
    if any(m < c for m, c in zip(fm, cn)) or min(cn) < 1:
        raise ValueError("fine order must be at least the coarse degree, coarse degree >= 1")
    arr, flat = _as_cube(fine, tuple(m + 1 for m in fm))
    for ax in range(3):
        fr, cr = gll_rule(fm[ax]), gll_rule(cn[ax])
        shape = [1, 1, 1]
        shape[ax] = -1
        # 1: divide by fine weights
        arr = arr / fr.weights.reshape(shape)
        # 2: forward transform scaled by gamma^{2N}
        arr = legendre_forward(fr, np.moveaxis(arr, ax, 0))
        arr = arr * legendre_transform(fr).gamma.reshape((-1, 1, 1))
        # 3: truncate to degree N and divide by gamma^N
        arr = arr[: cn[ax] + 1] / legendre_transform(cr).gamma.reshape((-1, 1, 1))
        # 4: inverse transform on the coarse grid, 5: coarse weights
        arr = legendre_inverse(cr, arr) * cr.weights.reshape((-1, 1, 1))
        arr = np.moveaxis(arr, 0, ax)
    return arr.reshape(-1, order="F") if flat else arr


@lru_cache(maxsize=None)
def prolong_matrix(n, m):
    """Interpolation matrix from the degree-n GLL grid to the order-m grid."""
    return _frozen(lagrange_matrix(gll_rule(n).nodes, gll_rule(m).nodes))


def prolong_coarse_to_fine(coarse, n, fine_orders=None):
    """Fine-grid samples of the tensor polynomial through coarse nodal data."""
    cn = _triple(n)
    fm = tuple(2 * c for c in cn) if fine_orders is None else _triple(fine_orders)
    if isinstance(coarse, TensorCoeffs):
        coarse = coarse.values
    arr, flat = _as_cube(coarse, tuple(c + 1 for c in cn))
    out = tensor_apply(*(prolong_matrix(c, m) for c, m in zip(cn, fm)), arr)
    return out.reshape(-1, order="F") if flat else out


@dataclass(frozen=True)
class TensorCoeffs:
    degrees: tuple
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != int(np.prod([d + 1 for d in self.degrees])):
            raise ValueError("coefficient count does not match degrees")

    @staticmethod
    def index(degrees, i, j, k):
        n1, n2 = degrees[0] + 1, degrees[1] + 1
        return n1 * n2 * k + n1 * j + i

    def cube(self):
        return np.asarray(self.values).reshape(tuple(d + 1 for d in self.degrees), order="F")
