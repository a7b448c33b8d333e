"""Separable tensor-product preconditioners and the condition-number study.

On the master interval the 1D forms in the Legendre coefficient basis are

    E(v) = int v''^2 + v'^2,    F(v) = int v^2   (diagonal),

and the generalized eigenvectors of (E, F) diagonalize the 3D form
C = E x F x F + F x E x F + F x F x E + F x F x F with eigenvalues
mu_i + mu_j + mu_k + 1.  The anisotropic variant replaces E in one or more
directions by eta^4 E2 + eta^2 E1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .basis import gll_rule, legendre_deriv_table, legendre_table
from .mesh import ElementKind


@dataclass(frozen=True)
class QuadForm1D:
    order: int
    E: np.ndarray      # int v''^2 + v'^2
    F: np.ndarray      # int v^2
    E1: np.ndarray     # int v'^2
    E2: np.ndarray     # int v''^2


@dataclass(frozen=True)
class EigBasis1D:
    values: np.ndarray
    vectors: np.ndarray    # columns b_i, Legendre coefficients


def _second_deriv_table(n, x):
    """L_m'' from L''_{m+1} = L''_{m-1} + (2m+1) L_m'."""
    d1 = legendre_deriv_table(n, x)
    out = np.zeros_like(d1)
    for m in range(1, n):
        out[m + 1] = out[m - 1] + (2 * m + 1) * d1[m]
    return out


@lru_cache(maxsize=None)
def quad_forms_1d(W: int, quadrature: str = "exact") -> QuadForm1D:
    """1D forms in the Legendre basis.

    quadrature="exact" integrates exactly; "gll" uses the (W+1)-point GLL rule,
    i.e. the discrete inner product of the nodal grid, where the top mass entry
    becomes 2/W instead of 2/(2W+1).
    """
    if W < 1:
        raise ValueError("W must be >= 1")
    if quadrature not in ("exact", "gll"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    rule = gll_rule(W + 2 if quadrature == "exact" else W)
    x, w = rule.nodes, rule.weights
    v0 = legendre_table(W, x)
    v1 = legendre_deriv_table(W, x, v0)
    v2 = _second_deriv_table(W, x)
    F = (v0 * w) @ v0.T
    E1 = (v1 * w) @ v1.T
    E2 = (v2 * w) @ v2.T
    for m in (F, E1, E2):
        m[np.abs(m) < 1e-13 * max(1.0, np.abs(m).max())] = 0.0
        m.setflags(write=False)
    return QuadForm1D(W, E1 + E2, F, E1, E2)


def quad_forms_1d_aniso(W: int, eta: float):
    """(G, H) with G = eta^4 E2 + eta^2 E1 and H = F."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    q = quad_forms_1d(W)
    return eta**4 * q.E2 + eta**2 * q.E1, q.F


def gen_eig(form, mass=None) -> EigBasis1D:
    """F-orthonormal ascending eigenpairs of (E, F); F must be SPD."""
    if isinstance(form, QuadForm1D):
        E, F = form.E, form.F
    elif mass is None:
        E, F = form
    else:
        E, F = form, mass
    E, F = np.asarray(E, float), np.asarray(F, float)
    try:
        Lc = np.linalg.cholesky(F)
    except np.linalg.LinAlgError as exc:
        raise ValueError("mass form is not positive definite") from exc
    Li = np.linalg.inv(Lc)
    S = Li @ E @ Li.T
    vals, Y = np.linalg.eigh(0.5 * (S + S.T))
    B = Li.T @ Y
    for j in range(B.shape[1]):
        col = B[:, j]
        k = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        if col[k] < 0:
            B[:, j] = -col
    vals = np.where(np.abs(vals) < 1e-13 * max(1.0, vals.max()), 0.0, vals)
    return EigBasis1D(vals, B)


# ------------------------------------------------------------ condition study

def _pencil_extremes(W, quadrature="gll"):
    q = quad_forms_1d(W, quadrature)
    eb = gen_eig(q)
    K = eb.vectors.T @ q.E1 @ eb.vectors       # int v'^2 in the eigenbasis
    n = W + 1
    mu = eb.values
    d = mu[:, None, None] + mu[None, :, None] + mu[None, None, :] + 1.0
    isd = 1.0 / np.sqrt(d)

    def matvec(v):
        # B = C + the mixed second derivatives; C = diag(d) in the eigenbasis
        u = np.reshape(v, (n, n, n)) * isd
        k1 = np.tensordot(K, u, axes=(1, 0))                          # K on axis 0
        k2 = np.moveaxis(np.tensordot(K, u, axes=(1, 1)), 0, 1)       # K on axis 1
        out = d * u
        out += np.moveaxis(np.tensordot(K, k1, axes=(1, 1)), 0, 1)    # (0, 1)
        out += np.moveaxis(np.tensordot(K, k1, axes=(1, 2)), 0, 2)    # (0, 2)
        out += np.moveaxis(np.tensordot(K, k2, axes=(1, 2)), 0, 2)    # (1, 2)
        return (out * isd).ravel()

    if n**3 <= 1000:
        M = np.column_stack([matvec(e) for e in np.eye(n**3)])
        ev = np.linalg.eigvalsh(0.5 * (M + M.T))
        return ev[0], ev[-1]
    op = LinearOperator((n**3, n**3), matvec=matvec, dtype=float)
    hi = eigsh(op, k=1, which="LA", tol=1e-13, return_eigenvectors=False)[0]
    # B - C is positive semidefinite, so the bottom of the pencil is near 1:
    # shift to make it the dominant end
    shifted = LinearOperator((n**3, n**3), matvec=lambda v: hi * v - matvec(v), dtype=float)
    lo = hi - eigsh(shifted, k=1, which="LA", tol=1e-13, return_eigenvectors=False)[0]
    return lo, hi


def condition_number_study(W: int, quadrature: str = "gll") -> float:
    """kappa of the pencil (H^2(Q) norm, separable form C) in the degree-W tensor space."""
    if not 1 <= W <= 16:
        raise ValueError("condition study supports 1 <= W <= 16")
    lo, hi = _pencil_extremes(W, quadrature)
    return float(hi / lo)


# --------------------------------------------------------- element blocks

class SeparableBlock:
    """Inverse of kappa * (G1 x H x H + H x G2 x H + H x H x G3 + H x H x H) in nodal form."""

    def __init__(self, degrees, etas, scale):
        self.shape = tuple(d + 1 for d in degrees)
        self.scale = float(scale)
        self.mats, self.vals = [], []
        for d, eta in zip(degrees, etas):
            G, H = quad_forms_1d_aniso(d, eta)
            eb = gen_eig(G, H)
            V = legendre_table(d, gll_rule(d).nodes).T
            self.mats.append(V @ eb.vectors)
            self.vals.append(eb.values)
        v = self.vals
        self.lam = scale * (v[0][:, None, None] + v[1][None, :, None] + v[2][None, None, :] + 1.0)

    def apply(self, r):
        c = r.reshape(self.shape, order="F")
        m = self.mats
        c = np.einsum("ai,bj,ck,abc->ijk", m[0], m[1], m[2], c)
        c = c / self.lam
        c = np.einsum("ia,jb,kc,abc->ijk", m[0], m[1], m[2], c)
        return c.reshape(-1, order="F")

    def form(self):
        """Explicit nodal matrix of the form (inverse of apply)."""
        n = int(np.prod(self.shape))
        return np.linalg.inv(np.column_stack([self.apply(e) for e in np.eye(n)]))


class DenseBlock:
    def __init__(self, block):
        self.inv = np.linalg.inv(0.5 * (block + block.T))

    def apply(self, r):
        return self.inv @ r


@dataclass
class SeparablePrecond:
    blocks: list          # (dof index array, block)
    n: int

    def __call__(self, r):
        out = np.zeros(self.n)
        for dofs, blk in self.blocks:
            out[dofs] = blk.apply(r[dofs])
        return out


def precond_apply(P: SeparablePrecond, r):
    r = np.asarray(r, dtype=float)
    if r.shape != (P.n,):
        raise ValueError(f"vector of length {P.n} expected, got {r.shape}")
    return P(r)


def element_block(op):
    """Separable block for a standard element from its mapped operator."""
    e = op.element
    d = op.principal_sup()
    a_ref = float(d.max())
    etas = np.sqrt(np.maximum(d / a_ref, 1e-300))
    jac = float(np.prod(0.5 * e.sizes))
    return SeparableBlock(e.degrees, etas, jac * a_ref**2)


def build_preconditioner(system) -> SeparablePrecond:
    """Block-diagonal preconditioner: separable blocks on standard elements, exact
    diagonal blocks of X on the reduced corner representations."""
    blocks = []
    for e, er in system.elements:
        blocks.append((e.dofs, element_block(er.op)))
    groups = {}
    for e in system.mesh.elements:
        if e.kind is ElementKind.CORNER_CONSTANT:
            groups.setdefault(e.group, []).append(e)
        elif e.kind is ElementKind.CORNER_RADIAL_1D or (e.kind is ElementKind.STANDARD and not e.finite):
            groups.setdefault(("el", e.id), []).append(e)
    for members in groups.values():
        dofs = members[0].dofs
        blocks.append((dofs, DenseBlock(system.local_block(members, dofs))))
    return SeparablePrecond(blocks, system.n)


def identity_precond(r):
    return np.array(r, dtype=float)
