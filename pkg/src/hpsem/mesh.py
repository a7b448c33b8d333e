"""Coordinate frames, geometric meshes and element maps.

Frames:
  regular      (x1, x2, x3)
  vertex       (phi, theta, chi = ln rho)
  edge         (tau = ln r, theta, x3)
  vertex_edge  (psi = ln tan phi, theta, zeta = ln x3)

Elements are axis-aligned boxes in their frame.  Corner boxes reach down
to -inf in the log-radial coordinate(s) and carry a reduced representation.
Faces are numbered 2*axis + side with side 0 the lower face.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class CoordFrame(str, Enum):
    REGULAR = "regular"
    VERTEX = "vertex"
    EDGE = "edge"
    VERTEX_EDGE = "vertex_edge"


class ElementKind(str, Enum):
    STANDARD = "standard"
    CORNER_CONSTANT = "corner_constant"
    CORNER_RADIAL_1D = "corner_radial_1d"


INTERIOR, DIRICHLET, NEUMANN, TRUNCATED = "interior", "dirichlet", "neumann", "truncated"


# ---------------------------------------------------------------- frame maps

def frame_to_cartesian(frame, p):
    frame = CoordFrame(frame)
    p = np.asarray(p, dtype=float)
    a, b, c = p[..., 0], p[..., 1], p[..., 2]
    if frame is CoordFrame.REGULAR:
        return p.copy()
    if frame is CoordFrame.VERTEX:
        rho = np.exp(c)
        return np.stack([rho * np.sin(a) * np.cos(b), rho * np.sin(a) * np.sin(b),
                         rho * np.cos(a)], axis=-1)
    if frame is CoordFrame.EDGE:
        r = np.exp(a)
        return np.stack([r * np.cos(b), r * np.sin(b), c], axis=-1)
    r = np.exp(a + c)
    return np.stack([r * np.cos(b), r * np.sin(b), np.exp(c)], axis=-1)


def cartesian_to_frame(frame, x):
    frame = CoordFrame(frame)
    x = np.asarray(x, dtype=float)
    if frame is CoordFrame.REGULAR:
        return x.copy()
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
    if frame is CoordFrame.VERTEX:
        rho = np.sqrt(r**2 + x[..., 2] ** 2)
        if np.any(rho <= 0):
            raise ValueError("vertex frame undefined at the vertex")
        return np.stack([np.arccos(np.clip(x[..., 2] / rho, -1, 1)), theta, np.log(rho)], axis=-1)
    if np.any(r <= 0):
        raise ValueError("r = 0 has no finite log-radial coordinate")
    if frame is CoordFrame.EDGE:
        return np.stack([np.log(r), theta, x[..., 2]], axis=-1)
    if np.any(x[..., 2] <= 0):
        raise ValueError("vertex-edge frame needs x3 > 0")
    return np.stack([np.log(r / x[..., 2]), theta, np.log(x[..., 2])], axis=-1)


def frame_derivatives(frame, p):
    """Jacobian J[..., i, a] = dx_i/dp_a and Hessian H[..., i, a, b]."""
    frame = CoordFrame(frame)
    p = np.asarray(p, dtype=float)
    shape = p.shape[:-1]
    jac = np.zeros(shape + (3, 3))
    hes = np.zeros(shape + (3, 3, 3))
    if frame is CoordFrame.REGULAR:
        jac[...] = np.eye(3)
        return jac, hes
    x = frame_to_cartesian(frame, p)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]

    def sym(i, a, b, v):
        hes[..., i, a, b] = v
        hes[..., i, b, a] = v

    if frame is CoordFrame.VERTEX:
        phi, th, chi = p[..., 0], p[..., 1], p[..., 2]
        e = np.exp(chi)
        sp, cp, st, ct = np.sin(phi), np.cos(phi), np.sin(th), np.cos(th)
        jac[..., :, 0] = np.stack([e * cp * ct, e * cp * st, -e * sp], axis=-1)
        jac[..., :, 1] = np.stack([-e * sp * st, e * sp * ct, 0 * e], axis=-1)
        jac[..., :, 2] = x
        sym(0, 0, 0, -x1); sym(0, 0, 1, -e * cp * st); sym(0, 0, 2, e * cp * ct)
        sym(0, 1, 1, -x1); sym(0, 1, 2, -x2); sym(0, 2, 2, x1)
        sym(1, 0, 0, -x2); sym(1, 0, 1, e * cp * ct); sym(1, 0, 2, e * cp * st)
        sym(1, 1, 1, -x2); sym(1, 1, 2, x1); sym(1, 2, 2, x2)
        sym(2, 0, 0, -x3); sym(2, 0, 2, -e * sp); sym(2, 2, 2, x3)
    elif frame is CoordFrame.EDGE:
        jac[..., 0, 0], jac[..., 1, 0] = x1, x2
        jac[..., 0, 1], jac[..., 1, 1] = -x2, x1
        jac[..., 2, 2] = 1.0
        sym(0, 0, 0, x1); sym(0, 0, 1, -x2); sym(0, 1, 1, -x1)
        sym(1, 0, 0, x2); sym(1, 0, 1, x1); sym(1, 1, 1, -x2)
    else:
        jac[..., 0, 0], jac[..., 1, 0] = x1, x2
        jac[..., 0, 1], jac[..., 1, 1] = -x2, x1
        jac[..., 0, 2], jac[..., 1, 2], jac[..., 2, 2] = x1, x2, x3
        for i, (v, w) in enumerate(((x1, -x2), (x2, x1))):
            sym(i, 0, 0, v); sym(i, 0, 2, v); sym(i, 2, 2, v)
            sym(i, 0, 1, w); sym(i, 1, 2, w); sym(i, 1, 1, -v)
        sym(2, 2, 2, x3)
    return jac, hes


def frame_volume(frame, p):
    """dx / dp for the frame coordinates (positive)."""
    frame = CoordFrame(frame)
    p = np.asarray(p, dtype=float)
    if frame is CoordFrame.REGULAR:
        return np.ones(p.shape[:-1])
    if frame is CoordFrame.VERTEX:
        return np.exp(3 * p[..., 2]) * np.sin(p[..., 0])
    if frame is CoordFrame.EDGE:
        return np.exp(2 * p[..., 0])
    return np.exp(2 * p[..., 0] + 3 * p[..., 2])


def region_weight(frame, p):
    """Cartesian weight of the squared PDE residual: 1, rho^2 or r^2."""
    frame = CoordFrame(frame)
    p = np.asarray(p, dtype=float)
    if frame is CoordFrame.REGULAR:
        return np.ones(p.shape[:-1])
    if frame is CoordFrame.VERTEX:
        return np.exp(2 * p[..., 2])
    if frame is CoordFrame.EDGE:
        return np.exp(2 * p[..., 0])
    return np.exp(2 * (p[..., 0] + p[..., 2]))


# ------------------------------------------------------------------ elements

@dataclass(frozen=True)
class FaceLink:
    kind: str
    neighbor: int | None = None
    neighbor_face: int | None = None


@dataclass
class Element:
    id: int
    frame: CoordFrame
    kind: ElementKind
    bounds: np.ndarray
    degrees: tuple
    faces: list = field(default_factory=list)
    group: int | None = None      # shared-constant group for corner constants
    dofs: np.ndarray | None = None

    @property
    def finite(self):
        return bool(np.all(np.isfinite(self.bounds)))

    @property
    def shape(self):
        return tuple(d + 1 for d in self.degrees)

    @property
    def sizes(self):
        return self.bounds[:, 1] - self.bounds[:, 0]

    def face_box(self, f):
        """Tangential bounds (2x2) and plane value of face f."""
        ax, side = divmod(f, 2)
        tang = [a for a in range(3) if a != ax]
        return self.bounds[tang], self.bounds[ax, side]


@dataclass
class ElementMap:
    frame: CoordFrame
    lo: np.ndarray
    hi: np.ndarray

    @property
    def half(self):
        return 0.5 * (self.hi - self.lo)

    def to_frame(self, lam):
        lam = np.asarray(lam, dtype=float)
        return self.lo + (lam + 1.0) * self.half

    def to_cartesian(self, lam):
        return frame_to_cartesian(self.frame, self.to_frame(lam))

    def jacobian(self, lam):
        """Volume factor dx / dlambda of the composed map."""
        return np.prod(self.half) * frame_volume(self.frame, self.to_frame(lam))


def element_map(e: Element) -> ElementMap:
    if not e.finite:
        raise ValueError(f"element {e.id} is semi-infinite; no 3D map")
    return ElementMap(e.frame, e.bounds[:, 0].copy(), e.bounds[:, 1].copy())


@dataclass
class Mesh:
    elements: list
    n_groups: int = 0

    def __post_init__(self):
        offset = 0
        for e in self.elements:
            if e.kind is ElementKind.CORNER_CONSTANT:
                continue
            n = int(np.prod(e.shape))
            e.dofs = np.arange(offset, offset + n)
            offset += n
        for e in self.elements:
            if e.kind is ElementKind.CORNER_CONSTANT:
                e.dofs = np.array([offset + e.group])
        self.n_dof = offset + self.n_groups

    @property
    def frames(self):
        return sorted({e.frame.value for e in self.elements})

    def dof_reported(self):
        """DOF bookkeeping used in the tables: W1*W2*W3 per element."""
        n = self.n_groups
        for e in self.elements:
            if e.kind is ElementKind.STANDARD:
                n += int(np.prod(e.degrees))
            elif e.kind is ElementKind.CORNER_RADIAL_1D:
                n += e.degrees[2]
        return n

    def interior_faces(self):
        for e in self.elements:
            for f, link in enumerate(e.faces):
                if link.kind == INTERIOR and (e.id, f) < (link.neighbor, link.neighbor_face):
                    yield e, f, self.elements[link.neighbor], link.neighbor_face

    def boundary_faces(self, kind=None):
        for e in self.elements:
            for f, link in enumerate(e.faces):
                if link.kind in (DIRICHLET, NEUMANN) and (kind is None or link.kind == kind):
                    yield e, f

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "frame", "kind", "lo1", "hi1", "lo2", "hi2", "lo3", "hi3",
                    "W1", "W2", "W3", "faces"])
        for e in self.elements:
            faces = ";".join(
                f"{l.kind}:{l.neighbor}/{l.neighbor_face}" if l.kind == INTERIOR else l.kind
                for l in e.faces)
            w.writerow([e.id, e.frame.value, e.kind.value,
                        *[f"{v:.17g}" for v in e.bounds.ravel()], *e.degrees, faces])
        return buf.getvalue()


# ------------------------------------------------------------ face linking

def face_normal(frame, p, axis, side):
    """Outward Cartesian unit normal of a frame-coordinate plane at p."""
    jac, _ = frame_derivatives(frame, p)
    grad = np.linalg.inv(jac)[..., axis, :]
    n = grad / np.linalg.norm(grad, axis=-1, keepdims=True)
    return n if side == 1 else -n


def _key(v):
    return round(float(v), 11) if np.isfinite(v) else float(v)


def _link_faces(elements, boundary):
    table = {}
    for e in elements:
        e.faces = [None] * 6
        for f in range(6):
            tang, plane = e.face_box(f)
            key = (f // 2, _key(plane), tuple(_key(v) for v in tang.ravel()))
            table.setdefault(key, []).append((e.id, f))
    for key, members in table.items():
        if len(members) > 2 or (len(members) == 2 and members[0][1] % 2 == members[1][1] % 2):
            raise ValueError(f"overlapping elements at face {key}")
        if len(members) == 2:
            (a, fa), (b, fb) = members
            infinite = not all(np.isfinite(key[2]))
            kind = TRUNCATED if infinite else INTERIOR
            elements[a].faces[fa] = FaceLink(kind, b, fb)
            elements[b].faces[fb] = FaceLink(kind, a, fa)
    for e in elements:
        for f in range(6):
            if e.faces[f] is not None:
                continue
            tang, plane = e.face_box(f)
            if not (np.all(np.isfinite(tang)) and np.isfinite(plane)):
                e.faces[f] = FaceLink(TRUNCATED)
                continue
            _check_conforming(elements, e, f)
            ax, side = divmod(f, 2)
            p = e.bounds.mean(axis=1)
            p[ax] = plane
            tag = DIRICHLET
            if boundary is not None:
                x = frame_to_cartesian(e.frame, p)
                tag = boundary(x, face_normal(e.frame, p, ax, side))
            if tag not in (DIRICHLET, NEUMANN):
                raise ValueError(f"boundary tag must be dirichlet or neumann, got {tag!r}")
            e.faces[f] = FaceLink(tag)


def _check_conforming(elements, e, f):
    ax, side = divmod(f, 2)
    plane = e.bounds[ax, side]
    tang = [a for a in range(3) if a != ax]
    for o in elements:
        if o.id == e.id or not np.isclose(o.bounds[ax, 1 - side], plane, rtol=0, atol=1e-11):
            continue
        lo = np.maximum(e.bounds[tang, 0], o.bounds[tang, 0])
        hi = np.minimum(e.bounds[tang, 1], o.bounds[tang, 1])
        if np.all(hi - lo > 1e-11):
            raise ValueError(f"non-conforming interface between elements {e.id} and {o.id}")


def _check_overlap(boxes):
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            lo = np.maximum(boxes[i][:, 0], boxes[j][:, 0])
            hi = np.minimum(boxes[i][:, 1], boxes[j][:, 1])
            if np.all(hi - lo > 1e-11):
                raise ValueError(f"bricks {i} and {j} overlap")


# ------------------------------------------------------------------ builders

def brick_grid(lo, hi, counts):
    """Boxes of a uniform split of the box [lo, hi]."""
    edges = [np.linspace(lo[a], hi[a], counts[a] + 1) for a in range(3)]
    return [np.array([[edges[0][i], edges[0][i + 1]], [edges[1][j], edges[1][j + 1]],
                      [edges[2][k], edges[2][k + 1]]])
            for k in range(counts[2]) for j in range(counts[1]) for i in range(counts[0])]


def build_regular_mesh(bricks, degrees, boundary=None):
    """Regular-frame mesh from a face-conforming list of boxes."""
    boxes = [np.asarray(b, dtype=float).reshape(3, 2) for b in bricks]
    if not boxes:
        raise ValueError("no bricks")
    if any(np.any(b[:, 1] <= b[:, 0]) for b in boxes):
        raise ValueError("degenerate brick")
    _check_overlap(boxes)
    deg = (int(degrees),) * 3 if np.isscalar(degrees) else tuple(int(d) for d in degrees)
    if min(deg) < 1:
        raise ValueError("degrees must be >= 1")
    elements = [Element(i, CoordFrame.REGULAR, ElementKind.STANDARD, b, deg)
                for i, b in enumerate(boxes)]
    _link_faces(elements, boundary)
    return Mesh(elements)


@dataclass(frozen=True)
class VertexDomain:
    rho_v: float = 1.0
    phi: tuple = (np.pi / 6, np.pi / 3)
    theta: tuple = (0.0, 1.5 * np.pi)
    panels: int = 1          # I_v, split of the theta range


@dataclass(frozen=True)
class EdgeDomain:
    Z: float = 1.0
    theta: tuple = (0.0, 0.5 * np.pi)
    x3: tuple = (0.0, 1.0)
    panels: int = 1          # I_e, split of the theta range
    axial: int = 1           # J_e, split of the x3 range


@dataclass(frozen=True)
class VertexEdgeDomain:
    rho_v: float = 1.0
    phi_v: float = np.pi / 6
    theta: tuple = (0.0, 1.5 * np.pi)
    panels: int = 1          # I_ve, split of the theta range


@dataclass(frozen=True)
class MeshSpec:
    N: int
    W: int
    domain: object
    mu_v: float = 0.15
    mu_e: float = 0.15
    mu1: float = 1.0
    mu2: float = 1.0

    def __post_init__(self):
        if self.N < 1 or self.W < 1:
            raise ValueError("N and W must be >= 1")
        if not (0 < self.mu_v < 1 and 0 < self.mu_e < 1):
            raise ValueError("mesh ratios must lie in (0, 1)")
        if self.mu1 <= 0 or self.mu2 <= 0:
            raise ValueError("degree factors must be positive")

    def degree(self, i, factor=None):
        factor = self.mu1 if factor is None else factor
        return int(min(max(math.floor(factor * i + 1e-12), 1), self.W))


def _box(a, b, c):
    return np.array([a, b, c], dtype=float)


def _panels(rng, n):
    return np.linspace(rng[0], rng[1], n + 1)


def vertex_breakpoints(spec):
    d = spec.domain
    return np.array([math.log(d.rho_v) + (spec.N + 1 - k) * math.log(spec.mu_v)
                     for k in range(1, spec.N + 2)])


def edge_breakpoints(spec):
    d = spec.domain
    return np.array([math.log(d.Z) + (spec.N + 1 - j) * math.log(spec.mu_e)
                     for j in range(1, spec.N + 2)])


def vertex_edge_breakpoints(spec):
    d = spec.domain
    delta = d.rho_v * math.cos(d.phi_v)
    psi = np.array([(spec.N + 1 - i) * math.log(spec.mu_e) + math.log(math.tan(d.phi_v))
                    for i in range(1, spec.N + 2)])
    zeta = np.array([math.log(delta) + (spec.N + 1 - k) * math.log(spec.mu_v)
                     for k in range(1, spec.N + 2)])
    return psi, zeta


def build_vertex_mesh(spec: MeshSpec, boundary=None):
    d = spec.domain
    chi = vertex_breakpoints(spec)
    th = _panels(d.theta, d.panels)
    elements = []
    for p in range(d.panels):
        tb = (th[p], th[p + 1])
        elements.append(Element(len(elements), CoordFrame.VERTEX, ElementKind.CORNER_CONSTANT,
                                _box(d.phi, tb, (-np.inf, chi[0])), (0, 0, 0), group=0))
        for k in range(1, spec.N + 1):
            w = spec.degree(k)
            elements.append(Element(len(elements), CoordFrame.VERTEX, ElementKind.STANDARD,
                                    _box(d.phi, tb, (chi[k - 1], chi[k])), (w, w, w)))
    _link_faces(elements, boundary)
    return Mesh(elements, n_groups=1)


def build_edge_mesh(spec: MeshSpec, boundary=None):
    d = spec.domain
    tau = edge_breakpoints(spec)
    th = _panels(d.theta, d.panels)
    zs = _panels(d.x3, d.axial)
    elements = []
    for b in range(d.axial):
        for p in range(d.panels):
            tb, zb = (th[p], th[p + 1]), (zs[b], zs[b + 1])
            elements.append(Element(len(elements), CoordFrame.EDGE, ElementKind.CORNER_RADIAL_1D,
                                    _box((-np.inf, tau[0]), tb, zb), (0, 0, spec.W)))
            for j in range(1, spec.N + 1):
                w = spec.degree(j)
                elements.append(Element(len(elements), CoordFrame.EDGE, ElementKind.STANDARD,
                                        _box((tau[j - 1], tau[j]), tb, zb), (w, w, spec.W)))
    _link_faces(elements, boundary)
    return Mesh(elements)


def build_vertex_edge_mesh(spec: MeshSpec, boundary=None):
    d = spec.domain
    psi, zeta = vertex_edge_breakpoints(spec)
    pb = np.concatenate([[-np.inf], psi])
    zb = np.concatenate([[-np.inf], zeta])
    th = _panels(d.theta, d.panels)
    elements = []
    for p in range(d.panels):
        tb = (th[p], th[p + 1])
        for k in range(spec.N + 1):
            for i in range(spec.N + 1):
                box = _box((pb[i], pb[i + 1]), tb, (zb[k], zb[k + 1]))
                if k == 0:
                    kind, deg, grp = ElementKind.CORNER_CONSTANT, (0, 0, 0), 0
                elif i == 0:
                    kind, deg, grp = ElementKind.CORNER_RADIAL_1D, (0, 0, spec.degree(k, spec.mu2)), None
                else:
                    w = spec.degree(i)
                    kind, deg, grp = ElementKind.STANDARD, (w, w, spec.degree(k, spec.mu2)), None
                elements.append(Element(len(elements), CoordFrame.VERTEX_EDGE, kind, box, deg, group=grp))
    _link_faces(elements, boundary)
    return Mesh(elements, n_groups=1)
