import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpsem.basis import diff_matrix, gll_rule
from hpsem.mesh import CoordFrame, MeshSpec, VertexDomain, brick_grid, build_regular_mesh, build_vertex_mesh
from hpsem.norms import (FaceForm, FaceWeights, face_weights, h_half_form, h_half_norm_sq,
                         h_three_half_norm_sq, half_matrix_1d, jump_face_values, l2_sq, triple_multipliers,
                         weighted_face_norm)


def loop_half_norm(v, ca=1.0, cb=1.0, cl=1.0):
    """Direct summation of L2 plus the two difference-quotient sums."""
    ma, mb = v.shape[0] - 1, v.shape[1] - 1
    ra, rb = gll_rule(ma), gll_rule(mb)
    xa, wa, xb, wb = ra.nodes, ra.weights, rb.nodes, rb.weights
    da, db = diff_matrix(ra).entries, diff_matrix(rb).entries
    l2 = sa = sb = 0.0
    for i in range(ma + 1):
        for j in range(mb + 1):
            l2 += wa[i] * wb[j] * v[i, j] ** 2
    for j in range(mb + 1):
        for i in range(ma + 1):
            for k in range(ma + 1):
                if k != i:
                    sa += wb[j] * wa[i] * wa[k] * ((v[i, j] - v[k, j]) / (xa[i] - xa[k])) ** 2
            sa += wb[j] * wa[i] ** 2 * (da[i] @ v[:, j]) ** 2
    for i in range(ma + 1):
        for j in range(mb + 1):
            for k in range(mb + 1):
                if k != j:
                    sb += wa[i] * wb[j] * wb[k] * ((v[i, j] - v[i, k]) / (xb[j] - xb[k])) ** 2
            sb += wa[i] * wb[j] ** 2 * (db[j] @ v[i, :]) ** 2
    return cl * l2 + ca * sa + cb * sb


def _grid(m):
    x = gll_rule(m).nodes
    return np.meshgrid(x, x, indexing="ij")


def test_constant_face():
    for c in (1.0, 3.0, -0.5):
        v = np.full((5, 5), c)
        assert np.isclose(h_half_norm_sq(v, (4, 4)), 4 * c * c)
        assert np.isclose(l2_sq(v, (4, 4)), 4 * c * c)
        z = np.zeros_like(v)
        assert np.isclose(h_three_half_norm_sq(v, z, z, (4, 4)), 4 * c * c)


def test_linear_face_values():
    x, _ = _grid(2)
    assert np.isclose(l2_sq(x, (2, 2)), 4 / 3)
    assert np.isclose(h_half_norm_sq(x, (2, 2)), loop_half_norm(x))
    ones = np.ones_like(x)
    assert np.isclose(h_three_half_norm_sq(x, ones, 0 * x, (2, 2)), 4 / 3 + 4)


@given(ma=st.integers(1, 8), mb=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_matrix_vs_loop_oracle(ma, mb, seed):
    v = np.random.default_rng(seed).standard_normal((ma + 1, mb + 1))
    ref = loop_half_norm(v)
    assert abs(h_half_norm_sq(v, (ma, mb)) - ref) <= 1e-12 * max(1, ref)
    dense = h_half_form(gll_rule(ma), gll_rule(mb)).entries
    vf = v.reshape(-1, order="F")
    assert np.isclose(vf @ dense @ vf, ref, rtol=1e-12)
    assert np.isclose(vf @ FaceForm((ma, mb)).dense() @ vf, ref, rtol=1e-12)


@given(seed=st.integers(0, 2**31), m=st.integers(1, 6))
def test_half_dominates_l2_and_scales(seed, m):
    v = np.random.default_rng(seed).standard_normal((m + 1, m + 1))
    assert h_half_norm_sq(v, (m, m)) >= l2_sq(v, (m, m))
    assert np.isclose(h_half_norm_sq(2.5 * v, (m, m)), 6.25 * h_half_norm_sq(v, (m, m)))


@pytest.mark.parametrize("m", range(1, 9))
def test_half_form_positive_definite(m):
    assert np.linalg.eigvalsh(half_matrix_1d(m)).min() > -1e-12
    assert np.linalg.eigvalsh(h_half_form(gll_rule(m)).entries).min() > 0


def test_three_half_monotone_under_added_mode():
    x, y = _grid(4)
    u, ua, ub = x * y, y, x
    base = h_three_half_norm_sq(u, ua, ub, (4, 4))
    more = h_three_half_norm_sq(u + x**2, ua + 2 * x, ub, (4, 4))
    assert more > base


def test_edge_x3_face_constant():
    fw = FaceWeights(G=0.3)
    v = np.full((3, 3), 2.0)
    assert np.isclose(weighted_face_norm(CoordFrame.EDGE, 2, fw, v), 0.3 * 4 * 4.0)


def test_weights_linear():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((3, 4))
    a = weighted_face_norm(CoordFrame.VERTEX_EDGE, 2, FaceWeights(E=0.2, F=0.7), v)
    b = weighted_face_norm(CoordFrame.VERTEX_EDGE, 2, FaceWeights(E=0.4, F=0.7), v)
    assert np.isclose(b, 2 * a)


def test_vertex_edge_psi_face_oracle():
    # face normal to psi: tangential (theta, zeta); L2 and theta terms carry F, zeta terms carry E F
    rng = np.random.default_rng(5)
    v = rng.standard_normal((3, 3))
    E, F = 0.35, 0.6
    ha, hb = 0.8, 1.7
    ref = (F * ha * hb / 4 * loop_half_norm(v, 0, 0, 1) + F * hb / 2 * loop_half_norm(v, 1, 0, 0)
           + E * F * ha / 2 * loop_half_norm(v, 0, 1, 0))
    got = weighted_face_norm(CoordFrame.VERTEX_EDGE, 0, FaceWeights(E=E, F=F), v, sizes=(ha, hb))
    assert np.isclose(got, ref, rtol=1e-12)


def test_triple_multipliers_cases():
    fw = FaceWeights(E=0.5, F=0.25, G=3.0)
    assert np.allclose(triple_multipliers(CoordFrame.EDGE, 2, fw), [3, 3, 3])
    assert np.allclose(triple_multipliers(CoordFrame.EDGE, 0, fw), [1, 1, 3])
    assert np.allclose(triple_multipliers(CoordFrame.VERTEX_EDGE, 2, fw), 0.125)
    assert np.allclose(triple_multipliers(CoordFrame.VERTEX_EDGE, 1, fw), [0.25, 0.25, 0.125])
    assert np.allclose(triple_multipliers(CoordFrame.REGULAR, 1, fw), 1)


def test_face_weights_sup():
    fw = face_weights(CoordFrame.EDGE, [[-2, -1], [0, 1], [0, 0]])
    assert np.isclose(fw.G, np.exp(-1))
    fw = face_weights(CoordFrame.VERTEX_EDGE, [[-2, 0], [0, 1], [-1, -1]])
    assert np.isclose(fw.E, np.sin(np.pi / 4)) and np.isclose(fw.F, np.exp(-1))
    with pytest.raises(ValueError):
        face_weights(CoordFrame.EDGE, [[-np.inf, -1], [0, 1], [0, 0]])
    with pytest.raises(ValueError):
        FaceWeights(G=0.0)


def test_jump_examples():
    m = build_regular_mesh(brick_grid([0, 0, 0], [2, 1, 1], [2, 1, 1]), 2)
    ea, eb = m.elements
    ea_f, eb_f = 1, 0
    x = gll_rule(2).nodes
    X = np.meshgrid(x, x, x, indexing="ij")
    # the same global polynomial on both sides: local coordinate shifts by 1 in x
    ua = (X[0] * 0.5 + 0.5) ** 2 + X[1]
    ub = (X[0] * 0.5 + 1.5) ** 2 + X[1]
    for j in jump_face_values(ea, ea_f, ua, eb, eb_f, ub):
        assert np.allclose(j, 0.0, atol=1e-12)
    j = jump_face_values(ea, ea_f, np.ones(27), eb, eb_f, np.zeros(27))
    assert np.allclose(j[0], 1.0)
    lam = X[0]
    j = jump_face_values(ea, ea_f, lam, eb, eb_f, -lam)
    # d/dx of the local coordinate on a unit-width element is 2
    assert np.allclose(j[1], 2 * 2.0)


def test_jump_frame_mismatch():
    reg = build_regular_mesh(brick_grid([0] * 3, [1] * 3, [1] * 3), 1).elements[0]
    ver = build_vertex_mesh(MeshSpec(N=1, W=1, domain=VertexDomain())).elements[1]
    with pytest.raises(ValueError):
        jump_face_values(reg, 0, np.zeros(8), ver, 1, np.zeros(8))
