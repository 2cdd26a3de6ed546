"""Fixed-rank / complex-circle manifold and CG solver tests.

Oracles: explicit projector formulas, dense truncated SVD for the
retraction, the Eckart-Young optimum for CG convergence, and central
finite differences for the gradient convention.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cgauss
from irsmimo.manifold import (CgOptions, CircleManifold, CirclePoint,
                              DegenerateStep, FixedRankManifold,
                              FixedRankPoint, TangentVector, cg_minimize,
                              circle_project, circle_retract, from_dense,
                              project_tangent, random_fixed_rank, retract,
                              riemannian_grad, transport)
from irsmimo.numerics import random_unit_modulus, truncated_svd

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def _point_and_ambient(seed, n=8, m=6, r=2):
    rng = np.random.default_rng(seed)
    x = random_fixed_rank(n, m, r, rng)
    return x, cgauss(rng, (n, m)), rng


def test_fixed_rank_point_contracts():
    x = random_fixed_rank(8, 6, 3, np.random.default_rng(0))
    x.validate()
    assert x.r == 3 and x.shape == (8, 6)
    np.testing.assert_allclose(x.dense, (x.u * x.s) @ x.v.conj().T,
                               atol=1e-12)
    with pytest.raises(ValueError):
        FixedRankPoint(x.u, np.array([1.0, 2.0, 3.0]), x.v).validate()
    with pytest.raises(ValueError):
        FixedRankPoint(x.u, np.array([3.0, 2.0, -1.0]), x.v).validate()
    with pytest.raises(ValueError):
        FixedRankPoint(2.0 * x.u, x.s, x.v).validate()


def test_circle_point_contract():
    CirclePoint(random_unit_modulus(5, np.random.default_rng(1)))
    with pytest.raises(ValueError):
        CirclePoint(np.array([1.0, 0.5 + 0j]))


def test_project_matches_three_term_formula():
    x, j, _ = _point_and_ambient(2)
    t = project_tangent(x, j)
    p_u = x.u @ x.u.conj().T
    p_v = x.v @ x.v.conj().T
    eye_u = np.eye(8) - p_u
    eye_v = np.eye(6) - p_v
    ref = p_u @ j @ p_v + eye_u @ j @ p_v + p_u @ j @ eye_v
    np.testing.assert_allclose(t.embed(), ref, atol=1e-10)
    np.testing.assert_allclose(np.abs(t.u_p.conj().T @ x.u).max(), 0,
                               atol=1e-10)
    np.testing.assert_allclose(np.abs(t.v_p.conj().T @ x.v).max(), 0,
                               atol=1e-10)
    with pytest.raises(ValueError):
        project_tangent(x, j[:, :3])


@given(seed=seeds)
@settings(deadline=None, max_examples=40)
def test_project_idempotent(seed):
    x, j, _ = _point_and_ambient(seed)
    t1 = project_tangent(x, j)
    t2 = project_tangent(x, t1.embed())
    np.testing.assert_allclose(t1.embed(), t2.embed(), atol=1e-12)


def test_project_fixes_own_point_and_kills_orthogonal_block():
    x, _, rng = _point_and_ambient(3)
    np.testing.assert_allclose(project_tangent(x, x.dense).embed(), x.dense,
                               atol=1e-12)
    u_perp, _ = np.linalg.qr(cgauss(rng, (8, 8)) - x.u @ (x.u.conj().T
                                                          @ cgauss(rng, (8, 8))))
    # Build an ambient matrix with no component in col(u) or row(v).
    u_c = u_perp - x.u @ (x.u.conj().T @ u_perp)
    j = u_c @ cgauss(rng, (8, 6))
    j = j - j @ x.v @ x.v.conj().T
    t = project_tangent(x, j)
    np.testing.assert_allclose(t.embed(), np.zeros((8, 6)), atol=1e-10)


@given(seed=seeds)
@settings(deadline=None, max_examples=40)
def test_projection_self_adjoint_and_inner_metric(seed):
    x, j1, rng = _point_and_ambient(seed)
    j2 = cgauss(rng, (8, 6))
    t1, t2 = project_tangent(x, j1), project_tangent(x, j2)
    lhs = np.sum(t1.embed().conj() * j2).real
    rhs = np.sum(j1.conj() * t2.embed()).real
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)
    embedded = np.sum(t1.embed().conj() * t2.embed()).real
    np.testing.assert_allclose(FixedRankManifold.inner(x, t1, t2), embedded,
                               rtol=1e-10, atol=1e-10)


def test_tangent_vector_arithmetic():
    x, j, rng = _point_and_ambient(4)
    t1 = project_tangent(x, j)
    t2 = project_tangent(x, cgauss(rng, (8, 6)))
    np.testing.assert_allclose((t1 + t2).embed(), t1.embed() + t2.embed(),
                               atol=1e-12)
    np.testing.assert_allclose((2.5 * t1).embed(), 2.5 * t1.embed(),
                               atol=1e-12)
    np.testing.assert_allclose((-t1).embed(), -t1.embed(), atol=1e-12)
    other = random_fixed_rank(8, 6, 2, rng)
    with pytest.raises(ValueError):
        t1 + project_tangent(other, j)


def test_transport_contracts():
    x, j, rng = _point_and_ambient(5)
    d = project_tangent(x, j)
    assert transport(d, x) is d
    y = random_fixed_rank(8, 6, 2, rng)
    td = transport(d, y)
    np.testing.assert_allclose(td.embed(),
                               project_tangent(y, d.embed()).embed(),
                               atol=1e-12)
    np.testing.assert_allclose(np.abs(td.u_p.conj().T @ y.u).max(), 0,
                               atol=1e-10)
    assert np.linalg.norm(td.embed()) <= np.linalg.norm(d.embed()) + 1e-12


def test_retract_zero_step_and_svd_oracle():
    x, j, _ = _point_and_ambient(6)
    d = project_tangent(x, j)
    assert retract(x, d, 0.0) is x
    for step in (1e-3, 0.3, 1.0):
        y = retract(x, d, step)
        y.validate()
        assert y.r == x.r
        u, s, v = truncated_svd(x.dense + step * d.embed(), x.r)
        np.testing.assert_allclose(y.dense, (u * s) @ v.conj().T, atol=1e-10)
    with pytest.raises(ValueError):
        retract(x, d, -1.0)


def test_retract_rank_collapse_raises():
    # Step exactly cancels the smallest singular direction, dropping the
    # rank to r-1 while sigma_1 stays healthy.
    x, _, _ = _point_and_ambient(7)
    d = project_tangent(x, -x.s[-1] * np.outer(x.u[:, -1], x.v[:, -1].conj()))
    with pytest.raises(DegenerateStep):
        retract(x, d, 1.0)


def test_riemannian_grad_directional_derivative():
    # Conjugate-gradient convention: d/de f(x + e*t) = 2 Re<egrad, t>.
    x, a, rng = _point_and_ambient(8)

    def cost(pt):
        return float(np.linalg.norm(pt - a) ** 2)

    grad = riemannian_grad(x, x.dense - a)
    t = project_tangent(x, cgauss(rng, (8, 6)))
    eps = 1e-6
    fd = (cost(x.dense + eps * t.embed())
          - cost(x.dense - eps * t.embed())) / (2 * eps)
    an = 2.0 * FixedRankManifold.inner(x, grad, t)
    np.testing.assert_allclose(fd, an, rtol=1e-6)


def test_circle_project_cases():
    rng = np.random.default_rng(9)
    v = CirclePoint(random_unit_modulus(12, rng))
    np.testing.assert_allclose(circle_project(v, v.v), 0, atol=1e-12)
    np.testing.assert_allclose(circle_project(v, 1j * v.v), 1j * v.v,
                               atol=1e-12)
    t = circle_project(v, cgauss(rng, 12))
    np.testing.assert_allclose(np.real(t * v.v.conj()), 0, atol=1e-12)
    np.testing.assert_allclose(circle_project(v, t), t, atol=1e-12)
    with pytest.raises(ValueError):
        circle_project(v, np.ones(5, complex))


def test_circle_retract_cases():
    rng = np.random.default_rng(10)
    v = CirclePoint(random_unit_modulus(16, rng))
    t = circle_project(v, cgauss(rng, 16))
    assert circle_retract(v, t, 0.0) is v
    w = circle_retract(v, t, 0.7)
    np.testing.assert_allclose(np.abs(w.v), 1.0, atol=1e-12)
    err = {eps: np.linalg.norm(circle_retract(v, t, eps).v - (v.v + eps * t))
           for eps in (1e-3, 1e-4)}
    assert 30 < err[1e-3] / err[1e-4] < 300
    with pytest.raises(DegenerateStep):
        circle_retract(v, -v.v, 1.0)


def test_cg_converges_to_rank_r_target():
    rng = np.random.default_rng(11)
    target = random_fixed_rank(8, 6, 2, rng).dense
    res = cg_minimize(FixedRankManifold,
                      lambda p: float(np.linalg.norm(p.dense - target) ** 2),
                      lambda p: p.dense - target,
                      random_fixed_rank(8, 6, 2, rng),
                      CgOptions(epsilon=1e-12, max_iters=300))
    assert res.trace[-1] < 1e-8
    assert not res.stalled


def test_cg_reaches_eckart_young_floor():
    for seed in range(4):
        rng = np.random.default_rng(seed)
        b = cgauss(rng, (6, 5))
        sig = np.linalg.svd(b, compute_uv=False)
        floor = float(np.sum(sig[2:] ** 2))
        res = cg_minimize(FixedRankManifold,
                          lambda p: float(np.linalg.norm(p.dense - b) ** 2),
                          lambda p: p.dense - b,
                          random_fixed_rank(6, 5, 2, rng),
                          CgOptions(epsilon=1e-14, max_iters=500))
        assert abs(res.trace[-1] - floor) < 1e-6


def test_cg_trace_monotone_many_seeds():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        b = cgauss(rng, (7, 5))
        x0 = random_fixed_rank(7, 5, 2, rng)

        def cost(p):
            return float(np.linalg.norm(p.dense - b) ** 2)

        res = cg_minimize(FixedRankManifold, cost, lambda p: p.dense - b,
                          x0, CgOptions(epsilon=1e-10, max_iters=100))
        assert res.trace[0] == cost(x0)
        assert all(a >= b_ - 1e-12 for a, b_ in zip(res.trace, res.trace[1:]))
        assert len(res.trace) == res.iters + 1


def test_cg_on_circle_manifold():
    rng = np.random.default_rng(12)
    y = random_unit_modulus(10, rng)
    res = cg_minimize(CircleManifold,
                      lambda p: float(np.linalg.norm(p.v - y) ** 2),
                      lambda p: p.v - y,
                      CirclePoint(random_unit_modulus(10, rng)),
                      CgOptions(epsilon=1e-12, max_iters=200))
    assert res.trace[-1] < 1e-8
    np.testing.assert_allclose(np.abs(res.x.v), 1.0, atol=1e-12)


def test_cg_epsilon_stops_early():
    rng = np.random.default_rng(13)
    b = cgauss(rng, (6, 4))
    res = cg_minimize(FixedRankManifold,
                      lambda p: float(np.linalg.norm(p.dense - b) ** 2),
                      lambda p: p.dense - b,
                      random_fixed_rank(6, 4, 2, rng),
                      CgOptions(epsilon=1e12, max_iters=100))
    assert res.iters == 1


def test_cg_rejects_nonfinite_start():
    rng = np.random.default_rng(14)
    x0 = random_fixed_rank(4, 4, 1, rng)
    with pytest.raises(ValueError):
        cg_minimize(FixedRankManifold, lambda p: float("nan"),
                    lambda p: p.dense, x0, CgOptions())


def test_cg_options_validation():
    with pytest.raises(ValueError):
        CgOptions(epsilon=0.0)
    with pytest.raises(ValueError):
        CgOptions(contraction=1.0)
    with pytest.raises(ValueError):
        CgOptions(sufficient_decrease=0.9)


def test_from_dense():
    rng = np.random.default_rng(15)
    a = cgauss(rng, (6, 5))
    x = from_dense(a, 3)
    x.validate()
    u, s, v = truncated_svd(a, 3)
    np.testing.assert_allclose(x.dense, (u * s) @ v.conj().T, atol=1e-12)
    rank2 = cgauss(rng, (6, 2)) @ cgauss(rng, (2, 5))
    with pytest.raises(ValueError):
        from_dense(rank2, 3)
