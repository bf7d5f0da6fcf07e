import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ferrojunction.grid import PARALLEL_E3, TANGENTIAL, build_boundary_mask, build_grid_a, build_grid_b
from ferrojunction.operators import (
    MaskMismatch,
    div_matrix,
    div_scaled,
    full_grad_matrix,
    grad_matrix,
    grad_scaled,
    integrate,
    project_parallel_e3,
    project_tangential,
    rot_matrix,
    rot_scaled,
)


def test_grad_of_x3_and_x1():
    g = build_grid_a((5, 6, 7), 0.1)
    X1, _, X3 = g.coords
    np.testing.assert_allclose(grad_scaled(X3, g), np.stack([0 * X3, 0 * X3, 1 + 0 * X3]), atol=1e-12)
    np.testing.assert_allclose(grad_scaled(X1, g)[0], 10.0, atol=1e-10)


def test_grad_sine_second_order():
    errs = []
    for n in (17, 33, 65):
        g = build_grid_a((3, 3, n), 0.5)
        X3 = g.coords[2]
        errs.append(np.abs(grad_scaled(np.sin(np.pi * X3), g)[2] - np.pi * np.cos(np.pi * X3)).max())
    assert errs[1] < 1e-2 * np.pi
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_div_examples():
    gb = build_grid_b((5, 5, 5), 0.2)
    X1, X2, _ = gb.coords
    np.testing.assert_allclose(div_scaled(np.stack([X1, X2, 0 * X1]), gb), 2.0, atol=1e-12)
    np.testing.assert_allclose(div_scaled(grad_scaled(np.full(gb.dims, 3.0), gb), gb), 0.0, atol=1e-12)
    ga = build_grid_a((5, 5, 65), 0.3)
    X3 = ga.coords[2]
    p = np.stack([0 * X3, 0 * X3, np.sin(np.pi * X3)])
    assert np.abs(div_scaled(p, ga) - np.pi * np.cos(np.pi * X3)).max() < 5e-3


def test_rot_examples():
    gb = build_grid_b((5, 5, 5), 0.2)
    X1, X2, _ = gb.coords
    r = rot_scaled(np.stack([-X2, X1, 0 * X1]), gb)
    np.testing.assert_allclose(r, np.stack([0 * X1, 0 * X1, 2 + 0 * X1]), atol=1e-12)
    ga = build_grid_a((7, 7, 9), 0.3)
    X3 = ga.coords[2]
    r = rot_scaled(np.stack([0 * X3, 0 * X3, np.sin(np.pi * X3)]), ga)
    np.testing.assert_array_equal(r[:, 1:-1, 1:-1, 1:-1], 0.0)
    assert np.abs(r).max() < 1e-13  # one-sided boundary stencils leave roundoff


def test_rot_of_smooth_field_second_order():
    # rot of p = (0, 0, sin(pi x1) cos(pi x2)) is (-pi/h sin sin, -pi/h cos cos, 0)
    errs = []
    h = 0.5
    for n in (9, 17, 33):
        g = build_grid_a((n, n, 5), h)
        X1, X2, _ = g.coords
        p = np.stack([0 * X1, 0 * X1, np.sin(np.pi * X1) * np.cos(np.pi * X2)])
        exact = np.stack(
            [-np.pi / h * np.sin(np.pi * X1) * np.sin(np.pi * X2), -np.pi / h * np.cos(np.pi * X1) * np.cos(np.pi * X2), 0 * X1]
        )
        errs.append(np.abs(rot_scaled(p, g) - exact).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_matrix_forms_agree_with_kernels():
    rng = np.random.default_rng(0)
    for g in (build_grid_a((5, 6, 7), 0.1), build_grid_b((4, 5, 6), 0.03)):
        u = rng.standard_normal(g.dims)
        p = rng.standard_normal((3,) + g.dims)
        np.testing.assert_allclose(grad_matrix(g) @ u.ravel(), grad_scaled(u, g).ravel(), atol=1e-9)
        np.testing.assert_allclose(div_matrix(g) @ p.ravel(), div_scaled(p, g).ravel(), atol=1e-9)
        np.testing.assert_allclose(rot_matrix(g) @ p.ravel(), rot_scaled(p, g).ravel(), atol=1e-9)
        assert full_grad_matrix(g).shape == (9 * g.size, 3 * g.size)


def _interior_random(rng, shape, margin=2):
    u = rng.standard_normal(shape)
    core = np.zeros(shape, dtype=bool)
    core[(Ellipsis,) + tuple(slice(margin, -margin) for _ in range(3))] = True
    return np.where(core, u, 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adjoint_consistency_interior_fields(seed):
    rng = np.random.default_rng(seed)
    g = build_grid_a((11, 12, 13), 0.2)
    u = _interior_random(rng, g.dims)
    p = _interior_random(rng, (3,) + g.dims)
    lhs = integrate(np.sum(grad_scaled(u, g) * p, axis=0), g)
    rhs = -integrate(u * div_scaled(p, g), g)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    g = build_grid_b((4, 5, 6), 0.3)
    p, q = rng.standard_normal((2, 3) + g.dims)
    for op in (div_scaled, rot_scaled):
        np.testing.assert_allclose(op(a * p + b * q, g), a * op(p, g) + b * op(q, g), atol=1e-9)


def test_affine_exactness():
    g = build_grid_a((4, 5, 6), 0.25)
    X1, X2, X3 = g.coords
    np.testing.assert_allclose(grad_scaled(2 - X1 + 3 * X2 - 0.5 * X3, g)[1], 12.0, atol=1e-10)


def test_projections():
    g = build_grid_a((5, 5, 5), 0.3)
    ones = np.ones((3,) + g.dims)
    mt = build_boundary_mask(g, TANGENTIAL)
    t = project_tangential(ones, g, mt)
    assert t[0, 0, 2, 2] == 0 and t[1, 0, 2, 2] == 1 and t[2, 0, 2, 2] == 1
    assert t[2, 2, 2, -1] == 0 and t[0, 2, 2, -1] == 1
    np.testing.assert_array_equal(project_tangential(t, g, mt), t)
    np.testing.assert_array_equal(project_tangential(0 * ones, g, mt), 0)
    mp = build_boundary_mask(g, PARALLEL_E3)
    q = project_parallel_e3(ones, g, mp)
    np.testing.assert_array_equal(project_parallel_e3(q, g, mp), q)
    with pytest.raises(MaskMismatch):
        project_tangential(ones, g, mp)
    with pytest.raises(MaskMismatch):
        project_tangential(ones, build_grid_a((5, 5, 6), 0.3), mt)


def test_integrate_examples():
    ga = build_grid_a((5, 5, 33), 0.1)
    assert integrate(np.ones(ga.dims), ga) == pytest.approx(1.0)
    assert integrate(np.sin(np.pi * ga.coords[2]) ** 2, ga) == pytest.approx(0.5, abs=1e-3)
    gb = build_grid_b((6, 6, 6), 0.1)
    assert abs(integrate(gb.coords[0], gb)) < 1e-15


def _tangential_field(g, h):
    x1, x2, x3 = g.coords
    y1, y2 = h * x1, h * x2  # physical in-plane coordinates
    return np.stack(
        [
            np.cos(np.pi * x1) * (1 + np.sin(y2) * x3),
            np.cos(np.pi * x2) * np.cos(x3 + y1),
            np.sin(np.pi * x3) * (1 + y1 * y2),
        ]
    )


def test_fullgrad_equals_rot_plus_div_for_tangential_field():
    h, errs = 0.5, []
    for n in (17, 33, 65):
        g = build_grid_a((n, n, n), h)
        p = _tangential_field(g, h)
        Dp = full_grad_matrix(g) @ p.ravel()
        w = np.tile(g.weights.ravel(), 9)
        full = w @ Dp**2
        rd = integrate(np.sum(rot_scaled(p, g) ** 2, axis=0) + div_scaled(p, g) ** 2, g)
        errs.append(abs(full - rd) / full)
    assert errs[1] < 1e-2
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5
