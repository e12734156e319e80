import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from membrelax.cell import (CellField, CellGrid, CellSolution, JumpSpec, RotatedDensity, SolverBudget,
                            cell_gradient, cell_gradient_T, check_directional_convexity, frame, gamma_surface,
                            q_tol, qstar, qstar_recession, qstar_rotated, qstar_sweep, qw_zero, sweep_rows_csv)
from membrelax.errors import DomainError
from membrelax.models import ConvexNorm, SeparableLaminate, join
from membrelax.oracles import convex_norm_value, well_envelope

SMALL = CellGrid(8, 4)
QUICK = SolverBudget(starts=4)
E1, E3 = np.eye(3)[0], np.eye(3)[2]


def test_default_tolerance():
    assert q_tol(CellGrid()) == pytest.approx(0.05 * (1 / 16 + 1 / 8))


def test_grid_validation():
    with pytest.raises(DomainError):
        CellGrid(3, 8)
    with pytest.raises(DomainError):
        CellGrid(16, 1)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (5, 5, 4, 3), elements=st.floats(-3, 3)),
       arrays(np.float64, (5, 5, 3, 3, 2), elements=st.floats(-3, 3)),
       arrays(np.float64, (5, 5, 3, 3), elements=st.floats(-3, 3)))
def test_cell_gradient_adjoint(psi, ga, g3):
    h, h3 = 1 / 5, 1 / 3
    a, b = cell_gradient(psi, h, h3)
    lhs = np.sum(a * ga) + np.sum(b * g3)
    rhs = np.sum(psi * cell_gradient_T(ga, g3, h, h3))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_frame_is_a_rotation_onto_nu():
    nu = np.array([0.6, 0.8])
    R = frame(nu)
    assert np.allclose(R.T @ R, np.eye(2))
    assert np.allclose(R[:, 1], nu)
    assert np.allclose(frame([0.0, 1.0]), np.eye(2))


def test_convex_collapse_small_samples():
    cv = ConvexNorm()
    for xi, b in [(np.zeros((3, 2)), np.zeros(3)), (np.zeros((3, 2)), E3),
                  (0.5 * np.outer(E1, [1.0, 0.0]), 0.5 * E3)]:
        sol = qstar(cv, xi, b)
        assert sol.value == pytest.approx(float(convex_norm_value(join(xi, b))), rel=0.02)
        assert abs(sol.diagnostics["constraint_residual"]) < 1e-10


def test_laminate_relaxes_below_the_trivial_point_and_above_the_envelope():
    lam = SeparableLaminate()
    b = np.array([0.0, 0.0, 0.5])
    sol = qstar(lam, np.zeros((3, 2)), b, SMALL, QUICK)
    trivial = float(lam.value(join(np.zeros((3, 2)), b)))
    lower = float(well_envelope(lam)(b[None])[0])
    assert sol.value <= trivial + 1e-12
    assert sol.value >= lower - 1e-3
    assert sol.value == pytest.approx(0.5, rel=0.05)


def test_same_seed_same_answer():
    lam = SeparableLaminate()
    a = qstar(lam, np.zeros((3, 2)), np.zeros(3), SMALL, QUICK)
    b = qstar(lam, np.zeros((3, 2)), np.zeros(3), SMALL, QUICK)
    assert a.value == b.value and a.lam == b.lam
    assert np.array_equal(a.field.values, b.field.values)


def test_solution_round_trip():
    sol = qstar(ConvexNorm(), np.zeros((3, 2)), E3, SMALL, QUICK)
    back = CellSolution.from_dict(sol.to_dict())
    assert back.value == sol.value and back.lam == sol.lam
    assert np.array_equal(back.field.values, sol.field.values)


def test_field_sampling_is_periodic():
    rng = np.random.default_rng(0)
    grid = CellGrid(8, 4)
    values = rng.normal(size=grid.node_shape)
    f = CellField(grid, values)
    y = rng.uniform(-0.5, 0.5, size=(20, 2))
    x3 = rng.uniform(-0.5, 0.5, size=20)
    assert np.allclose(f.sample(y, x3), f.sample(y + [1.0, -2.0], x3))


@settings(max_examples=5, deadline=None)
@given(st.floats(0.5, 4.0))
def test_recession_is_positively_homogeneous(t):
    cv = ConvexNorm()
    xi = 0.3 * np.outer(E1, [1.0, 0.0])
    b = 0.4 * E3
    base = qstar_recession(cv, xi, b, SMALL, QUICK)
    assert qstar_recession(cv, t * xi, t * b, SMALL, QUICK) == pytest.approx(t * base, rel=1e-9)


def test_recession_of_convex_model_is_the_norm():
    v = qstar_recession(ConvexNorm(), np.outer(E1, [0.0, 1.0]), np.zeros(3), SMALL, QUICK)
    assert v == pytest.approx(1.0, rel=0.03)


def test_rotated_cell_convex_blind_to_rotation():
    cv = ConvexNorm()
    nu = (1 / math.sqrt(2), 1 / math.sqrt(2))
    sol = qstar_rotated(cv, np.zeros((3, 2)), E3, nu, SMALL, QUICK)
    assert sol.value == pytest.approx(math.sqrt(2), rel=0.03)
    assert sol.diagnostics["nu"] == list(nu)


def test_rotated_density_matches_direct_evaluation():
    cv = ConvexNorm()
    R = frame((0.6, 0.8))
    xi = np.arange(9.0).reshape(3, 3) / 10
    eta = xi.copy()
    eta[:, :2] = xi[:, :2] @ R
    assert float(RotatedDensity(cv, R).value(eta)) == pytest.approx(float(cv.value(xi)))


def test_gamma_surface_examples():
    cv = ConvexNorm()
    assert gamma_surface(cv, JumpSpec((1.0, 0.0, 0.0), (0.0, 1.0), (0.0, 0.0, 0.0)), SMALL, QUICK) == \
        pytest.approx(1.0, rel=0.03)
    with pytest.raises(DomainError):
        JumpSpec((1.0, 0.0, 0.0), (0.0, 2.0), (0.0, 0.0, 0.0))


def test_qw_zero_convex():
    xi = np.outer(E1, [1.0, 0.0])
    assert qw_zero(ConvexNorm(), xi, SMALL, QUICK) == pytest.approx(math.sqrt(2), rel=0.02)


def test_sweep_reports_row_errors_without_aborting():
    samples = [(np.zeros((3, 2)), np.zeros(3)), (np.full((3, 2), np.nan), np.zeros(3))]
    rows = qstar_sweep(ConvexNorm(), samples, SMALL, QUICK)
    assert rows[0].error is None and rows[1].error is not None
    table = sweep_rows_csv(rows)
    assert table[0] == ["xi11", "xi12", "xi21", "xi22", "xi31", "xi32", "b1", "b2", "b3",
                        "value", "lambda", "iters", "flag"]
    assert table[2][-1].startswith("error:")


def test_directional_convexity_needs_rank_one():
    with pytest.raises(DomainError):
        check_directional_convexity(ConvexNorm(), (np.zeros((3, 2)), np.zeros(3)),
                                    (np.array([[1.0, 0], [0, 1.0], [0, 0]]), np.zeros(3)), [0, 1, 2])


def test_directional_convexity_convex_model():
    rep = check_directional_convexity(ConvexNorm(), (np.zeros((3, 2)), np.zeros(3)),
                                      (np.zeros((3, 2)), E3), np.linspace(-1, 1, 5), SMALL, QUICK)
    assert rep["ok"] and rep["worst"] <= rep["tolerance"]
