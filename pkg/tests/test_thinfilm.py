import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrelax.cell import CellField, CellGrid, CellSolution, qstar
from membrelax.errors import DomainError, ResolutionError
from membrelax.fields import BendingMeasure, bump, horizontal_jump_scene, plateau, unit_square_scene
from membrelax.models import ConvexNorm, SeparableLaminate, join
from membrelax.thinfilm import (RadialMollifier, SlabField, SlabGrid, check_eps_list, dirac_grid, dirac_l1_distance,
                                eta, example_dirac, gamma_study, graded_axis, moment_average, recovery_bulk,
                                scaled_energy, smooth_box, smooth_heaviside, trend_ok)

E1, E3 = np.eye(3)[0], np.eye(3)[2]
UNIT = (0.0, 0.0, 1.0, 1.0)

# 1 - w + int sqrt(w^2 + eta^2) dt: energy of the smoothed unit jump in the
# convex model, by adaptive quadrature of the 1D profile (frozen)
JUMP_PROFILE = {1 / 8: 1.905078060900581, 1 / 16: 1.949040887447314,
                1 / 32: 1.9732021932893073, 1 / 64: 1.9861015039164756}


def test_profiles():
    t = np.linspace(-0.5, 0.5, 200001)
    assert np.trapezoid(eta(t), t) == pytest.approx(1.0, abs=1e-9)
    assert smooth_heaviside(-0.6) == 0.0 and smooth_heaviside(0.6) == 1.0
    s = np.linspace(-1, 3, 400001)
    assert np.trapezoid(smooth_box(s, 2.0, 0.3), s) == pytest.approx(2.0, abs=1e-8)


def test_mollifier_unit_mass_and_column():
    m = RadialMollifier()
    g = np.linspace(-0.5, 0.5, 101)
    h = g[1] - g[0]
    Y = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1)
    assert m(Y).sum() * h ** 3 == pytest.approx(1.0, abs=1e-6)
    # the column integral is the running integral of rho along x3
    s = np.linspace(-0.5, 0.2, 20001)
    run = np.trapezoid(m(np.stack([np.full_like(s, 0.1), np.zeros_like(s), s], -1)), s)
    assert float(m.column(np.array([0.1, 0.0]), 0.2)) == pytest.approx(run, abs=1e-8)


def test_graded_axis_resolves_features():
    xs = graded_axis(0.0, 1.0, [(0.5, 0.01, 0.001)], 1 / 16)
    inside = xs[(xs >= 0.49) & (xs <= 0.51)]
    assert len(inside) >= 18
    assert np.all(np.diff(xs) > 0) and xs[0] == 0 and xs[-1] == 1
    assert np.max(np.diff(xs)) <= 1 / 16 + 1e-12


def zero_corrector(grid=CellGrid(8, 4), b=np.zeros(3)):
    values = np.zeros(grid.node_shape)
    values[..., :] += grid.x3[None, None, :, None] * b
    return CellSolution(float("nan"), 1.0, CellField(grid, values), {})


def test_recovery_with_zero_corrector_is_affine_plus_tilt():
    cv = ConvexNorm()
    xi = np.array([[0.3, 0.0], [0.0, 0.2], [0.1, 0.1]])
    b = np.array([0.0, 0.0, 0.4])
    grid = SlabGrid.uniform(UNIT, (8, 8, 4))
    u = recovery_bulk(cv, xi, b, 0.1, zero_corrector(b=b), grid)
    assert scaled_energy(cv, u, 0.1) == pytest.approx(float(cv.value(join(xi, b))), rel=1e-12)
    assert np.allclose(moment_average(u, 0.1).mean(), b)


def test_laminate_recovery_energy():
    lam = SeparableLaminate()
    sol = qstar(lam, np.zeros((3, 2)), np.zeros(3))
    u = recovery_bulk(lam, np.zeros((3, 2)), np.zeros(3), 1 / 16, sol, SlabGrid.uniform(UNIT, (8, 8, 16)))
    assert scaled_energy(lam, u, 1 / 16) == pytest.approx(0.5, rel=0.05)
    assert np.allclose(moment_average(u, 1 / 16).mean(), 0.0, atol=1e-12)


def test_unresolved_oscillation_is_an_error():
    grid = CellGrid(8, 4)
    rng = np.random.default_rng(1)
    wiggly = CellSolution(1.0, 1.0, CellField(grid, rng.normal(size=grid.node_shape)), {})
    with pytest.raises(ResolutionError) as info:
        recovery_bulk(ConvexNorm(), np.zeros((3, 2)), np.zeros(3), 0.01, wiggly,
                      SlabGrid.uniform(UNIT, (16, 16, 4)))
    assert info.value.min_shape[0] >= 800


@settings(max_examples=20, deadline=None)
@given(st.integers(-40, 40), st.integers(-40, 40), st.integers(-40, 40))
def test_scaled_energy_ignores_constants(a, b, c):
    # dyadic values and shifts keep every difference exact in floating point
    rng = np.random.default_rng(0)
    grid = SlabGrid.uniform(UNIT, (4, 4, 4))
    u = SlabField(grid, rng.integers(-64, 64, size=(5, 5, 5, 3)) / 64)
    v = SlabField(grid, u.values + np.array([a, b, c]) / 8)
    assert scaled_energy(ConvexNorm(), u, 0.1) == scaled_energy(ConvexNorm(), v, 0.1)


def test_slab_round_trip(tmp_path):
    grid = SlabGrid.uniform(UNIT, (4, 5, 6))
    u = SlabField(grid, np.random.default_rng(2).normal(size=(5, 6, 7, 3)))
    u.save(tmp_path / "slab")
    back = SlabField.load(tmp_path / "slab")
    assert np.array_equal(back.values, u.values) and np.array_equal(back.grid.zs, grid.zs)


def test_dirac_example():
    for eps in (1 / 16, 1 / 64):
        u = example_dirac(eps, dirac_grid(eps))
        # radial rho: the exact L1 distance is eps/2
        assert dirac_l1_distance(u) == pytest.approx(eps / 2, rel=1e-3)
        assert dirac_l1_distance(u) <= eps
        m = moment_average(u, eps)
        assert m.pair(plateau((0, 0), 0.1, 0.2))[2] == pytest.approx(1.0, rel=0.01)
    off = [moment_average(example_dirac(e, dirac_grid(e)), e).pair(bump((0.25, 0.0), 0.25))[2]
           for e in (1 / 16, 1 / 64)]
    assert off[0] >= 4 * off[1] > 0


def test_dirac_resolution_and_domain_errors():
    with pytest.raises(ResolutionError):
        example_dirac(1 / 64, SlabGrid.uniform((-0.5, -0.5, 0.5, 0.5), (32, 32, 8)))
    with pytest.raises(DomainError):
        example_dirac(1 / 16, dirac_grid(1 / 16, domain=(0.1, 0.1, 1.0, 1.0)))


def test_jump_study_matches_profile_oracle():
    st_ = gamma_study(ConvexNorm(), horizontal_jump_scene(E1), BendingMeasure(), "recovery",
                      (1 / 8, 1 / 16, 1 / 32, 1 / 64))
    for row in st_.rows:
        assert row.J_eps == pytest.approx(JUMP_PROFILE[row.eps], rel=5e-3)
    assert st_.rel_gaps()[-1] <= 0.05 and st_.verdict


def test_study_csv_layout():
    scene = unit_square_scene(0.2 * np.outer(E1, [1.0, 0.0]))
    st_ = gamma_study(ConvexNorm(), scene, BendingMeasure(), "recovery", (0.5, 0.25))
    rows = st_.csv_rows()
    assert rows[0][:4] == ["eps", "J_eps", "E_target", "rel_gap"] and rows[0][-1] == "verdict"
    assert len(rows[0]) == 5 + len(st_.names) and len(rows) == 3


def test_study_rows_record_build_errors(tmp_path):
    st_ = gamma_study(ConvexNorm(), unit_square_scene(), BendingMeasure(), "slab-files", (0.5, 0.25),
                      slab_files={0.5: tmp_path / "none", 0.25: tmp_path / "none"})
    assert all(r.error for r in st_.rows) and not st_.verdict


def test_eps_list_must_decrease():
    with pytest.raises(DomainError):
        check_eps_list([0.1, 0.2])
    assert check_eps_list([0.5, 0.25]) == [0.5, 0.25]


def test_trend():
    assert trend_ok([1.0, 0.5, 0.25]) and not trend_ok([0.1, 0.2, 0.4])
    assert trend_ok([1e-10, 3e-10], floor=1e-9)
