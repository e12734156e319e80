import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from membrelax.errors import DomainError, ModelError
from membrelax.models import (ConvexNorm, SeparableLaminate, UserTable, builtin_models, certify, check_ladder,
                              eval_density, extrapolate_ladder, join, load_model, model_from_dict,
                              recession_density, w_zero, w_zero_radius)

finite = st.floats(-50, 50, allow_nan=False)
matrices = arrays(np.float64, (3, 3), elements=finite)


def test_convex_norm_closed_forms():
    cv = ConvexNorm()
    assert eval_density(cv, np.zeros((3, 3))) == 1.0
    xi = np.zeros((3, 3))
    xi[1, 2] = 1.0
    assert eval_density(cv, xi) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_eval_density_rejects_bad_input():
    with pytest.raises(DomainError):
        eval_density(ConvexNorm(), np.full((3, 3), np.nan))
    with pytest.raises(DomainError):
        eval_density(ConvexNorm(), np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_growth_sandwich_holds_exactly(xi):
    for model in builtin_models().values():
        c = model.constants
        w = float(model.value(xi))
        n = float(np.linalg.norm(xi))
        split = float(np.linalg.norm(xi[:, :2]) + np.linalg.norm(xi[:, 2]))
        assert c.beta_lo * n <= w <= c.beta_hi * (1 + n)
        # the split-norm form used by the relaxed density
        assert c.beta_lo * split <= w * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(matrices.filter(lambda m: np.linalg.norm(m) > 1e-3))
def test_convex_recession_is_the_norm(xi):
    v = recession_density(ConvexNorm(), xi, closed_form=False)
    assert v == pytest.approx(np.linalg.norm(xi), abs=1e-3 * max(1.0, np.linalg.norm(xi)))


def test_laminate_recession_by_ladder_matches_closed_form():
    lam = SeparableLaminate()
    xi = join(np.array([[0.3, 0.0], [0.0, 0.4], [0.0, 0.0]]), np.array([0.0, 0.5, -0.6]))
    exact = float(lam.recession(xi))
    assert recession_density(lam, xi, closed_form=False) == pytest.approx(exact, rel=1e-3)


def test_ladder_extrapolation_recovers_limit():
    ts = np.array([64.0, 256.0, 1024.0])
    vals = 3.0 + 2.0 * ts ** -0.5
    assert extrapolate_ladder(vals, ts, 0.5, 1e-2) == pytest.approx(3.0, abs=1e-12)


def test_ladder_must_reach_1024():
    with pytest.raises(DomainError):
        check_ladder((16, 64, 256))


def test_w_zero_convex_examples():
    cv = ConvexNorm()
    v, b = w_zero(cv, np.zeros((3, 2)))
    assert v == pytest.approx(1.0, abs=1e-9) and np.allclose(b, 0, atol=1e-6)
    xi = np.zeros((3, 2))
    xi[0, 0] = 1.0
    v, b = w_zero(cv, xi)
    assert v == pytest.approx(math.sqrt(2), abs=1e-9) and np.allclose(b, 0, atol=1e-6)


def test_w_zero_laminate_ties_break_to_a_well():
    v, b = w_zero(SeparableLaminate(), np.zeros((3, 2)))
    assert v == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(np.abs(b), [0, 0, 1], atol=1e-6)
    # the search radius contains the minimizer
    assert np.linalg.norm(b) <= w_zero_radius(SeparableLaminate(), np.zeros((3, 2)))


def test_model_documents(tmp_path):
    with pytest.raises(ModelError):
        model_from_dict({"kind": "nope"})
    with pytest.raises(ModelError):
        # beta_lo too large for the convex norm at the origin region
        model_from_dict({"kind": "convex-norm", "constants": {"beta_lo": 5, "beta_hi": 5, "C": 1, "r": 0.5, "L": 1}})
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "missing.json")
    path = tmp_path / "lam.json"
    path.write_text('{"kind": "separable-laminate", "params": {"weight": 0.5}}')
    assert load_model(path).fingerprint() == SeparableLaminate().fingerprint()


def test_user_table_linear_growth_and_estimated_constants():
    radii = [0.0, 1.0, 2.0, 4.0]
    angles = [0.0, math.pi / 4, math.pi / 2]
    values = [[1.0, 1.0, 1.0], [1.4, 1.5, 1.6], [2.2, 2.4, 2.6], [4.1, 4.5, 4.9]]
    doc = {"kind": "user-table", "params": {"radii": radii, "angles": angles, "values": values}}
    model = model_from_dict(doc)
    assert certify(model).ok
    xi = np.zeros((3, 3))
    xi[0, 0] = 1.0
    assert float(model.value(xi)) == pytest.approx(1.4)
    far = 100 * xi
    assert float(model.value(far)) / 100 == pytest.approx(float(model.recession(xi)), rel=1e-2)


def test_user_table_rejects_bad_tables():
    with pytest.raises(ModelError):
        UserTable([0.0, 1.0], [0.0, math.pi / 2], [[1.0, 1.0], [0.5, 0.5]])


def test_fingerprint_is_stable():
    assert ConvexNorm().fingerprint() == ConvexNorm().fingerprint()
    assert ConvexNorm().fingerprint() != ConvexNorm(2.0).fingerprint()
