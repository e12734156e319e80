import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrelax.errors import AmbiguityError, SceneError
from membrelax.fields import (AcPart, Atom, BendingMeasure, CantorPart, LinePart, besicovitch_split, bump, cantor,
                              cantor_integral, horizontal_jump_scene, measure_total_variation, plateau,
                              require_valid, scene_from_dict, staircase_scene, total_variations,
                              unit_square_scene, validate_scene, weakstar_pairing)


def test_cantor_function_values():
    assert cantor(0.0) == 0.0 and cantor(1.0) == pytest.approx(1.0)
    assert cantor(0.5) == pytest.approx(0.5)
    assert cantor(0.25) == pytest.approx(1 / 3)


def test_cantor_integral_frozen_and_against_quad():
    assert cantor_integral(1 / 3) == pytest.approx(1 / 12, abs=1e-14)
    assert cantor_integral(1.0) == pytest.approx(0.5, abs=1e-14)
    # the staircase is monotone, so left and right Riemann sums bracket the integral
    n = 20000
    for t in (0.2, 0.5, 0.8):
        vals = np.array([cantor(s) for s in np.linspace(0, t, n + 1)])
        lo, hi = vals[:-1].sum() * t / n, vals[1:].sum() * t / n
        assert lo - 1e-12 <= cantor_integral(t) <= hi + 1e-12


def jump_doc(**over):
    doc = {"domain": [0, 0, 1, 1],
           "regions": [{"name": "lo", "rect": [0, 0, 1, 0.5]},
                       {"name": "hi", "rect": [0, 0.5, 1, 1], "c": [1, 0, 0]}],
           "jumps": [{"points": [[0, 0.5], [1, 0.5]], "minus": "lo", "plus": "hi"}]}
    doc.update(over)
    return doc


def test_valid_jump_scene():
    scene, _ = scene_from_dict(jump_doc())
    assert validate_scene(scene).ok


def test_validation_codes():
    bad = jump_doc(jumps=[{"points": [[0, 0.5], [1, 0.5]], "minus": "lo", "plus": "hi", "z": [0, 1, 0]}])
    assert "trace-mismatch" in validate_scene(scene_from_dict(bad)[0]).codes()
    gap = jump_doc(regions=[{"name": "lo", "rect": [0, 0, 1, 0.4]},
                            {"name": "hi", "rect": [0, 0.5, 1, 1], "c": [1, 0, 0]}])
    assert "partition-gap" in validate_scene(scene_from_dict(gap)[0]).codes()
    missing = jump_doc(jumps=[])
    assert "missing-jump" in validate_scene(scene_from_dict(missing)[0]).codes()
    with pytest.raises(SceneError):
        require_valid(scene_from_dict(missing)[0])


def test_split_routes_parts_to_carriers():
    scene = horizontal_jump_scene(np.array([1.0, 0, 0]))
    m = BendingMeasure(ac=(AcPart((0, 0, 1, 1), np.array([0, 0, 1.0])),),
                       lines=(LinePart(np.array([0.25, 0.5]), np.array([1.5, 0.5]) * [1, 1] - [0.5, 0],
                                       np.array([0, 0, 2.0])),
                              LinePart(np.array([0.5, 0.1]), np.array([0.5, 0.3]), np.array([1.0, 0, 0]))),
                       atoms=(Atom(np.array([0.2, 0.2]), np.array([0, 0, 1.0])),))
    split = besicovitch_split(scene, m)
    assert len(split.b_j) == 1 and len(split.b_sigma.lines) == 1 and len(split.b_sigma.atoms) == 1
    assert measure_total_variation(split.total()) == pytest.approx(measure_total_variation(m))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-2, 2), st.floats(-2, 2))
def test_split_resums_to_the_measure(x, w, d):
    scene = horizontal_jump_scene(np.array([1.0, 0, 0]))
    m = BendingMeasure(lines=(LinePart(np.array([0.0, 0.5]), np.array([x, 0.5]), np.array([0, 0, w])),),
                       atoms=(Atom(np.array([x, 0.25]), np.array([d, 0, 0])),))
    split = besicovitch_split(scene, m)
    assert measure_total_variation(split.total()) == pytest.approx(measure_total_variation(m))
    f = bump((0.5, 0.5), 0.5)
    assert np.allclose(weakstar_pairing(split.total(), f).value, weakstar_pairing(m, f).value)


def test_near_miss_is_ambiguous():
    scene = horizontal_jump_scene(np.array([1.0, 0, 0]))
    m = BendingMeasure(lines=(LinePart(np.array([0.0, 0.5 + 1e-7]), np.array([1.0, 0.5 + 1e-7]),
                                       np.array([0, 0, 1.0])),))
    with pytest.raises(AmbiguityError):
        besicovitch_split(scene, m)


def test_cantor_part_routing():
    scene = staircase_scene(np.array([1.0, 0, 0]))
    on = BendingMeasure(cantor=CantorPart(np.array([0, 0, 1.0]), 0.0, 1.0, 0.0, 1.0))
    assert besicovitch_split(scene, on).b_c.cantor is not None
    off = BendingMeasure(cantor=CantorPart(np.array([0, 0, 1.0]), 0.0, 0.5, 0.0, 1.0))
    assert besicovitch_split(scene, off).b_sigma.cantor is not None


def test_total_variations_closed_forms():
    tv = total_variations(horizontal_jump_scene(np.array([1.0, 0, 0])))
    assert tv["Du"] == pytest.approx(1.0) and tv["H1_J"] == pytest.approx(1.0)
    tv = total_variations(staircase_scene(np.array([2.0, 0, 0])))
    assert tv["Dc"] == pytest.approx(2.0)


def test_atom_pairing_picks_the_point_value():
    m = BendingMeasure(atoms=(Atom(np.array([0.5, 0.5]), np.array([0, 0, 2.0])),))
    assert np.allclose(weakstar_pairing(m, bump((0.5, 0.5), 0.25)).value, [0, 0, 2.0])


def test_cantor_pairing_of_constant_is_the_mass():
    m = BendingMeasure(cantor=CantorPart(np.array([1.0, 0, 0]), 0.0, 1.0, 0.0, 1.0))
    res = weakstar_pairing(m, lambda x: np.ones(np.asarray(x).shape[:-1]))
    assert np.allclose(res.value, [1.0, 0, 0])


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_pairing_is_linear(a, b):
    m = BendingMeasure(ac=(AcPart((0, 0, 1, 1), np.array([1.0, 2.0, 0])),),
                       lines=(LinePart(np.array([0.1, 0.2]), np.array([0.9, 0.7]), np.array([0, 1.0, 0])),))
    f, g = bump((0.4, 0.5), 0.3), plateau((0.5, 0.5), 0.1, 0.3)
    combo = lambda x: a * f(x) + b * g(x)
    combo.breaks = tuple(fb + gb for fb, gb in zip(f.breaks, g.breaks))
    lhs = weakstar_pairing(m, combo).value
    rhs = a * weakstar_pairing(m, f).value + b * weakstar_pairing(m, g).value
    assert np.allclose(lhs, rhs, atol=1e-8)


def test_plateau_is_one_inside():
    f = plateau((0.0, 0.0), 0.1, 0.2)
    assert f(np.array([0.05, -0.09])) == 1.0 and f(np.array([0.25, 0.0])) == 0.0


def test_unit_square_scene_is_valid():
    assert validate_scene(unit_square_scene()).ok
