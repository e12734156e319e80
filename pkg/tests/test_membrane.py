import numpy as np
import pytest

from membrelax.fields import (AcPart, Atom, BendingMeasure, CantorPart, horizontal_jump_scene, staircase_scene,
                              total_variations, unit_square_scene)
from membrelax.membrane import (DensityCache, LoadSet, MomentLoad, load_work, membrane_energy,
                                membrane_energy_no_moment)
from membrelax.models import ConvexNorm, SeparableLaminate

E1, E3 = np.eye(3)[0], np.eye(3)[2]
ATOM = BendingMeasure(atoms=(Atom(np.array([0.5, 0.5]), E3),))


def test_atom_scene_closed_form():
    e = membrane_energy(ConvexNorm(), unit_square_scene(), ATOM)
    assert e.bulk == pytest.approx(1.0, rel=0.03)
    assert e.singular == pytest.approx(1.0, rel=0.03)
    assert e.jump == 0.0 and e.cantor == 0.0
    assert e.total == pytest.approx(2.0, rel=0.03)


def test_jump_scene_closed_form():
    e = membrane_energy(ConvexNorm(), horizontal_jump_scene(E1))
    assert e.jump == pytest.approx(1.0, rel=0.03) and e.total == pytest.approx(2.0, rel=0.03)


def test_no_moment_energy():
    cv = ConvexNorm()
    assert membrane_energy_no_moment(cv, unit_square_scene()).total == pytest.approx(1.0, rel=0.02)
    assert membrane_energy_no_moment(cv, horizontal_jump_scene(E1)).total == pytest.approx(2.0, rel=0.03)


def test_no_moment_is_below_every_sampled_moment():
    cv = ConvexNorm()
    scene = unit_square_scene(0.3 * np.outer(E1, [1.0, 0.0]))
    base = membrane_energy_no_moment(cv, scene).total
    tol = 0.05 * (1 / 16 + 1 / 8)
    for b in (np.zeros(3), 0.5 * E3, np.array([0.2, -0.3, 0.1])):
        m = BendingMeasure(ac=(AcPart((0, 0, 1, 1), b),))
        assert base <= membrane_energy(cv, scene, m).total + tol


def test_lower_growth_bound():
    cv = ConvexNorm()
    scene = horizontal_jump_scene(2 * E1)
    e = membrane_energy(cv, scene, ATOM)
    tv = total_variations(scene, ATOM)
    slack = sum(e.tolerances[k] for k in ("bulk", "jump", "cantor", "singular"))
    assert e.total >= cv.constants.beta_lo * (tv["Du"] + tv["b"]) - slack


def test_staircase_cantor_term_for_the_laminate():
    # (Q*W)^inf = |xi_bar| + 3/2 |b| for the separable model
    scene = staircase_scene(E1)
    m = BendingMeasure(cantor=CantorPart(0.5 * E3, 0.0, 1.0, 0.0, 1.0))
    e = membrane_energy(SeparableLaminate(), scene, m)
    assert e.cantor == pytest.approx(1.0 + 0.75, rel=0.03)


def test_cache_reuses_densities():
    cache = DensityCache()
    cv = ConvexNorm()
    membrane_energy(cv, unit_square_scene(), ATOM, cache=cache)
    misses = cache.misses
    membrane_energy(cv, unit_square_scene(), ATOM, cache=cache)
    assert cache.misses == misses and cache.hits > 0


def test_load_work_examples():
    scene = unit_square_scene(c=np.array([3.0, 0.0, 0.0]))
    assert load_work(LoadSet(), scene) == 0.0
    assert load_work(LoadSet(f_bar=(1.0, 0.0, 0.0)), scene) == pytest.approx(3.0)
    atom = BendingMeasure(atoms=(Atom(np.array([0.5, 0.5]), 0.5 * E3),))
    loads = LoadSet(g0_plus=MomentLoad("bump", (0.0, 0.0, 1.0), (0.5, 0.5), 0.25))
    assert load_work(loads, unit_square_scene(), atom) == pytest.approx(0.5)


def test_moment_load_must_vanish_on_the_boundary():
    from membrelax.errors import DomainError
    bad = LoadSet(g0_plus=MomentLoad("bump", (0.0, 0.0, 1.0), (0.0, 0.5), 0.25))
    with pytest.raises(DomainError):
        bad.check((0.0, 0.0, 1.0, 1.0))
    assert LoadSet(g0_plus=MomentLoad("sine", (1.0, 0.0, 0.0))).check((0.0, 0.0, 1.0, 1.0))
