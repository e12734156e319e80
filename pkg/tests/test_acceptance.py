"""The twelve acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line (collected again in the terminal
summary).  The checks themselves live in :mod:`membrelax.verify` so the
``verify`` command runs the same code.
"""

import time

import pytest

from membrelax import verify

from conftest import ACCEPTANCE_LINES


@pytest.fixture(scope="module")
def ctx():
    return verify.Context(seed=0)


def report(number, title, result, extra=""):
    word = "PASS" if result.ok else "FAIL"
    line = f"{word} criterion {number:2d} {title}: slack={result.slack:.4g}{extra}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return result.ok


def test_01_convex_collapse(ctx):
    t0 = time.perf_counter()
    res = verify.check_convex(ctx)
    elapsed = time.perf_counter() - t0
    res.ok = res.ok and elapsed <= 300
    assert report(1, "convex collapse", res, f" runtime={elapsed:.1f}s"), res.detail


def test_02_growth_bounds(ctx):
    res = verify.check_growth(ctx)
    assert report(2, "growth bounds", res, f" violations={res.detail['violations']}"), res.detail


def test_03_laminate_oracle(ctx):
    res = verify.check_laminate(ctx)
    assert res.detail["oracle"] == pytest.approx(0.5, abs=1e-12)
    assert report(3, "laminate oracle", res, f" value={res.detail['value']:.6f}"), res.detail


def test_04_inf_b_identity(ctx):
    res = verify.check_inf_b(ctx)
    assert report(4, "inf_b identity", res), res.detail


def test_05_idempotence(ctx):
    res = verify.check_idempotence(ctx)
    assert report(5, "idempotence", res), res.detail


def test_06_surface_density(ctx):
    res = verify.check_surface(ctx)
    assert report(6, "surface density equality", res), res.detail


def test_07_rotated_cell(ctx):
    res = verify.check_rotated(ctx)
    assert report(7, "rotated-cell invariance", res), res.detail


def test_08_directional_convexity(ctx):
    res = verify.check_directional(ctx)
    assert report(8, "directional convexity", res), res.detail


def test_09_membrane_closed_forms(ctx):
    res = verify.check_membrane(ctx)
    assert report(9, "membrane closed forms", res), res.detail


def test_10_recovery_study(ctx):
    t0 = time.perf_counter()
    res = verify.check_gamma(ctx)
    elapsed = time.perf_counter() - t0
    res.ok = res.ok and elapsed <= 600
    assert report(10, "recovery desk check", res, f" final_gap={res.detail['rel_gap'][-1]:.3g}"), res.detail


def test_11_dirac_example(ctx):
    res = verify.check_dirac(ctx)
    extra = f" decrease={res.detail['decrease']:.1f}x"
    assert report(11, "Dirac moment example", res, extra), res.detail


def test_12_liminf_sanity(ctx):
    res = verify.check_liminf(ctx)
    assert report(12, "one-sided liminf", res), res.detail
