import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semicp.chain import DomainError
from semicp.meanfield import (
    IntegrationError,
    OdeState,
    decay_envelope,
    decay_envelope_params,
    equilibria,
    integrate,
    vector_field,
)


def test_vector_field_examples():
    assert vector_field((0, 0), 3.7) == (0, 0)
    db, dg = vector_field((0.2, 0.2), 5)
    assert db == pytest.approx(0, abs=1e-15) and dg == pytest.approx(0.2, abs=1e-15)
    db, dg = vector_field(((3 + math.sqrt(5)) / 10, 0.2), 5)
    assert abs(db) <= 1e-12 and abs(dg) <= 1e-12


def test_equilibria_examples():
    assert equilibria(2).points == [(0.0, 0.0)]
    eq = equilibria(5)
    assert [p.b for p in eq.points] == pytest.approx([0, 0.0763932022500210, 0.5236067977499790], abs=1e-12)
    assert all(p.g == pytest.approx(0.2) for p in eq.points[1:]) and not eq.critical
    eq = equilibria(4)
    assert eq.critical and eq.points == [(0.0, 0.0), (0.25, 0.25)]


@pytest.mark.parametrize("lam,count", [(3.0, 0), (3.5, 0), (3.9, 0), (4.0, 1), (4.1, 2), (5.0, 2), (8.0, 2)])
def test_criticality_scan(lam, count):
    eq = equilibria(lam)
    assert sum(p.b > 0 for p in eq.points) == count
    assert eq.critical == (lam == 4.0)
    for p in eq.points:
        assert sum(map(abs, vector_field(p, lam))) <= 1e-10
    assert [p.b for p in eq.points] == sorted(p.b for p in eq.points)


@given(st.floats(0.01, 20))
def test_equilibria_residuals(lam):
    eq = equilibria(lam)
    assert eq.points[0] == (0, 0)
    for p in eq.points:
        assert sum(map(abs, vector_field(p, lam))) <= 1e-10


def test_integrate_zero_is_fixed():
    path = integrate((0, 0), 2.5, 10)
    assert np.all(path.states == 0)


def test_integrate_subcritical_decay():
    path = integrate((1, 0), 2, 30)
    assert sum(map(abs, path.final())) < 1e-3
    half = integrate((1, 0), 2, 30, step=5e-4)
    assert np.max(np.abs(half.states[::2] - path.states)) <= 1e-6


def test_integrate_grid_shape():
    path = integrate((0.5, 0.1), 3, 1.0, step=1e-3)
    assert len(path.states) == 1001 and path.times[-1] == pytest.approx(1.0)
    path = integrate((0.5, 0.1), 3, 0.25, step=0.01)
    assert len(path.states) == 26
    assert path.at(0.0) == (0.5, 0.1)


def test_richardson_self_consistency():
    a = integrate((1, 0), 3, 10, step=1e-3)
    b = integrate((1, 0), 3, 10, step=5e-4)
    assert np.max(np.abs(b.states[::2] - a.states)) <= 1e-6


def test_flow_derivative_matches_vector_field():
    path = integrate((0.9, 0.05), 3, 5, step=1e-3)
    h = path.step
    deriv = (path.states[2:] - path.states[:-2]) / (2 * h)
    field = np.array([vector_field(s, 3) for s in path.states[1:-1]])
    rel = np.abs(deriv - field).sum(axis=1) / np.abs(field).sum(axis=1)
    assert np.max(rel) <= 1e-4


def test_integrate_validation():
    with pytest.raises(DomainError):
        integrate((0.8, 0.5), 2, 1)
    with pytest.raises(DomainError):
        integrate((0.5, 0.1), 2, 1, step=0.1)
    with pytest.raises(DomainError):
        integrate((0.5, 0.1), 2, 0)


def test_integration_error_is_raised():
    # a huge rate pushes RK4 with step 1e-2 out of the triangle
    with pytest.raises(IntegrationError):
        integrate((0.5, 0.0), 2000.0, 1.0, step=1e-2)


@pytest.mark.parametrize("lam", [1.0, 2.0, 4.0, 6.0])
def test_invariant_region_random_starts(lam):
    rng = np.random.default_rng(int(lam * 10))
    for _ in range(25):
        b, g = rng.dirichlet([1, 1, 1])[:2]
        path = integrate((b, g), lam, 5.0)
        assert all(OdeState(*s).in_region(1e-9) for s in path.states)


def test_envelope_params_examples():
    e = decay_envelope_params(2)
    assert e.g_star == pytest.approx(0.190983005625, abs=1e-10)
    assert e.b_argmax == pytest.approx((math.sqrt(5) - 1) / 4, abs=1e-6)
    assert e.g_tilde == pytest.approx(0.3454915028125, abs=1e-10)
    assert decay_envelope_params(4).g_star == pytest.approx(0.25, abs=1e-10)


@given(st.floats(0.05, 3.99))
def test_envelope_params_ordering(lam):
    e = decay_envelope_params(lam)
    assert 0 <= e.g_star < 1 / lam
    assert e.g_star <= e.g_tilde < 1 / lam


def test_decay_envelope_examples():
    assert decay_envelope(3, 0) == (1.0, 0.0)
    b, _ = decay_envelope(2, 10)
    assert b == pytest.approx(math.exp((2 * 0.3454915028125 - 1) * 10), rel=1e-9)
    assert b == pytest.approx(0.0455, abs=5e-4)
    with pytest.raises(DomainError):
        decay_envelope(4, 1)


@pytest.mark.parametrize("lam", [1.0, 2.0, 3.0, 3.9])
def test_envelope_domination(lam):
    path = integrate((1, 0), lam, 20)
    bb, gb = decay_envelope(lam, path.times)
    assert np.all(path.b <= bb + 1e-6)
    assert np.all(path.g <= gb + 1e-6)
