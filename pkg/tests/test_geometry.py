import math

import numpy as np
import pytest

from carterkit import catalog
from carterkit.errors import SingularJacobianError
from carterkit.expr import evaluate, free_vars, kernel, parse
from carterkit.geometry import (
    from_cartesian, gauss_solve, pullback_hamiltonian_value, pushforward, transport,
    transport_jacobian, verify_chart_equivalence,
)
from carterkit.system_model import Chart, PhaseState, Sampler, system_from_dict

POLAR = Chart("polar", ("r", "th"), ("p_r", "p_th"), (parse("r*cos(th)"), parse("r*sin(th)")), (parse("r"),))


def test_gauss_solve_matches_numpy(rng):
    A = rng.normal(size=(4, 4))
    b = rng.normal(size=4)
    x, det = gauss_solve(A.tolist(), b.tolist())
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-12)
    assert det == pytest.approx(np.linalg.det(A), rel=1e-12)


def test_polar_pushforward():
    s = pushforward(PhaseState("polar", (2.0, math.pi / 2), (0.0, 2.0)), POLAR)
    np.testing.assert_allclose(s.q, (0.0, 2.0), atol=1e-15)
    np.testing.assert_allclose(s.p, (-1.0, 0.0), atol=1e-15)
    assert s.chart == "cartesian"


def test_pushforward_at_a_singular_point(systems):
    chart = systems["evans"].charts["rotparabolic"]
    with pytest.raises(SingularJacobianError, match="rotparabolic"):
        pushforward(PhaseState("rotparabolic", (0.0, 1.0, 0.5), (0.1, 0.2, 0.3)), chart)


def test_pushforward_at_polar_origin():
    with pytest.raises(SingularJacobianError):
        pushforward(PhaseState("polar", (0.0, 0.3), (1.0, 1.0)), POLAR)


def test_example1_pullback_at_a_fixed_state(systems):
    ex1 = systems["example1"]
    polar, cart = ex1.presentation("polar"), ex1.presentation("cartesian")
    s = PhaseState("polar", (1.3, 0.7), (0.4, -0.2))
    h_polar = evaluate(polar.hamiltonian, polar.chart.env(s, ex1.parameters))
    h_cart = pullback_hamiltonian_value(cart.hamiltonian, polar.chart, s, ex1.parameters, cart.chart)
    assert abs(h_polar - h_cart) <= 1e-12


def test_free_particle_pullback_is_kinetic_energy():
    H = parse("(p_x1^2 + p_x2^2)/2")
    for r, th, pr, pth in [(1.0, 0.2, 0.3, 0.4), (2.5, 2.0, -1.0, 0.7)]:
        s = PhaseState("polar", (r, th), (pr, pth))
        expected = (pr ** 2 + pth ** 2 / r ** 2) / 2
        assert pullback_hamiltonian_value(H, POLAR, s) == pytest.approx(expected, rel=1e-14)


def test_evans_spherical_pullback(systems):
    ev = systems["evans"]
    sph, cart = ev.presentation("spherical"), ev.presentation("cartesian")
    for s in Sampler(sph.chart, ev.parameters, np.random.default_rng(2)).samples(50):
        a = evaluate(sph.hamiltonian, sph.chart.env(s, ev.parameters))
        b = pullback_hamiltonian_value(cart.hamiltonian, sph.chart, s, ev.parameters, cart.chart)
        assert abs(a - b) <= 1e-10 * (1 + abs(a))


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "evans"])
def test_catalog_charts_are_equivalent(systems, name):
    res = verify_chart_equivalence(systems[name], 200, 1e-10, np.random.default_rng(0))
    n = len(systems[name].presentations)
    assert len(res) == n * (n - 1) // 2
    for r in res:
        assert r.passed, r
        assert r.samples == 200


def test_single_presentation_cannot_be_compared(systems):
    with pytest.raises(ValueError):
        verify_chart_equivalence(systems["generic2dof"], 10, 1e-10)


def test_corrupted_parameter_in_one_chart_is_detected():
    d = catalog.raw("example1")
    pres = next(p for p in d["presentations"] if p["chart"] == "parabolic")
    pres["hamiltonian"] = pres["hamiltonian"].replace("beta/xi", "(beta + 1)/xi")
    res = verify_chart_equivalence(system_from_dict(d), 100, 1e-10, np.random.default_rng(0))
    failed = {r.pair for r in res if not r.passed}
    assert failed == {("polar", "parabolic"), ("parabolic", "cartesian")}
    assert min(r.residual for r in res if not r.passed) > 1e-3


DISPLAYED = [
    ("example1", "parabolic", False),
    ("example2", "rotparabolic", False),
    ("example2", "parabolic", False),
    ("example3", "rotparabolic", True),
    ("evans", "cartesian", False),
]


@pytest.mark.parametrize("name, chart, consistent", DISPLAYED)
def test_displayed_forms_against_the_pullback(systems, name, chart, consistent):
    sysdef = systems[name]
    target = sysdef.presentation(chart)
    displayed = parse(target.displayed)
    extra = free_vars(displayed) - set(target.chart.phase_symbols) - set(sysdef.parameters)
    assert not extra
    other = next(p for p in sysdef.presentations if p.chart.name != chart)
    kd = kernel(displayed, target.chart.phase_symbols, (), sysdef.parameters)
    kh = kernel(target.hamiltonian, target.chart.phase_symbols, (), sysdef.parameters)
    ko = kernel(other.hamiltonian, other.chart.phase_symbols, (), sysdef.parameters)
    worst_displayed = worst_used = 0.0
    for s in Sampler(other.chart, sysdef.parameters, np.random.default_rng(4)).samples(40):
        t = transport(s, other.chart, target.chart, sysdef.parameters)
        h = ko.value(*s.q, *s.p)
        worst_displayed = max(worst_displayed, abs(kd.value(*t.q, *t.p) - h))
        worst_used = max(worst_used, abs(kh.value(*t.q, *t.p) - h))
    assert worst_used <= 1e-9
    if consistent:
        assert worst_displayed <= 1e-9
    else:
        assert worst_displayed > 1e-2


@pytest.mark.parametrize("name, a, b", [
    ("example1", "polar", "parabolic"),
    ("example2", "rotparabolic", "parabolic"),
    ("evans", "spherical", "rotparabolic"),
])
def test_transport_round_trip(systems, name, a, b):
    sysdef = systems[name]
    A, B = sysdef.charts[a], sysdef.charts[b]
    for s in Sampler(A, sysdef.parameters, np.random.default_rng(8)).samples(50):
        back = transport(transport(s, A, B, sysdef.parameters), B, A, sysdef.parameters, hint=s.q)
        np.testing.assert_allclose(back.as_array(), s.as_array(), rtol=1e-9, atol=1e-9)


def test_from_cartesian_inverts_pushforward(systems):
    ev = systems["evans"]
    chart = ev.charts["spherical"]
    s = PhaseState("spherical", (1.2, 1.1, 0.7), (0.3, -0.4, 0.5))
    back = from_cartesian(pushforward(s, chart), chart, ev.parameters)
    np.testing.assert_allclose(back.as_array(), s.as_array(), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name, a, b", [
    ("example1", "polar", "parabolic"),
    ("example3", "rotparabolic", "cartesian"),
    ("evans", "spherical", "rotparabolic"),
])
def test_transport_is_symplectic(systems, name, a, b):
    sysdef = systems[name]
    A, B = sysdef.charts[a], sysdef.charts[b]
    n = A.n
    omega = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    for s in Sampler(A, sysdef.parameters, np.random.default_rng(3)).samples(20):
        _, M = transport_jacobian(s, A, B, sysdef.parameters)
        np.testing.assert_allclose(M.T @ omega @ M, omega, atol=1e-9)


def test_transport_jacobian_matches_finite_differences(systems):
    ex1 = systems["example1"]
    A, B = ex1.charts["polar"], ex1.charts["parabolic"]
    z0 = np.array([1.1, 1.2, 0.3, -0.5])
    _, M = transport_jacobian(PhaseState("polar", z0[:2], z0[2:]), A, B)
    h = 1e-6
    for k in range(4):
        zp, zm = z0.copy(), z0.copy()
        zp[k] += h
        zm[k] -= h
        fp = transport(PhaseState("polar", zp[:2], zp[2:]), A, B).as_array()
        fm = transport(PhaseState("polar", zm[:2], zm[2:]), A, B).as_array()
        np.testing.assert_allclose(M[:, k], (fp - fm) / (2 * h), rtol=1e-6, atol=1e-7)
