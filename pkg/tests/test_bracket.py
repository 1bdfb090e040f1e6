import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carterkit.bracket import conservation_check, phase_gradient, poisson_bracket
from carterkit.expr import BinOp, evaluate, parse
from carterkit.system_model import Chart, PhaseState
from conftest import central_difference

PLANE = Chart("plane", ("x", "y"), ("p_x", "p_y"), (parse("x"), parse("y")))

POLYS = ["x^2*p_y - y", "p_x*p_y + x*y^3", "sin(x)*p_x^2 + y", "exp(x - y)*p_y", "x*p_x + y*p_y"]

coords = st.floats(min_value=-1.5, max_value=1.5, allow_nan=False)
states = st.tuples(coords, coords, coords, coords).map(lambda v: PhaseState("plane", v[:2], v[2:]))
funcs = st.sampled_from(POLYS).map(parse)


def pb(f, g, s):
    return poisson_bracket(f, g, s, PLANE)


@pytest.mark.parametrize("f, g, value", [
    ("x", "p_x", 1.0), ("y", "p_y", 1.0), ("x", "p_y", 0.0),
    ("x", "y", 0.0), ("p_x", "p_y", 0.0), ("p_x", "x", -1.0),
])
def test_canonical_brackets(f, g, value):
    s = PhaseState("plane", (0.3, -0.2), (1.1, 0.4))
    assert pb(parse(f), parse(g), s) == value


@settings(max_examples=100, deadline=None)
@given(funcs, funcs, states)
def test_antisymmetry(f, g, s):
    assert pb(f, g, s) == pytest.approx(-pb(g, f, s), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(funcs, funcs, funcs, states)
def test_leibniz_rule(f, g, h, s):
    env = PLANE.env(s)
    lhs = pb(f, BinOp("*", g, h), s)
    rhs = pb(f, g, s) * evaluate(h, env) + evaluate(g, env) * pb(f, h, s)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)




def test_jacobi_identity_with_finite_differences():
    f, g, h = (parse(t) for t in POLYS[:3])
    z0 = [0.4, -0.3, 0.7, 0.2]

    def bracket_fn(a, b):
        return lambda z: pb(a, b, PhaseState("plane", z[:2], z[2:]))

    def outer(a, inner):
        # {a, inner} with inner given as a numeric function; its gradient by central differences
        s = PhaseState("plane", z0[:2], z0[2:])
        _, ga = phase_gradient(a, s, PLANE)
        gi = [central_difference(inner, z0, i, h=1e-5) for i in range(4)]
        return ga[0] * gi[2] + ga[1] * gi[3] - ga[2] * gi[0] - ga[3] * gi[1]

    total = outer(f, bracket_fn(g, h)) + outer(g, bracket_fn(h, f)) + outer(h, bracket_fn(f, g))
    assert abs(total) <= 1e-7


def test_example3_constant_commutes_at_the_orbit_state(systems):
    ex3 = systems["example3"]
    pres = ex3.presentation("rotparabolic")
    K1 = next(d.expr for d in ex3.declared_constants if d.name == "K1")
    s = PhaseState("rotparabolic", (1.0, 0.5), (0.2, -0.3))
    assert abs(poisson_bracket(K1, pres.hamiltonian, s, pres.chart)) <= 1e-9


def test_bracket_agrees_with_finite_differences(systems):
    ex3 = systems["example3"]
    pres = ex3.presentation("rotparabolic")
    H = pres.hamiltonian
    f = parse("sig*p_tau - tau^2*p_sig")
    z0 = [1.0, 0.5, 0.2, -0.3]
    fv = lambda z: evaluate(f, dict(zip(pres.chart.phase_symbols, z)))
    hv = lambda z: evaluate(H, dict(zip(pres.chart.phase_symbols, z)))
    gf = [central_difference(fv, z0, i) for i in range(4)]
    gh = [central_difference(hv, z0, i) for i in range(4)]
    fd = gf[0] * gh[2] + gf[1] * gh[3] - gf[2] * gh[0] - gf[3] * gh[1]
    ad = poisson_bracket(f, H, PhaseState("rotparabolic", z0[:2], z0[2:]), pres.chart)
    assert ad == pytest.approx(fd, rel=1e-6)


def test_conservation_check_passes_for_a_true_constant(systems):
    ex3 = systems["example3"]
    pres = ex3.presentation("rotparabolic")
    K1 = next(d.expr for d in ex3.declared_constants if d.name == "K1")
    rep = conservation_check(K1, pres.hamiltonian, pres.chart, 500, 1e-9, rng=np.random.default_rng(1))
    assert rep.passed
    assert rep.samples == 500
    assert rep.max_abs <= rep.threshold


def test_conservation_check_fails_for_a_non_constant():
    H = parse("(p_x^2 + p_y^2)/2")
    rep = conservation_check(parse("x"), H, PLANE, 100, 1e-9, rng=np.random.default_rng(1))
    assert not rep.passed
    assert rep.max_abs > 0.1
    assert rep.worst_state is not None


def test_conservation_check_rejects_zero_samples():
    with pytest.raises(ValueError):
        conservation_check(parse("p_x"), parse("p_x^2"), PLANE, 0, 1e-9)
