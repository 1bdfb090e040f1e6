import math

import numpy as np
import pytest

from carterkit.errors import IntegrationError
from carterkit.expr import evaluate, parse
from carterkit.orbit import hamilton_rhs, integrate
from carterkit.system_model import Chart, PhaseState
from conftest import central_difference

LINE = Chart("line", ("x",), ("p_x",), (parse("x"),))
PLANE = Chart("plane", ("x", "y"), ("p_x", "p_y"), (parse("x"), parse("y")))
OSCILLATOR = parse("(p_x^2 + x^2)/2")
FREE = parse("(p_x^2 + p_y^2)/2")


def test_rhs_of_free_particle():
    assert hamilton_rhs(FREE, PhaseState("plane", (1.0, 2.0), (0.5, -0.25)), PLANE) == ((0.5, -0.25), (-0.0, -0.0))


def test_rhs_of_oscillator():
    dq, dp = hamilton_rhs(OSCILLATOR, PhaseState("line", (0.3,), (0.7,)), LINE)
    assert (dq, dp) == ((0.7,), (-0.3,))


def test_rhs_matches_finite_differences(systems):
    ex3 = systems["example3"]
    pres = ex3.presentation("rotparabolic")
    z0 = [1.0, 1.0, 0.0, 0.0]
    Hf = lambda z: evaluate(pres.hamiltonian, dict(zip(pres.chart.phase_symbols, z)))
    dq, dp = hamilton_rhs(pres.hamiltonian, PhaseState("rotparabolic", z0[:2], z0[2:]), pres.chart)
    for i in range(2):
        assert dq[i] == pytest.approx(central_difference(Hf, z0, 2 + i), abs=1e-7)
        assert dp[i] == pytest.approx(-central_difference(Hf, z0, i), abs=1e-7)
    # at rest only the potential tau^2 - sig^2 contributes
    assert dp == pytest.approx((2.0, -2.0), rel=1e-14)


@pytest.mark.parametrize("method", ["rk4", "implicit_midpoint"])
def test_free_particle_is_exact(method):
    s0 = PhaseState("plane", (0.1, -0.2), (0.3, 0.7))
    tr = integrate(FREE, s0, PLANE, 0.01, 1000, method)
    np.testing.assert_allclose(tr.states[-1], [0.1 + 3.0, -0.2 + 7.0, 0.3, 0.7], rtol=1e-12)
    assert tr.steps == 1000
    assert tr.times[-1] == pytest.approx(10.0)


def test_midpoint_conserves_quadratic_energy():
    tr = integrate(OSCILLATOR, PhaseState("line", (1.0,), (0.0,)), LINE, 0.05, 10_000, invariants={"H": OSCILLATOR})
    assert tr.max_abs_drift()["H"] <= 1e-10


def _final_error(method, dt, T=1.0):
    s0 = PhaseState("line", (1.0,), (0.0,))
    tr = integrate(OSCILLATOR, s0, LINE, dt, round(T / dt), method)
    return abs(tr.states[-1][0] - math.cos(T)) + abs(tr.states[-1][1] + math.sin(T))


@pytest.mark.parametrize("method, order", [("rk4", 4), ("implicit_midpoint", 2)])
def test_convergence_order(method, order):
    e1, e2 = _final_error(method, 0.02), _final_error(method, 0.01)
    assert math.log2(e1 / e2) == pytest.approx(order, abs=0.1)


def test_midpoint_is_time_reversible(systems):
    ex1 = systems["example1"]
    pres = ex1.presentation("polar")
    s0 = PhaseState("polar", (1.2, 1.3), (0.1, 0.4))
    fwd = integrate(pres.hamiltonian, s0, pres.chart, 1e-3, 2000, params=ex1.parameters)
    end = fwd.state(-1)
    back = integrate(pres.hamiltonian, PhaseState("polar", end.q, tuple(-v for v in end.p)), pres.chart,
                     1e-3, 2000, params=ex1.parameters)
    final = back.state(-1)
    np.testing.assert_allclose(final.q, s0.q, atol=1e-9)
    np.testing.assert_allclose([-v for v in final.p], s0.p, atol=1e-9)


def test_example1_constant_drift_and_negative_control(systems):
    ex1 = systems["example1"]
    pres = ex1.presentation("polar")
    K1 = next(d.expr for d in ex1.declared_constants if d.name == "K1")
    s0 = PhaseState("polar", (1.2, 1.3), (0.1, 0.4))
    tr = integrate(pres.hamiltonian, s0, pres.chart, 1e-3, 20_000,
                   invariants={"H": pres.hamiltonian, "K1": K1, "p_th": parse("p_th")},
                   params=ex1.parameters)
    drift = tr.max_rel_drift()
    assert drift["H"] <= 1e-6
    assert drift["K1"] <= 1e-6
    assert drift["p_th"] > 0.1


def test_drift_shrinks_quadratically_with_dt(systems):
    ex1 = systems["example1"]
    pres = ex1.presentation("polar")
    s0 = PhaseState("polar", (1.2, 1.3), (0.1, 0.4))
    drifts = []
    for dt in (4e-3, 2e-3):
        tr = integrate(pres.hamiltonian, s0, pres.chart, dt, round(4.0 / dt),
                       invariants={"H": pres.hamiltonian}, params=ex1.parameters)
        drifts.append(tr.max_abs_drift()["H"])
    assert drifts[0] / drifts[1] == pytest.approx(4.0, rel=0.25)


def test_list_invariants_get_default_names():
    tr = integrate(OSCILLATOR, PhaseState("line", (1.0,), (0.0,)), LINE, 0.1, 5, invariants=[OSCILLATOR, parse("x")])
    assert tr.invariant_names == ("I1", "I2")
    assert tr.invariant_values.shape == (6, 2)


def test_csv_layout(tmp_path):
    tr = integrate(OSCILLATOR, PhaseState("line", (1.0,), (0.0,)), LINE, 0.1, 3, invariants={"H": OSCILLATOR})
    path = tmp_path / "orbit.csv"
    text = tr.to_csv(path)
    assert path.read_text() == text
    lines = text.splitlines()
    assert lines[0] == "t,x,p_x,H"
    assert len(lines) == 5
    row = [float(v) for v in lines[2].split(",")]
    assert row[0] == 0.1
    assert row[1:3] == list(tr.states[1])


def _falling_system():
    # attractive 1/r with no angular barrier: a radial orbit falls into r -> 0
    return parse("(p_r^2 + p_th^2/r^2)/2 - 1/r")


def test_abort_carries_partial_trajectory():
    chart = Chart("polar", ("r", "th"), ("p_r", "p_th"), (parse("r*cos(th)"), parse("r*sin(th)")), (parse("r"),))
    H = _falling_system()
    with pytest.raises(IntegrationError) as info:
        integrate(H, PhaseState("polar", (1.0, 0.5), (0.0, 0.0)), chart, 1e-3, 10_000, invariants={"H": H})
    err = info.value
    assert err.reason in ("domain", "nonfinite", "nonconvergence")
    assert err.step > 100
    tr = err.trajectory
    assert tr.status == f"aborted at step {err.step}: {err.reason}"
    assert tr.steps == err.step - 1
    assert tr.to_csv().splitlines()[-1] == f"# aborted at step {err.step}: {err.reason}"


def test_inadmissible_start():
    chart = Chart("polar", ("r", "th"), ("p_r", "p_th"), (parse("r*cos(th)"), parse("r*sin(th)")), (parse("r"),))
    with pytest.raises(IntegrationError) as info:
        integrate(_falling_system(), PhaseState("polar", (-1.0, 0.5), (0.0, 0.0)), chart, 1e-3, 10)
    assert (info.value.step, info.value.reason) == (0, "domain")


@pytest.mark.parametrize("kwargs", [{"dt": 0.0}, {"steps": 0}, {"method": "euler"}])
def test_argument_validation(kwargs):
    args = {"dt": 0.1, "steps": 10, "method": "rk4"} | kwargs
    with pytest.raises(ValueError):
        integrate(OSCILLATOR, PhaseState("line", (1.0,), (0.0,)), LINE, **args)
