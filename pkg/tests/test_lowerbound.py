import math

import pytest
from scipy.special import expi

from fermipolaron.lattice import Potential, build_fermi_ball, gamma_set
from fermipolaron.lowerbound import (
    b_dot, b_of, corollary_floor, d_of, f_of, floor_rows, h_of, make_floor_params, ode_residuals,
    t_star, theta_of,
)
from fermipolaron.patches import build_patch_set, build_weights, default_M

V1 = Potential.ball(1)


def h_closed_form(p, t):
    """The weighted integral from exponential integrals, branch by branch."""
    th = p.theta
    total = 0.0
    for v2, kn in p.k_terms():
        ts = t_star(p.kF, kn)
        c = 8.0 * p.kF * kn / math.pi ** 2
        a = min(t, ts)
        left = c * (math.exp(th * a) * (a / th - 1.0 / th ** 2) + 1.0 / th ** 2)
        right = 0.0
        if t > ts:
            right = (expi(th * t) - expi(th * ts)) / (2.0 * p.kF * kn)
        total += v2 * (left + right)
    return math.pi * p.lam ** 2 * p.kF * math.exp(-th * t) * total - p.d


@pytest.fixture(scope="module")
def p20():
    return make_floor_params(1.0, 20.0, V1)


def test_branches_continuous(p20):
    for _, kn in p20.k_terms():
        ts = t_star(p20.kF, kn)
        lo, hi = ts, math.nextafter(ts, 2 * ts)
        for f in (b_dot, b_of):
            assert abs(f(p20, hi) - f(p20, lo)) <= 1e-12 * max(1.0, abs(f(p20, lo)))
    assert b_of(p20, 0.0) == 0.0


def test_b_is_antiderivative(p20):
    t, e = 0.3, 1e-6
    assert (b_of(p20, t + e) - b_of(p20, t - e)) / (2 * e) == pytest.approx(b_dot(p20, t), rel=1e-6)
    t = 0.2 * t_star(20.0, 1.0)
    assert (b_of(p20, t + 1e-9) - b_of(p20, t - 1e-9)) / 2e-9 == pytest.approx(b_dot(p20, t), rel=1e-5)


@pytest.mark.parametrize("t", [0.001, 0.02, 0.05, 0.3, 1.0])
def test_h_against_expi(p20, t):
    assert h_of(p20, t) == pytest.approx(h_closed_form(p20, t), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("t", [0.01, 0.05, 0.2])
def test_h_solves_forced_equation(p20, t):
    r = ode_residuals(p20, t)
    assert r["forced"] <= 1e-8
    assert r["unforced"] > 1e-4


def test_theta_and_d():
    assert theta_of(0.0, 20.0, V1) == 0.0
    kF = 20.0
    h2 = math.pi * kF * kF * sum(V1(k) ** 2 * math.sqrt(sum(c * c for c in k)) for k in gamma_set(V1))
    assert theta_of(1.0, kF, V1) == pytest.approx(math.sqrt(h2) + 2 * h2 / kF)
    assert d_of(4, 1000, 0.0, 0.0, 10.0, 1.0) == pytest.approx(4 * 1000 ** (-2 / 3))
    assert d_of(4, 1000, 0.0, 100.0, 10.0, 1.0) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        theta_of(1.0, 20.0, V1, mode="bogus")
    with pytest.raises(ValueError):
        theta_of(1.0, 20.0, V1, mode="exact")


def test_theta_exact_mode_close_to_closed():
    ball = build_fermi_ball(15.0)
    table = build_weights(ball, build_patch_set(default_M(ball.N), 15.0, ball.N), gamma_set(V1))
    ex = make_floor_params(1.0, 15.0, V1, theta_mode="exact", table=table)
    cl = make_floor_params(1.0, 15.0, V1, table=table)
    assert ex.M == cl.M == default_M(ball.N)
    assert 0.5 < ex.theta / cl.theta < 2.0


def test_f():
    assert f_of(0.0) == 0.0
    assert f_of(1e-8) == pytest.approx(0.5e-16, rel=1e-6)
    assert f_of(3.0) == pytest.approx(math.exp(-3) + 2)


def test_floor_at_natural_time_is_order_one():
    vals = []
    for kF in (20.0, 40.0):
        p = make_floor_params(1.0, kF, V1)
        fl, arg = corollary_floor(p, 1.0 / kF)
        vals.append(fl + p.d)
        assert arg > 0
    assert vals[0] > 0
    assert vals[1] == pytest.approx(vals[0], rel=0.2)


def test_floor_rows_columns(p20):
    rows = floor_rows(p20, [0.0, 0.05])
    assert len(rows) == 2 and len(rows[0]) == 6
    assert rows[0][1] == 0.0
    assert rows[0][2] == pytest.approx(-p20.d)


def test_d_exponent_under_default_patch_rule():
    # M = N^{16/45}, delta = 2/15 gives N^{16/45 - 2/3 + 2/15} = N^{-8/45}
    for N in (1000, 33401, 267761):
        M = N ** (16 / 45)
        assert d_of(M, N, 2 / 15, 0.0, 10.0, 1.0) == pytest.approx(N ** (-8 / 45), rel=1e-12)


def test_b_below_coupling_integral_on_log_branch():
    import numpy as np
    from scipy.integrate import quad

    from fermipolaron.coherent import CoherentParams, eta_values
    from fermipolaron.patches import build_patch_set, build_weights, default_M

    kF = 40.0
    ball = build_fermi_ball(kF)
    ps = build_patch_set(default_M(ball.N), kF, ball.N)
    pr = CoherentParams.from_weights(build_weights(ball, ps, gamma_set(V1)), V1, 1.0)
    p = make_floor_params(1.0, kF, V1)
    for x in (1.0, 2.0, 5.0, 10.0):
        t = x / kF
        val, _ = quad(lambda s: np.vdot(pr.h, eta_values(pr, s)).real, 0.0, t, epsabs=0.0,
                      epsrel=1e-12, limit=400)
        assert b_of(p, t) <= 2.0 * abs(val)
