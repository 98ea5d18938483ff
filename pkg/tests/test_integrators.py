import io
import math

import numpy as np
import pytest

from jobmarket import (
    IntegrationError,
    ModelParams,
    ParameterError,
    Scheme,
    State,
    Trajectory,
    generate,
    run_batch,
    simulate,
    step_em,
    step_milstein,
    step_rk4,
)
from jobmarket.integrators import _milstein_corr

P_FIG1 = ModelParams(r=1.0, K=100.0, m=0.001, d=0.2, sigma=0.09)
P_FIG2 = ModelParams(r=1.0, K=100.0, m=0.1, d=0.2, sigma=0.001)


def test_scheme_parse():
    assert Scheme.parse("rk4") is Scheme.RK4
    assert Scheme.parse("euler_maruyama") is Scheme.EULER_MARUYAMA
    assert Scheme.parse("milstein") is Scheme.MILSTEIN
    assert not Scheme.RK4.is_stochastic
    assert Scheme.MILSTEIN.is_stochastic
    with pytest.raises(ParameterError):
        Scheme.parse("heun")


# ---------------------------------------------------------------------------
# RK4

def test_rk4_fixed_points():
    assert step_rk4(State(100.0, 0.0), 0.1, P_FIG2) == (100.0, 0.0)
    assert step_rk4(State(0.0, 0.0), 0.1, P_FIG2) == (0.0, 0.0)
    s = step_rk4(State(2.0, 9.8), 0.01, P_FIG2)
    assert s.u == pytest.approx(2.0, abs=1e-12)
    assert s.v == pytest.approx(9.8, abs=1e-12)


def test_rk4_matches_logistic_closed_form():
    # with v = 0 the u equation is pure logistic growth:
    # u(t) = K*u0*e^(rt) / (K + u0*(e^(rt) - 1))
    r, K, u0, T, dt = 0.8, 100.0, 10.0, 5.0, 0.05
    p = ModelParams(r=r, K=K, m=0.1, d=0.2, sigma=0.0)
    traj = simulate(Scheme.RK4, p, State(u0, 0.0), T, dt)
    exact = K * u0 * math.exp(r * T) / (K + u0 * (math.exp(r * T) - 1.0))
    assert traj.terminal.u == pytest.approx(exact, rel=1e-8)
    assert traj.terminal.v == 0.0


def test_rk4_matches_exponential_decay():
    # with u = 0 the v equation is pure decay: v(t) = v0*e^(-d*t)
    p = ModelParams(r=1.0, K=100.0, m=0.1, d=0.37, sigma=0.0)
    traj = simulate(Scheme.RK4, p, State(0.0, 8.0), 10.0, 0.01)
    assert traj.terminal.v == pytest.approx(8.0 * math.exp(-3.7), rel=1e-10)
    assert traj.terminal.u == 0.0


def test_rk4_material_overshoot_raises():
    p = ModelParams(r=2.0, K=10.0, m=0.1, d=0.2, sigma=0.0)
    with pytest.raises(IntegrationError):
        step_rk4(State(30.0, 0.0), 1.0, p)


def test_rk4_rejects_nonpositive_dt():
    with pytest.raises(ParameterError):
        step_rk4(State(1.0, 1.0), 0.0, P_FIG2)


# ---------------------------------------------------------------------------
# Euler-Maruyama

def test_em_reduces_to_euler_when_db_zero():
    p = ModelParams(1.0, 100.0, 0.1, 0.2, 0.09)
    u, v, dt = 10.0, 5.0, 0.01
    (s, clamped) = step_em(State(u, v), dt, 0.0, p)
    coupling = p.m * u * v
    du = p.r * u * (1.0 - u / p.K) - coupling
    dv = coupling - p.d * v
    assert not clamped
    assert s.u == u + du * dt - 0.0
    assert s.v == v + dv * dt + 0.0


def test_em_hand_example():
    # u' = 10 + (9 - 5)*0.01 - 4.5*0.05, v' = 5 + (5 - 1)*0.01 + 4.5*0.05
    p = ModelParams(1.0, 100.0, 0.1, 0.2, 0.09)
    (s, clamped) = step_em(State(10.0, 5.0), 0.01, 0.05, p)
    assert not clamped
    assert s == (9.815, 5.265)


def test_em_keeps_empty_labour_axis_invariant():
    p = ModelParams(1.0, 100.0, 0.1, 0.2, 0.09)
    (s, clamped) = step_em(State(10.0, 0.0), 0.01, 0.3, p)
    assert s.v == 0.0
    assert not clamped
    # u takes the plain logistic Euler step
    assert s.u == 10.0 + (1.0 * 10.0 * (1.0 - 0.1)) * 0.01 - 0.0


def test_em_keeps_empty_jobs_axis_invariant():
    p = ModelParams(1.0, 100.0, 0.1, 0.2, 0.09)
    (s, clamped) = step_em(State(0.0, 7.0), 0.01, -0.4, p)
    assert s.u == 0.0
    assert s.v == 7.0 - 0.2 * 7.0 * 0.01


def test_em_clamps_and_flags():
    # noise term sigma*u*v*dB = 4.5*dB pushes v = 5 below zero at dB = -1.5
    p = ModelParams(1.0, 100.0, 0.1, 0.2, 0.09)
    (s, clamped) = step_em(State(10.0, 5.0), 0.01, -1.5, p)
    assert clamped
    assert s.v == 0.0
    assert s.u > 0.0


# ---------------------------------------------------------------------------
# Milstein

def test_milstein_equals_em_when_db_squared_is_dt():
    # dt = 0.25 has an exact square root, so dB*dB - dt vanishes exactly
    dt = 0.25
    dB = math.sqrt(dt)
    for s0 in (State(10.0, 5.0), State(3.0, 80.0)):
        em, _ = step_em(s0, dt, dB, P_FIG1)
        mil, _ = step_milstein(s0, dt, dB, P_FIG1)
        assert em == mil


def test_milstein_equals_em_on_diagonal():
    em, _ = step_em(State(5.0, 5.0), 0.01, 0.07, P_FIG1)
    mil, _ = step_milstein(State(5.0, 5.0), 0.01, 0.07, P_FIG1)
    assert em == mil


def test_milstein_hand_example():
    # correction = 0.5*0.0081*50*(-5)*(0.0025 - 0.01) = +0.00759375 on u,
    # the exact negation on v, added to the Euler-Maruyama example state
    p = ModelParams(1.0, 100.0, 0.1, 0.2, 0.09)
    (s, clamped) = step_milstein(State(10.0, 5.0), 0.01, 0.05, p)
    assert not clamped
    assert s == (9.82259375, 5.25740625)
    corr = _milstein_corr(10.0, 5.0, 0.01, 0.05, p)
    assert corr == pytest.approx(0.00759375, rel=1e-12)
    em, _ = step_em(State(10.0, 5.0), 0.01, 0.05, p)
    assert s.u == em.u + corr
    assert s.v == em.v - corr


def test_milstein_corrections_cancel_exactly():
    rng = np.random.default_rng(6)
    for _ in range(300):
        u, v = rng.uniform(0, 200), rng.uniform(0, 200)
        dt = rng.uniform(1e-4, 0.1)
        dB = rng.normal(0, math.sqrt(dt))
        corr = _milstein_corr(u, v, dt, dB, P_FIG1)
        assert corr + (-corr) == 0.0


def test_stochastic_updates_cancel_noise_from_the_total():
    # (u' + v') - (u + v) must equal dt*(r*u*(1-u/K) - d*v) up to a few
    # ulps at operand scale, whatever dB is
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 300:
        u, v = rng.uniform(0, 200), rng.uniform(0, 200)
        p = ModelParams(r=rng.uniform(0.05, 2), K=rng.uniform(10, 200),
                        m=rng.uniform(1e-4, 0.5), d=rng.uniform(0.05, 1),
                        sigma=rng.uniform(0, 0.2))
        dt = rng.uniform(1e-4, 0.05)
        dB = rng.normal(0, math.sqrt(dt))
        for stepper in (step_em, step_milstein):
            s, clamped = stepper(State(u, v), dt, dB, p)
            if clamped:
                continue
            coupling = p.m * u * v
            du = p.r * u * (1.0 - u / p.K) - coupling
            dv = coupling - p.d * v
            noise = p.sigma * u * v * dB
            balance = dt * (p.r * u * (1.0 - u / p.K) - p.d * v)
            scale = max(abs(u), abs(v), s.u, s.v, abs(noise),
                        abs(du) * dt, abs(dv) * dt, u + v, abs(balance))
            assert abs((s.u + s.v) - (u + v) - balance) <= 4.0 * np.spacing(scale)
            checked += 1


# ---------------------------------------------------------------------------
# simulate

def test_simulate_constant_at_capacity_equilibrium():
    traj = simulate(Scheme.RK4, P_FIG2, State(100.0, 0.0), 5.0, 0.1)
    assert np.all(traj.u == 100.0)
    assert np.all(traj.v == 0.0)
    assert traj.clamp_count == 0
    assert traj.scheme is Scheme.RK4


def test_simulate_validates_inputs():
    path = generate(1, 0, 0.01, 100)
    with pytest.raises(ParameterError):
        simulate(Scheme.RK4, P_FIG2, State(1, 1), 1.0, 0.3)  # 0.3 does not divide 1
    with pytest.raises(ParameterError):
        simulate(Scheme.MILSTEIN, P_FIG2, State(1, 1), 1.0, 0.01)  # no path
    with pytest.raises(ParameterError):
        simulate(Scheme.RK4, P_FIG2, State(1, 1), 1.0, 0.01, path=path)
    with pytest.raises(ParameterError):
        simulate(Scheme.MILSTEIN, P_FIG2, State(1, 1), 1.0, 0.02, path=path)  # dt mismatch
    with pytest.raises(ParameterError):
        simulate(Scheme.MILSTEIN, P_FIG2, State(1, 1), 2.0, 0.01, path=path)  # too short
    with pytest.raises(ParameterError):
        simulate(Scheme.MILSTEIN, P_FIG2, State(-1, 1), 1.0, 0.01, path=path)
    with pytest.raises(ParameterError):
        simulate(Scheme.RK4, P_FIG2, State(1, 1), 1.0, 0.01, record_stride=3)  # 3 !| 100
    with pytest.raises(ParameterError):
        simulate(Scheme.RK4, P_FIG2, State(1, 1), 0.0, 0.01)


def test_simulate_grid_and_recording():
    path = generate(3, 0, 0.01, 200)
    traj = simulate(Scheme.MILSTEIN, P_FIG1, State(50.0, 10.0), 2.0, 0.01, path=path)
    assert traj.n_points == 201
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(2.0, rel=1e-15)
    steps = np.diff(traj.times)
    assert np.allclose(steps, 0.01, rtol=1e-12)
    assert traj.state(0) == (50.0, 10.0)
    assert traj.seed == 3 and traj.path_index == 0
    assert np.all(traj.u >= 0.0) and np.all(traj.v >= 0.0)


def test_record_stride_thins_exactly():
    path = generate(3, 0, 0.01, 200)
    full = simulate(Scheme.MILSTEIN, P_FIG1, State(50.0, 10.0), 2.0, 0.01, path=path)
    thin = simulate(Scheme.MILSTEIN, P_FIG1, State(50.0, 10.0), 2.0, 0.01,
                    path=path, record_stride=20)
    assert np.array_equal(thin.u, full.u[::20])
    assert np.array_equal(thin.v, full.v[::20])
    assert np.array_equal(thin.times, full.times[::20])
    # full-resolution quantities do not depend on the recording stride
    assert thin.integral_u == full.integral_u
    assert thin.integral_v == full.integral_v
    assert thin.max_total == full.max_total
    assert thin.clamp_count == full.clamp_count
    assert np.array_equal(thin.clamp_times, full.clamp_times)


def test_clamp_events_are_logged():
    # strong noise on the extinction scenario forces Euler-Maruyama below zero
    path = generate(20240101, 13, 0.01, 2000)
    traj = simulate(Scheme.EULER_MARUYAMA, P_FIG1, State(50.0, 10.0), 20.0,
                    0.01, path=path)
    assert traj.clamp_count > 0
    assert len(traj.clamp_times) == traj.clamp_count
    assert np.all(traj.clamp_times > 0.0)
    assert np.all(traj.clamp_times <= 20.0 + 1e-12)
    assert np.any(traj.clamped)
    assert np.all(traj.u >= 0.0) and np.all(traj.v >= 0.0)


def test_em_with_zero_noise_converges_to_rk4():
    x0 = State(50.0, 10.0)
    p = ModelParams(1.0, 100.0, 0.1, 0.2, 0.0)
    reference = simulate(Scheme.RK4, p, x0, 5.0, 1e-3).terminal
    errors = {}
    for dt in (1e-3, 1e-4):
        path = generate(8, 0, dt, round(5.0 / dt))
        term = simulate(Scheme.EULER_MARUYAMA, p, x0, 5.0, dt, path=path).terminal
        errors[dt] = abs(term.u - reference.u) + abs(term.v - reference.v)
    # explicit Euler halves its error with the step, with head-room
    assert errors[1e-4] < 0.15 * errors[1e-3]
    assert errors[1e-4] < 0.05


def test_trajectory_csv_round_trips():
    path = generate(4, 2, 0.25, 8)
    traj = simulate(Scheme.MILSTEIN, P_FIG1, State(50.0, 10.0), 2.0, 0.25, path=path)
    buf = io.StringIO()
    traj.to_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,u,v,clamped"
    assert len(lines) == traj.n_points + 1
    for i, line in enumerate(lines[1:]):
        t, u, v, clamped = line.split(",")
        assert float(t) == traj.times[i]
        assert float(u) == traj.u[i]
        assert float(v) == traj.v[i]
        assert clamped in ("0", "1")


def test_trajectory_from_samples_validates():
    with pytest.raises(ParameterError):
        Trajectory.from_samples([0, 1], [1, 2, 3], [1, 2])


# ---------------------------------------------------------------------------
# batch engine agrees with scalar stepping bit for bit

@pytest.mark.parametrize("scheme", [Scheme.EULER_MARUYAMA, Scheme.MILSTEIN])
def test_batch_rows_match_scalar_paths(scheme):
    n_paths, horizon, dt = 4, 3.0, 0.01
    n_steps = round(horizon / dt)
    seed = 99
    dW = np.stack([generate(seed, i, dt, n_steps).increments
                   for i in range(n_paths)])
    batch = run_batch(scheme, P_FIG1, np.full(n_paths, 50.0),
                      np.full(n_paths, 10.0), horizon, dt, dW,
                      record_stride=10)
    for i in range(n_paths):
        traj = simulate(scheme, P_FIG1, State(50.0, 10.0), horizon, dt,
                        path=generate(seed, i, dt, n_steps), record_stride=10)
        assert np.array_equal(batch.U[i], traj.u)
        assert np.array_equal(batch.V[i], traj.v)
        assert np.array_equal(batch.clamped[i], traj.clamped)
        assert batch.clamp_counts[i] == traj.clamp_count
        assert batch.integral_u[i] == traj.integral_u
        assert batch.integral_v[i] == traj.integral_v
        assert batch.max_total[i] == traj.max_total


def test_batch_rk4_matches_scalar():
    batch = run_batch(Scheme.RK4, P_FIG2, np.array([50.0, 2.0]),
                      np.array([10.0, 9.8]), 2.0, 0.01, None)
    a = simulate(Scheme.RK4, P_FIG2, State(50.0, 10.0), 2.0, 0.01)
    b = simulate(Scheme.RK4, P_FIG2, State(2.0, 9.8), 2.0, 0.01)
    assert np.array_equal(batch.U[0], a.u)
    assert np.array_equal(batch.V[0], a.v)
    assert np.array_equal(batch.U[1], b.u)
    assert np.array_equal(batch.V[1], b.v)


def test_batch_validates_shapes():
    with pytest.raises(ParameterError):
        run_batch(Scheme.MILSTEIN, P_FIG1, np.array([1.0]), np.array([1.0]),
                  1.0, 0.01, np.zeros((1, 10)))  # too few increments
    with pytest.raises(ParameterError):
        run_batch(Scheme.RK4, P_FIG1, np.array([1.0]), np.array([1.0]),
                  1.0, 0.01, np.zeros((1, 100)))  # rk4 takes no increments
