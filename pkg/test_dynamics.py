"""
Run configuration, IF-RK4 steppers and trajectories of the full / filtered systems
"""

import math

import numpy as np
import pytest

from core.dynamics import (
    FlowState,
    Integrator,
    RunConfig,
    energy_inequality_margin,
    nonlinear_term,
    simulate,
    step_full,
)
from core.errors import BlowupError, ValidationError
from core.initial_data import make_initial_data
from core.torus import TorusSpec, sobolev_norm
from core.waves import WaveFrame


@pytest.fixture
def torus():
    return TorusSpec.build((1.0, 1.0, 1.37), (8, 8, 8))


def _data(torus, seed=0, amplitude=0.1):
    return make_initial_data(
        {"recipe": "random_solenoidal", "amplitude": amplitude, "s": 1.0}, torus, seed=seed
    )


def test_run_config_validation():
    with pytest.raises(ValidationError):
        RunConfig(epsilon=0.0)
    with pytest.raises(ValidationError):
        RunConfig(nu=-0.1)
    with pytest.raises(ValidationError):
        RunConfig(dt=1.0, T=1.0)
    with pytest.raises(ValidationError):
        RunConfig(scheme="euler")
    with pytest.raises(ValidationError):
        RunConfig(s=0.5)
    with pytest.raises(ValidationError):
        RunConfig(dt=0.3, T=1.0).steps
    cfg = RunConfig(dt=0.01, T=0.1)
    assert cfg.steps == 10
    assert cfg.replace(epsilon=0.5).epsilon == 0.5 and cfg.epsilon == 0.1


def test_stability_bound_rejects_large_steps(torus):
    cfg = RunConfig(nu=1.0, nu_prime=1.0, dt=0.1, T=1.0)
    with pytest.raises(ValidationError):
        simulate(_data(torus), cfg)


def test_steady_vortex_decays_at_viscous_rate():
    torus = TorusSpec.build((1.0, 1.0, 1.0), (8, 8, 8))
    initial = make_initial_data({"recipe": "kernel_vortex", "layers": 1}, torus)
    cfg = RunConfig(epsilon=0.1, nu=0.5, nu_prime=0.5, dt=0.01, T=0.5)
    traj = simulate(initial, cfg)
    l2 = traj.column("L2")
    expected = l2[0] * np.exp(-2.0 * cfg.nu * np.array(traj.times))
    assert np.allclose(l2, expected, rtol=1e-10)
    assert len(traj) == cfg.steps + 1


def test_linearized_flow_is_linear(torus):
    cfg = RunConfig(epsilon=0.05, nu=0.05, nu_prime=0.02, dt=0.01, T=0.1, linearized=True)
    U = _data(torus, seed=1)
    single = simulate(U, cfg, keep_fields=True).final
    double = simulate(U * 2.0, cfg, keep_fields=True).final
    assert np.allclose(double.coeffs, 2.0 * single.coeffs, atol=1e-14)


def test_filtered_state_is_propagated_full_state(torus):
    frame = WaveFrame(torus)
    U = _data(torus, seed=2)
    cfg = RunConfig(epsilon=0.05, nu=0.05, nu_prime=0.02, dt=0.01, T=0.2, linearized=True)
    integrator = Integrator(torus, cfg, frame=frame)
    full = simulate(U, cfg, integrator=integrator).final
    filtered = simulate(U, cfg, filtered=True, integrator=integrator).final
    assert np.allclose(filtered.coeffs, frame.propagate(full, cfg.T / cfg.epsilon).coeffs, atol=1e-13)

    nonlinear = cfg.replace(linearized=False)
    integrator = Integrator(torus, nonlinear, frame=frame)
    full = simulate(U, nonlinear, integrator=integrator).final
    filtered = simulate(U, nonlinear, filtered=True, integrator=integrator).final
    gap = filtered - frame.propagate(full, nonlinear.T / nonlinear.epsilon)
    assert sobolev_norm(gap, 0.0) <= 1e-3 * sobolev_norm(filtered, 0.0)


def test_energy_inequality_and_diagnostics(torus):
    cfg = RunConfig(epsilon=0.1, nu=0.05, nu_prime=0.05, dt=0.01, T=0.2)
    traj = simulate(_data(torus, seed=3, amplitude=0.5), cfg, sample_every=5)
    frame = traj.to_frame()
    assert list(frame.columns) == [
        "t", "L2", "Hs", "div_residual", "hermitian_residual", "mean_residual",
        "horizontal_average_L2", "L2_dissipation_integral", "Hs_dissipation_integral",
    ]
    assert len(frame) == 1 + cfg.steps // 5
    assert energy_inequality_margin(traj, cfg) <= 1.0 + 1e-3
    assert frame["div_residual"].max() < 1e-12
    assert frame["hermitian_residual"].max() < 1e-14
    assert frame["mean_residual"].max() == 0.0


def test_single_step_helper_matches_integrator(torus):
    cfg = RunConfig(epsilon=0.1, dt=0.01, T=0.1)
    state = FlowState(0.0, _data(torus, seed=4))
    a = step_full(state, cfg)
    b = Integrator(torus, cfg).step_full(state)
    assert a.t == pytest.approx(0.01)
    assert np.array_equal(a.field.coeffs, b.field.coeffs)


def test_blowup_guard_stops_the_run(torus):
    cfg = RunConfig(dt=0.01, T=0.1, blowup_guard=1e-6)
    with pytest.raises(BlowupError):
        simulate(_data(torus), cfg)


def test_runs_are_deterministic(torus):
    cfg = RunConfig(epsilon=0.1, dt=0.01, T=0.05)
    a = simulate(_data(torus, seed=5), cfg).to_frame()
    b = simulate(_data(torus, seed=5), cfg).to_frame()
    assert a.equals(b)
    assert math.isfinite(a["Hs"].iloc[-1])


def test_nonlinear_term_is_energy_neutral(torus):
    V = _data(torus, seed=6)
    N = nonlinear_term(V)
    norm = sobolev_norm(V, 0.0)
    assert abs(np.vdot(N.coeffs, V.coeffs)) <= 1e-11 * norm ** 3
    assert sobolev_norm(nonlinear_term(0.0 * V), 0.0) == 0.0


def test_energy_trace_does_not_depend_on_epsilon(torus):
    data = _data(torus, seed=7, amplitude=0.5)
    traces = []
    for epsilon in (1e-1, 1e-3):
        cfg = RunConfig(epsilon=epsilon, nu=0.05, nu_prime=0.05, dt=5e-4, T=0.2)
        traces.append(simulate(data, cfg, sample_every=20, keep_fields=False).to_frame()["L2"])
    slow, fast = (np.asarray(trace, dtype=float) for trace in traces)
    assert len(slow) == len(fast)
    assert np.max(np.abs(fast - slow) / slow) <= 1e-3
