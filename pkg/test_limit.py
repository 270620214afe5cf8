"""
Limit system: resonant bilinear form, limit diffusion, kernel and oscillating solvers
"""

import numpy as np
import pytest

from core.dynamics import RunConfig
from core.errors import CertificateError, ValidationError
from core.initial_data import make_initial_data, random_coefficients
from core.limit import LimitSystem, solve_limit, solve_limit_bar, solve_limit_osc
from core.resonance import certify_nonresonant
from core.torus import SpectralField, TorusSpec
from core.waves import KERNEL, MINUS, PLUS

NU, NU_PRIME = 0.05, 0.02


@pytest.fixture(scope="module")
def torus():
    return TorusSpec.build((1.0, 1.0, 1.37), (8, 8, 8))


@pytest.fixture(scope="module")
def system(torus):
    return LimitSystem(torus, NU, NU_PRIME)


@pytest.fixture(scope="module")
def certificate(torus):
    return certify_nonresonant(torus, torus.band)


def test_kernel_limit_is_two_dimensional_transport(torus, system):
    frame = system.frame
    mask = torus.band_mask & ~torus.degenerate
    rng = np.random.default_rng(0)
    for _ in range(3):
        U = frame.project_bar(random_coefficients(torus, rng))
        limit = frame.to_eigen(system.limit_Q(U, U), check=False).slots[KERNEL]
        direct = system.kernel_transport_form(U)
        scale = float(np.linalg.norm(direct[mask]))
        assert scale > 0
        assert float(np.linalg.norm((limit - direct)[mask])) <= 1e-10 * scale


def test_limit_Q_is_symmetric(torus, system):
    rng = np.random.default_rng(1)
    A = random_coefficients(torus, rng)
    B = random_coefficients(torus, rng)
    assert np.allclose(system.limit_Q(A, B).coeffs, system.limit_Q(B, A).coeffs, atol=1e-15)


def test_limit_diffusion_keeps_equal_frequencies_only(torus, system):
    n = (1, 0, 1)
    k2 = float(np.sum(torus.check(n) ** 2))
    matrices = system.limit_diffusion_matrix(n)
    full, resonant = matrices["full"], matrices["resonant"]
    assert abs(full[PLUS, MINUS]) == pytest.approx(0.5 * abs(NU - NU_PRIME) * k2, rel=1e-12)
    assert abs(full[KERNEL, PLUS]) < 1e-15
    assert resonant[PLUS, MINUS] == 0 and resonant[MINUS, PLUS] == 0
    assert resonant[KERNEL, KERNEL] == pytest.approx(-NU * k2, rel=1e-12)
    assert resonant[PLUS, PLUS] == pytest.approx(-0.5 * (NU + NU_PRIME) * k2, rel=1e-12)


def test_limit_diffusion_on_wave_mode(torus, system):
    n = (1, -1, 2)
    vector = system.frame.basis[(PLUS, slice(None)) + torus.index_of(n)]
    mode = SpectralField.mode(torus, n, vector)
    k2 = float(np.sum(torus.check(n) ** 2))
    damped = system.limit_D(mode)
    assert np.allclose(damped.coeffs, -0.5 * (NU + NU_PRIME) * k2 * mode.coeffs, atol=1e-15)


def test_kernel_flow_of_steady_vortex_decays_exactly():
    torus = TorusSpec.build((1.0, 1.0, 1.37), (8, 8, 8))
    initial = make_initial_data({"recipe": "kernel_vortex", "layers": 1}, torus)
    cfg = RunConfig(nu=0.1, nu_prime=0.1, dt=0.01, T=0.3)
    bar = solve_limit_bar(initial, cfg)
    omega = bar.column("omega_L2")
    times = np.array(bar.times)
    assert np.allclose(omega, omega[0] * np.exp(-2.0 * cfg.nu * times), rtol=1e-10)
    assert len(bar) == cfg.steps + 1


def test_kernel_flow_rejects_wave_data(torus, system):
    U = system.frame.project_osc(random_coefficients(torus, np.random.default_rng(2)))
    with pytest.raises(ValidationError):
        solve_limit_bar(U, RunConfig(dt=0.01, T=0.05))


def test_limit_solution_satisfies_gronwall_bound(torus, system, certificate):
    initial = make_initial_data(
        {"recipe": "random_solenoidal", "amplitude": 0.05, "s": 1.0}, torus, seed=3
    )
    cfg = RunConfig(nu=NU, nu_prime=NU_PRIME, dt=0.01, T=0.1)
    traj = solve_limit(initial, cfg, certificate=certificate, system=system)
    assert len(traj) == cfg.steps + 1
    assert traj.osc.gronwall_holds()
    bar_l2 = traj.bar.column("L2")
    assert bar_l2[-1] < bar_l2[0]
    state = traj.state(len(traj) - 1)
    assert np.allclose(system.frame.project_bar(state).coeffs, traj.bar.velocity(-1).coeffs, atol=1e-14)


def test_limit_solver_needs_matching_certificate(torus, system):
    initial = make_initial_data({"recipe": "random_solenoidal", "amplitude": 0.05}, torus, seed=4)
    cfg = RunConfig(nu=NU, nu_prime=NU_PRIME, dt=0.01, T=0.05)
    with pytest.raises(CertificateError):
        solve_limit(initial, cfg, certificate=None, system=system)
    other = certify_nonresonant(TorusSpec.build((1.0, 1.0, 1.37), (8, 8, 4)), 1)
    with pytest.raises(CertificateError):
        solve_limit(initial, cfg, certificate=other, system=system)


def test_limit_solver_rejects_horizontal_average(torus, system, certificate):
    layered = SpectralField.mode(torus, (0, 0, 1), [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        solve_limit(layered, RunConfig(dt=0.01, T=0.05), certificate=certificate, system=system)


def test_oscillating_flow_without_kernel_is_heat_decay(torus, system, certificate):
    cfg = RunConfig(nu=NU, nu_prime=NU_PRIME, dt=0.01, T=0.05)
    n = (1, -1, 2)
    vector = system.frame.basis[(PLUS, slice(None)) + torus.index_of(n)]
    mode = SpectralField.mode(torus, n, vector)
    bar = solve_limit_bar(SpectralField.zeros(torus), cfg, frame=system.frame)
    osc = solve_limit_osc(mode, bar, cfg, certificate=certificate, system=system)
    k2 = float(np.sum(torus.check(n) ** 2))
    expected = np.exp(-0.5 * (NU + NU_PRIME) * k2 * cfg.T) * mode.coeffs
    assert np.allclose(osc.fields[-1].coeffs, expected, atol=1e-12)


def test_oscillating_flow_is_linear(torus, system, certificate):
    cfg = RunConfig(nu=NU, nu_prime=NU_PRIME, dt=0.01, T=0.05)
    data = make_initial_data(
        {"recipe": "random_solenoidal", "amplitude": 0.05, "s": 1.0}, torus, seed=8
    )
    bar = solve_limit_bar(system.frame.project_bar(data), cfg, frame=system.frame)
    U = system.frame.project_osc(data)
    once = solve_limit_osc(U, bar, cfg, certificate=certificate, system=system).fields[-1]
    twice = solve_limit_osc(2.0 * U, bar, cfg, certificate=certificate, system=system).fields[-1]
    scale = float(np.max(np.abs(once.coeffs)))
    assert np.max(np.abs(twice.coeffs - 2.0 * once.coeffs)) <= 1e-13 * scale


def test_gronwall_bound_uses_constant_over_mean_viscosity(torus, system, certificate):
    initial = make_initial_data(
        {"recipe": "random_solenoidal", "amplitude": 0.05, "s": 1.0}, torus, seed=5
    )
    cfg = RunConfig(nu=NU, nu_prime=NU_PRIME, dt=0.01, T=0.05)
    traj = solve_limit(initial, cfg, certificate=certificate, system=system, gronwall_constant=2.0)
    nu_bar = 0.5 * (NU + NU_PRIME)
    integral = traj.bar.column("grad_Hs_integral")
    rhs = traj.osc.column("gronwall_rhs")
    start = traj.osc.column("gronwall_lhs")[0]
    assert np.allclose(rhs, start * np.exp(2.0 / nu_bar * integral), rtol=1e-12)
