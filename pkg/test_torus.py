"""
Torus geometry, transforms, multipliers and norms
"""

import math

import numpy as np
import pytest

from core.errors import DomainError, ValidationError
from core.torus import (
    SpectralField,
    TorusSpec,
    aniso_lebesgue_norm,
    biot_savart,
    clean,
    curl_h,
    divergence,
    dyadic_block,
    dyadic_range,
    from_physical,
    gradient,
    hermitian_residual,
    inverse_laplacian_h,
    leray_project,
    linf_v_l2_h,
    low_pass,
    multiply,
    perp_gradient_h,
    poincare_constant_h,
    sobolev_norm,
    to_physical,
    transport,
)


@pytest.fixture
def torus():
    return TorusSpec.build((1.0, 1.3, 0.8), (8, 8, 8))


def _random_field(torus, seed=0, components=4):
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((components,) + torus.grid)
    return clean(from_physical(torus, values))


def test_build_rejects_bad_grid_and_periods():
    with pytest.raises(ValidationError):
        TorusSpec.build((1.0, 1.0, 1.0), (8, 7, 8))
    with pytest.raises(ValidationError):
        TorusSpec.build((1.0, 1.0, 1.0), (2, 8, 8))
    with pytest.raises(ValidationError):
        TorusSpec.build((1.0, -1.0, 1.0), (8, 8, 8))


def test_band_follows_two_thirds_rule():
    torus = TorusSpec.build((1.0, 1.0, 1.0), (16, 16, 8))
    assert torus.band == (5, 5, 2)
    raw = TorusSpec.build((1.0, 1.0, 1.0), (16, 16, 8), dealias=False)
    assert raw.band == (7, 7, 3)


def test_single_sine_has_expected_coefficient(torus):
    x1, _, _ = torus.coordinates
    f = from_physical(torus, np.sin(x1 / torus.a1))
    assert f.coeffs[(0,) + torus.index_of((1, 0, 0))] == pytest.approx(-0.5j, abs=1e-14)
    assert f.coeffs[(0,) + torus.index_of((-1, 0, 0))] == pytest.approx(0.5j, abs=1e-14)
    assert np.allclose(to_physical(f)[0], np.sin(x1 / torus.a1), atol=1e-13)


def test_gradient_matches_analytic_derivative(torus):
    x1, _, x3 = torus.coordinates
    f = from_physical(torus, np.cos(x1 / torus.a1) * np.sin(2 * x3 / torus.a3))
    grad = to_physical(gradient(f))
    expected_1 = -np.sin(x1 / torus.a1) * np.sin(2 * x3 / torus.a3) / torus.a1
    expected_3 = 2 * np.cos(x1 / torus.a1) * np.cos(2 * x3 / torus.a3) / torus.a3
    assert np.allclose(grad[0], expected_1, atol=1e-12)
    assert np.allclose(grad[1], 0.0, atol=1e-12)
    assert np.allclose(grad[2], expected_3, atol=1e-12)


def test_leray_projection_is_idempotent_and_solenoidal(torus):
    f = _random_field(torus)
    p = leray_project(f)
    assert divergence(p).max_abs() < 1e-13
    assert np.allclose(leray_project(p).coeffs, p.coeffs, atol=1e-14)
    # theta is untouched
    assert np.allclose(p.coeffs[3], f.coeffs[3])


def test_biot_savart_recovers_velocity_from_vorticity(torus):
    x1, x2, x3 = torus.coordinates
    psi = from_physical(torus, np.sin(x1 / torus.a1) * np.sin(x2 / torus.a2) * np.cos(x3 / torus.a3))
    u = perp_gradient_h(psi)
    omega = curl_h(u)
    recovered = biot_savart(omega)
    assert np.allclose(recovered.coeffs, u.coeffs, atol=1e-13)


def test_inverse_laplacian_needs_zero_horizontal_average(torus):
    _, _, x3 = torus.coordinates
    f = from_physical(torus, np.cos(x3 / torus.a3))
    with pytest.raises(DomainError):
        inverse_laplacian_h(f)


def test_sobolev_norm_of_single_mode(torus):
    n = (1, 2, -1)
    f = SpectralField.mode(torus, n, [1.0, 0.0, 0.0, 0.0])
    k2 = float(np.sum(torus.check(n) ** 2))
    for s in (0.0, 0.7, 2.0):
        assert sobolev_norm(f, s) == pytest.approx(math.sqrt(2.0 * (1.0 + k2) ** s), rel=1e-14)


def test_plancherel_with_normalized_measure(torus):
    f = _random_field(torus, seed=3)
    physical = to_physical(f)
    mean_square = float(np.mean(np.sum(physical ** 2, axis=0)))
    assert sobolev_norm(f, 0.0) ** 2 == pytest.approx(mean_square, rel=1e-12)


def test_clean_restores_hermitian_symmetry(torus):
    rng = np.random.default_rng(1)
    raw = SpectralField(torus, rng.standard_normal((4,) + torus.grid) + 1j * rng.standard_normal((4,) + torus.grid))
    assert hermitian_residual(raw) > 0.1
    assert hermitian_residual(clean(raw)) < 1e-15


def test_transport_of_shear_flow(torus):
    x1, x2, _ = torus.coordinates
    v = from_physical(torus, np.stack([np.sin(x2 / torus.a2), 0 * x1, 0 * x1]))
    w = from_physical(torus, np.cos(x1 / torus.a1))
    result = to_physical(transport(v, w))[0]
    expected = -np.sin(x2 / torus.a2) * np.sin(x1 / torus.a1) / torus.a1
    assert np.allclose(result, expected, atol=1e-13)


def test_lebesgue_ordering_and_equal_exponents(torus):
    f = _random_field(torus, seed=5, components=1)
    assert aniso_lebesgue_norm(f, 2.0, 4.0, order="vh") <= aniso_lebesgue_norm(f, 2.0, 4.0, order="hv") + 1e-12
    assert aniso_lebesgue_norm(f, 3.0, 3.0, order="vh") == pytest.approx(
        aniso_lebesgue_norm(f, 3.0, 3.0, order="hv"), rel=1e-12
    )
    with pytest.raises(ValidationError):
        aniso_lebesgue_norm(f, 0.5, 2.0)


def test_linf_v_l2_h_of_layered_field(torus):
    x1, _, x3 = torus.coordinates
    f = from_physical(torus, np.sin(x1 / torus.a1) * (1.0 + 0.5 * np.cos(x3 / torus.a3)))
    assert linf_v_l2_h(f) == pytest.approx(1.5 * math.sqrt(0.5), rel=1e-12)


def test_poincare_constant_uses_longest_horizontal_period():
    torus = TorusSpec.build((1.0, 2.0, 0.5), (8, 8, 8))
    assert poincare_constant_h(torus) == pytest.approx(0.25)


def test_dyadic_blocks_sum_to_field(torus):
    f = _random_field(torus, seed=7)
    total = SpectralField.zeros(torus)
    for q in dyadic_range(torus):
        total = total + dyadic_block(f, q)
    assert np.allclose(total.coeffs, f.coeffs, atol=1e-14)
    top = max(dyadic_range(torus))
    assert np.allclose(low_pass(f, top + 1).coeffs, f.coeffs, atol=1e-14)
    with pytest.raises(ValidationError):
        dyadic_block(f, -2)


def test_transform_round_trip(torus):
    f = _random_field(torus, seed=5)
    back = from_physical(torus, to_physical(f))
    scale = float(np.max(np.abs(f.coeffs)))
    assert np.max(np.abs(back.coeffs - f.coeffs)) <= 1e-13 * scale


def test_products_of_modes_and_dealiasing(torus):
    a = SpectralField.mode(torus, (1, 0, 0), [1.0])
    b = SpectralField.mode(torus, (0, 1, 0), [1.0])
    product = multiply(a, b)
    assert product.coeffs[(0,) + torus.index_of((1, 1, 0))] == pytest.approx(1.0, abs=1e-13)
    assert product.coeffs[(0,) + torus.index_of((1, -1, 0))] == pytest.approx(1.0, abs=1e-13)
    # (2,0,0) * (1,0,0) puts its sum at n1 = 3, outside the band of an 8-point grid
    c = SpectralField.mode(torus, (2, 0, 0), [1.0])
    kept = multiply(c, a)
    raw = multiply(c, a, dealias=False)
    outside = (0,) + torus.index_of((3, 0, 0))
    assert kept.coeffs[outside] == 0
    assert raw.coeffs[outside] == pytest.approx(1.0, abs=1e-13)
    assert kept.coeffs[(0,) + torus.index_of((1, 0, 0))] == pytest.approx(1.0, abs=1e-13)
