"""
Eigenframe of the penalized operator and the propagator L(tau)
"""

import json
import math

import numpy as np
import pytest

from core.errors import DomainError, ResidualError
from core.initial_data import random_coefficients
from core.torus import SpectralField, TorusSpec, from_physical, gradient, sobolev_norm
from core.waves import (
    GRADIENT,
    KERNEL,
    MINUS,
    PLUS,
    WaveFrame,
    build_frame,
    penalized_apply,
)


@pytest.fixture
def torus():
    return TorusSpec.build((1.0, 1.0, 1.37), (8, 8, 8))


@pytest.fixture
def frame(torus):
    return WaveFrame(torus)


def _solenoidal(torus, seed=0):
    return random_coefficients(torus, np.random.default_rng(seed))


def test_frame_is_orthonormal_eigenbasis_on_random_tori():
    rng = np.random.default_rng(11)
    for _ in range(5):
        periods = rng.uniform(0.3, 3.0, size=3)
        frame = WaveFrame(TorusSpec.build(periods, (16, 16, 16)))
        assert frame.gram_defect() <= 1e-14
        assert frame.eigen_residual() <= 1e-13
        k = frame.torus.wave
        for slot in (KERNEL, PLUS, MINUS):
            div = sum(k[j] * frame.basis[slot, j] for j in range(3))
            assert float(np.max(np.abs(div))) <= 1e-14


def test_eigen_coordinates_round_trip(torus, frame):
    U = _solenoidal(torus)
    coords = frame.to_eigen(U)
    assert float(np.max(np.abs(coords.residual))) < 1e-13
    assert np.allclose(frame.from_eigen(coords).coeffs, U.coeffs, atol=1e-14)


def test_to_eigen_rejects_gradient_fields(torus, frame):
    x1, _, x3 = torus.coordinates
    phi = from_physical(torus, np.cos(x1) * np.sin(x3 / torus.a3))
    grad = gradient(phi)
    field = SpectralField(torus, np.concatenate([grad.coeffs, np.zeros_like(grad.coeffs[:1])]))
    with pytest.raises(ResidualError):
        frame.to_eigen(field)


def test_hermitian_partner_relations(torus, frame):
    U = _solenoidal(torus, seed=2)
    coords = frame.to_eigen(U)
    n = (1, -2, 1)
    plus = coords.Uplus[torus.index_of(n)]
    minus = coords.Uminus[torus.index_of((-1, 2, -1))]
    assert plus == pytest.approx(np.conj(minus), abs=1e-14)
    kern = coords.U0[torus.index_of(n)]
    kern_partner = coords.U0[torus.index_of((-1, 2, -1))]
    assert kern == pytest.approx(-np.conj(kern_partner), abs=1e-14)


def test_projections_split_solenoidal_field(torus, frame):
    U = _solenoidal(torus, seed=3)
    total = frame.project_bar(U) + frame.project_osc(U) + frame.project_degenerate(U)
    assert np.allclose(total.coeffs, U.coeffs, atol=1e-14)
    assert np.allclose(frame.project_osc(frame.project_bar(U)).coeffs, 0.0, atol=1e-15)


@pytest.mark.parametrize("s", [0.0, 0.7, 2.0])
def test_propagator_preserves_sobolev_norms(torus, frame, s):
    U = _solenoidal(torus, seed=4)
    for tau in (0.3, -7.5, 120.0):
        assert sobolev_norm(frame.propagate(U, tau), s) == pytest.approx(sobolev_norm(U, s), rel=1e-12)


def test_propagator_group_property(torus, frame):
    U = _solenoidal(torus, seed=5)
    left = frame.propagate(frame.propagate(U, 1.25), -0.5)
    right = frame.propagate(U, 0.75)
    assert np.allclose(left.coeffs, right.coeffs, atol=1e-14)


def test_single_mode_full_rotation(torus, frame):
    n = (1, 0, 1)
    index = torus.index_of(n)
    vector = frame.basis[(PLUS, slice(None)) + index]
    mode = SpectralField.mode(torus, n, vector)
    period = 2.0 * math.pi / frame.omega[index]
    rotated = frame.propagate(mode, period)
    assert np.allclose(rotated.coeffs, mode.coeffs, atol=1e-12)
    half = frame.propagate(mode, 0.5 * period)
    assert np.allclose(half.coeffs, -mode.coeffs, atol=1e-12)


def test_penalized_operator_is_energy_neutral(torus):
    rng = np.random.default_rng(6)
    for _ in range(20):
        V = random_coefficients(torus, rng)
        assert abs(penalized_apply(V).inner(V)) <= 1e-12 * V.energy()


def test_kernel_is_annihilated(torus, frame):
    U = frame.project_bar(_solenoidal(torus, seed=7))
    assert penalized_apply(U).max_abs() < 1e-15


def test_build_frame_entries(torus):
    with pytest.raises(DomainError):
        build_frame(torus, (0, 0, 0))
    entry = build_frame(torus, (0, 0, 2))
    assert entry.degenerate and entry.omega == 0.0 and entry.e0 is None
    entry = build_frame(torus, (1, 1, 0))
    assert entry.omega == pytest.approx(1.0)
    payload = json.loads(json.dumps(entry.as_dict()))
    assert payload["n"] == [1, 1, 0]
    assert len(payload["eplus"]) == 4
    assert GRADIENT == 3
