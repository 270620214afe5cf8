"""
Resonant triads, certificates, cancellations and the resonance polynomial
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from core.errors import (
    ConstraintError,
    DegenerateError,
    ExactnessError,
    ResonantDomainError,
    ValidationError,
)
from core.initial_data import random_coefficients
from core.resonance import (
    Mode,
    NonResonanceCertificate,
    a3_resonant_roots,
    beta_max,
    c_pm0_antisymmetry_defect,
    c_pm0_exact,
    certify_nonresonant,
    classify,
    coefficient_C,
    enumerate_resonant_triads,
    frequency_value,
    omega_sum,
    polynomial_residual,
    radical_sum_is_zero,
    resonance_discriminant,
    resonance_polynomial,
    underline_Q,
)
from core.torus import TorusSpec
from core.waves import WaveFrame

RESONANT_K = (1, 0, 0)
RESONANT_M = (0, 1, 1)


@pytest.fixture(scope="module")
def resonant_a3():
    roots = a3_resonant_roots(RESONANT_K, RESONANT_M, (1, 1))
    assert roots, "omega(k) - omega(m) - omega(k+m) changes sign in a3, so a root exists"
    return roots


def test_mode_labels_and_classes():
    assert Mode.parse("+") is Mode.PLUS
    assert Mode.parse(2) is Mode.MINUS
    assert Mode.PLUS.slot == 1 and Mode.MINUS.sign == -1
    with pytest.raises(ValidationError):
        Mode.parse("x")
    assert classify((Mode.KERNEL, Mode.KERNEL, Mode.KERNEL)) == "R0"
    assert classify((Mode.PLUS, Mode.PLUS, Mode.KERNEL)) == "R1"
    assert classify((Mode.KERNEL, Mode.MINUS, Mode.KERNEL)) == "R2"
    assert classify((Mode.PLUS, Mode.MINUS, Mode.KERNEL)) == "R3"
    assert classify((Mode.PLUS, Mode.MINUS, Mode.PLUS)) == "osc"


def test_omega_sum_checks_closure():
    torus = TorusSpec.build((1.0, 1.0, 1.0), (8, 8, 8))
    with pytest.raises(ConstraintError):
        omega_sum(torus, (1, 0, 0), (0, 1, 0), (1, 0, 0), "+", "+", "+")
    value = omega_sum(torus, (1, 0, 0), (0, 1, 0), (1, 1, 0), "+", "+", "+")
    assert value == pytest.approx(1.0)
    assert frequency_value(torus, (1, 0, 1)) == pytest.approx(1.0 / math.sqrt(2.0))


def test_radical_sums_decided_exactly():
    assert radical_sum_is_zero([(1, Fraction(1, 2)), (-1, Fraction(1, 2))])
    assert not radical_sum_is_zero([(1, Fraction(1, 2)), (1, Fraction(1, 2))])
    # sqrt(1/8) + sqrt(1/8) = sqrt(1/2)
    assert radical_sum_is_zero([(1, Fraction(1, 8)), (1, Fraction(1, 8)), (-1, Fraction(1, 2))])
    assert not radical_sum_is_zero([(1, Fraction(1, 3)), (1, Fraction(1, 5)), (-1, Fraction(1, 2))])


def test_enumeration_contains_kernel_triads_and_is_worker_independent():
    torus = TorusSpec.build((1.0, 1.0, 1.37), (8, 8, 8))
    serial = enumerate_resonant_triads(torus, 1)
    parallel = enumerate_resonant_triads(torus, 1, workers=3)
    assert serial == parallel
    classes = {t.set_class for t in serial}
    assert "R0" in classes
    only_kernel = enumerate_resonant_triads(torus, 1, labels=[("0", "0", "0")])
    assert only_kernel and all(t.set_class == "R0" for t in only_kernel)
    assert all(abs(t.omega_sum) < 1e-12 for t in serial)


def test_exact_enumeration_matches_floating_on_rational_torus():
    torus = TorusSpec.build((1.0, 1.0, 1.0), (8, 8, 8), squared_periods=(1, 1, 1))
    floating = {(t.k, t.m, t.labels) for t in enumerate_resonant_triads(torus, 1)}
    exact = {(t.k, t.m, t.labels) for t in enumerate_resonant_triads(torus, 1, exact=True)}
    assert floating == exact


def test_exact_mode_needs_rational_periods():
    torus = TorusSpec.build((1.0, 1.0, 1.37), (8, 8, 8))
    with pytest.raises(ExactnessError):
        enumerate_resonant_triads(torus, 1, exact=True)
    with pytest.raises(ExactnessError):
        certify_nonresonant(torus, 1, exact=True)


def test_exact_certificate_on_unit_torus():
    torus = TorusSpec.build((1.0, 1.0, 1.0), (8, 8, 8), squared_periods=(1, 1, 1))
    certificate = certify_nonresonant(torus, 1)
    assert certificate.method == "exact"
    assert certificate.margin > 0
    assert certificate.covers(1) and not certificate.covers(2)
    payload = certificate.as_dict()
    assert payload["N"] == 1 and payload["torus"] == [1.0, 1.0, 1.0]


def test_roots_resubstitute_and_constructed_root_fails_certification(resonant_a3):
    for a3 in resonant_a3:
        value, scale = polynomial_residual(RESONANT_K, RESONANT_M, (1, 1), a3)
        assert value <= 1e-8 * scale
    a3 = resonant_a3[0]
    torus = TorusSpec.build((1.0, 1.0, a3), (8, 8, 8))
    with pytest.raises(ResonantDomainError) as info:
        certify_nonresonant(torus, 1, tolerance=1e-9)
    offenders = info.value.triads
    assert offenders
    pairs = {(t.k, t.m) for t in offenders}
    assert (RESONANT_K, RESONANT_M) in pairs or (RESONANT_M, RESONANT_K) in pairs
    assert "resonant" in str(info.value)


def test_root_free_a3_certifies_with_positive_margin(resonant_a3):
    # every pair inside the N = 1 box, roots in a window around 1
    box = [(i, j, l) for i in (-1, 0, 1) for j in (-1, 0, 1) for l in (-1, 0, 1) if i or j]
    roots = set()
    for idx, k in enumerate(box):
        for m in box[idx:]:
            if k[0] + m[0] == 0 and k[1] + m[1] == 0:
                continue
            try:
                found = a3_resonant_roots(k, m, (1, 1), lower=0.25, upper=4.0)
            except DegenerateError:
                continue
            roots.update(round(r, 12) for r in found)
    ordered = sorted(roots | {0.25, 4.0})
    gaps = [(b - a, 0.5 * (a + b)) for a, b in zip(ordered, ordered[1:])]
    _, a3 = max(gaps)
    certificate = certify_nonresonant(TorusSpec.build((1.0, 1.0, a3), (8, 8, 8)), 1)
    assert certificate.margin > 1e-6
    assert isinstance(certificate, NonResonanceCertificate)


def test_roots_reject_degenerate_frequencies():
    with pytest.raises(DegenerateError):
        a3_resonant_roots((0, 0, 1), (1, 0, 0))


def test_discriminant_factorizes_over_signed_omega_sums():
    rng = np.random.default_rng(0)
    a = (1.0, 1.3, 0.7)
    torus = TorusSpec.build(a, (8, 8, 8))
    checked = 0
    while checked < 2000:
        k = tuple(int(x) for x in rng.integers(-4, 5, size=3))
        m = tuple(int(x) for x in rng.integers(-4, 5, size=3))
        n = tuple(k[i] + m[i] for i in range(3))
        if any(x[0] == 0 and x[1] == 0 for x in (k, m, n)):
            continue
        wk, wm, wn = (frequency_value(torus, x) for x in (k, m, n))
        product = (wk + wm + wn) * (-wk + wm + wn) * (wk - wm + wn) * (wk + wm - wn)
        assert resonance_discriminant(k, m, a) == pytest.approx(-product, abs=1e-12)
        kk, mm, nn = (float(np.sum(torus.check(x) ** 2)) for x in (k, m, n))
        assert resonance_polynomial(k, m, a) == pytest.approx(
            resonance_discriminant(k, m, a) * (kk * mm * nn) ** 2, rel=1e-9, abs=1e-9
        )
        checked += 1


def test_c_pm0_is_antisymmetric():
    assert c_pm0_exact((1, 0, 1), (0, 1, 1)) == 2
    assert c_pm0_exact((0, 1, 1), (1, 0, 1)) == -2
    defect, pairs = c_pm0_antisymmetry_defect(6)
    assert defect == 0 and pairs > 0


def test_coefficient_rejects_degenerate_and_unclosed_triads():
    torus = TorusSpec.build((1.0, 1.0, 1.0), (8, 8, 8))
    with pytest.raises(DegenerateError):
        coefficient_C(torus, (0, 0, 1), (1, 0, 0), (1, 0, 1), "+", "+", "+")
    with pytest.raises(ConstraintError):
        coefficient_C(torus, (1, 0, 0), (0, 1, 0), (1, 0, 0), "+", "+", "+")
    value = coefficient_C(torus, (1, 0, 1), (0, 1, 1), (1, 1, 2), "+", "-", "0")
    assert np.isfinite(abs(value))


def test_horizontal_average_cancellations_on_random_fields():
    torus = TorusSpec.build((1.0, 1.2, 0.9), (8, 8, 8))
    frame = WaveFrame(torus)
    rng = np.random.default_rng(3)
    for _ in range(5):
        U = random_coefficients(torus, rng)
        energy = U.energy()
        assert beta_max(U, frame) <= 1e-12 * energy
        sums = underline_Q(U, frame)
        assert sums
        assert max(float(np.max(np.abs(v))) for v in sums.values()) <= 1e-12 * energy


def test_float_coefficient_matches_integer_closed_form():
    torus = TorusSpec.build((1.0, 1.0, 1.0), (8, 8, 8))
    rng = np.random.default_rng(4)
    checked = zeros = 0
    while checked < 400:
        k = tuple(int(x) for x in rng.integers(-3, 4, size=3))
        m = tuple(int(x) for x in rng.integers(-3, 4, size=3))
        n = tuple(k[i] + m[i] for i in range(3))
        if any(x[0] == 0 and x[1] == 0 for x in (k, m, n)):
            continue
        value = coefficient_C(torus, k, m, n, "+", "+", "0")
        exact = c_pm0_exact(k, m)
        # C^{+,0} = c_pm0_exact / (4 |k_h| |k| |m_h| |m| |n_h|)
        scale = math.sqrt(
            (k[0] ** 2 + k[1] ** 2) * sum(x * x for x in k)
            * (m[0] ** 2 + m[1] ** 2) * sum(x * x for x in m) * (n[0] ** 2 + n[1] ** 2)
        )
        assert abs(value.imag) <= 1e-12
        assert 4.0 * value.real * scale == pytest.approx(exact, abs=1e-9)
        assert (abs(value) <= 1e-12) == (exact == 0)
        zeros += exact == 0
        checked += 1
    assert 0 < zeros < checked


def _signed_sum_minimum(torus, k, m):
    n = tuple(k[i] + m[i] for i in range(3))
    return min(
        abs(omega_sum(torus, k, m, n, a, b, c))
        for a in ("+", "-") for b in ("+", "-") for c in ("+", "-")
    )


def test_polynomial_zero_set_matches_eigenvalue_sums(resonant_a3):
    tol = 1e-9
    constructed = [(RESONANT_K, RESONANT_M, a3) for a3 in resonant_a3]
    for k, m in (((1, 0, 1), (0, 1, -1)), ((1, 1, 0), (1, -1, 1)), ((1, 0, 0), (1, 1, 2))):
        constructed += [(k, m, a3) for a3 in a3_resonant_roots(k, m, (1, 1))]
    for k, m, a3 in constructed:
        a = (1.0, 1.0, a3)
        torus = TorusSpec.build(a, (8, 8, 8))
        assert abs(resonance_discriminant(k, m, a)) <= tol
        assert _signed_sum_minimum(torus, k, m) <= tol

    a = (1.0, 1.3, 0.7)
    torus = TorusSpec.build(a, (8, 8, 8))
    rng = np.random.default_rng(9)
    checked = disagreements = 0
    while checked < 10_000:
        k = tuple(int(x) for x in rng.integers(-4, 5, size=3))
        m = tuple(int(x) for x in rng.integers(-4, 5, size=3))
        n = tuple(k[i] + m[i] for i in range(3))
        if any(x[0] == 0 and x[1] == 0 for x in (k, m, n)):
            continue
        polynomial_zero = abs(resonance_discriminant(k, m, a)) <= tol
        sums_zero = _signed_sum_minimum(torus, k, m) <= tol
        disagreements += polynomial_zero != sums_zero
        checked += 1
    assert disagreements == 0
