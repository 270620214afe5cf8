"""Randomized checks of the harmonic-analysis inequalities used on the torus.

Each check draws seeded random fields, measures the ratio the inequality bounds
and reports the fitted constant next to pass/fail.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.logger import get_child

from .initial_data import SeedStream, random_coefficients
from .torus import (
    SpectralField,
    TorusSpec,
    aniso_lebesgue_norm,
    dyadic_block,
    dyadic_range,
    fractional_laplacian,
    from_physical,
    gradient,
    horizontal_gradient_energy,
    lebesgue_norm,
    multiply,
    poincare_constant_h,
    sobolev_norm,
    to_physical,
)

ORDER_PAIRS: Tuple[Tuple[float, float], ...] = ((1.0, 2.0), (2.0, 4.0), (2.0, math.inf), (1.0, math.inf))


@dataclass
class HarmonicCheck:
    name: str
    passed: bool
    fitted_constant: float
    bound: float
    samples: int
    detail: str = ""

    def row(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "passed": self.passed,
            "fitted_constant": self.fitted_constant,
            "bound": self.bound,
            "samples": self.samples,
            "detail": self.detail,
        }


@dataclass
class HarmonicReport:
    checks: List[HarmonicCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([check.row() for check in self.checks])

    def __getitem__(self, name: str) -> HarmonicCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


def _finite_max(values: Sequence[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return max(finite) if finite else 0.0


def bernstein_check(
    torus: TorusSpec, seeds: SeedStream, *, samples: int, k: float = 1.0, p: float = 2.0,
    cap: float = 16.0,
) -> HarmonicCheck:
    """C^{-k} 2^{qk} ||u||_p <= ||(-Delta)^{k/2} u||_p <= C^k 2^{qk} ||u||_p on shell-localized u."""
    ratios: List[float] = []
    blocks = [q for q in dyadic_range(torus) if q >= 0]
    for index in range(samples):
        base = random_coefficients(torus, seeds.generator("harmonic.bernstein"), components=1,
                                   slope=0.0, solenoidal=False)
        q = blocks[index % len(blocks)]
        u = dyadic_block(base, q)
        norm = lebesgue_norm(u, p)
        if norm == 0.0:
            continue
        ratios.append(lebesgue_norm(fractional_laplacian(u, k), p) / (2.0 ** (q * k) * norm))
    if not ratios:
        return HarmonicCheck(f"bernstein_p{p:g}", True, 0.0, cap, 0, "no nonempty shells")
    fitted = max(max(ratios), 1.0 / min(ratios)) ** (1.0 / k)
    return HarmonicCheck(
        f"bernstein_p{p:g}", fitted <= cap, fitted, cap, len(ratios),
        f"ratio range [{min(ratios):.4g}, {max(ratios):.4g}]",
    )


def _gn_ratio(u: SpectralField) -> float:
    lhs = aniso_lebesgue_norm(u, 4.0, 2.0, order="vh")
    l2 = sobolev_norm(u, 0.0)
    grad = math.sqrt(horizontal_gradient_energy(u))
    if l2 == 0.0:
        return 0.0
    return lhs / math.sqrt(l2 * grad)


def _embed(field: SpectralField, torus: TorusSpec) -> SpectralField:
    """Same band-limited function on a finer grid."""
    out = np.zeros((field.components,) + torus.grid, dtype=complex)
    src = field.torus
    band = src.band_mask
    for n in zip(*(m[band] for m in src.modes)):
        out[(slice(None),) + torus.index_of(n)] = field.coeffs[(slice(None),) + src.index_of(n)]
    return SpectralField(torus, out)


def gagliardo_nirenberg_check(
    torus: TorusSpec, fine: TorusSpec, seeds: SeedStream, *, samples: int, stability: float = 0.2,
) -> HarmonicCheck:
    """||u||_{L2_v L4_h} <= C ||u||^{1/2} ||grad_h u||^{1/2} for zero horizontal average,
    with C fitted on two grids holding the same band-limited fields."""
    coarse_ratios, fine_ratios = [], []
    for _ in range(samples):
        u = random_coefficients(torus, seeds.generator("harmonic.gagliardo_nirenberg"),
                                components=1, slope=1.0, solenoidal=False)
        coarse_ratios.append(_gn_ratio(u))
        fine_ratios.append(_gn_ratio(_embed(u, fine)))
    c_coarse, c_fine = _finite_max(coarse_ratios), _finite_max(fine_ratios)
    finite = all(math.isfinite(v) for v in coarse_ratios + fine_ratios)
    spread = abs(c_coarse - c_fine) / max(c_coarse, c_fine, 1e-300)
    return HarmonicCheck(
        "gagliardo_nirenberg", finite and spread <= stability, max(c_coarse, c_fine), stability,
        samples, f"C on {torus.grid}: {c_coarse:.6g}; on {fine.grid}: {c_fine:.6g}",
    )


def ordering_check(torus: TorusSpec, seeds: SeedStream, *, samples: int) -> HarmonicCheck:
    """||f||_{L^q_v L^p_h} <= ||f||_{L^p_h L^q_v} for p <= q."""
    worst = 0.0
    for _ in range(samples):
        f = random_coefficients(torus, seeds.generator("harmonic.ordering"), components=1,
                                slope=1.0, solenoidal=False, zero_horizontal_average=False)
        for p, q in ORDER_PAIRS:
            outer_v = aniso_lebesgue_norm(f, p, q, order="vh")
            outer_h = aniso_lebesgue_norm(f, p, q, order="hv")
            if outer_h > 0:
                worst = max(worst, outer_v / outer_h)
    return HarmonicCheck("lebesgue_ordering", worst <= 1.0 + 1e-10, worst, 1.0 + 1e-10,
                         samples, f"pairs {[(p, q) for p, q in ORDER_PAIRS]}")


def poincare_check(torus: TorusSpec, seeds: SeedStream, *, samples: int) -> HarmonicCheck:
    """||grad_h f||^2 >= c ||f||^2 for zero horizontal average; fitted c is the smallest ratio."""
    c = poincare_constant_h(torus)
    smallest = math.inf
    for _ in range(samples):
        f = random_coefficients(torus, seeds.generator("harmonic.poincare"), components=1,
                                slope=0.0, solenoidal=False)
        energy = f.energy()
        if energy > 0:
            smallest = min(smallest, horizontal_gradient_energy(f) / energy)
    passed = smallest >= c * (1.0 - 1e-12)
    return HarmonicCheck("poincare_h", passed, smallest, c, samples)


def commutator_check(torus: TorusSpec, seeds: SeedStream, *, samples: int, cap: float = 64.0) -> HarmonicCheck:
    """2^q ||[Delta_q, u] v|| / (||grad u||_inf ||v||) stays bounded for a smooth u."""
    x1, x2, x3 = torus.coordinates
    smooth = np.cos(x1 / torus.a1) + np.sin(x3 / torus.a3) + 0.5 * np.cos(x2 / torus.a2)
    u = from_physical(torus, smooth)
    grad_inf = float(np.max(np.abs(to_physical(gradient(u)))))
    ratios: List[float] = []
    blocks = [q for q in dyadic_range(torus) if q >= 0]
    for index in range(samples):
        v = random_coefficients(torus, seeds.generator("harmonic.commutator"), components=1,
                                slope=1.0, solenoidal=False)
        q = blocks[index % len(blocks)]
        comm = dyadic_block(multiply(u, v, dealias=True), q) - multiply(u, dyadic_block(v, q), dealias=True)
        norm_v = sobolev_norm(v, 0.0)
        if norm_v > 0:
            ratios.append(2.0 ** q * sobolev_norm(comm, 0.0) / (grad_inf * norm_v))
    fitted = _finite_max(ratios)
    return HarmonicCheck("commutator", fitted <= cap, fitted, cap, len(ratios))


def property_suite_harmonic(
    *,
    seed: int = 0,
    samples: int = 100,
    torus: Optional[TorusSpec] = None,
    fine: Optional[TorusSpec] = None,
    logger: Optional[logging.Logger] = None,
) -> HarmonicReport:
    log = logger.getChild("harmonic") if logger else get_child("harmonic")
    torus = torus or TorusSpec.build((1.0, 1.3, 0.8), (16, 16, 8))
    fine = fine or TorusSpec.build(torus.periods, tuple(2 * n for n in torus.grid))
    seeds = SeedStream(seed)
    report = HarmonicReport()
    report.checks.append(bernstein_check(torus, seeds, samples=samples, p=2.0))
    report.checks.append(bernstein_check(torus, seeds, samples=samples, p=4.0))
    report.checks.append(gagliardo_nirenberg_check(torus, fine, seeds, samples=samples))
    report.checks.append(ordering_check(torus, seeds, samples=samples))
    report.checks.append(poincare_check(torus, seeds, samples=samples))
    report.checks.append(commutator_check(torus, seeds, samples=samples))
    for check in report.checks:
        level = logging.INFO if check.passed else logging.WARNING
        log.log(level, "%s: %s (fitted %.6g, bound %.6g)", check.name,
                "pass" if check.passed else "FAIL", check.fitted_constant, check.bound)
    return report
