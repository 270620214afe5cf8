"""Closed-form a priori bounds for the limit system, evaluated from the data norms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .dynamics import RunConfig
from .errors import ValidationError
from .torus import SpectralField, linf_v_l2_h, lpv_hsigma_norm, poincare_constant_h, sobolev_norm
from .waves import WaveFrame


@dataclass
class AprioriBounds:
    E1: float
    E2: float
    Phi: float
    e2_mode: str = "apriori"
    constants: Dict[str, float] = field(default_factory=dict)
    inputs: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, object]:
        return {"E1": self.E1, "E2": self.E2, "Phi": self.Phi, "E2_mode": self.e2_mode,
                "constants": dict(self.constants), "inputs": dict(self.inputs)}

    def fitted_constant(self, measured_sup_hs2: float) -> float:
        """Smallest multiplier of E1 that covers a measured sup ||ubar||_{H^s}^2."""
        if self.E1 == 0.0:
            return 0.0 if measured_sup_hs2 == 0.0 else math.inf
        return measured_sup_hs2 / self.E1


def horizontal_velocity(U: SpectralField, frame: Optional[WaveFrame] = None) -> SpectralField:
    frame = frame or WaveFrame(U.torus)
    bar = frame.project_bar(U)
    return SpectralField(U.torus, bar.coeffs[:2])


def horizontal_jacobian(u: SpectralField) -> SpectralField:
    """All d_j u_i for j, i in {1, 2}."""
    k1, k2, _ = u.torus.wave
    parts = [1j * kj * u.coeffs[i] for i in range(2) for kj in (k1, k2)]
    return SpectralField(u.torus, np.stack(parts))


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def phi_bound(g: float, b: float, nu: float, *, C: float, K: float, c: float) -> float:
    inner = _safe_exp(K / (c * nu) * (1.0 + b * b) * g * g)
    if g == 0.0:
        return 1.0
    return _safe_exp(C * K * K * g * g / (c * nu) * inner)


def apriori_bounds(
    U0: SpectralField,
    cfg: RunConfig,
    *,
    C: float = 1.0,
    K: float = 2.0,
    c: Optional[float] = None,
    bar=None,
    frame: Optional[WaveFrame] = None,
) -> AprioriBounds:
    """(E1, E2, Phi) from the norms of U0; `bar` (a kernel trajectory) switches E2 to the
    measured integral of ||grad ubar||_{H^s}^2."""
    if C <= 0 or K <= 0:
        raise ValidationError(f"bound constants must be positive, got C={C}, K={K}")
    torus = U0.torus
    frame = frame or WaveFrame(torus)
    c = poincare_constant_h(torus) if c is None else c
    if c <= 0:
        raise ValidationError(f"Poincare constant must be positive, got {c}")

    u_bar = horizontal_velocity(U0, frame)
    jac = horizontal_jacobian(u_bar)
    g = linf_v_l2_h(jac)
    b = linf_v_l2_h(u_bar)
    half = lpv_hsigma_norm(jac, math.inf, 0.5)
    bar_hs2 = sobolev_norm(u_bar, cfg.s) ** 2
    osc_hs2 = sobolev_norm(frame.project_osc(U0), cfg.s) ** 2

    Phi = phi_bound(g, b, cfg.nu, C=C, K=K, c=c)
    E1 = C * bar_hs2 * _safe_exp(C * K / (c * cfg.nu) * Phi * half) if bar_hs2 else 0.0
    if bar is not None:
        nu_bar = 0.5 * (cfg.nu + cfg.nu_prime)
        integral = float(bar.rows[-1]["grad_Hs_integral"])
        # exponent C / nu_bar, as in the oscillating-flow Gronwall bound
        E2 = C * osc_hs2 * _safe_exp(C / nu_bar * integral) if osc_hs2 else 0.0
        mode = "measured"
    else:
        E2 = C * osc_hs2 * _safe_exp(C * E1 / cfg.nu) if osc_hs2 else 0.0
        mode = "apriori"

    return AprioriBounds(
        E1=E1,
        E2=E2,
        Phi=Phi,
        e2_mode=mode,
        constants={"C": C, "K": K, "c": c},
        inputs={
            "grad_h_ubar_Linf_v_L2_h": g,
            "ubar_Linf_v_L2_h": b,
            "grad_h_ubar_Linf_v_H05_h": half,
            "ubar_Hs2": bar_hs2,
            "Uosc_Hs2": osc_hs2,
        },
    )
