"""Limit system: resonant bilinear form, limit diffusion, and the split solvers
for the kernel flow (2D stratified Navier-Stokes per layer) and the linear
oscillating equation driven by it."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from utils.logger import get_child
from utils.scheduler import run_loop

from .dynamics import RunConfig, grad_hs_energy, slot_diffusion
from .errors import BlowupError, CertificateError, ValidationError
from .resonance import NonResonanceCertificate
from .torus import (
    SpectralField,
    TorusSpec,
    biot_savart,
    clean,
    curl_h,
    inverse_sqrt_laplacian_h,
    linf_v_l2_h,
    sobolev_norm,
    transport,
)
from .triads import TriadTable
from .waves import GRADIENT, KERNEL, MINUS, PLUS, WaveFrame


class LimitSystem:
    """Resonant forms on one torus; the triad table is built once and shared."""

    def __init__(
        self,
        torus: TorusSpec,
        nu: float,
        nu_prime: float,
        *,
        frame: Optional[WaveFrame] = None,
        table: Optional[TriadTable] = None,
        tolerance: float = 1e-12,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.torus = torus
        self.nu = nu
        self.nu_prime = nu_prime
        self.frame = frame or (table.frame if table else WaveFrame(torus))
        self.logger = logger.getChild("limit") if logger else get_child("limit")
        self.table = table or TriadTable(self.frame, tolerance=tolerance, logger=logger)
        self.tolerance = tolerance
        full = slot_diffusion(self.frame, nu, nu_prime)
        omega = self.frame.slot_omega[:3]
        keep = np.abs(omega[:, None] - omega[None, :]) < tolerance
        self._diffusion = np.where(keep, full, 0.0)

    def resonant_transport(self, A: SpectralField, B: SpectralField) -> SpectralField:
        return self.table.resonant_sum(A, B)

    def limit_Q(self, A: SpectralField, B: SpectralField) -> SpectralField:
        if A is B:
            return self.table.resonant_sum(A, A)
        return 0.5 * (self.table.resonant_sum(A, B) + self.table.resonant_sum(B, A))

    def limit_D(self, U: SpectralField) -> SpectralField:
        slots = self.frame.to_eigen(U, check=False).slots
        out = np.zeros_like(slots)
        out[:3] = np.einsum("ca...,a...->c...", self._diffusion, slots[:3])
        return self.frame.slot_field(out)

    def rhs(self, U: SpectralField) -> SpectralField:
        """dU/dt of the limit system: -Q(U, U) + D U."""
        return self.limit_D(U) - self.limit_Q(U, U)

    def limit_diffusion_matrix(self, n: Sequence[int]) -> Dict[str, np.ndarray]:
        """Slot matrices (D e^a | e^c) at one frequency, full and resonant-restricted."""
        index = (slice(None), slice(None)) + self.torus.index_of(n)
        full = slot_diffusion(self.frame, self.nu, self.nu_prime)[index]
        return {"full": full, "resonant": self._diffusion[index]}

    def kernel_transport_form(self, U: SpectralField) -> np.ndarray:
        """e^0 coordinates of the kernel limit computed through the 2D transport of vorticity.

        With u = U^0 e^0 one has omega = i |n_h| U^0 and the kernel coordinate of
        P(u . grad u) is -i F(u . grad_h omega) / |n_h|.
        """
        bar = self.frame.project_bar(U)
        velocity = bar.with_coeffs(np.concatenate([bar.coeffs[:2], np.zeros_like(bar.coeffs[:2])]))
        omega = curl_h(velocity)
        advected = transport(velocity, omega, dealias=self.torus.dealias)
        advected = advected.with_coeffs(np.where(self.torus.degenerate, 0.0, advected.coeffs))
        return -1j * inverse_sqrt_laplacian_h(advected).coeffs[0]


# --- kernel flow -------------------------------------------------------------


def kernel_velocity(omega: SpectralField) -> SpectralField:
    """(u_h, 0, 0) from the layerwise Biot-Savart law."""
    u = biot_savart(omega).coeffs
    coeffs = np.concatenate([u, np.zeros_like(u)])
    return SpectralField(omega.torus, coeffs, zero_horizontal_average=True)


def kernel_vorticity(U: SpectralField) -> SpectralField:
    torus = U.torus
    omega = curl_h(U)
    return SpectralField(
        torus, np.where(torus.degenerate, 0.0, omega.coeffs), zero_horizontal_average=True
    )


class BarFlow:
    """IF-RK4 for d_t omega + u . grad_h omega = nu Laplace omega, u = grad_h^perp Laplace_h^{-1} omega."""

    def __init__(self, torus: TorusSpec, cfg: RunConfig) -> None:
        self.torus = torus
        self.cfg = cfg
        self._rate = -cfg.nu * torus.k2

    def heat(self, omega: SpectralField, h: float) -> SpectralField:
        return omega.with_coeffs(np.exp(h * self._rate) * omega.coeffs)

    def forcing(self, omega: SpectralField) -> SpectralField:
        return -transport(kernel_velocity(omega), omega, dealias=self.cfg.dealias)

    def _clean(self, omega: SpectralField) -> SpectralField:
        return clean(SpectralField(self.torus, omega.coeffs, zero_horizontal_average=True))

    def advance(self, omega: SpectralField, h: float) -> SpectralField:
        E = self.heat
        k1 = self.forcing(omega)
        k2 = self.forcing(self._clean(E(omega + (h / 2) * k1, h / 2)))
        k3 = self.forcing(self._clean(E(omega, h / 2) + (h / 2) * k2))
        k4 = self.forcing(self._clean(E(omega, h) + h * E(k3, h / 2)))
        out = E(omega, h) + (h / 6.0) * (E(k1, h) + 2.0 * E(k2 + k3, h / 2) + k4)
        return self._clean(out)


@dataclass
class BarTrajectory:
    torus: TorusSpec
    cfg: RunConfig
    times: List[float] = field(default_factory=list)
    vorticity: List[SpectralField] = field(default_factory=list)
    rows: List[Dict[str, float]] = field(default_factory=list)

    def velocity(self, index: int) -> SpectralField:
        return kernel_velocity(self.vorticity[index])

    def midpoint(self, index: int) -> SpectralField:
        """Kernel velocity half a step after sample `index`."""
        flow = BarFlow(self.torus, self.cfg)
        return kernel_velocity(flow.advance(self.vorticity[index], 0.5 * self.cfg.dt))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)


def _require_kernel(frame: WaveFrame, initial: SpectralField, tolerance: float = 1e-20) -> None:
    total = initial.energy()
    if total == 0.0:
        return
    slots = frame.to_eigen(initial, check=False).slots
    stray = float(np.sum(np.abs(slots[[PLUS, MINUS, GRADIENT]]) ** 2))
    stray += float(np.sum(np.abs(slots[KERNEL][frame.torus.degenerate]) ** 2))
    if stray > tolerance * max(total, 1.0):
        raise ValidationError(
            "kernel-flow initial data must lie in the kernel with zero horizontal average "
            f"(stray energy {stray:.3e})"
        )


def solve_limit_bar(
    initial: SpectralField,
    cfg: RunConfig,
    *,
    frame: Optional[WaveFrame] = None,
    logger: Optional[logging.Logger] = None,
) -> BarTrajectory:
    """Kernel flow over [0, T], every step kept (the oscillating solver reads them)."""
    torus = initial.torus
    log = logger.getChild("limit") if logger else get_child("limit")
    cfg.check_stability(torus)
    frame = frame or WaveFrame(torus)
    _require_kernel(frame, initial)
    flow = BarFlow(torus, cfg)
    omega = flow._clean(kernel_vorticity(initial))
    trajectory = BarTrajectory(torus, cfg)
    dissipation = {"value": 0.0, "last": 0.0}

    def record(t: float) -> None:
        u = kernel_velocity(omega)
        trajectory.times.append(t)
        trajectory.vorticity.append(omega)
        trajectory.rows.append({
            "t": t,
            "L2": sobolev_norm(u, 0.0),
            "Hs": sobolev_norm(u, cfg.s),
            "Linf_v_L2_h": linf_v_l2_h(u),
            "omega_L2": sobolev_norm(omega, 0.0),
            "grad_Hs_integral": dissipation["value"],
        })

    def advance(count: int) -> None:
        nonlocal omega
        omega = flow.advance(omega, cfg.dt)
        norm = sobolev_norm(omega, cfg.s)
        if not math.isfinite(norm) or norm > cfg.blowup_guard:
            raise BlowupError(f"kernel flow vorticity norm {norm:.3e} exceeded the guard")
        current = grad_hs_energy(kernel_velocity(omega), cfg.s)
        dissipation["value"] += 0.5 * cfg.dt * (dissipation["last"] + current)
        dissipation["last"] = current
        record(count * cfg.dt)

    dissipation["last"] = grad_hs_energy(kernel_velocity(omega), cfg.s)
    record(0.0)
    run_loop(advance, cycles=cfg.steps)
    log.info("kernel flow: %d steps, omega L2 %.6e -> %.6e",
             cfg.steps, trajectory.rows[0]["omega_L2"], trajectory.rows[-1]["omega_L2"])
    return trajectory


# --- oscillating flow --------------------------------------------------------


@dataclass
class OscTrajectory:
    times: List[float] = field(default_factory=list)
    fields: List[SpectralField] = field(default_factory=list)
    rows: List[Dict[str, float]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def gronwall_holds(self, slack: float = 0.05) -> bool:
        lhs = self.column("gronwall_lhs")
        rhs = self.column("gronwall_rhs")
        return bool(np.all(lhs <= (1.0 + slack) * rhs))

    def __len__(self) -> int:
        return len(self.rows)


def solve_limit_osc(
    initial_osc: SpectralField,
    bar: BarTrajectory,
    cfg: RunConfig,
    *,
    certificate: Optional[NonResonanceCertificate],
    system: Optional[LimitSystem] = None,
    gronwall_constant: float = 1.0,
    logger: Optional[logging.Logger] = None,
) -> OscTrajectory:
    """dU/dt = -project_osc(T_res(Ubar, U) + T_res(U, Ubar)) + D_lim U on the e+- slots."""
    torus = initial_osc.torus
    log = logger.getChild("limit") if logger else get_child("limit")
    if certificate is None or certificate.torus != torus or not certificate.covers(torus.band):
        raise CertificateError(
            f"torus {torus.periods} has no non-resonance certificate covering cutoff {torus.band}"
        )
    if len(bar) != cfg.steps + 1 or abs(bar.cfg.dt - cfg.dt) > 1e-15 * cfg.dt:
        raise ValidationError("kernel trajectory must be sampled at every step with the same dt")
    system = system or LimitSystem(torus, cfg.nu, cfg.nu_prime, logger=logger)
    frame = system.frame
    rate = np.zeros((4,) + torus.grid)
    nu_bar = 0.5 * (cfg.nu + cfg.nu_prime)
    rate[PLUS] = rate[MINUS] = -nu_bar * torus.k2

    def heat(U: SpectralField, h: float) -> SpectralField:
        slots = frame.to_eigen(U, check=False).slots
        return frame.slot_field(slots * np.exp(h * rate))

    def coupling(Ubar: SpectralField, U: SpectralField) -> SpectralField:
        both = system.resonant_transport(Ubar, U) + system.resonant_transport(U, Ubar)
        return -frame.project_osc(both)

    def project(U: SpectralField) -> SpectralField:
        return clean(frame.project_osc(U))

    U = project(initial_osc)
    trajectory = OscTrajectory()
    h = cfg.dt
    initial_hs2 = sobolev_norm(U, cfg.s) ** 2
    state = {"dissipation": 0.0, "last": grad_hs_energy(U, cfg.s)}

    def record(index: int) -> None:
        hs2 = sobolev_norm(U, cfg.s) ** 2
        bar_integral = bar.rows[index]["grad_Hs_integral"]
        trajectory.times.append(bar.times[index])
        trajectory.fields.append(U)
        trajectory.rows.append({
            "t": bar.times[index],
            "L2": sobolev_norm(U, 0.0),
            "Hs": math.sqrt(hs2),
            "Hs_dissipation_integral": state["dissipation"],
            "gronwall_lhs": hs2 + nu_bar * state["dissipation"],
            # exponent C / nu_bar, also used by the measured E2
            "gronwall_rhs": initial_hs2 * math.exp(gronwall_constant / nu_bar * bar_integral),
        })

    def advance(count: int) -> None:
        nonlocal U
        j = count - 1
        u0, u_mid, u1 = bar.velocity(j), bar.midpoint(j), bar.velocity(j + 1)
        k1 = coupling(u0, U)
        k2 = coupling(u_mid, heat(U + (h / 2) * k1, h / 2))
        k3 = coupling(u_mid, heat(U, h / 2) + (h / 2) * k2)
        k4 = coupling(u1, heat(U, h) + h * heat(k3, h / 2))
        U = project(heat(U, h) + (h / 6.0) * (heat(k1, h) + 2.0 * heat(k2 + k3, h / 2) + k4))
        current = grad_hs_energy(U, cfg.s)
        state["dissipation"] += 0.5 * h * (state["last"] + current)
        state["last"] = current
        record(count)

    record(0)
    run_loop(advance, cycles=cfg.steps)
    log.info("oscillating flow: %d steps, Hs %.6e -> %.6e",
             cfg.steps, trajectory.rows[0]["Hs"], trajectory.rows[-1]["Hs"])
    return trajectory


def limit_state(bar: BarTrajectory, osc: OscTrajectory, index: int) -> SpectralField:
    """U = Ubar + U_osc at sample `index`."""
    return bar.velocity(index) + osc.fields[index]


@dataclass
class LimitTrajectory:
    """Kernel flow plus oscillating flow on a shared time grid."""

    bar: BarTrajectory
    osc: OscTrajectory

    @property
    def times(self) -> List[float]:
        return self.bar.times

    @property
    def fields(self) -> List[SpectralField]:
        return [limit_state(self.bar, self.osc, i) for i in range(len(self.bar))]

    def state(self, index: int) -> SpectralField:
        return limit_state(self.bar, self.osc, index)

    def __len__(self) -> int:
        return len(self.bar)


def solve_limit(
    initial: SpectralField,
    cfg: RunConfig,
    *,
    certificate: Optional[NonResonanceCertificate],
    system: Optional[LimitSystem] = None,
    gronwall_constant: float = 1.0,
    logger: Optional[logging.Logger] = None,
) -> LimitTrajectory:
    """Split the data into kernel and oscillating parts and run both solvers."""
    torus = initial.torus
    system = system or LimitSystem(torus, cfg.nu, cfg.nu_prime, logger=logger)
    frame = system.frame
    average = float(np.sum(np.abs(initial.coeffs[:, torus.degenerate]) ** 2))
    if average > 1e-24 * max(initial.energy(), 1.0):
        raise ValidationError("limit-system data must have zero horizontal average")
    bar = solve_limit_bar(frame.project_bar(initial), cfg, frame=frame, logger=logger)
    osc = solve_limit_osc(
        frame.project_osc(initial), bar, cfg,
        certificate=certificate, system=system, gronwall_constant=gronwall_constant, logger=logger,
    )
    return LimitTrajectory(bar, osc)
