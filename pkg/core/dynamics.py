"""Time integration of the full and filtered stratified systems.

Both steppers are integrating-factor RK4 (Lawson form): the linear part
-(1/eps) PA + D is applied through exact per-frequency matrix exponentials and
only the transport term is treated explicitly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import linalg

from utils.logger import get_child
from utils.scheduler import run_loop

from .errors import BlowupError, ValidationError
from .torus import (
    SpectralField,
    TorusSpec,
    clean,
    divergence,
    gradient_energy,
    hermitian_residual,
    leray_project,
    sobolev_norm,
    transport,
)
from .waves import WaveFrame

SCHEMES = ("ifrk4",)


@dataclass
class RunConfig:
    epsilon: float = 0.1
    nu: float = 0.05
    nu_prime: float = 0.05
    dt: float = 0.01
    T: float = 1.0
    scheme: str = "ifrk4"
    dealias: bool = True
    s: float = 1.0
    seed: int = 0
    blowup_guard: float = 1e6
    stability_constant: float = 1.0
    linearized: bool = False

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        for name in ("nu", "nu_prime", "dt", "T"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive, got {value}")
        if not self.dt < self.T:
            raise ValidationError(f"dt = {self.dt} must be smaller than T = {self.T}")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}; available: {', '.join(SCHEMES)}")
        if not self.s > 0.5:
            raise ValidationError(f"Sobolev exponent s must exceed 1/2, got {self.s}")

    @property
    def steps(self) -> int:
        count = round(self.T / self.dt)
        if abs(count * self.dt - self.T) > 1e-9 * self.T:
            raise ValidationError(f"T = {self.T} is not a multiple of dt = {self.dt}")
        return int(count)

    @property
    def inverse_epsilon(self) -> float:
        return 0.0 if math.isinf(self.epsilon) else 1.0 / self.epsilon

    def check_stability(self, torus: TorusSpec) -> None:
        n_max = max(torus.grid)
        bound = self.stability_constant * min(a * a for a in torus.periods) / (
            n_max ** 2 * max(self.nu, self.nu_prime)
        )
        if self.dt > bound:
            raise ValidationError(
                f"dt = {self.dt} exceeds the stability bound {bound:.3e} for grid {torus.grid}"
            )

    def replace(self, **changes) -> "RunConfig":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return RunConfig(**values)


@dataclass
class FlowState:
    t: float
    field: SpectralField


def nonlinear_term(V: SpectralField, *, dealias: bool = True) -> SpectralField:
    """P(v . grad V) for the four-component state."""
    return leray_project(transport(V, V, dealias=dealias))


def transport_form(
    frame: WaveFrame, X: SpectralField, Y: SpectralField, tau: float = 0.0, *, dealias: bool = True
) -> SpectralField:
    """L(tau) P(x . grad Y) with x, Y taken at L(-tau)."""
    if tau:
        X = frame.propagate(X, -tau)
        Y = frame.propagate(Y, -tau)
    out = leray_project(transport(X, Y, dealias=dealias))
    return frame.propagate(out, tau) if tau else out


def filtered_bilinear(
    frame: WaveFrame, A: SpectralField, B: SpectralField, tau: float, *, dealias: bool = True
) -> SpectralField:
    """Q^eps(A, B) at fast time tau = t / eps (symmetrized)."""
    if A is B:
        return transport_form(frame, A, A, tau, dealias=dealias)
    return 0.5 * (
        transport_form(frame, A, B, tau, dealias=dealias)
        + transport_form(frame, B, A, tau, dealias=dealias)
    )


def diffusion_symbol(torus: TorusSpec, nu: float, nu_prime: float) -> np.ndarray:
    """Diagonal of D per component, shape (4, N1, N2, N3)."""
    return -np.stack([nu * torus.k2, nu * torus.k2, nu * torus.k2, nu_prime * torus.k2])


def apply_diffusion(field: SpectralField, nu: float, nu_prime: float) -> SpectralField:
    return field.with_coeffs(diffusion_symbol(field.torus, nu, nu_prime) * field.coeffs)


def slot_diffusion(frame: WaveFrame, nu: float, nu_prime: float) -> np.ndarray:
    """(D e^a | e^c) for slots 0..2, shape (3, 3, N1, N2, N3) indexed [c, a]."""
    d = diffusion_symbol(frame.torus, nu, nu_prime)
    basis = frame.basis[:3]
    return np.einsum("ci...,i...,ai...->ca...", np.conj(basis), d, basis)


class LinearPropagator:
    """Exact solution operator of dV/dt = (-(1/eps) PA + D) V on the solenoidal subspace."""

    def __init__(self, frame: WaveFrame, cfg: RunConfig) -> None:
        self.frame = frame
        generator = slot_diffusion(frame, cfg.nu, cfg.nu_prime).astype(complex)
        omega = frame.slot_omega[:3]
        for c in range(3):
            generator[c, c] = generator[c, c] - 1j * cfg.inverse_epsilon * omega[c]
        # (..., 3, 3) for batched expm
        self._generator = np.moveaxis(generator, (0, 1), (-2, -1))
        self._cache: Dict[float, np.ndarray] = {}

    def physical(self, h: float) -> np.ndarray:
        """4x4 physical matrices (4, 4, N1, N2, N3) for the step h."""
        if h not in self._cache:
            slot = linalg.expm(h * self._generator)
            slot = np.moveaxis(slot, (-2, -1), (0, 1))
            basis = self.frame.basis[:3]
            self._cache[h] = np.einsum("ci...,ca...,aj...->ij...", basis, slot, np.conj(basis))
        return self._cache[h]

    def apply(self, field: SpectralField, h: float) -> SpectralField:
        matrix = self.physical(h)
        return field.with_coeffs(np.einsum("ij...,j...->i...", matrix, field.coeffs))


class Integrator:
    """IF-RK4 steppers for the full system (V) and the filtered system (U = L(t/eps) V)."""

    def __init__(
        self,
        torus: TorusSpec,
        cfg: RunConfig,
        *,
        frame: Optional[WaveFrame] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.torus = torus
        self.cfg = cfg
        self.frame = frame or WaveFrame(torus)
        self.linear = LinearPropagator(self.frame, cfg)
        self.logger = logger.getChild("dynamics") if logger else get_child("dynamics")

    def forcing(self, V: SpectralField) -> SpectralField:
        if self.cfg.linearized:
            return SpectralField.zeros(self.torus, V.components)
        return -nonlinear_term(V, dealias=self.cfg.dealias)

    def filtered_forcing(self, U: SpectralField, t: float) -> SpectralField:
        if self.cfg.linearized:
            return SpectralField.zeros(self.torus, U.components)
        tau = t * self.cfg.inverse_epsilon
        return -filtered_bilinear(self.frame, U, U, tau, dealias=self.cfg.dealias)

    def filtered_linear(self, U: SpectralField, t: float, h: float) -> SpectralField:
        """L((t+h)/eps) E(h) L(-t/eps) U."""
        inv = self.cfg.inverse_epsilon
        if inv == 0.0:
            return self.linear.apply(U, h)
        inner = self.frame.propagate(U, -t * inv)
        return self.frame.propagate(self.linear.apply(inner, h), (t + h) * inv)

    def _finish(self, field: SpectralField, t: float) -> FlowState:
        field = clean(field)
        norm = sobolev_norm(field, self.cfg.s)
        if not math.isfinite(norm) or norm > self.cfg.blowup_guard:
            raise BlowupError(f"H^{self.cfg.s} norm {norm:.3e} exceeded the guard at t = {t:.6g}")
        return FlowState(t, field)

    def step_full(self, state: FlowState, h: Optional[float] = None) -> FlowState:
        h = self.cfg.dt if h is None else h
        E_half = lambda f: self.linear.apply(f, h / 2)  # noqa: E731
        E_full = lambda f: self.linear.apply(f, h)  # noqa: E731
        y = state.field
        k1 = self.forcing(y)
        k2 = self.forcing(E_half(y + (h / 2) * k1))
        k3 = self.forcing(E_half(y) + (h / 2) * k2)
        k4 = self.forcing(E_full(y) + h * E_half(k3))
        update = E_full(y) + (h / 6.0) * (E_full(k1) + 2.0 * E_half(k2 + k3) + k4)
        return self._finish(update, state.t + h)

    def step_filtered(self, state: FlowState, h: Optional[float] = None) -> FlowState:
        h = self.cfg.dt if h is None else h
        t = state.t
        y = state.field
        lin = self.filtered_linear
        k1 = self.filtered_forcing(y, t)
        k2 = self.filtered_forcing(lin(y + (h / 2) * k1, t, h / 2), t + h / 2)
        k3 = self.filtered_forcing(lin(y, t, h / 2) + (h / 2) * k2, t + h / 2)
        k4 = self.filtered_forcing(lin(y, t, h) + h * lin(k3, t + h / 2, h / 2), t + h)
        update = lin(y, t, h) + (h / 6.0) * (
            lin(k1, t, h) + 2.0 * lin(k2 + k3, t + h / 2, h / 2) + k4
        )
        return self._finish(update, t + h)


def step_full(state: FlowState, cfg: RunConfig, integrator: Optional[Integrator] = None) -> FlowState:
    integrator = integrator or Integrator(state.field.torus, cfg)
    return integrator.step_full(state)


def step_filtered(
    state: FlowState, cfg: RunConfig, integrator: Optional[Integrator] = None
) -> FlowState:
    integrator = integrator or Integrator(state.field.torus, cfg)
    return integrator.step_filtered(state)


@dataclass
class Trajectory:
    """Append-only record of sampled states and their diagnostics."""

    times: List[float] = field(default_factory=list)
    fields: List[SpectralField] = field(default_factory=list)
    rows: List[Dict[str, float]] = field(default_factory=list)

    def append(self, t: float, state: Optional[SpectralField], row: Dict[str, float]) -> None:
        self.times.append(t)
        if state is not None:
            self.fields.append(state)
        self.rows.append({"t": t, **row})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    @property
    def final(self) -> SpectralField:
        return self.fields[-1]

    def __len__(self) -> int:
        return len(self.rows)


def flow_row(field: SpectralField, s: float) -> Dict[str, float]:
    torus = field.torus
    deg = np.where(torus.degenerate, field.coeffs, 0.0)
    return {
        "L2": sobolev_norm(field, 0.0),
        "Hs": sobolev_norm(field, s),
        "div_residual": divergence(field).max_abs(),
        "hermitian_residual": hermitian_residual(field),
        "mean_residual": float(np.max(np.abs(field.coeffs[:, 0, 0, 0]))),
        "horizontal_average_L2": math.sqrt(float(np.sum(np.abs(deg) ** 2))),
    }


def grad_hs_energy(field: SpectralField, s: float) -> float:
    """sum (1 + |n|^2)^s |n|^2 |f_n|^2 = ||grad f||_{H^s}^2."""
    torus = field.torus
    weight = (1.0 + torus.k2) ** s * torus.k2
    return float(np.sum(weight * np.sum(np.abs(field.coeffs) ** 2, axis=0)))


def simulate(
    initial: SpectralField,
    cfg: RunConfig,
    *,
    filtered: bool = False,
    integrator: Optional[Integrator] = None,
    sample_every: int = 1,
    keep_fields: bool = True,
    on_sample: Optional[Callable[[FlowState], None]] = None,
    logger: Optional[logging.Logger] = None,
) -> Trajectory:
    """March the full (or filtered) system from t = 0 to cfg.T."""
    torus = initial.torus
    cfg.check_stability(torus)
    integrator = integrator or Integrator(torus, cfg, logger=logger)
    log = integrator.logger
    stepper = integrator.step_filtered if filtered else integrator.step_full

    state = FlowState(0.0, clean(initial))
    trajectory = Trajectory()
    integrals = {"L2": 0.0, "Hs": 0.0}
    last = {"t": 0.0, "L2": gradient_energy(state.field), "Hs": grad_hs_energy(state.field, cfg.s)}

    def record() -> None:
        row = flow_row(state.field, cfg.s)
        row["L2_dissipation_integral"] = integrals["L2"]
        row["Hs_dissipation_integral"] = integrals["Hs"]
        trajectory.append(state.t, state.field if keep_fields else None, row)
        if on_sample:
            on_sample(state)

    def advance(count: int) -> None:
        nonlocal state
        state = stepper(state)
        current = {"L2": gradient_energy(state.field), "Hs": grad_hs_energy(state.field, cfg.s)}
        h = state.t - last["t"]
        for key in integrals:
            integrals[key] += 0.5 * h * (last[key] + current[key])
        last.update(t=state.t, **current)
        log.debug("step %d t=%.6g L2=%.6e", count, state.t, math.sqrt(state.field.energy()))

    record()
    run_loop(advance, cycles=cfg.steps, every=sample_every, on_cycle=lambda _: record())
    log.info(
        "%s run finished: %d steps, final L2 %.6e",
        "filtered" if filtered else "full", cfg.steps, trajectory.rows[-1]["L2"],
    )
    return trajectory


def energy_inequality_margin(trajectory: Trajectory, cfg: RunConfig) -> float:
    """max_t (||V(t)||^2 + 2c int ||grad V||^2) / ||V0||^2, c = min(nu, nu')."""
    c = min(cfg.nu, cfg.nu_prime)
    l2 = trajectory.column("L2")
    dissipated = trajectory.column("L2_dissipation_integral")
    if l2[0] == 0:
        return 0.0
    return float(np.max((l2 ** 2 + 2.0 * c * dissipated) / l2[0] ** 2))
