"""Oscillating remainder of the filtered form and its small-divisor corrector.

For a limit state U at time t (fast time tau = t / eps):

    R_osc   = Q^eps(U, U) - Q(U, U)        nonresonant part of the filtered form
    R_osc,N = R_osc restricted to the truncated triads, R^{eps,N} = R_osc - R_osc,N
    tildeR  = sum over truncated nonresonant triads of exp(-i tau Omega) / (-i Omega) G U U
    psi     = W + eps tildeR
    Gamma   = D^eps tildeR + Q^eps(tildeR, eps tildeR - 2U) - tildeR^t
              D^eps = L(tau) D L(-tau), nu on the velocity and nu_prime on theta,
              so D^eps = nu Delta when nu = nu_prime; tildeR carries the 1 / (-i Omega)
              divisor, which fixes the signs of 2U and tildeR^t
    Theta   = 2C (||U||_{H^{s+1}}^2 + eps ||tildeR||_{H^{s+1}}^2)

so that d/dt (eps tildeR) = R_osc,N + eps tildeR^t.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from utils.logger import get_child

from .dynamics import RunConfig, apply_diffusion, filtered_bilinear
from .errors import DivisorError, ValidationError
from .limit import LimitSystem
from .torus import SpectralField, sobolev_norm


@dataclass
class CorrectorState:
    t: float
    R_osc: SpectralField
    R_osc_I: SpectralField
    R_osc_II: SpectralField
    R_osc_N: SpectralField
    R_high: SpectralField
    R_tilde: SpectralField
    R_tilde_t: SpectralField
    W: SpectralField
    psi: SpectralField
    Gamma: SpectralField
    Theta: float
    cancellation_residual: float
    bootstrap_margin: float

    def norms(self, s: float) -> Dict[str, float]:
        return {
            "t": self.t,
            "R_osc_Hs1": sobolev_norm(self.R_osc, s - 1.0),
            "R_osc_I_Hs1": sobolev_norm(self.R_osc_I, s - 1.0),
            "R_osc_II_Hs1": sobolev_norm(self.R_osc_II, s - 1.0),
            "R_osc_N_Hs1": sobolev_norm(self.R_osc_N, s - 1.0),
            "R_high_Hs1": sobolev_norm(self.R_high, s - 1.0),
            "R_tilde_Hs": sobolev_norm(self.R_tilde, s),
            "psi_Hs": sobolev_norm(self.psi, s),
            "Gamma_Hs1": sobolev_norm(self.Gamma, s - 1.0),
            "Theta": self.Theta,
            "cancellation_residual": self.cancellation_residual,
            "bootstrap_margin": self.bootstrap_margin,
        }


@dataclass
class CorrectorSeries:
    cutoff: float
    epsilon: float
    s: float
    min_divisor: float
    states: List[CorrectorState] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([state.norms(self.s) for state in self.states])

    def _time_l2(self, column: str) -> float:
        frame = self.to_frame()
        if len(frame) < 2:
            return float(frame[column].iloc[0]) if len(frame) else 0.0
        return math.sqrt(float(trapezoid(frame[column] ** 2, frame["t"])))

    def summary(self) -> Dict[str, float]:
        frame = self.to_frame()
        theta_l1 = float(trapezoid(frame["Theta"], frame["t"])) if len(frame) > 1 else 0.0
        return {
            "N": self.cutoff,
            "epsilon": self.epsilon,
            "min_divisor": self.min_divisor,
            "R_high_L2Hs1": self._time_l2("R_high_Hs1"),
            "R_osc_L2Hs1": self._time_l2("R_osc_Hs1"),
            "Gamma_L2Hs1": self._time_l2("Gamma_Hs1"),
            "Theta_L1": theta_l1,
            "max_cancellation_residual": float(frame["cancellation_residual"].max()),
            "min_bootstrap_margin": float(frame["bootstrap_margin"].min()),
        }


class Corrector:
    def __init__(
        self,
        system: LimitSystem,
        cfg: RunConfig,
        cutoff: float,
        *,
        constant: float = 1.0,
        divisor_floor: float = 1e-10,
    ) -> None:
        self.system = system
        self.table = system.table
        self.frame = system.frame
        self.cfg = cfg
        self.cutoff = cutoff
        self.constant = constant
        self.pairs = self.table.truncation(cutoff)
        self.min_divisor = self.table.min_divisor(self.pairs)
        if self.min_divisor < divisor_floor:
            raise DivisorError(
                f"smallest included divisor {self.min_divisor:.3e} is below {divisor_floor:.1e} "
                f"at N={cutoff}; the torus is near-resonant"
            )
        self.tolerance = self.table.tolerance

    def _phase_weight(self, tau: float):
        tol = self.tolerance

        def weight(omega: np.ndarray, combo) -> np.ndarray:
            return np.where(np.abs(omega) >= tol, np.exp(-1j * tau * omega), 0.0)

        return weight

    def _divided_weight(self, tau: float):
        tol = self.tolerance

        def weight(omega: np.ndarray, combo) -> np.ndarray:
            active = np.abs(omega) >= tol
            safe = np.where(active, omega, 1.0)
            return np.where(active, np.exp(-1j * tau * omega) / (-1j * safe), 0.0)

        return weight

    def tilde_R(self, U: SpectralField, t: float) -> SpectralField:
        tau = t / self.cfg.epsilon
        return self.table.weighted_sum(U, U, self._divided_weight(tau), pairs=self.pairs)

    def tilde_R_t(self, U: SpectralField, U_dot: SpectralField, t: float) -> SpectralField:
        weight = self._divided_weight(t / self.cfg.epsilon)
        return self.table.weighted_sum(U_dot, U, weight, pairs=self.pairs) + self.table.weighted_sum(
            U, U_dot, weight, pairs=self.pairs
        )

    def truncated_remainder(self, U: SpectralField, t: float) -> SpectralField:
        tau = t / self.cfg.epsilon
        return self.table.weighted_sum(U, U, self._phase_weight(tau), pairs=self.pairs)

    def cancellation_residual(
        self, U: SpectralField, U_dot: SpectralField, t: float, R_osc_N: SpectralField,
        R_tilde_t: SpectralField,
    ) -> float:
        """Relative gap between a centered difference of eps tildeR along U + s U_dot and
        R_osc,N + eps tildeR^t."""
        eps = self.cfg.epsilon
        h = 1e-3 * eps

        def value(s: float) -> SpectralField:
            return eps * self.tilde_R(U + s * U_dot, t + s)

        derivative = (1.0 / (12.0 * h)) * (
            -1.0 * value(2 * h) + 8.0 * value(h) - 8.0 * value(-h) + value(-2 * h)
        )
        expected = R_osc_N + eps * R_tilde_t
        scale = max(math.sqrt(expected.energy()), math.sqrt(R_osc_N.energy()), 1e-300)
        return math.sqrt((derivative - expected).energy()) / scale

    def state(
        self, U: SpectralField, t: float, W: Optional[SpectralField] = None, *, check: bool = True
    ) -> CorrectorState:
        cfg = self.cfg
        eps = cfg.epsilon
        tau = t / eps
        torus = U.torus
        frame = self.frame
        degenerate = torus.degenerate

        full = filtered_bilinear(frame, U, U, tau, dealias=torus.dealias)
        R_osc = full - self.system.limit_Q(U, U)
        R_I = R_osc.with_coeffs(np.where(degenerate, 0.0, R_osc.coeffs))
        R_II = R_osc.with_coeffs(np.where(degenerate, R_osc.coeffs, 0.0))
        R_N = self.truncated_remainder(U, t)
        R_high = R_osc - R_N

        U_dot = self.system.rhs(U)
        R_tilde = self.tilde_R(U, t)
        R_tilde_t = self.tilde_R_t(U, U_dot, t)
        W = W if W is not None else SpectralField.zeros(torus, U.components)
        psi = W + eps * R_tilde

        diffused = frame.propagate(
            apply_diffusion(frame.propagate(R_tilde, -tau), cfg.nu, cfg.nu_prime), tau
        )
        Gamma = (
            diffused
            + filtered_bilinear(frame, R_tilde, eps * R_tilde - 2.0 * U, tau, dealias=torus.dealias)
            - R_tilde_t
        )
        Theta = 2.0 * self.constant * (
            sobolev_norm(U, cfg.s + 1.0) ** 2 + eps * sobolev_norm(R_tilde, cfg.s + 1.0) ** 2
        )
        residual = (
            self.cancellation_residual(U, U_dot, t, R_N, R_tilde_t) if check else float("nan")
        )
        margin = 0.5 * min(cfg.nu, cfg.nu_prime) - self.constant * sobolev_norm(psi, cfg.s)
        return CorrectorState(
            t, R_osc, R_I, R_II, R_N, R_high, R_tilde, R_tilde_t, W, psi, Gamma, Theta,
            residual, margin,
        )


def corrector_diagnostics(
    trajectory,
    cfg: RunConfig,
    N: float,
    *,
    system: Optional[LimitSystem] = None,
    filtered=None,
    constant: float = 1.0,
    divisor_floor: float = 1e-10,
    check_cancellation: bool = True,
    every: int = 1,
    logger: Optional[logging.Logger] = None,
) -> CorrectorSeries:
    """Corrector quantities along a limit trajectory (anything with `times` and `fields`).

    `filtered`, when given, is the filtered run on the same time grid and supplies
    W = U^eps - U.
    """
    log = logger.getChild("corrector") if logger else get_child("corrector")
    times: Sequence[float] = trajectory.times
    fields: Sequence[SpectralField] = trajectory.fields
    if not fields:
        raise ValidationError("corrector diagnostics need a non-empty limit trajectory")
    if filtered is not None and len(filtered.fields) != len(fields):
        raise ValidationError(
            f"filtered run has {len(filtered.fields)} samples, limit trajectory {len(fields)}"
        )
    torus = fields[0].torus
    system = system or LimitSystem(torus, cfg.nu, cfg.nu_prime, logger=logger)
    corrector = Corrector(system, cfg, N, constant=constant, divisor_floor=divisor_floor)
    series = CorrectorSeries(N, cfg.epsilon, cfg.s, corrector.min_divisor)
    for index in range(0, len(fields), max(every, 1)):
        U = fields[index]
        W = filtered.fields[index] - U if filtered is not None else None
        series.states.append(corrector.state(U, times[index], W, check=check_cancellation))
    summary = series.summary()
    log.info(
        "corrector N=%s eps=%.3g: min divisor %.3e, |R^{eps,N}| %.6e, Theta L1 %.6e",
        N, cfg.epsilon, corrector.min_divisor, summary["R_high_L2Hs1"], summary["Theta_L1"],
    )
    return series


def theta_spread(
    trajectory,
    cfg: RunConfig,
    N: float,
    epsilons: Sequence[float],
    *,
    system: Optional[LimitSystem] = None,
    constant: float = 1.0,
    divisor_floor: float = 1e-10,
    every: int = 1,
    logger: Optional[logging.Logger] = None,
) -> Tuple[float, Dict[float, float]]:
    """Relative spread (max - min) / max of ||Theta||_{L^1} over `epsilons` on one limit
    trajectory, and the per-epsilon values."""
    if not epsilons:
        raise ValidationError("theta spread needs at least one epsilon")
    values: Dict[float, float] = {}
    for epsilon in epsilons:
        series = corrector_diagnostics(
            trajectory, cfg.replace(epsilon=float(epsilon)), N, system=system,
            constant=constant, divisor_floor=divisor_floor, check_cancellation=False,
            every=every, logger=logger,
        )
        values[float(epsilon)] = series.summary()["Theta_L1"]
    largest = max(values.values())
    spread = (largest - min(values.values())) / largest if largest > 0 else 0.0
    return spread, values
