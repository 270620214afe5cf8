"""Singular-limit convergence: distance between the full flow V^eps and the
filtered limit L(-t/eps) U over a list of Froude numbers."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from utils.logger import get_child

from .dynamics import Integrator, RunConfig, simulate
from .errors import ValidationError
from .limit import LimitSystem, LimitTrajectory, solve_limit
from .resonance import NonResonanceCertificate
from .torus import sobolev_norm

COLUMNS = (
    "epsilon",
    "sup_Hs_difference",
    "L2_Hs1_difference",
    "ratio",
    "decreasing",
    "dt_used",
    "steps",
)


@dataclass
class ConvergenceResult:
    table: pd.DataFrame
    limit: LimitTrajectory

    @property
    def differences(self) -> np.ndarray:
        return self.table["sup_Hs_difference"].to_numpy(dtype=float)

    def strictly_decreasing(self) -> bool:
        values = self.differences
        return bool(np.all(np.diff(values) < 0))

    def halved(self) -> bool:
        values = self.differences
        return bool(values[-1] < 0.5 * values[0])


def substeps(cfg: RunConfig, epsilon: float) -> int:
    """Sub-steps per limit step so that the full-system step stays below eps / 2."""
    if math.isinf(epsilon):
        return 1
    return max(1, math.ceil(cfg.dt / (0.5 * epsilon) - 1e-12))


def _difference_row(
    limit: LimitTrajectory,
    cfg: RunConfig,
    epsilon: float,
    *,
    system: LimitSystem,
    logger: logging.Logger,
) -> Dict[str, float]:
    m = substeps(cfg, epsilon)
    run_cfg = cfg.replace(epsilon=epsilon, dt=cfg.dt / m)
    initial = limit.state(0)
    integrator = Integrator(initial.torus, run_cfg, frame=system.frame, logger=logger)
    full = simulate(initial, run_cfg, integrator=integrator, sample_every=m, logger=logger)
    if len(full.fields) != len(limit):
        raise ValidationError(
            f"full run produced {len(full.fields)} samples for {len(limit)} limit samples"
        )
    frame = system.frame
    inv = 0.0 if math.isinf(epsilon) else 1.0 / epsilon
    sup_hs = 0.0
    hs1 = []
    for index, t in enumerate(limit.times):
        reference = frame.propagate(limit.state(index), -t * inv)
        diff = full.fields[index] - reference
        sup_hs = max(sup_hs, sobolev_norm(diff, cfg.s))
        hs1.append(sobolev_norm(diff, cfg.s + 1.0) ** 2)
    l2_hs1 = math.sqrt(float(trapezoid(hs1, limit.times))) if len(hs1) > 1 else math.sqrt(hs1[0])
    logger.info("eps=%.3g: sup H^s difference %.6e (%d sub-steps)", epsilon, sup_hs, m)
    return {
        "epsilon": epsilon,
        "sup_Hs_difference": sup_hs,
        "L2_Hs1_difference": l2_hs1,
        "dt_used": run_cfg.dt,
        "steps": run_cfg.steps,
    }


def run_convergence_study(
    initial,
    cfg: RunConfig,
    epsilon_list: Sequence[float],
    *,
    certificate: Optional[NonResonanceCertificate],
    system: Optional[LimitSystem] = None,
    limit: Optional[LimitTrajectory] = None,
    gronwall_constant: float = 1.0,
    workers: int = 1,
    logger: Optional[logging.Logger] = None,
) -> ConvergenceResult:
    """One row per epsilon: sup_t ||V^eps - L(-t/eps) U||_{H^s} and the L2-in-time H^{s+1} gap."""
    log = logger.getChild("convergence") if logger else get_child("convergence")
    if not epsilon_list:
        raise ValidationError("convergence study needs at least one epsilon")
    for eps in epsilon_list:
        if not eps > 0:
            raise ValidationError(f"epsilon values must be positive, got {eps}")
    torus = initial.torus
    system = system or LimitSystem(torus, cfg.nu, cfg.nu_prime, logger=logger)
    if limit is None:
        limit = solve_limit(
            initial, cfg, certificate=certificate, system=system,
            gronwall_constant=gronwall_constant, logger=logger,
        )

    def task(eps: float) -> Dict[str, float]:
        return _difference_row(limit, cfg, eps, system=system, logger=log)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows: List[Dict[str, float]] = list(pool.map(task, epsilon_list))
    else:
        rows = [task(eps) for eps in epsilon_list]

    previous = None
    for row in rows:
        current = row["sup_Hs_difference"]
        if previous is None:
            row["ratio"] = float("nan")
            row["decreasing"] = True
        else:
            row["ratio"] = current / previous if previous else float("inf")
            row["decreasing"] = bool(current < previous)
        previous = current
    table = pd.DataFrame(rows, columns=list(COLUMNS))
    return ConvergenceResult(table, limit)
