"""Experiment orchestration: one manifest in, one directory of artifacts out.

Every run directory holds `manifest.echo` and `summary.json`; the rest depends on
the experiment kind (CSV tables, certificate JSON, snapshot files).
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from db.database import Database
from utils.logger import get_child

from .bounds import apriori_bounds
from .convergence import run_convergence_study
from .corrector import corrector_diagnostics, theta_spread
from .dynamics import FlowState, energy_inequality_margin, simulate
from .errors import (
    DegenerateError,
    InvariantError,
    PrecisionWarning,
    ResonantDomainError,
    StratoflowError,
    SummaryError,
    exit_code_for,
)
from .harmonic import property_suite_harmonic
from .initial_data import SeedStream, make_initial_data, random_coefficients
from .limit import LimitSystem, solve_limit
from .manifest import ExperimentManifest, write_echo
from .report import Reporter
from .resonance import (
    NonResonanceCertificate,
    a3_resonant_roots,
    beta_max,
    c_pm0_antisymmetry_defect,
    certify_nonresonant,
    enumerate_resonant_triads,
    frequency_box,
    polynomial_residual,
    underline_Q,
)
from .snapshot import write_snapshot
from .torus import SpectralField, TorusSpec, poincare_constant_h
from .waves import KERNEL, WaveFrame, penalized_apply

TRIAD_COLUMNS = ["k1", "k2", "k3", "m1", "m2", "m3", "a", "b", "c", "omega_sum", "set_class"]
ROOT_COLUMNS = ["k1", "k2", "k3", "m1", "m2", "m3", "a3", "residual", "scale"]
REQUIRED_FILES = ("manifest.echo", "summary.json")
ANTISYMMETRY_BOX = 6
THETA_SPREAD = 0.1


@dataclass
class LabSettings:
    """Process-level knobs read from config.json."""

    output_root: str = "runs"
    workers: int = 1
    resonance_tolerance: float = 1e-12
    divisor_floor: float = 1e-10
    residual_tolerance: float = 1e-8
    energy_slack: float = 1e-3
    apriori: Dict[str, Optional[float]] = field(
        default_factory=lambda: {"C": 1.0, "K": 2.0, "c": None}
    )

    @classmethod
    def from_config(cls, cfg: Optional[Mapping[str, Any]]) -> "LabSettings":
        cfg = cfg or {}
        defaults = cls()

        def number(key: str, default: float) -> float:
            value = cfg.get(key, default)
            try:
                return float(value)
            except (TypeError, ValueError):
                return default

        apriori = dict(defaults.apriori)
        for key, value in dict(cfg.get("apriori") or {}).items():
            if key in apriori:
                apriori[key] = None if value in (None, "") else float(value)
        return cls(
            output_root=str(cfg.get("output_root", defaults.output_root)),
            workers=max(1, int(number("workers", defaults.workers))),
            resonance_tolerance=number("resonance_tolerance", defaults.resonance_tolerance),
            divisor_floor=number("divisor_floor", defaults.divisor_floor),
            residual_tolerance=number("residual_tolerance", defaults.residual_tolerance),
            energy_slack=number("energy_slack", defaults.energy_slack),
            apriori=apriori,
        )


@dataclass
class LabContext:
    manifest: ExperimentManifest
    settings: LabSettings
    reporter: Reporter
    workers: int
    logger: logging.Logger

    @property
    def torus(self) -> TorusSpec:
        return self.manifest.torus

    @property
    def output_dir(self) -> Path:
        return self.reporter.output_dir

    def initial(self) -> SpectralField:
        return make_initial_data(self.manifest.initial, self.torus, seed=self.manifest.seed)

    def exact(self) -> bool:
        choice = self.manifest.study.exact
        if choice == "auto":
            return self.torus.squared_periods is not None
        return choice == "true"

    def certify(self) -> NonResonanceCertificate:
        certificate = certify_nonresonant(
            self.torus,
            self.manifest.cutoff,
            tolerance=self.settings.resonance_tolerance,
            exact=self.exact(),
            workers=self.workers,
        )
        self.reporter.write_json("certificate", certificate.as_dict())
        return certificate

    def snapshot(self, name: str, field_: SpectralField, t: float) -> Path:
        path = write_snapshot(self.output_dir / "snapshots" / f"{name}.snap", field_, t)
        return self.reporter.add_output(path)


def output_directory(
    manifest: ExperimentManifest, out: Union[str, Path, None], settings: LabSettings
) -> Path:
    if out:
        return Path(out)
    if manifest.output:
        return Path(manifest.output)
    return Path(settings.output_root) / f"{manifest.kind}-{manifest.digest()[:12]}"


# --- experiment kinds --------------------------------------------------------


def _run_simulate(ctx: LabContext) -> Dict[str, Any]:
    manifest = ctx.manifest
    cfg = manifest.run
    filtered = manifest.study.filtered
    initial = ctx.initial()
    every = manifest.snapshot_every

    def on_sample(state: FlowState) -> None:
        step = int(round(state.t / cfg.dt))
        if every and step % every == 0:
            ctx.snapshot(f"state_{step:06d}", state.field, state.t)

    trajectory = simulate(
        initial, cfg, filtered=filtered, keep_fields=False, on_sample=on_sample, logger=ctx.logger
    )
    ctx.reporter.table("trajectory", trajectory.to_frame())
    final = trajectory.rows[-1]
    tol = ctx.settings.residual_tolerance

    margin = energy_inequality_margin(trajectory, cfg)
    ctx.reporter.check("energy_inequality", margin <= 1.0 + ctx.settings.energy_slack, margin,
                       1.0 + ctx.settings.energy_slack)
    worst_div = float(trajectory.column("div_residual").max())
    ctx.reporter.check("divergence_free", worst_div <= tol, worst_div, tol)
    worst_herm = float(trajectory.column("hermitian_residual").max())
    ctx.reporter.check("hermitian_symmetry", worst_herm <= tol, worst_herm, tol)
    worst_mean = float(trajectory.column("mean_residual").max())
    ctx.reporter.check("zero_mean", worst_mean <= tol, worst_mean, tol)
    return {"final_t": final["t"], "final_L2": final["L2"], "filtered": filtered}


def _decreasing(values: Sequence[float], floor: float = 1e-14) -> bool:
    """Strictly decreasing, with values already at round-off level allowed to tie."""
    scale = max([abs(v) for v in values] + [1.0])
    tiny = floor * scale
    return all(b < a or (a <= tiny and b <= tiny) for a, b in zip(values, values[1:]))


def fit_decay_rate(times: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares rate r of values ~ A exp(-r t); nan when fewer than two positive samples."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    if np.count_nonzero(keep) < 2 or np.ptp(t[keep]) == 0:
        return float("nan")
    slope, _ = np.polyfit(t[keep], np.log(v[keep]), 1)
    return float(-slope)


def _run_limit(ctx: LabContext) -> Dict[str, Any]:
    manifest = ctx.manifest
    cfg = manifest.run
    settings = ctx.settings
    torus = ctx.torus
    initial = ctx.initial()
    certificate = ctx.certify()
    system = LimitSystem(
        torus, cfg.nu, cfg.nu_prime, tolerance=settings.resonance_tolerance, logger=ctx.logger
    )
    limit = solve_limit(initial, cfg, certificate=certificate, system=system, logger=ctx.logger)
    ctx.reporter.table("limit_bar", limit.bar.to_frame())
    ctx.reporter.table("limit_osc", limit.osc.to_frame())
    every = manifest.snapshot_every
    if every:
        for index in range(0, len(limit), every):
            ctx.snapshot(f"limit_{index:06d}", limit.state(index), limit.times[index])
    ctx.snapshot("limit_final", limit.state(len(limit) - 1), limit.times[-1])

    ctx.reporter.check("oscillating_gronwall", limit.osc.gronwall_holds())

    c = poincare_constant_h(torus)
    expected = c * cfg.nu
    rate = fit_decay_rate(limit.bar.column("t"), limit.bar.column("Linf_v_L2_h"))
    if math.isnan(rate):
        ctx.reporter.check("bar_decay_rate", True, None, 0.95 * expected, "kernel part is zero")
    else:
        ctx.reporter.check("bar_decay_rate", rate >= 0.95 * expected, rate, 0.95 * expected)

    rows: List[Dict[str, float]] = []
    tol = settings.residual_tolerance
    for N in manifest.study.cutoffs:
        series = corrector_diagnostics(
            limit, cfg, N, system=system, divisor_floor=settings.divisor_floor,
            every=manifest.study.corrector_every, logger=ctx.logger,
        )
        ctx.reporter.table(f"corrector_N{N}", series.to_frame())
        summary = series.summary()
        rows.append(summary)
        residual = summary["max_cancellation_residual"]
        ctx.reporter.check(f"corrector_cancellation_N{N}", residual <= tol, residual, tol)
    if rows:
        table = pd.DataFrame(rows)
        ctx.reporter.table("corrector_summary", table)
        high = table["R_high_L2Hs1"].tolist()
        ctx.reporter.check("corrector_high_frequency_decreasing", _decreasing(high),
                           high[-1] if high else None)
        top = max(manifest.study.cutoffs)
        spread, thetas = theta_spread(
            limit, cfg, top, manifest.study.theta_epsilons, system=system,
            divisor_floor=settings.divisor_floor, every=manifest.study.corrector_every,
            logger=ctx.logger,
        )
        ctx.reporter.write_json("theta_epsilon", {"N": top, "Theta_L1": thetas, "spread": spread})
        ctx.reporter.check("theta_epsilon_stable", spread < THETA_SPREAD, spread, THETA_SPREAD)

    constants = settings.apriori
    bounds = apriori_bounds(
        initial, cfg, C=float(constants.get("C") or 1.0), K=float(constants.get("K") or 2.0),
        c=constants.get("c"), bar=limit.bar, frame=system.frame,
    )
    measured = float(np.max(limit.bar.column("Hs") ** 2))
    payload = bounds.as_dict()
    payload["measured_sup_ubar_Hs2"] = measured
    payload["fitted_C"] = bounds.fitted_constant(measured)
    ctx.reporter.write_json("apriori_bounds", payload)
    return {"certificate_margin": certificate.margin, "bar_decay_rate": rate,
            "expected_decay_rate": expected}


def _run_converge(ctx: LabContext) -> Dict[str, Any]:
    manifest = ctx.manifest
    cfg = manifest.run
    certificate = ctx.certify()
    system = LimitSystem(
        ctx.torus, cfg.nu, cfg.nu_prime, tolerance=ctx.settings.resonance_tolerance,
        logger=ctx.logger,
    )
    result = run_convergence_study(
        ctx.initial(), cfg, manifest.study.epsilons, certificate=certificate, system=system,
        workers=ctx.workers, logger=ctx.logger,
    )
    ctx.reporter.table("convergence", result.table)
    differences = result.differences
    ctx.reporter.check("convergence_decreasing", result.strictly_decreasing(),
                       float(differences[-1]))
    if len(differences) > 1:
        ctx.reporter.check("convergence_halved", result.halved(), float(differences[-1]),
                           0.5 * float(differences[0]))
    return {"epsilons": list(manifest.study.epsilons)}


def parse_labels(text: str) -> Optional[List[List[str]]]:
    """'+,+,-; 0,+,+' -> [['+', '+', '-'], ['0', '+', '+']]; empty means every combination."""
    combos = [[p.strip() for p in chunk.split(",")] for chunk in text.split(";") if chunk.strip()]
    return combos or None


def _root_table(torus: TorusSpec, N: int, tolerance: float) -> pd.DataFrame:
    box = frequency_box(N)
    keep = [tuple(int(x) for x in k) for k in box if k[0] or k[1]]
    rows = []
    for i, k in enumerate(keep):
        for m in keep[i:]:
            n = (k[0] + m[0], k[1] + m[1], k[2] + m[2])
            if n[0] == 0 and n[1] == 0:
                continue
            try:
                roots = a3_resonant_roots(k, m, torus.periods[:2])
            except DegenerateError:
                continue
            for a3 in roots:
                value, scale = polynomial_residual(k, m, torus.periods[:2], a3)
                rows.append({"k1": k[0], "k2": k[1], "k3": k[2], "m1": m[0], "m2": m[1],
                             "m3": m[2], "a3": a3, "residual": value, "scale": scale})
    return pd.DataFrame(rows, columns=ROOT_COLUMNS)


def _run_resonance_scan(ctx: LabContext) -> Dict[str, Any]:
    manifest = ctx.manifest
    N = manifest.cutoff
    triads = enumerate_resonant_triads(
        ctx.torus, N, tolerance=ctx.settings.resonance_tolerance, exact=ctx.exact(),
        labels=parse_labels(manifest.study.labels), workers=ctx.workers,
    )
    ctx.reporter.table("resonant_triads", pd.DataFrame([t.row() for t in triads], columns=TRIAD_COLUMNS))
    by_class: Dict[str, int] = {}
    for triad in triads:
        by_class[triad.set_class] = by_class.get(triad.set_class, 0) + 1
    ctx.reporter.write_json("resonance_scan", {"N": N, "count": len(triads), "by_class": by_class})

    box_n = N if isinstance(N, int) else max(N)
    defect, pairs = c_pm0_antisymmetry_defect(box_n)
    ctx.reporter.check("c_pm0_antisymmetry", defect == 0, defect, 0.0, f"{pairs} admissible pairs")

    if manifest.study.roots:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", PrecisionWarning)
            roots = _root_table(ctx.torus, box_n, ctx.settings.residual_tolerance)
        ill = sum(1 for w in caught if issubclass(w.category, PrecisionWarning))
        ctx.reporter.table("a3_roots", roots)
        if len(roots):
            relative = (roots["residual"] / roots["scale"].where(roots["scale"] > 0, 1.0)).max()
        else:
            relative = 0.0
        tol = ctx.settings.residual_tolerance
        ctx.reporter.check("root_resubstitution", float(relative) <= tol, float(relative), tol,
                           f"{len(roots)} roots, {ill} ill-conditioned")
    return {"count": len(triads)}


def _run_certify(ctx: LabContext) -> Dict[str, Any]:
    try:
        certificate = ctx.certify()
    except ResonantDomainError as exc:
        rows = [t.row() for t in exc.triads if t is not None]
        ctx.reporter.table("resonant_triads", pd.DataFrame(rows, columns=TRIAD_COLUMNS))
        raise
    ctx.reporter.check("nonresonant", certificate.margin > 0, certificate.margin, 0.0,
                       f"{certificate.method}, {certificate.triads_checked} triads")
    return {"margin": certificate.margin}


def _kernel_limit_defect(torus: TorusSpec, seeds: SeedStream, nu: float, nu_prime: float,
                         samples: int, logger: logging.Logger) -> float:
    system = LimitSystem(torus, nu, nu_prime, logger=logger)
    frame = system.frame
    mask = torus.band_mask & ~torus.degenerate
    worst = 0.0
    for _ in range(samples):
        U = frame.project_bar(random_coefficients(torus, seeds.generator("propcheck.kernel")))
        limit = frame.to_eigen(system.limit_Q(U, U), check=False).slots[KERNEL]
        direct = system.kernel_transport_form(U)
        scale = float(np.linalg.norm(direct[mask]))
        if scale > 0:
            worst = max(worst, float(np.linalg.norm((limit - direct)[mask])) / scale)
    return worst


def _run_propcheck(ctx: LabContext) -> Dict[str, Any]:
    manifest = ctx.manifest
    torus = ctx.torus
    samples = manifest.study.samples
    report = property_suite_harmonic(seed=manifest.seed, samples=samples, torus=torus,
                                     logger=ctx.logger)
    ctx.reporter.table("harmonic", report.to_frame())
    for check in report.checks:
        ctx.reporter.check(check.name, check.passed, check.fitted_constant, check.bound, check.detail)

    frame = WaveFrame(torus)
    gram = frame.gram_defect()
    ctx.reporter.check("frame_orthonormal", gram <= 1e-14, gram, 1e-14)
    eigen = frame.eigen_residual()
    ctx.reporter.check("frame_eigenvectors", eigen <= 1e-13, eigen, 1e-13)

    seeds = SeedStream(manifest.seed)
    algebra = max(1, min(samples, 10))
    skew = beta = underline = 0.0
    for _ in range(algebra):
        V = random_coefficients(torus, seeds.generator("propcheck.algebra"))
        energy = max(V.energy(), 1e-300)
        skew = max(skew, abs(penalized_apply(V).inner(V)) / energy)
        beta = max(beta, beta_max(V, frame) / energy)
        sums = underline_Q(V, frame)
        largest = max((float(np.max(np.abs(v))) for v in sums.values()), default=0.0)
        underline = max(underline, largest / energy)
    ctx.reporter.check("skew_energy_neutrality", skew <= 1e-12, skew, 1e-12)
    ctx.reporter.check("beta_cancellation", beta <= 1e-12, beta, 1e-12)
    ctx.reporter.check("underline_Q_cancellation", underline <= 1e-12, underline, 1e-12)

    defect, pairs = c_pm0_antisymmetry_defect(ANTISYMMETRY_BOX)
    ctx.reporter.check("c_pm0_antisymmetry", defect == 0, defect, 0.0, f"{pairs} admissible pairs")
    kernel = _kernel_limit_defect(torus, seeds, manifest.run.nu, manifest.run.nu_prime,
                                  algebra, ctx.logger)
    ctx.reporter.check("kernel_limit_transport", kernel <= 1e-10, kernel, 1e-10)
    return {"samples": samples}


HANDLERS: Dict[str, Callable[[LabContext], Dict[str, Any]]] = {
    "simulate": _run_simulate,
    "limit": _run_limit,
    "converge": _run_converge,
    "resonance-scan": _run_resonance_scan,
    "certify": _run_certify,
    "propcheck": _run_propcheck,
}


def run(
    manifest: ExperimentManifest,
    *,
    out: Union[str, Path, None] = None,
    workers: Optional[int] = None,
    settings: Optional[LabSettings] = None,
    db: Optional[Database] = None,
    logger: Optional[logging.Logger] = None,
) -> Dict[str, Any]:
    """Run one experiment and return the summary written to summary.json.

    Raises InvariantError when the run completes with failed checks; any other
    error is re-raised after summary.json records it.
    """
    settings = settings or LabSettings()
    log = logger.getChild("lab") if logger else get_child("lab")
    directory = output_directory(manifest, out, settings)
    directory.mkdir(parents=True, exist_ok=True)
    run_id = (
        db.record_run(kind=manifest.kind, manifest_digest=manifest.digest(), output_dir=directory)
        if db is not None
        else None
    )
    reporter = Reporter(directory, kind=manifest.kind, db=db, run_id=run_id)
    reporter.add_output(write_echo(manifest, directory))
    ctx = LabContext(manifest, settings, reporter, workers or settings.workers, log)
    extra: Dict[str, Any] = {
        "seed": manifest.seed,
        "manifest_digest": manifest.digest(),
        "torus": manifest.torus.describe(),
    }
    log.info("running %s into %s", manifest.kind, directory)
    try:
        extra["results"] = HANDLERS[manifest.kind](ctx)
    except Exception as exc:
        code = exit_code_for(exc)
        details = exc.details() if isinstance(exc, StratoflowError) else {}
        extra["error"] = {"error": type(exc).__name__, "message": str(exc), "exit_code": code,
                          "details": details}
        reporter.check(type(exc).__name__, False, detail=str(exc))
        reporter.flush(extra=extra)
        if db is not None and run_id is not None:
            db.finish_run(run_id, status="error", exit_code=code)
            db.save_run_summary(run_id)
        raise

    summary = reporter.flush(extra=extra)
    failed = [check.name for check in reporter.failed()]
    if db is not None and run_id is not None:
        db.finish_run(run_id, status="failed" if failed else "ok",
                      exit_code=InvariantError.exit_code if failed else 0)
        db.save_run_summary(run_id)
    if failed:
        log.warning("%s finished with %d failed check(s): %s", manifest.kind, len(failed),
                    ", ".join(failed))
        raise InvariantError(f"{len(failed)} check(s) failed: {', '.join(failed)}", failed=failed)
    log.info("%s finished: %d check(s) passed", manifest.kind, len(reporter.checks))
    return summary


# --- summaries ---------------------------------------------------------------


@dataclass
class RunSummary:
    kind: str
    passed: bool
    text: str
    decay_rates: Dict[str, float] = field(default_factory=dict)
    orders: List[float] = field(default_factory=list)


def convergence_orders(table: pd.DataFrame) -> List[float]:
    """log(d_i / d_{i-1}) / log(eps_i / eps_{i-1}) for consecutive rows."""
    eps = table["epsilon"].to_numpy(dtype=float)
    diff = table["sup_Hs_difference"].to_numpy(dtype=float)
    orders = []
    for i in range(1, len(eps)):
        if diff[i] > 0 and diff[i - 1] > 0 and eps[i] != eps[i - 1]:
            orders.append(float(math.log(diff[i] / diff[i - 1]) / math.log(eps[i] / eps[i - 1])))
        else:
            orders.append(float("nan"))
    return orders


DECAY_COLUMNS = {"trajectory": "L2", "limit_bar": "Linf_v_L2_h", "decay": "L2"}


def summarize(output_dir: Union[str, Path]) -> RunSummary:
    """Human-readable report of a run directory: checks, tables, decay fits and orders."""
    directory = Path(output_dir)
    missing = [name for name in REQUIRED_FILES if not (directory / name).exists()]
    if missing:
        raise SummaryError(
            f"{directory} is not a run directory; missing {', '.join(missing)} "
            f"(expected {', '.join(REQUIRED_FILES)})",
            missing=missing,
        )
    summary = json.loads((directory / "summary.json").read_text(encoding="utf-8"))
    kind = str(summary.get("kind", "?"))
    passed = bool(summary.get("passed", False))
    lines = [f"run: {directory}", f"kind: {kind}", f"passed: {'yes' if passed else 'NO'}", ""]
    checks = pd.DataFrame(summary.get("checks", []))
    if len(checks):
        lines += ["checks:", checks.to_string(index=False), ""]

    decay: Dict[str, float] = {}
    orders: List[float] = []
    for csv in sorted(directory.glob("*.csv")):
        table = pd.read_csv(csv)
        lines += [f"{csv.name}: {len(table)} rows, columns {', '.join(table.columns)}"]
        column = DECAY_COLUMNS.get(csv.stem)
        if column and column in table.columns and "t" in table.columns and len(table) > 1:
            rate = fit_decay_rate(table["t"], table[column])
            decay[csv.stem] = rate
            lines.append(f"  decay rate of {column}: {rate:.6g}")
        if csv.stem == "convergence" and len(table):
            orders = convergence_orders(table)
            lines.append(table[["epsilon", "sup_Hs_difference", "ratio"]].to_string(index=False))
            trend = "decreasing" if bool(table["decreasing"].all()) else "NOT decreasing"
            lines.append(f"  trend: {trend}")
            lines.append("  orders: " + ", ".join(f"{o:.3g}" for o in orders))
        if len(table) and csv.stem not in ("convergence",):
            lines.append(table.tail(1).to_string(index=False))
        lines.append("")
    if "error" in summary:
        error = summary["error"]
        lines.append(f"error: {error.get('error')} (exit {error.get('exit_code')}): {error.get('message')}")
    return RunSummary(kind, passed, "\n".join(lines).rstrip() + "\n", decay, orders)
