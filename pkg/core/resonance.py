"""Resonant-triad calculus: eigenvalue sums, resonance classes, interaction
coefficients, the horizontal-average cancellations and torus certification."""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from utils.logger import get_child

from .errors import (
    ConstraintError,
    DegenerateError,
    ExactnessError,
    PrecisionWarning,
    ResonantDomainError,
    ValidationError,
)
from .torus import SpectralField, TorusSpec
from .waves import WaveFrame, frame_vectors, frequency_omega

log = get_child("resonance")

Frequency = Tuple[int, int, int]
CutoffLike = Union[int, Sequence[int]]


class Mode(str, Enum):
    KERNEL = "0"
    PLUS = "+"
    MINUS = "-"

    @property
    def slot(self) -> int:
        return {"0": 0, "+": 1, "-": 2}[self.value]

    @property
    def sign(self) -> int:
        return {"0": 0, "+": 1, "-": -1}[self.value]

    @classmethod
    def parse(cls, value: Union["Mode", str, int]) -> "Mode":
        if isinstance(value, Mode):
            return value
        if isinstance(value, int):
            return {0: cls.KERNEL, 1: cls.PLUS, 2: cls.MINUS}[value]
        try:
            return cls(str(value).strip())
        except ValueError as exc:
            raise ValidationError(f"unknown mode label {value!r}") from exc


OSCILLATING = (Mode.PLUS, Mode.MINUS)
ALL_MODES = (Mode.KERNEL, Mode.PLUS, Mode.MINUS)


@dataclass(frozen=True)
class TriadRecord:
    k: Frequency
    m: Frequency
    n: Frequency
    labels: Tuple[Mode, Mode, Mode]
    omega_sum: float
    set_class: str

    def __str__(self) -> str:
        a, b, c = (label.value for label in self.labels)
        return f"k={self.k} m={self.m} n={self.n} labels=({a},{b},{c}) omega_sum={self.omega_sum:.3e}"

    def row(self) -> Dict[str, object]:
        return {
            "k1": self.k[0], "k2": self.k[1], "k3": self.k[2],
            "m1": self.m[0], "m2": self.m[1], "m3": self.m[2],
            "a": self.labels[0].value, "b": self.labels[1].value, "c": self.labels[2].value,
            "omega_sum": self.omega_sum,
            "set_class": self.set_class,
        }


@dataclass(frozen=True)
class NonResonanceCertificate:
    torus: TorusSpec
    N: Union[int, Tuple[int, int, int]]
    margin: float
    method: str
    triads_checked: int = 0
    closest: Optional[TriadRecord] = field(default=None, compare=False)

    def as_dict(self) -> Dict[str, object]:
        return {
            "torus": list(self.torus.periods),
            "N": self.N if isinstance(self.N, int) else list(self.N),
            "margin": self.margin,
            "method": self.method,
            "triads_checked": self.triads_checked,
            "closest": str(self.closest) if self.closest else None,
        }

    def covers(self, cutoff: CutoffLike) -> bool:
        mine = _cutoff_tuple(self.N)
        theirs = _cutoff_tuple(cutoff)
        return all(t <= m for t, m in zip(theirs, mine))


def classify(labels: Sequence[Mode]) -> str:
    a, b, c = labels
    if c is not Mode.KERNEL:
        return "osc"
    if a is Mode.KERNEL and b is Mode.KERNEL:
        return "R0"
    if a is Mode.KERNEL or b is Mode.KERNEL:
        return "R2"
    return "R1" if a is b else "R3"


def _as_frequency(n: Sequence[int]) -> Frequency:
    return (int(n[0]), int(n[1]), int(n[2]))


def _horizontal_zero(n: Sequence[int]) -> bool:
    return n[0] == 0 and n[1] == 0


def frequency_value(torus: TorusSpec, n: Sequence[int]) -> float:
    k = torus.check(n)
    return float(frequency_omega(k[0], k[1], k[2]))


def mode_omega(torus: TorusSpec, n: Sequence[int], label: Mode) -> float:
    if label is Mode.KERNEL or _horizontal_zero(n):
        return 0.0
    return label.sign * frequency_value(torus, n)


def omega_sum(
    torus: TorusSpec,
    k: Sequence[int],
    m: Sequence[int],
    n: Sequence[int],
    a: Union[Mode, str],
    b: Union[Mode, str],
    c: Union[Mode, str],
) -> float:
    if any(int(k[i]) + int(m[i]) != int(n[i]) for i in range(3)):
        raise ConstraintError(f"k + m != n for k={tuple(k)}, m={tuple(m)}, n={tuple(n)}")
    a, b, c = Mode.parse(a), Mode.parse(b), Mode.parse(c)
    return mode_omega(torus, k, a) + mode_omega(torus, m, b) - mode_omega(torus, n, c)


# --- exact decisions ---------------------------------------------------------


def _omega_squared_exact(squared: Sequence[Fraction], n: Sequence[int]) -> Fraction:
    horizontal = Fraction(n[0] ** 2) / squared[0] + Fraction(n[1] ** 2) / squared[1]
    if horizontal == 0:
        return Fraction(0)
    return horizontal / (horizontal + Fraction(n[2] ** 2) / squared[2])


def radical_sum_is_zero(terms: Iterable[Tuple[int, Fraction]]) -> bool:
    """Decide sum sigma_i sqrt(r_i) = 0 exactly for at most three rational radicands."""
    live = [(s, Fraction(r)) for s, r in terms if s != 0 and r != 0]
    if not live:
        return True
    if len(live) == 1:
        return False
    if len(live) == 2:
        (s1, r1), (s2, r2) = live
        return s1 == -s2 and r1 == r2
    if len(live) != 3:
        raise ValidationError("radical sums with more than three terms are not supported")
    (s1, r1), (s2, r2), (s3, r3) = live
    # s1 sqrt(r1) + s2 sqrt(r2) = -s3 sqrt(r3); square once
    d = r3 - r1 - r2
    if d == 0 or (d > 0) != (s1 * s2 > 0):
        return False
    if 4 * r1 * r2 != d * d:
        return False
    if s1 == s2:
        left_sign = s1
    elif r1 == r2:
        return False
    else:
        left_sign = s1 if r1 > r2 else s2
    return left_sign == -s3


def exact_resonance(
    torus: TorusSpec, k: Sequence[int], m: Sequence[int], labels: Sequence[Mode]
) -> bool:
    if torus.squared_periods is None:
        raise ExactnessError(
            "exact resonance decisions need rational squared periods; use floating mode"
        )
    squared = torus.squared_periods
    n = [k[i] + m[i] for i in range(3)]
    terms = []
    for freq, label, flip in ((k, labels[0], 1), (m, labels[1], 1), (n, labels[2], -1)):
        terms.append((flip * label.sign, _omega_squared_exact(squared, freq)))
    return radical_sum_is_zero(terms)


# --- enumeration -------------------------------------------------------------


def _cutoff_tuple(cutoff: CutoffLike) -> Tuple[int, int, int]:
    if isinstance(cutoff, (int, np.integer)):
        value = int(cutoff)
        if value < 1:
            raise ValidationError(f"cutoff must be >= 1, got {value}")
        return (value, value, value)
    values = tuple(int(x) for x in cutoff)
    if len(values) != 3 or min(values) < 0 or max(values) < 1:
        raise ValidationError(f"per-axis cutoff must have three nonnegative entries, got {cutoff!r}")
    return values  # type: ignore[return-value]


def frequency_box(cutoff: CutoffLike) -> np.ndarray:
    """Nonzero integer frequencies with |n_i| <= N_i, lexicographic order."""
    bounds = _cutoff_tuple(cutoff)
    axes = [range(-b, b + 1) for b in bounds]
    box = np.array([p for p in itertools.product(*axes) if any(p)], dtype=np.int64)
    return box.reshape(-1, 3)


def _omegas(torus: TorusSpec, freqs: np.ndarray) -> np.ndarray:
    k = freqs / np.asarray(torus.periods)
    return frequency_omega(k[..., 0], k[..., 1], k[..., 2])


def _signed(omega: np.ndarray, degenerate: np.ndarray, label: Mode) -> Tuple[np.ndarray, np.ndarray]:
    """Signed eigenvalue and the mask of frequencies where the label exists."""
    if label is Mode.KERNEL:
        return np.zeros_like(omega), np.ones_like(degenerate)
    return label.sign * omega, ~degenerate


def _scan_k(
    torus: TorusSpec,
    k: np.ndarray,
    box: np.ndarray,
    box_omega: np.ndarray,
    combos: Sequence[Tuple[Mode, Mode, Mode]],
    tolerance: float,
    exact: bool,
) -> List[TriadRecord]:
    n = box + k
    keep = np.any(n != 0, axis=1)
    m_all, n_all = box[keep], n[keep]
    om_m = box_omega[keep]
    om_n = _omegas(torus, n_all)
    deg_m = (m_all[:, 0] == 0) & (m_all[:, 1] == 0)
    deg_n = (n_all[:, 0] == 0) & (n_all[:, 1] == 0)
    k_deg = k[0] == 0 and k[1] == 0
    om_k = 0.0 if k_deg else float(_omegas(torus, k[None, :])[0])
    records: List[TriadRecord] = []
    hits_by_row: Dict[int, List[Tuple[Tuple[Mode, Mode, Mode], float]]] = {}
    for labels in combos:
        a, b, c = labels
        if a is not Mode.KERNEL and k_deg:
            continue
        wk = a.sign * om_k
        wm, ok_m = _signed(om_m, deg_m, b)
        wn, ok_n = _signed(om_n, deg_n, c)
        total = wk + wm - wn
        threshold = 1e-6 if exact else tolerance
        rows = np.flatnonzero(ok_m & ok_n & (np.abs(total) < threshold))
        for row in rows:
            if exact and not exact_resonance(torus, k, m_all[row], labels):
                continue
            hits_by_row.setdefault(int(row), []).append((labels, float(total[row])))
    kk = _as_frequency(k)
    for row in sorted(hits_by_row):
        mm = _as_frequency(m_all[row])
        nn = _as_frequency(n_all[row])
        for labels, value in hits_by_row[row]:
            records.append(TriadRecord(kk, mm, nn, labels, value, classify(labels)))
    return records


def _label_combos(labels: Optional[Sequence[Sequence[Union[Mode, str]]]]) -> List[Tuple[Mode, Mode, Mode]]:
    if labels is None:
        return [tuple(c) for c in itertools.product(ALL_MODES, repeat=3)]  # type: ignore[misc]
    out = []
    for combo in labels:
        if len(combo) != 3:
            raise ValidationError(f"label filter entries need three labels, got {combo!r}")
        out.append(tuple(Mode.parse(x) for x in combo))
    return out  # type: ignore[return-value]


def enumerate_resonant_triads(
    torus: TorusSpec,
    N: CutoffLike,
    *,
    tolerance: float = 1e-12,
    exact: bool = False,
    labels: Optional[Sequence[Sequence[Union[Mode, str]]]] = None,
    workers: int = 1,
) -> List[TriadRecord]:
    """All triads with |k|_inf, |m|_inf <= N and a vanishing eigenvalue sum."""
    if exact and torus.squared_periods is None:
        raise ExactnessError(
            "exact enumeration needs rational squared periods; use floating mode"
        )
    combos = _label_combos(labels)
    box = frequency_box(N)
    box_omega = _omegas(torus, box)

    def task(k: np.ndarray) -> List[TriadRecord]:
        return _scan_k(torus, k, box, box_omega, combos, tolerance, exact)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(task, box))
    else:
        chunks = [task(k) for k in box]
    records = [rec for chunk in chunks for rec in chunk]
    log.info(
        "enumerated %d resonant triads (N=%s, %s mode)",
        len(records), N, "exact" if exact else "floating",
    )
    return records


# --- interaction coefficients ------------------------------------------------


def _vectors(torus: TorusSpec, n: Sequence[int]) -> np.ndarray:
    k = torus.check(n)
    return frame_vectors(k[0], k[1], k[2])


def coefficient_C(
    frame: Union[WaveFrame, TorusSpec],
    k: Sequence[int],
    m: Sequence[int],
    n: Sequence[int],
    a: Union[Mode, str],
    b: Union[Mode, str],
    c: Union[Mode, str],
) -> complex:
    """sum_j e^{a,j}(k) m_j (e^b(m) | e^c(n)) with check frequencies."""
    torus = frame.torus if isinstance(frame, WaveFrame) else frame
    if any(int(k[i]) + int(m[i]) != int(n[i]) for i in range(3)):
        raise ConstraintError(f"k + m != n for k={tuple(k)}, m={tuple(m)}, n={tuple(n)}")
    for name, freq in (("k", k), ("m", m), ("n", n)):
        if _horizontal_zero(freq):
            raise DegenerateError(f"{name}={tuple(freq)} has n_h = 0; eigenvectors are degenerate")
    a, b, c = Mode.parse(a), Mode.parse(b), Mode.parse(c)
    ek = _vectors(torus, k)[a.slot]
    em = _vectors(torus, m)[b.slot]
    en = _vectors(torus, n)[c.slot]
    mc = torus.check(m)
    return complex(np.sum(ek[:3] * mc) * np.vdot(en, em))


def c_pm0_exact(k: Sequence[int], m: Sequence[int]) -> int:
    """Integer closed form of C^{+/-,0} (unit periods, denominators cleared): -2 P(k, m),
    P = m3 (k1 m2 - k2 m1)(k3 (k_h . m_h) - |k_h|^2 m3)."""
    k1, k2, k3 = (int(x) for x in k)
    m1, m2, m3 = (int(x) for x in m)
    cross = k1 * m2 - k2 * m1
    return -2 * m3 * cross * (k3 * (k1 * m1 + k2 * m2) - (k1 * k1 + k2 * k2) * m3)


def c_pm0_antisymmetry_defect(N: int) -> Tuple[int, int]:
    """max |C(k,m) + C(m,k)| over admissible pairs |k|_inf, |m|_inf <= N, and the pair count.

    Admissible: k_h, m_h, (k+m)_h nonzero and k3^2 |m_h|^2 = m3^2 |k_h|^2.
    """
    box = frequency_box(N)
    k = box[:, None, :]
    m = box[None, :, :]
    kh2 = k[..., 0] ** 2 + k[..., 1] ** 2
    mh2 = m[..., 0] ** 2 + m[..., 1] ** 2
    n = k + m
    nh2 = n[..., 0] ** 2 + n[..., 1] ** 2
    admissible = (kh2 > 0) & (mh2 > 0) & (nh2 > 0) & (k[..., 2] ** 2 * mh2 == m[..., 2] ** 2 * kh2)

    def closed(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        cross = x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]
        dot_h = x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1]
        xh2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return -2 * y[..., 2] * cross * (x[..., 2] * dot_h - xh2 * y[..., 2])

    total = closed(k, m) + closed(m, k)
    worst = int(np.max(np.abs(np.where(admissible, total, 0))))
    return worst, int(np.count_nonzero(admissible))


# --- horizontal-average cancellations ----------------------------------------


def _slot_parts(
    frame: WaveFrame, slots: np.ndarray, index: Tuple[int, int, int], slot: int
) -> np.ndarray:
    """Coefficient of `slot` times its basis vector at a grid index (4 components)."""
    return slots[(slot,) + index] * frame.basis[(slot, slice(None)) + index]


def _grid_index(torus: TorusSpec, n: Sequence[int]) -> Tuple[int, int, int]:
    for ni, Ni in zip(n, torus.grid):
        if abs(int(ni)) >= Ni // 2:
            raise ValidationError(f"frequency {tuple(n)} is not resolved on grid {torus.grid}")
    return torus.index_of(n)


def beta_value(
    U: SpectralField, m_h: Sequence[int], n3: int, frame: Optional[WaveFrame] = None
) -> np.ndarray:
    """Four-term sum pairing U^{+/-,3} at (-m_h, n3/2) with U^{-/+,h} at (m_h, n3/2) and
    the mirrored terms; returns the complex horizontal 2-vector."""
    if n3 % 2:
        raise ConstraintError(f"n3 must be even, got {n3}")
    frame = frame or WaveFrame(U.torus)
    torus = U.torus
    slots = frame.to_eigen(U, check=False).slots
    half = n3 // 2
    plus_h = _grid_index(torus, (m_h[0], m_h[1], half))
    minus_h = _grid_index(torus, (-m_h[0], -m_h[1], half))
    vertical = half / torus.a3

    def part(index: Tuple[int, int, int], slot: int) -> np.ndarray:
        return _slot_parts(frame, slots, index, slot)

    p, mn = 1, 2
    total = (
        part(minus_h, p)[2] * part(plus_h, mn)[:2]
        + part(minus_h, mn)[2] * part(plus_h, p)[:2]
        + part(plus_h, p)[2] * part(minus_h, mn)[:2]
        + part(plus_h, mn)[2] * part(minus_h, p)[:2]
    )
    return vertical * total


def beta_max(U: SpectralField, frame: Optional[WaveFrame] = None) -> float:
    """max |beta| over resolved (m_h, n3), n3 even."""
    frame = frame or WaveFrame(U.torus)
    torus = U.torus
    worst = 0.0
    limits = [N // 2 - 1 for N in torus.grid]
    for m1 in range(-limits[0], limits[0] + 1):
        for m2 in range(-limits[1], limits[1] + 1):
            for half in range(-limits[2], limits[2] + 1):
                value = beta_value(U, (m1, m2), 2 * half, frame)
                worst = max(worst, float(np.max(np.abs(value))))
    return worst


def underline_Q(
    U: SpectralField, frame: Optional[WaveFrame] = None, *, tolerance: float = 1e-12
) -> Dict[int, np.ndarray]:
    """Resonant horizontal-average form: for each n3 != 0, the sum over k + m = (0, 0, n3)
    with omega^a(k) + omega^b(m) = 0 of n3 U^{a,3}(k) U^{b,h}(m)."""
    frame = frame or WaveFrame(U.torus)
    torus = U.torus
    slots = frame.to_eigen(U, check=False).slots
    band = torus.band_mask & ~torus.zero_mode
    k_modes = np.stack([mode[band] for mode in torus.modes], axis=-1)
    limits = np.asarray(torus.band)
    out: Dict[int, np.ndarray] = {}
    for n3 in range(-torus.band[2], torus.band[2] + 1):
        if n3 == 0:
            continue
        target = np.array([0, 0, n3])
        m_modes = target - k_modes
        ok = np.all(np.abs(m_modes) <= limits, axis=1) & np.any(m_modes != 0, axis=1)
        total = np.zeros(2, dtype=complex)
        for k, m in zip(k_modes[ok], m_modes[ok]):
            ki, mi = torus.index_of(k), torus.index_of(m)
            for a in range(3):
                for b in range(3):
                    if abs(frame.slot_omega[(a,) + ki] + frame.slot_omega[(b,) + mi]) >= tolerance:
                        continue
                    uk = _slot_parts(frame, slots, ki, a)
                    um = _slot_parts(frame, slots, mi, b)
                    total += (n3 / torus.a3) * uk[2] * um[:2]
        out[n3] = total
    return out


# --- resonance polynomial ----------------------------------------------------


def _norms(k: Sequence[int], m: Sequence[int], a: Sequence[float]):
    n = [k[i] + m[i] for i in range(3)]

    def parts(x: Sequence[int]) -> Tuple[float, float]:
        h = (x[0] / a[0]) ** 2 + (x[1] / a[1]) ** 2
        return h, h + (x[2] / a[2]) ** 2

    return parts(k), parts(m), parts(n)


def resonance_polynomial(k: Sequence[int], m: Sequence[int], a: Sequence[float]) -> float:
    """|k|^4 |m|^4 |n|^4 (A^2 + B^2 + C^2 - 2AB - 2AC - 2BC), A = |k_h|^2/|k|^2 etc."""
    (K, kk), (M, mm), (Nh, nn) = _norms(k, m, a)
    return (
        K * K * mm * mm * nn * nn
        + M * M * kk * kk * nn * nn
        + Nh * Nh * kk * kk * mm * mm
        - 2.0 * K * M * kk * mm * nn * nn
        - 2.0 * K * Nh * kk * nn * mm * mm
        - 2.0 * M * Nh * mm * nn * kk * kk
    )


def resonance_discriminant(k: Sequence[int], m: Sequence[int], a: Sequence[float]) -> float:
    """Scale-free form A^2 + B^2 + C^2 - 2(AB + AC + BC); zero iff some signs of
    sqrt(A), sqrt(B), sqrt(C) sum to zero."""
    (K, kk), (M, mm), (Nh, nn) = _norms(k, m, a)
    if kk == 0 or mm == 0 or nn == 0:
        raise DegenerateError("resonance discriminant needs nonzero k, m, k+m")
    A, B, C = K / kk, M / mm, Nh / nn
    return A * A + B * B + C * C - 2.0 * (A * B + A * C + B * C)


def oscillating_min_omega(torus: TorusSpec, k: Sequence[int], m: Sequence[int]) -> float:
    n = [k[i] + m[i] for i in range(3)]
    wk, wm, wn = (frequency_value(torus, x) for x in (k, m, n))
    return min(abs(wk + wm - wn), abs(wk - wm - wn), abs(wk - wm + wn), abs(wk + wm + wn))


A3 = sp.Symbol("a3", positive=True)


def _rational(value: float | Fraction) -> sp.Rational:
    frac = Fraction(value).limit_denominator(10 ** 12) if isinstance(value, float) else Fraction(value)
    return sp.Rational(frac.numerator, frac.denominator)


def resonance_poly_a3(
    k: Sequence[int], m: Sequence[int], a_h: Sequence[float | Fraction] = (1, 1)
) -> sp.Poly:
    """The degree-8 polynomial in a3 obtained by clearing a3 from resonance_polynomial."""
    A1, A2 = (_rational(x) ** 2 for x in a_h)
    n = [k[i] + m[i] for i in range(3)]

    def parts(x: Sequence[int]):
        h = sp.Integer(x[0]) ** 2 / A1 + sp.Integer(x[1]) ** 2 / A2
        return h, h * A3 ** 2 + sp.Integer(x[2]) ** 2

    (K, kk), (M, mm), (Nh, nn) = parts(k), parts(m), parts(n)
    expr = (
        K ** 2 * mm ** 2 * nn ** 2
        + M ** 2 * kk ** 2 * nn ** 2
        + Nh ** 2 * kk ** 2 * mm ** 2
        - 2 * K * M * kk * mm * nn ** 2
        - 2 * K * Nh * kk * nn * mm ** 2
        - 2 * M * Nh * mm * nn * kk ** 2
    )
    return sp.Poly(sp.expand(expr), A3, domain=sp.QQ)


def leading_terms(
    k: Sequence[int], m: Sequence[int], a_h: Sequence[float | Fraction] = (1, 1)
) -> Tuple[Fraction, Fraction]:
    """(P0, P8): coefficient of a3^8 and the constant term."""
    coeffs = resonance_poly_a3(k, m, a_h).all_coeffs()
    coeffs = [sp.Integer(0)] * (9 - len(coeffs)) + list(coeffs)
    return _to_fraction(coeffs[0]), _to_fraction(coeffs[-1])


def _to_fraction(value: sp.Expr) -> Fraction:
    rational = sp.Rational(value)
    return Fraction(int(rational.p), int(rational.q))


def _horner(coeffs: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in coeffs:
        acc = acc * x + c
    return acc


def _sign_changes(values: Sequence[Fraction]) -> int:
    nonzero = [v for v in values if v != 0]
    return sum(1 for left, right in zip(nonzero, nonzero[1:]) if (left > 0) != (right > 0))


def _condition_number(coeffs: Sequence[float], root: float) -> float:
    degree = len(coeffs) - 1
    scale = sum(abs(c) * root ** (degree - j) for j, c in enumerate(coeffs))
    slope = sum(c * (degree - j) * root ** (degree - j - 1) for j, c in enumerate(coeffs[:-1]))
    if slope == 0:
        return math.inf
    return scale / (abs(root) * abs(slope))


def a3_resonant_roots(
    k: Sequence[int],
    m: Sequence[int],
    a_h: Sequence[float | Fraction] = (1, 1),
    *,
    lower: float = 1e-6,
    upper: float = 100.0,
    condition_limit: float = 1e10,
) -> List[float]:
    """Positive a3 in (lower, upper] where the triad becomes resonant, via a Sturm chain."""
    n = [k[i] + m[i] for i in range(3)]
    for name, freq in (("k", k), ("m", m), ("k+m", n)):
        if _horizontal_zero(freq):
            raise DegenerateError(f"P0 = 0: {name}={tuple(freq)} has zero horizontal part")
    poly = resonance_poly_a3(k, m, a_h)
    if poly.is_zero:
        raise DegenerateError("resonance polynomial vanishes identically")
    square_free = poly.sqf_part()
    chain = [[_to_fraction(c) for c in p.all_coeffs()] for p in sp.sturm(square_free)]

    def variations(x: Fraction) -> int:
        return _sign_changes([_horner(c, x) for c in chain])

    main = chain[0]
    lo, hi = Fraction(lower).limit_denominator(10 ** 9), Fraction(upper)
    roots: List[float] = []
    stack = [(lo, hi, variations(lo), variations(hi))]
    while stack:
        a, b, va, vb = stack.pop()
        count = va - vb
        if count <= 0:
            continue
        if count == 1:
            roots.append(_refine(main, a, b))
            continue
        mid = (a + b) / 2
        vm = variations(mid)
        stack.append((mid, b, vm, vb))
        stack.append((a, mid, va, vm))
    roots.sort()

    floats = [float(c) for c in (_to_fraction(c) for c in poly.all_coeffs())]
    for root in roots:
        kappa = _condition_number(floats, root)
        if kappa > condition_limit:
            warnings.warn(
                f"a3 root {root:.12g} for k={tuple(k)}, m={tuple(m)} is ill-conditioned "
                f"(condition {kappa:.2e})",
                PrecisionWarning,
                stacklevel=2,
            )
    return roots


def _refine(coeffs: Sequence[Fraction], lo: Fraction, hi: Fraction) -> float:
    """Bisect the single simple root in (lo, hi]."""
    f_hi = _horner(coeffs, hi)
    if f_hi == 0:
        return float(hi)
    hi_positive = f_hi > 0
    while hi - lo > Fraction(1, 10 ** 15) * hi:
        mid = (lo + hi) / 2
        value = _horner(coeffs, mid)
        if value == 0:
            return float(mid)
        if (value > 0) == hi_positive:
            hi = mid
        else:
            lo = mid
    return float((lo + hi) / 2)


def polynomial_residual(
    k: Sequence[int], m: Sequence[int], a_h: Sequence[float | Fraction], a3: float
) -> Tuple[float, float]:
    """|P(a3)| and the scale sum |P_j| a3^{8-j} for re-substitution checks."""
    coeffs = [float(c) for c in (_to_fraction(c) for c in resonance_poly_a3(k, m, a_h).all_coeffs())]
    degree = len(coeffs) - 1
    value = sum(c * a3 ** (degree - j) for j, c in enumerate(coeffs))
    scale = sum(abs(c) * a3 ** (degree - j) for j, c in enumerate(coeffs))
    return abs(value), scale


# --- certification -----------------------------------------------------------


def _certify_k(
    torus: TorusSpec,
    k: np.ndarray,
    box: np.ndarray,
    box_omega: np.ndarray,
    bounds: np.ndarray,
    tolerance: float,
    exact: bool,
) -> Tuple[float, int, List[TriadRecord], Optional[TriadRecord]]:
    if k[0] == 0 and k[1] == 0:
        return math.inf, 0, [], None
    n = box + k
    keep = (
        np.all(np.abs(n) <= bounds, axis=1)
        & ((n[:, 0] != 0) | (n[:, 1] != 0))
        & ((box[:, 0] != 0) | (box[:, 1] != 0))
    )
    if not np.any(keep):
        return math.inf, 0, [], None
    m_all, n_all = box[keep], n[keep]
    wk = float(_omegas(torus, k[None, :])[0])
    wm = box_omega[keep]
    wn = _omegas(torus, n_all)
    kk = _as_frequency(k)
    smallest = math.inf
    closest: Optional[TriadRecord] = None
    offenders: List[TriadRecord] = []
    for labels in itertools.product(OSCILLATING, repeat=3):
        a, b, c = labels
        total = a.sign * wk + b.sign * wm - c.sign * wn
        magnitude = np.abs(total)
        threshold = 1e-6 if exact else tolerance
        for row in np.flatnonzero(magnitude < threshold):
            if exact and not exact_resonance(torus, k, m_all[row], labels):
                continue
            offenders.append(
                TriadRecord(kk, _as_frequency(m_all[row]), _as_frequency(n_all[row]),
                            labels, float(total[row]), "osc")
            )
        row = int(np.argmin(magnitude))
        if magnitude[row] < smallest:
            smallest = float(magnitude[row])
            closest = TriadRecord(
                kk, _as_frequency(m_all[row]), _as_frequency(n_all[row]), labels,
                float(total[row]), "osc",
            )
    return smallest, 8 * int(m_all.shape[0]), offenders, closest


def certify_nonresonant(
    torus: TorusSpec,
    N: CutoffLike,
    *,
    tolerance: float = 1e-12,
    exact: Optional[bool] = None,
    workers: int = 1,
) -> NonResonanceCertificate:
    """Scan oscillating triads with nonzero horizontal parts up to N; fail on any resonance."""
    if exact is None:
        exact = torus.squared_periods is not None
    if exact and torus.squared_periods is None:
        raise ExactnessError("exact certification needs rational squared periods")
    bounds = np.asarray(_cutoff_tuple(N))
    box = frequency_box(N)
    box_omega = _omegas(torus, box)

    def task(k: np.ndarray):
        return _certify_k(torus, k, box, box_omega, bounds, tolerance, exact)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, box))
    else:
        results = [task(k) for k in box]

    margin = math.inf
    checked = 0
    closest: Optional[TriadRecord] = None
    offenders: List[TriadRecord] = []
    for smallest, count, bad, near in results:
        checked += count
        offenders.extend(bad)
        if smallest < margin:
            margin, closest = smallest, near
    method = "exact" if exact else "floating"
    if offenders:
        log.warning("torus %s is resonant at N=%s: %d offending triads", torus.periods, N, len(offenders))
        raise ResonantDomainError(
            f"torus {torus.periods} has {len(offenders)} resonant oscillating triads up to N={N}; "
            f"first: {offenders[0]}",
            triads=offenders,
        )
    if not (margin > tolerance) and not exact:
        raise ResonantDomainError(
            f"certificate margin {margin:.3e} does not exceed tolerance {tolerance:.1e}",
            triads=[closest] if closest else [],
        )
    cutoff = N if isinstance(N, (int, np.integer)) else tuple(int(x) for x in N)
    log.info("certified torus %s up to N=%s: margin %.3e (%s)", torus.periods, cutoff, margin, method)
    return NonResonanceCertificate(torus, cutoff, float(margin), method, checked, closest)
