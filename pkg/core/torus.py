"""Torus geometry, spectral fields, Fourier multipliers and norms.

Convention: u(x) = sum_n u_n exp(i n_check . x) with n_check_j = n_j / a_j on the
torus prod_j [0, 2 pi a_j]; derivatives act as d_j <-> i n_check_j. Coefficients
are stored in full FFT layout with shape (components, N1, N2, N3) and equal
fftn(values) / (N1 N2 N3). Physical norms use the normalized measure (mean over
the torus), so Plancherel reads ||u||_{L2}^2 = sum |u_n|^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, ValidationError


@dataclass(frozen=True)
class TorusSpec:
    a1: float
    a2: float
    a3: float
    N1: int
    N2: int
    N3: int
    dealias: bool = True
    # exact a_i^2 when known; enables exact resonance decisions
    squared_periods: Optional[Tuple[Fraction, Fraction, Fraction]] = field(
        default=None, compare=False
    )

    def __post_init__(self) -> None:
        for name in ("a1", "a2", "a3"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"torus period {name} must be positive, got {value!r}")
        for name in ("N1", "N2", "N3"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 4 or value % 2:
                raise ValidationError(f"grid size {name} must be an even integer >= 4, got {value!r}")

    @classmethod
    def build(
        cls,
        periods: Sequence[float],
        grid: Sequence[int],
        *,
        dealias: bool = True,
        squared_periods: Optional[Sequence[Fraction]] = None,
    ) -> "TorusSpec":
        if len(periods) != 3 or len(grid) != 3:
            raise ValidationError("torus needs three periods and three grid sizes")
        sq = tuple(Fraction(x) for x in squared_periods) if squared_periods else None
        return cls(
            float(periods[0]), float(periods[1]), float(periods[2]),
            int(grid[0]), int(grid[1]), int(grid[2]),
            dealias=dealias,
            squared_periods=sq,  # type: ignore[arg-type]
        )

    @property
    def periods(self) -> Tuple[float, float, float]:
        return (self.a1, self.a2, self.a3)

    @property
    def grid(self) -> Tuple[int, int, int]:
        return (self.N1, self.N2, self.N3)

    @property
    def size(self) -> int:
        return self.N1 * self.N2 * self.N3

    @property
    def band(self) -> Tuple[int, int, int]:
        """Largest retained |n_i| per axis under the 2/3 rule."""
        if not self.dealias:
            return tuple(n // 2 - 1 for n in self.grid)  # type: ignore[return-value]
        return tuple((n - 1) // 3 for n in self.grid)  # type: ignore[return-value]

    def check(self, n: Sequence[int]) -> np.ndarray:
        return np.array([n[0] / self.a1, n[1] / self.a2, n[2] / self.a3], dtype=float)

    def index_of(self, n: Sequence[int]) -> Tuple[int, int, int]:
        return tuple(int(ni) % Ni for ni, Ni in zip(n, self.grid))  # type: ignore[return-value]

    @cached_property
    def modes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [np.fft.fftfreq(N, 1.0 / N).astype(int) for N in self.grid]
        return tuple(np.meshgrid(*axes, indexing="ij"))  # type: ignore[return-value]

    @cached_property
    def wave(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n1, n2, n3 = self.modes
        return (n1 / self.a1, n2 / self.a2, n3 / self.a3)

    @cached_property
    def kh2(self) -> np.ndarray:
        k1, k2, _ = self.wave
        return k1 * k1 + k2 * k2

    @cached_property
    def k2(self) -> np.ndarray:
        return self.kh2 + self.wave[2] ** 2

    @cached_property
    def degenerate(self) -> np.ndarray:
        n1, n2, _ = self.modes
        return (n1 == 0) & (n2 == 0)

    @cached_property
    def nyquist(self) -> np.ndarray:
        mask = np.zeros(self.grid, dtype=bool)
        for axis, N in enumerate(self.grid):
            mask |= self.modes[axis] == -(N // 2)
        return mask

    @cached_property
    def band_mask(self) -> np.ndarray:
        mask = ~self.nyquist
        for axis, limit in enumerate(self.band):
            mask &= np.abs(self.modes[axis]) <= limit
        return mask

    @cached_property
    def zero_mode(self) -> np.ndarray:
        mask = np.zeros(self.grid, dtype=bool)
        mask[0, 0, 0] = True
        return mask

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [2.0 * np.pi * a * np.arange(N) / N for a, N in zip(self.periods, self.grid)]
        return tuple(np.meshgrid(*axes, indexing="ij"))  # type: ignore[return-value]

    def describe(self) -> dict:
        return {"torus": list(self.periods), "grid": list(self.grid), "dealias": self.dealias}


class SpectralField:
    """Fourier coefficients of a real field with an arbitrary number of components.

    State vectors carry four components (v1, v2, v3, theta); scalar results such
    as the divergence carry one.
    """

    __slots__ = ("torus", "coeffs", "zero_horizontal_average")

    def __init__(
        self,
        torus: TorusSpec,
        coeffs: np.ndarray,
        *,
        zero_horizontal_average: bool = False,
    ) -> None:
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 3:
            coeffs = coeffs[np.newaxis]
        if coeffs.shape[1:] != torus.grid:
            raise ValidationError(
                f"coefficient shape {coeffs.shape[1:]} does not match grid {torus.grid}"
            )
        self.torus = torus
        self.coeffs = coeffs
        self.zero_horizontal_average = zero_horizontal_average

    @classmethod
    def zeros(cls, torus: TorusSpec, components: int = 4) -> "SpectralField":
        return cls(torus, np.zeros((components,) + torus.grid, dtype=complex))

    @classmethod
    def mode(
        cls, torus: TorusSpec, n: Sequence[int], vector: Sequence[complex], *, real: bool = True
    ) -> "SpectralField":
        """Single Fourier mode; `real` adds the Hermitian partner at -n."""
        out = np.zeros((len(vector),) + torus.grid, dtype=complex)
        out[(slice(None),) + torus.index_of(n)] = np.asarray(vector, dtype=complex)
        if real:
            minus = torus.index_of([-x for x in n])
            out[(slice(None),) + minus] += np.conj(np.asarray(vector, dtype=complex))
        return cls(torus, out)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def copy(self) -> "SpectralField":
        return SpectralField(
            self.torus, self.coeffs.copy(), zero_horizontal_average=self.zero_horizontal_average
        )

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.torus, coeffs, zero_horizontal_average=self.zero_horizontal_average)

    def component(self, index: int) -> "SpectralField":
        return SpectralField(self.torus, self.coeffs[index : index + 1].copy())

    def _other(self, other: "SpectralField | complex | float") -> np.ndarray | complex | float:
        if isinstance(other, SpectralField):
            return other.coeffs
        return other

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.torus, self.coeffs + self._other(other))

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.torus, self.coeffs - self._other(other))

    def __mul__(self, scalar: complex | float) -> "SpectralField":
        return SpectralField(
            self.torus, self.coeffs * scalar, zero_horizontal_average=self.zero_horizontal_average
        )

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self * -1.0

    def inner(self, other: "SpectralField") -> complex:
        """Coefficient inner product <self, other> = sum self * conj(other)."""
        return complex(np.vdot(other.coeffs.ravel(), self.coeffs.ravel()))

    def energy(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def to_physical(self) -> np.ndarray:
        return to_physical(self)


def _reflect(coeffs: np.ndarray) -> np.ndarray:
    out = coeffs
    for axis in (-3, -2, -1):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def partner(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients at -n, laid out at n."""
    return _reflect(coeffs)


def symmetrize(f: SpectralField) -> SpectralField:
    return f.with_coeffs(0.5 * (f.coeffs + np.conj(_reflect(f.coeffs))))


def hermitian_residual(f: SpectralField) -> float:
    return float(np.max(np.abs(f.coeffs - np.conj(_reflect(f.coeffs))), initial=0.0))


def pin(f: SpectralField, *, band: bool = False) -> SpectralField:
    """Zero the mean and Nyquist modes (and everything outside the band)."""
    torus = f.torus
    keep = torus.band_mask if band else ~torus.nyquist
    keep = keep & ~torus.zero_mode
    if f.zero_horizontal_average:
        keep = keep & ~torus.degenerate
    return f.with_coeffs(np.where(keep, f.coeffs, 0.0))


def mask_band(f: SpectralField) -> SpectralField:
    return f.with_coeffs(np.where(f.torus.band_mask, f.coeffs, 0.0))


def clean(f: SpectralField) -> SpectralField:
    return pin(symmetrize(f), band=True)


def to_physical(f: SpectralField) -> np.ndarray:
    values = sfft.ifftn(f.coeffs * f.torus.size, axes=(-3, -2, -1))
    return np.real(values)


def from_physical(torus: TorusSpec, values: np.ndarray) -> SpectralField:
    values = np.asarray(values, dtype=float)
    if values.ndim == 3:
        values = values[np.newaxis]
    return SpectralField(torus, sfft.fftn(values, axes=(-3, -2, -1)) / torus.size)


def multiply(f: SpectralField, g: SpectralField, *, dealias: bool = True) -> SpectralField:
    """Pointwise product (component-wise, broadcasting single-component factors)."""
    torus = f.torus
    if dealias:
        f, g = mask_band(f), mask_band(g)
    product = from_physical(torus, to_physical(f) * to_physical(g))
    return mask_band(product) if dealias else product


def transport(v: SpectralField, w: SpectralField, *, dealias: bool = True) -> SpectralField:
    """(v . grad) w for a 3-component velocity v and any multi-component w."""
    torus = v.torus
    if dealias:
        v, w = mask_band(v), mask_band(w)
    vel = to_physical(v)[:3]
    acc = np.zeros((w.components,) + torus.grid)
    for j, kj in enumerate(torus.wave):
        dw = to_physical(w.with_coeffs(1j * kj * w.coeffs))
        acc += vel[j] * dw
    out = from_physical(torus, acc)
    return mask_band(out) if dealias else out


# --- Fourier multipliers -----------------------------------------------------


def leray_project(f: SpectralField) -> SpectralField:
    torus = f.torus
    k = torus.wave
    k2 = np.where(torus.k2 > 0, torus.k2, 1.0)
    v = f.coeffs[:3]
    kv = sum(k[j] * v[j] for j in range(3)) / k2
    out = f.coeffs.copy()
    for j in range(3):
        out[j] = v[j] - k[j] * kv
    return f.with_coeffs(out)


def divergence(f: SpectralField) -> SpectralField:
    k = f.torus.wave
    return SpectralField(f.torus, 1j * sum(k[j] * f.coeffs[j] for j in range(3)))


def gradient(f: SpectralField) -> SpectralField:
    k = f.torus.wave
    return SpectralField(f.torus, np.stack([1j * kj * f.coeffs[0] for kj in k]))


def gradient_h(f: SpectralField) -> SpectralField:
    k = f.torus.wave
    return SpectralField(f.torus, np.stack([1j * k[0] * f.coeffs[0], 1j * k[1] * f.coeffs[0]]))


def perp_gradient_h(f: SpectralField) -> SpectralField:
    k = f.torus.wave
    return SpectralField(f.torus, np.stack([-1j * k[1] * f.coeffs[0], 1j * k[0] * f.coeffs[0]]))


def curl_h(f: SpectralField) -> SpectralField:
    k = f.torus.wave
    return SpectralField(f.torus, 1j * (k[0] * f.coeffs[1] - k[1] * f.coeffs[0]))


def laplacian(f: SpectralField) -> SpectralField:
    return f.with_coeffs(-f.torus.k2 * f.coeffs)


def laplacian_h(f: SpectralField) -> SpectralField:
    return f.with_coeffs(-f.torus.kh2 * f.coeffs)


def _require_zero_horizontal_average(f: SpectralField, name: str, tol: float = 1e-13) -> None:
    scale = max(f.max_abs(), 1.0)
    if np.any(np.abs(f.coeffs[:, f.torus.degenerate]) > tol * scale):
        raise DomainError(f"{name} needs zero coefficients at n_h = 0")


def inverse_laplacian_h(f: SpectralField) -> SpectralField:
    _require_zero_horizontal_average(f, "inverse horizontal laplacian")
    torus = f.torus
    safe = np.where(torus.degenerate, 1.0, torus.kh2)
    return f.with_coeffs(np.where(torus.degenerate, 0.0, -f.coeffs / safe))


def inverse_sqrt_laplacian_h(f: SpectralField) -> SpectralField:
    """(-Delta_h)^(-1/2), symbol 1/|n_h|."""
    _require_zero_horizontal_average(f, "inverse square-root horizontal laplacian")
    torus = f.torus
    safe = np.where(torus.degenerate, 1.0, np.sqrt(torus.kh2))
    return f.with_coeffs(np.where(torus.degenerate, 0.0, f.coeffs / safe))


def biot_savart(omega: SpectralField) -> SpectralField:
    """Horizontal velocity grad_h^perp Delta_h^{-1} omega, layer by layer."""
    return perp_gradient_h(inverse_laplacian_h(omega))


# --- norms -------------------------------------------------------------------


def sobolev_norm(f: SpectralField, s: float) -> float:
    weight = (1.0 + f.torus.k2) ** s
    return math.sqrt(float(np.sum(weight * np.sum(np.abs(f.coeffs) ** 2, axis=0))))


def aniso_sobolev_norm(f: SpectralField, s: float, s_prime: float) -> float:
    torus = f.torus
    weight = (1.0 + torus.kh2) ** s * (1.0 + torus.wave[2] ** 2) ** s_prime
    return math.sqrt(float(np.sum(weight * np.sum(np.abs(f.coeffs) ** 2, axis=0))))


def gradient_energy(f: SpectralField) -> float:
    """||grad f||_{L2}^2."""
    return float(np.sum(f.torus.k2 * np.sum(np.abs(f.coeffs) ** 2, axis=0)))


def horizontal_gradient_energy(f: SpectralField) -> float:
    return float(np.sum(f.torus.kh2 * np.sum(np.abs(f.coeffs) ** 2, axis=0)))


def _lp_mean(values: np.ndarray, p: float, axis) -> np.ndarray:
    if math.isinf(p):
        return np.max(values, axis=axis)
    return np.mean(values ** p, axis=axis) ** (1.0 / p)


def magnitude(f: SpectralField) -> np.ndarray:
    """Pointwise Euclidean magnitude over components."""
    values = to_physical(f)
    return np.sqrt(np.sum(values * values, axis=0))


def lebesgue_norm(f: SpectralField, p: float) -> float:
    return float(_lp_mean(magnitude(f), p, axis=None))


def aniso_lebesgue_norm(f: SpectralField, p: float, q: float, order: str = "hv") -> float:
    """L^p_h L^q_v ("hv": vertical integral inside) or L^q_v L^p_h ("vh")."""
    for value in (p, q):
        if not (value >= 1.0):
            raise ValidationError(f"Lebesgue exponent must be >= 1, got {value}")
    mag = magnitude(f)
    if order == "hv":
        inner = _lp_mean(mag, q, axis=2)
        return float(_lp_mean(inner, p, axis=None))
    if order == "vh":
        inner = _lp_mean(mag, p, axis=(0, 1))
        return float(_lp_mean(inner, q, axis=None))
    raise ValidationError(f"unknown integration order {order!r}")


def layer_coefficients(f: SpectralField) -> np.ndarray:
    """Horizontal Fourier coefficients per vertical grid layer."""
    return sfft.ifft(f.coeffs * f.torus.N3, axis=-1)


def lpv_hsigma_norm(f: SpectralField, p: float, sigma: float) -> float:
    """L^p_v(H^sigma_h)."""
    layers = layer_coefficients(f)
    weight = ((1.0 + f.torus.kh2[:, :, :1]) ** sigma)
    per_layer = np.sqrt(np.sum(weight * np.sum(np.abs(layers) ** 2, axis=0), axis=(0, 1)))
    return float(_lp_mean(per_layer, p, axis=None))


def linf_v_l2_h(f: SpectralField) -> float:
    return lpv_hsigma_norm(f, math.inf, 0.0)


def poincare_constant_h(torus: TorusSpec) -> float:
    return min(1.0 / torus.a1 ** 2, 1.0 / torus.a2 ** 2)


# --- dyadic decomposition ----------------------------------------------------


def _bump_tail(x: np.ndarray) -> np.ndarray:
    positive = x > 0
    return np.where(positive, np.exp(-1.0 / np.where(positive, x, 1.0)), 0.0)


@dataclass(frozen=True)
class DyadicShell:
    """Smooth dyadic pair: chi supported in B(0, 4/3), phi in the annulus (3/4, 8/3)."""

    q: int

    @staticmethod
    def chi(t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        left = _bump_tail(4.0 / 3.0 - t)
        right = _bump_tail(t - 0.75)
        total = left + right
        return np.where(t <= 0.75, 1.0, np.where(t >= 4.0 / 3.0, 0.0, left / np.where(total > 0, total, 1.0)))

    @classmethod
    def phi(cls, t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return cls.chi(t / 2.0) - cls.chi(t)

    def multiplier(self, radius: np.ndarray) -> np.ndarray:
        if self.q < 0:
            return self.chi(radius)
        return self.phi(radius / 2.0 ** self.q)


def _radius(torus: TorusSpec, axis: str) -> np.ndarray:
    if axis == "isotropic":
        return np.sqrt(torus.k2)
    if axis == "horizontal":
        return np.sqrt(torus.kh2)
    raise ValidationError(f"unknown dyadic axis {axis!r}")


def dyadic_range(torus: TorusSpec, axis: str = "isotropic") -> range:
    rmax = float(np.max(_radius(torus, axis)))
    top = int(math.floor(math.log2(max(4.0 * rmax / 3.0, 1.0)))) + 1
    return range(-1, top + 1)


def dyadic_block(f: SpectralField, q: int, axis: str = "isotropic") -> SpectralField:
    if q < -1:
        raise ValidationError(f"dyadic index must be >= -1, got {q}")
    weight = DyadicShell(q).multiplier(_radius(f.torus, axis))
    return f.with_coeffs(weight * f.coeffs)


def low_pass(f: SpectralField, q: int, axis: str = "isotropic") -> SpectralField:
    """S_q = sum of blocks below q."""
    weight = DyadicShell.chi(_radius(f.torus, axis) / 2.0 ** q)
    return f.with_coeffs(weight * f.coeffs)


def fractional_laplacian(f: SpectralField, k: float) -> SpectralField:
    """(-Delta)^{k/2}."""
    return f.with_coeffs(f.torus.k2 ** (k / 2.0) * f.coeffs)
