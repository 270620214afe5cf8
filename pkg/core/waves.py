"""Eigenframe of the penalized operator PA and the propagator L(tau) = exp(tau PA).

Sign convention: PA e+ = +i omega e+, PA e- = -i omega e-, omega = |n_h| / |n|.
The free linear flow of the full system is V(t) = L(-t/eps) V0 and the
filtered unknown is U = L(t/eps) V. Every module takes these signs from here.

Slots: 0 -> e0 (kernel), 1 -> e+, 2 -> e-, 3 -> gradient direction (n, 0)/|n|.
At n_h = 0 the slots hold the fixed basis (1,0,0,0), (0,1,0,0), (0,0,0,1) and
slot 3 is (0,0,1,0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import DomainError, ResidualError
from .torus import SpectralField, TorusSpec

SQRT_HALF = 1.0 / math.sqrt(2.0)
KERNEL, PLUS, MINUS, GRADIENT = 0, 1, 2, 3


def frame_vectors(k1: np.ndarray, k2: np.ndarray, k3: np.ndarray) -> np.ndarray:
    """Slot basis for check frequencies of any shape; result shape (..., 4 slots, 4 comps)."""
    k1, k2, k3 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (k1, k2, k3)))
    kh2 = k1 * k1 + k2 * k2
    degenerate = kh2 == 0.0
    kh = np.sqrt(np.where(degenerate, 1.0, kh2))
    kk = np.sqrt(np.where(degenerate, 1.0, kh2 + k3 * k3))
    basis = np.zeros(k1.shape + (4, 4), dtype=complex)

    basis[..., KERNEL, 0] = -k2 / kh
    basis[..., KERNEL, 1] = k1 / kh
    basis[..., PLUS, 0] = SQRT_HALF * 1j * k1 * k3 / (kh * kk)
    basis[..., PLUS, 1] = SQRT_HALF * 1j * k2 * k3 / (kh * kk)
    basis[..., PLUS, 2] = -SQRT_HALF * 1j * kh / kk
    basis[..., PLUS, 3] = SQRT_HALF
    basis[..., MINUS, :] = np.conj(basis[..., PLUS, :])
    basis[..., GRADIENT, 0] = k1 / kk
    basis[..., GRADIENT, 1] = k2 / kk
    basis[..., GRADIENT, 2] = k3 / kk

    fixed = np.zeros((4, 4), dtype=complex)
    fixed[KERNEL, 0] = 1.0
    fixed[PLUS, 1] = 1.0
    fixed[MINUS, 3] = 1.0
    fixed[GRADIENT, 2] = 1.0
    basis[degenerate] = fixed
    return basis


def frequency_omega(k1: np.ndarray, k2: np.ndarray, k3: np.ndarray) -> np.ndarray:
    kh2 = np.asarray(k1, dtype=float) ** 2 + np.asarray(k2, dtype=float) ** 2
    k2_full = kh2 + np.asarray(k3, dtype=float) ** 2
    return np.where(kh2 > 0, np.sqrt(kh2) / np.sqrt(np.where(k2_full > 0, k2_full, 1.0)), 0.0)


def slot_omegas(omega: np.ndarray, degenerate: np.ndarray) -> np.ndarray:
    """Signed eigenvalue per slot, shape (4, ...)."""
    zero = np.zeros_like(omega)
    out = np.stack([zero, omega, -omega, zero])
    return np.where(degenerate, 0.0, out)


@dataclass(frozen=True)
class FrameEntry:
    n: tuple
    omega: float
    degenerate: bool
    e0: Optional[np.ndarray]
    eplus: Optional[np.ndarray]
    eminus: Optional[np.ndarray]
    degenerate_basis: Optional[tuple]

    def as_dict(self) -> Dict[str, Any]:
        def encode(vec: Optional[np.ndarray]) -> Optional[List[List[float]]]:
            if vec is None:
                return None
            return [[float(z.real), float(z.imag)] for z in vec]

        return {
            "n": list(self.n),
            "omega": self.omega,
            "degenerate": self.degenerate,
            "e0": encode(self.e0),
            "eplus": encode(self.eplus),
            "eminus": encode(self.eminus),
            "degenerate_basis": (
                [encode(v) for v in self.degenerate_basis] if self.degenerate_basis else None
            ),
        }


def build_frame(torus: TorusSpec, n: Sequence[int]) -> FrameEntry:
    if all(int(x) == 0 for x in n):
        raise DomainError("the frame is not defined at n = 0")
    k = torus.check(n)
    basis = frame_vectors(k[0], k[1], k[2])
    omega = float(frequency_omega(k[0], k[1], k[2]))
    key = tuple(int(x) for x in n)
    if n[0] == 0 and n[1] == 0:
        return FrameEntry(key, 0.0, True, None, None, None, (basis[0], basis[1], basis[2]))
    return FrameEntry(key, omega, False, basis[KERNEL], basis[PLUS], basis[MINUS], None)


@dataclass
class ModeCoordinates:
    """Eigen coordinates per slot, shape (4, N1, N2, N3); slot 3 is the gradient residual."""

    torus: TorusSpec
    slots: np.ndarray

    @property
    def U0(self) -> np.ndarray:
        return self.slots[KERNEL]

    @property
    def Uplus(self) -> np.ndarray:
        return self.slots[PLUS]

    @property
    def Uminus(self) -> np.ndarray:
        return self.slots[MINUS]

    @property
    def residual(self) -> np.ndarray:
        return self.slots[GRADIENT]

    def raw_degenerate(self) -> np.ndarray:
        """(v1, v2, v3, theta) at n_h = 0, shape (4, count)."""
        deg = self.torus.degenerate
        s = self.slots[:, deg]
        return np.stack([s[KERNEL], s[PLUS], s[GRADIENT], s[MINUS]])

    def scaled(self, factor: np.ndarray | complex) -> "ModeCoordinates":
        return ModeCoordinates(self.torus, self.slots * factor)


class WaveFrame:
    """Whole-grid eigenframe; immutable after construction."""

    def __init__(self, torus: TorusSpec) -> None:
        self.torus = torus
        k1, k2, k3 = torus.wave
        # (4 slots, 4 comps, N1, N2, N3)
        self.basis = np.moveaxis(frame_vectors(k1, k2, k3), (-2, -1), (0, 1)).copy()
        self.omega = frequency_omega(k1, k2, k3)
        self.nondegenerate = ~torus.degenerate
        self.slot_omega = slot_omegas(self.omega, torus.degenerate)

    def to_eigen(
        self, field: SpectralField, *, check: bool = True, tolerance: float = 1e-8
    ) -> ModeCoordinates:
        slots = np.einsum("sc...,c...->s...", np.conj(self.basis), field.coeffs[:4])
        if check:
            total = field.energy()
            leftover = float(np.sum(np.abs(slots[GRADIENT]) ** 2))
            if total > 0 and leftover > tolerance * total:
                raise ResidualError(
                    f"field has {leftover / total:.3e} of its energy outside the solenoidal frame"
                )
        return ModeCoordinates(self.torus, slots)

    def from_eigen(self, coords: ModeCoordinates) -> SpectralField:
        coeffs = np.einsum("sc...,s...->c...", self.basis, coords.slots)
        return SpectralField(self.torus, coeffs)

    def slot_field(self, slots: np.ndarray) -> SpectralField:
        return self.from_eigen(ModeCoordinates(self.torus, slots))

    def phase(self, tau: float) -> np.ndarray:
        return np.exp(1j * tau * self.slot_omega)

    def propagate(self, field: SpectralField, tau: float) -> SpectralField:
        """L(tau); acts on the solenoidal part, the gradient part is carried along."""
        coords = self.to_eigen(field, check=False)
        out = self.from_eigen(coords.scaled(self.phase(tau)))
        out.zero_horizontal_average = field.zero_horizontal_average
        return out

    def _keep(self, field: SpectralField, slots: Sequence[int], where: np.ndarray) -> SpectralField:
        coords = self.to_eigen(field, check=False)
        kept = np.zeros_like(coords.slots)
        for s in slots:
            kept[s] = np.where(where, coords.slots[s], 0.0)
        return self.slot_field(kept)

    def project_bar(self, field: SpectralField) -> SpectralField:
        return self._keep(field, (KERNEL,), self.nondegenerate)

    def project_osc(self, field: SpectralField) -> SpectralField:
        return self._keep(field, (PLUS, MINUS), self.nondegenerate)

    def project_degenerate(self, field: SpectralField) -> SpectralField:
        return field.with_coeffs(np.where(self.torus.degenerate, field.coeffs, 0.0))

    def gram_defect(self) -> float:
        gram = np.einsum("sc...,tc...->st...", self.basis, np.conj(self.basis))
        eye = np.eye(4).reshape((4, 4) + (1,) * 3)
        return float(np.max(np.abs(gram - eye)))

    def eigen_residual(self) -> float:
        """max over frequencies of |PA e -/+ i omega e| for e+ and e-."""
        worst = 0.0
        for slot in (PLUS, MINUS):
            vec = SpectralField(self.torus, self.basis[slot])
            applied = penalized_apply(vec).coeffs
            expected = 1j * self.slot_omega[slot] * self.basis[slot]
            diff = np.where(self.nondegenerate, applied - expected, 0.0)
            worst = max(worst, float(np.max(np.abs(diff))))
        return worst


def penalized_apply(field: SpectralField) -> SpectralField:
    """Symbol of PA: theta feeds P(0, 0, theta), v3 feeds -theta. P = I at n = 0."""
    torus = field.torus
    k1, k2, k3 = torus.wave
    k2_full = np.where(torus.k2 > 0, torus.k2, 1.0)
    theta = field.coeffs[3]
    out = np.zeros_like(field.coeffs)
    out[0] = -k1 * k3 / k2_full * theta
    out[1] = -k2 * k3 / k2_full * theta
    out[2] = np.where(torus.k2 > 0, torus.kh2 / k2_full, 1.0) * theta
    out[3] = -field.coeffs[2]
    return field.with_coeffs(out)
