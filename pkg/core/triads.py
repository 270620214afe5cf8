"""Band-limited interaction table for bilinear forms written in eigen coordinates.

For band frequencies k, m and n = k + m (all nonzero, all inside the 2/3 band)
and slot labels (a, b, c) in {0, +, -}, the transport form T(X, Y) = P(x . grad Y)
has the slot expansion

    T(X, Y)^c(n) = sum_{k+m=n} sum_{a,b} G^{abc}_{km} X^a(k) Y^b(m),
    G^{abc}_{km} = (sum_{j<3} e^{a,j}(k) i m_j) (e^b(m) | e^c(n)),

and the filtered form picks up the phase exp(-i tau Omega) with
Omega = omega^a(k) + omega^b(m) - omega^c(n). Output slots 0..2 are solenoidal,
so the Leray projection is implicit.
"""
from __future__ import annotations

import itertools
import logging
from typing import Callable, Dict, Iterator, Optional, Tuple

import numpy as np

from utils.logger import get_child

from .torus import SpectralField, TorusSpec
from .waves import WaveFrame

LABEL_SLOTS = (0, 1, 2)
COMBOS = tuple(itertools.product(LABEL_SLOTS, repeat=3))

Weight = Callable[[np.ndarray, Tuple[int, int, int]], np.ndarray]


class TriadTable:
    def __init__(
        self,
        frame: WaveFrame,
        *,
        tolerance: float = 1e-12,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        self.frame = frame
        self.torus: TorusSpec = frame.torus
        self.tolerance = tolerance
        self.logger = logger.getChild("triads") if logger else get_child("triads")
        torus = self.torus

        band = torus.band_mask & ~torus.zero_mode
        modes = np.stack([m[band] for m in torus.modes], axis=-1)
        flat = np.flatnonzero(band.ravel())
        sums = modes[:, None, :] + modes[None, :, :]
        limits = np.asarray(torus.band)
        valid = np.all(np.abs(sums) <= limits, axis=-1) & np.any(sums != 0, axis=-1)
        ki, mi = np.nonzero(valid)
        n_int = sums[ki, mi]

        self.k = modes[ki]
        self.m = modes[mi]
        self.n = n_int
        self.k_flat = flat[ki]
        self.m_flat = flat[mi]
        self.n_flat = np.ravel_multi_index(tuple((n_int % torus.grid).T), torus.grid)
        self.size = torus.size
        self.n_degenerate = torus.degenerate.ravel()[self.n_flat]

        basis = frame.basis.reshape(4, 4, -1)
        wave = np.stack([w.ravel() for w in torus.wave])
        m_wave = wave[:, self.m_flat]
        self.dotm = [
            sum(basis[a, j, self.k_flat] * 1j * m_wave[j] for j in range(3)) for a in LABEL_SLOTS
        ]
        self.inner: Dict[Tuple[int, int], np.ndarray] = {}
        for b in LABEL_SLOTS:
            for c in LABEL_SLOTS:
                self.inner[(b, c)] = np.einsum(
                    "ip,ip->p", basis[b][:, self.m_flat], np.conj(basis[c][:, self.n_flat])
                )
        slot_omega = frame.slot_omega.reshape(4, -1)
        self.omega_k = slot_omega[:, self.k_flat]
        self.omega_m = slot_omega[:, self.m_flat]
        self.omega_n = slot_omega[:, self.n_flat]

        self.resonant: Dict[Tuple[int, int, int], np.ndarray] = {}
        total = 0
        for combo in COMBOS:
            idx = np.flatnonzero(np.abs(self.omega_sum(combo)) < tolerance)
            self.resonant[combo] = idx
            total += idx.size
        self.logger.debug(
            "triad table: %d band pairs, %d resonant labelled triads", self.k.shape[0], total
        )

    def __len__(self) -> int:
        return int(self.k.shape[0])

    def omega_sum(self, combo: Tuple[int, int, int]) -> np.ndarray:
        a, b, c = combo
        return self.omega_k[a] + self.omega_m[b] - self.omega_n[c]

    def coefficient(self, combo: Tuple[int, int, int]) -> np.ndarray:
        a, b, c = combo
        return self.dotm[a] * self.inner[(b, c)]

    def combos(self) -> Iterator[Tuple[int, int, int]]:
        return iter(COMBOS)

    def _slots(self, field: SpectralField) -> np.ndarray:
        coords = self.frame.to_eigen(field, check=False)
        return coords.slots.reshape(4, -1)

    def weighted_sum(
        self,
        x: SpectralField,
        y: SpectralField,
        weight: Optional[Weight] = None,
        *,
        pairs: Optional[np.ndarray] = None,
    ) -> SpectralField:
        """sum over pairs of weight(Omega) G x^a(k) y^b(m), all 27 label combinations.

        `pairs` is a boolean mask over table rows restricting the sum.
        """
        xs = self._slots(x)
        ys = self._slots(y)
        x_k = [xs[a][self.k_flat] * self.dotm[a] for a in LABEL_SLOTS]
        y_m = [ys[b][self.m_flat] for b in LABEL_SLOTS]
        real = np.zeros(3 * self.size)
        imag = np.zeros(3 * self.size)
        for combo in COMBOS:
            a, b, c = combo
            values = x_k[a] * y_m[b] * self.inner[(b, c)]
            if weight is not None:
                values = values * weight(self.omega_sum(combo), combo)
            if pairs is not None:
                values = np.where(pairs, values, 0.0)
            target = c * self.size + self.n_flat
            real += np.bincount(target, weights=values.real, minlength=3 * self.size)
            imag += np.bincount(target, weights=values.imag, minlength=3 * self.size)
        return self._to_field(real + 1j * imag)

    def resonant_sum(self, x: SpectralField, y: SpectralField) -> SpectralField:
        """T restricted to Omega = 0 (within tolerance), from the precomputed lists."""
        xs = self._slots(x)
        ys = self._slots(y)
        real = np.zeros(3 * self.size)
        imag = np.zeros(3 * self.size)
        for combo, idx in self.resonant.items():
            if idx.size == 0:
                continue
            a, b, c = combo
            values = (
                xs[a][self.k_flat[idx]]
                * self.dotm[a][idx]
                * ys[b][self.m_flat[idx]]
                * self.inner[(b, c)][idx]
            )
            target = c * self.size + self.n_flat[idx]
            real += np.bincount(target, weights=values.real, minlength=3 * self.size)
            imag += np.bincount(target, weights=values.imag, minlength=3 * self.size)
        return self._to_field(real + 1j * imag)

    def _to_field(self, flat: np.ndarray) -> SpectralField:
        slots = np.zeros((4, self.size), dtype=complex)
        slots[:3] = flat.reshape(3, self.size)
        return self.frame.slot_field(slots.reshape((4,) + self.torus.grid))

    def truncation(self, cutoff: float) -> np.ndarray:
        """Rows kept by the frequency truncation at cutoff N.

        Nondegenerate outputs need |k| <= N and |n| <= N; outputs with n_h = 0
        need |k| <= N and |n3| <= N (integer Euclidean norms).
        """
        k_norm = np.sqrt(np.sum(self.k.astype(float) ** 2, axis=1))
        n_norm = np.sqrt(np.sum(self.n.astype(float) ** 2, axis=1))
        part_one = ~self.n_degenerate & (k_norm <= cutoff) & (n_norm <= cutoff)
        part_two = self.n_degenerate & (k_norm <= cutoff) & (np.abs(self.n[:, 2]) <= cutoff)
        return part_one | part_two

    def min_divisor(self, pairs: np.ndarray) -> float:
        """Smallest |Omega| >= tolerance over included rows with a nonzero coefficient."""
        smallest = np.inf
        for combo in COMBOS:
            omega = np.abs(self.omega_sum(combo))
            active = pairs & (omega >= self.tolerance) & (np.abs(self.coefficient(combo)) > 1e-14)
            if np.any(active):
                smallest = min(smallest, float(np.min(omega[active])))
        return smallest
