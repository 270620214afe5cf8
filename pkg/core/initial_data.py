"""Initial-data recipes and the seeded random streams behind them."""
from __future__ import annotations

import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import RecipeError, StratoflowError
from .resonance import Mode
from .snapshot import read_snapshot
from .torus import (
    SpectralField,
    TorusSpec,
    clean,
    divergence,
    from_physical,
    leray_project,
    sobolev_norm,
)
from .waves import WaveFrame

RECIPES = ("random_solenoidal", "kernel_vortex", "osc_pack", "snapshot")
RECIPE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "random_solenoidal": {"s": 1.0, "amplitude": 0.1, "slope": 2.0},
    "kernel_vortex": {"layers": 1},
    "osc_pack": {},
    "snapshot": {},
}


class SeedStream:
    """One 64-bit seed split into labelled, counted child generators.

    The n-th draw under a label always gets the same stream, whatever else was drawn.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & (2 ** 64 - 1)
        self._counts: Counter = Counter()

    def generator(self, label: str) -> np.random.Generator:
        count = self._counts[label]
        self._counts[label] += 1
        key = (zlib.crc32(label.encode("utf-8")), count)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    @property
    def draws(self) -> Dict[str, int]:
        return dict(self._counts)


@dataclass
class InitialRecipe:
    name: str
    params: Dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)


def random_coefficients(
    torus: TorusSpec,
    rng: np.random.Generator,
    *,
    components: int = 4,
    slope: float = 1.0,
    solenoidal: bool = True,
    zero_horizontal_average: bool = True,
) -> SpectralField:
    """Gaussian coefficients on the band with spectral weight (1 + |n|^2)^(-slope/2)."""
    shape = (components,) + torus.grid
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    weight = (1.0 + torus.k2) ** (-0.5 * slope)
    out = SpectralField(torus, noise * weight, zero_horizontal_average=zero_horizontal_average)
    if solenoidal and components >= 3:
        out = leray_project(out)
    return clean(out)


def normalize(field: SpectralField, amplitude: float, s: float) -> SpectralField:
    norm = sobolev_norm(field, s)
    if norm == 0.0:
        raise RecipeError("cannot normalize a zero field")
    return field * (amplitude / norm)


def _float(recipe: InitialRecipe, key: str, default: float) -> float:
    value = recipe.get(key, default)
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise RecipeError(f"recipe {recipe.name}: {key} must be a number, got {value!r}") from exc


def _int(recipe: InitialRecipe, key: str, default: int) -> int:
    value = recipe.get(key, default)
    try:
        number = int(value)
    except (TypeError, ValueError) as exc:
        raise RecipeError(f"recipe {recipe.name}: {key} must be an integer, got {value!r}") from exc
    if number != float(value):
        raise RecipeError(f"recipe {recipe.name}: {key} must be an integer, got {value!r}")
    return number


def random_solenoidal(torus: TorusSpec, recipe: InitialRecipe, seeds: SeedStream) -> SpectralField:
    s = _float(recipe, "s", 1.0)
    amplitude = _float(recipe, "amplitude", 0.1)
    slope = _float(recipe, "slope", 2.0)
    if amplitude < 0:
        raise RecipeError(f"recipe random_solenoidal: amplitude must be >= 0, got {amplitude}")
    field = random_coefficients(torus, seeds.generator("initial.random_solenoidal"), slope=slope)
    if amplitude == 0:
        return field * 0.0
    return normalize(field, amplitude, s)


def kernel_vortex(torus: TorusSpec, recipe: InitialRecipe, seeds: SeedStream) -> SpectralField:
    """Horizontal cellular vortex sin(x1/a1) sin(x2/a2) stacked over `layers` vertical modes.

    layers = 1 gives the x3-independent steady Euler vortex.
    """
    layers = _int(recipe, "layers", 1)
    if layers < 1:
        raise RecipeError(f"recipe kernel_vortex: layers must be >= 1, got {layers}")
    if layers - 1 > torus.band[2]:
        raise RecipeError(
            f"recipe kernel_vortex: {layers} layers exceed the vertical band {torus.band[2]}"
        )
    if min(torus.band[:2]) < 1:
        raise RecipeError("recipe kernel_vortex needs horizontal modes |n_h| = 1 in the band")
    x1, x2, x3 = torus.coordinates
    psi = np.zeros(torus.grid)
    for layer in range(layers):
        psi += np.cos(layer * x3 / torus.a3) * np.sin(x1 / torus.a1) * np.sin(x2 / torus.a2) / (1 + layer)
    k1, k2, _ = torus.wave
    psi_hat = from_physical(torus, psi).coeffs[0]
    coeffs = np.zeros((4,) + torus.grid, dtype=complex)
    coeffs[0] = -1j * k2 * psi_hat
    coeffs[1] = 1j * k1 * psi_hat
    field = clean(SpectralField(torus, coeffs, zero_horizontal_average=True))
    if "amplitude" in recipe.params:
        field = normalize(field, _float(recipe, "amplitude", 1.0), _float(recipe, "s", 1.0))
    return field


def parse_modes(spec: Union[str, Sequence[Any]]) -> List[Tuple[Tuple[int, int, int], Mode, complex]]:
    """'n1,n2,n3,label,amplitude; ...' (or already split sequences)."""
    entries = spec.split(";") if isinstance(spec, str) else list(spec)
    out = []
    for entry in entries:
        parts = [p.strip() for p in entry.split(",")] if isinstance(entry, str) else list(entry)
        parts = [p for p in parts if p != ""]
        if not parts:
            continue
        if len(parts) != 5:
            raise RecipeError(f"osc_pack entry {entry!r} needs n1,n2,n3,label,amplitude")
        try:
            n = (int(parts[0]), int(parts[1]), int(parts[2]))
            amplitude = complex(str(parts[4]).replace(" ", ""))
        except ValueError as exc:
            raise RecipeError(f"osc_pack entry {entry!r}: {exc}") from exc
        try:
            label = Mode.parse(parts[3])
        except StratoflowError as exc:
            raise RecipeError(str(exc)) from exc
        out.append((n, label, amplitude))
    if not out:
        raise RecipeError("osc_pack needs at least one mode")
    return out


def osc_pack(torus: TorusSpec, recipe: InitialRecipe, seeds: SeedStream) -> SpectralField:
    modes = parse_modes(recipe.get("modes", ""))
    frame = WaveFrame(torus)
    total = SpectralField.zeros(torus)
    for n, label, amplitude in modes:
        if label is Mode.KERNEL:
            raise RecipeError(f"osc_pack mode {n} must be labelled + or -")
        if n[0] == 0 and n[1] == 0:
            raise RecipeError(f"osc_pack mode {n} has n_h = 0 and does not oscillate")
        if any(abs(ni) > bi for ni, bi in zip(n, torus.band)):
            raise RecipeError(f"osc_pack mode {n} lies outside the band {torus.band}")
        index = (label.slot, slice(None)) + torus.index_of(n)
        total = total + SpectralField.mode(torus, n, amplitude * frame.basis[index])
    return clean(SpectralField(torus, total.coeffs, zero_horizontal_average=True))


def from_snapshot(torus: TorusSpec, recipe: InitialRecipe, seeds: SeedStream) -> SpectralField:
    path = recipe.get("path")
    if not path:
        raise RecipeError("snapshot recipe needs a path")
    try:
        return read_snapshot(Path(path), torus).field
    except FileNotFoundError as exc:
        raise RecipeError(str(exc)) from exc
    except StratoflowError as exc:
        raise RecipeError(f"snapshot {path}: {exc}") from exc


_BUILDERS = {
    "random_solenoidal": random_solenoidal,
    "kernel_vortex": kernel_vortex,
    "osc_pack": osc_pack,
    "snapshot": from_snapshot,
}


def make_initial_data(
    recipe: Union[InitialRecipe, str, Mapping[str, Any]],
    torus: TorusSpec,
    *,
    seed: int = 0,
    seeds: Optional[SeedStream] = None,
    tolerance: float = 1e-12,
) -> SpectralField:
    if isinstance(recipe, str):
        recipe = InitialRecipe(recipe)
    elif isinstance(recipe, Mapping):
        params = dict(recipe)
        recipe = InitialRecipe(str(params.pop("recipe", params.pop("name", ""))), params)
    builder = _BUILDERS.get(recipe.name)
    if builder is None:
        raise RecipeError(f"unknown recipe {recipe.name!r}; available: {', '.join(RECIPES)}")
    field = builder(torus, recipe, seeds or SeedStream(seed))

    scale = max(field.max_abs(), 1e-300)
    if abs(field.coeffs[(slice(None), 0, 0, 0)]).max() > tolerance * scale:
        raise RecipeError(f"recipe {recipe.name} produced a nonzero mean")
    if np.abs(field.coeffs[:, torus.degenerate]).max(initial=0.0) > tolerance * scale:
        raise RecipeError(f"recipe {recipe.name} produced a nonzero horizontal average")
    if divergence(field).max_abs() > tolerance * max(scale, 1.0):
        raise RecipeError(f"recipe {recipe.name} produced a divergent velocity")
    return SpectralField(torus, field.coeffs, zero_horizontal_average=True)
