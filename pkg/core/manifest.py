"""Experiment manifests: flat `[section]` / `key = value` text files.

Values are strings, numbers or booleans; `${VAR}` references are filled from the
environment (after `.env` is loaded). Every default is written out by `echo`,
and `parse_text(echo(m)) == m`.
"""
from __future__ import annotations

import hashlib
import math
import os
import re
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from string import Template
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv

from .dynamics import RunConfig
from .errors import ManifestError, StratoflowError
from .initial_data import RECIPE_DEFAULTS, RECIPES, InitialRecipe
from .torus import TorusSpec

KINDS = ("simulate", "limit", "converge", "resonance-scan", "certify", "propcheck")
SECTIONS = ("experiment", "torus", "run", "initial", "study")

_SECTION = re.compile(r"^\[\s*([A-Za-z_-]+)\s*\]$")
_PAIR = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


@dataclass
class StudyConfig:
    epsilons: Tuple[float, ...] = (0.1, 0.03, 0.01, 0.003)
    cutoffs: Tuple[int, ...] = (2, 4, 8)
    N: int = 0
    exact: str = "auto"
    labels: str = ""
    roots: bool = False
    samples: int = 100
    filtered: bool = False
    corrector_every: int = 1
    theta_epsilons: Tuple[float, ...] = (0.1, 0.01)


@dataclass
class ExperimentManifest:
    kind: str
    torus: TorusSpec
    run: RunConfig
    initial: InitialRecipe
    study: StudyConfig = field(default_factory=StudyConfig)
    seed: int = 0
    output: str = ""
    snapshot_every: int = 0
    source: Optional[Path] = field(default=None, compare=False)

    @property
    def cutoff(self) -> Union[int, Tuple[int, int, int]]:
        return self.study.N if self.study.N > 0 else self.torus.band

    def digest(self) -> str:
        return hashlib.sha256(echo(self).encode("utf-8")).hexdigest()


# --- value parsing -----------------------------------------------------------


def parse_value(raw: str) -> Any:
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _strip_comment(line: str) -> str:
    quoted = False
    for index, char in enumerate(line):
        if char == '"':
            quoted = not quoted
        elif char == "#" and not quoted:
            return line[:index]
    return line


def _as_float(value: Any) -> float:
    if isinstance(value, bool):
        raise ValueError("expected a number, got a boolean")
    number = float(value)
    if math.isnan(number):
        raise ValueError("NaN is not allowed")
    return number


def _as_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("expected an integer, got a boolean")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"expected an integer, got {value}")
    return int(value)


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    raise ValueError(f"expected true or false, got {value!r}")


def _as_str(value: Any) -> str:
    return value if isinstance(value, str) else _format(value)


def _float_list(value: Any) -> Tuple[float, ...]:
    items = [v for v in str(value).replace(";", ",").split(",") if v.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(_as_float(parse_value(v)) for v in items)


def _int_list(value: Any) -> Tuple[int, ...]:
    items = [v for v in str(value).replace(";", ",").split(",") if v.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return tuple(_as_int(parse_value(v)) for v in items)


def _triple(cast: Callable[[Any], Tuple]) -> Callable[[Any], Tuple]:
    def convert(value: Any) -> Tuple:
        out = cast(value)
        if len(out) != 3:
            raise ValueError(f"expected three values, got {len(out)}")
        return out

    return convert


Schema = Dict[str, Tuple[Callable[[Any], Any], Any]]

SCHEMA: Dict[str, Schema] = {
    "experiment": {
        "kind": (_as_str, None),
        "seed": (_as_int, 0),
        "output": (_as_str, ""),
        "snapshot_every": (_as_int, 0),
    },
    "torus": {
        "periods": (_triple(_float_list), None),
        "grid": (_triple(_int_list), (16, 16, 8)),
        "dealias": (_as_bool, True),
        "squared_periods": (_as_str, ""),
    },
    "run": {
        "epsilon": (_as_float, 0.1),
        "nu": (_as_float, 0.05),
        "nu_prime": (_as_float, 0.05),
        "dt": (_as_float, 0.01),
        "T": (_as_float, 1.0),
        "scheme": (_as_str, "ifrk4"),
        "s": (_as_float, 1.0),
        "blowup_guard": (_as_float, 1e6),
        "stability_constant": (_as_float, 1.0),
        "linearized": (_as_bool, False),
    },
    "study": {
        "epsilons": (_float_list, StudyConfig.epsilons),
        "cutoffs": (_int_list, StudyConfig.cutoffs),
        "N": (_as_int, 0),
        "exact": (_as_str, "auto"),
        "labels": (_as_str, ""),
        "roots": (_as_bool, False),
        "samples": (_as_int, 100),
        "filtered": (_as_bool, False),
        "corrector_every": (_as_int, 1),
        "theta_epsilons": (_float_list, StudyConfig.theta_epsilons),
    },
}

POSITIVE = {
    ("run", "epsilon"), ("run", "nu"), ("run", "nu_prime"), ("run", "dt"), ("run", "T"),
    ("run", "blowup_guard"), ("run", "stability_constant"), ("study", "samples"),
    ("study", "corrector_every"),
}


# --- parsing -----------------------------------------------------------------


def _read_pairs(text: str) -> Dict[str, Dict[str, Tuple[Any, int]]]:
    sections: Dict[str, Dict[str, Tuple[Any, int]]] = {}
    current: Optional[str] = None
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line).strip()
        if not line:
            continue
        header = _SECTION.match(line)
        if header:
            current = header.group(1).lower()
            if current not in SECTIONS:
                raise ManifestError(
                    f"unknown section [{current}]; expected one of {', '.join(SECTIONS)}",
                    line=number, field=current,
                )
            sections.setdefault(current, {})
            continue
        pair = _PAIR.match(line)
        if not pair:
            raise ManifestError(f"cannot parse {raw_line.strip()!r}; expected key = value", line=number)
        if current is None:
            raise ManifestError("key outside of any [section]", line=number, field=pair.group(1))
        key = pair.group(1)
        if key in sections[current]:
            raise ManifestError(f"duplicate key {current}.{key}", line=number, field=f"{current}.{key}")
        sections[current][key] = (parse_value(pair.group(2)), number)
    return sections


def _section_values(
    name: str, pairs: Dict[str, Tuple[Any, int]]
) -> Tuple[Dict[str, Any], Dict[str, int]]:
    schema = SCHEMA[name]
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for key, (raw, number) in pairs.items():
        if key not in schema:
            raise ManifestError(
                f"unknown key {name}.{key}; expected one of {', '.join(schema)}",
                line=number, field=f"{name}.{key}",
            )
        convert = schema[key][0]
        try:
            value = convert(raw)
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{name}.{key}: {exc}", line=number, field=f"{name}.{key}") from exc
        if (name, key) in POSITIVE and not value > 0:
            raise ManifestError(f"{name}.{key} must be positive, got {value}", line=number,
                                field=f"{name}.{key}")
        values[key] = value
        lines[key] = number
    for key, (_, default) in schema.items():
        if key not in values:
            if default is None:
                raise ManifestError(f"missing required key {name}.{key}", field=f"{name}.{key}")
            values[key] = default
    return values, lines


def _guard(build: Callable[[], Any], section: str, lines: Dict[str, int]) -> Any:
    try:
        return build()
    except ManifestError:
        raise
    except StratoflowError as exc:
        message = str(exc)
        words = message.split()
        for match in (lambda key: words[:1] == [key], lambda key: key in words):
            for key, number in lines.items():
                if match(key):
                    raise ManifestError(message, line=number, field=f"{section}.{key}") from exc
        raise ManifestError(message, field=section) from exc


def _squared(text: str) -> Optional[Tuple[Any, ...]]:
    if not text.strip():
        return None
    items = [item.strip() for item in text.split(",") if item.strip()]
    if len(items) != 3:
        raise ValueError("squared_periods needs three rationals")
    return tuple(Fraction(item) for item in items)


def parse_text(text: str, *, source: Optional[Path] = None) -> ExperimentManifest:
    text = Template(text).safe_substitute(**os.environ)
    sections = _read_pairs(text)
    if "experiment" not in sections or "kind" not in sections["experiment"]:
        raise ManifestError("missing required key experiment.kind", field="experiment.kind")
    if "torus" not in sections:
        raise ManifestError("missing required section [torus]", field="torus")

    experiment, exp_lines = _section_values("experiment", sections["experiment"])
    if experiment["kind"] not in KINDS:
        raise ManifestError(
            f"unknown experiment kind {experiment['kind']!r}; expected one of {', '.join(KINDS)}",
            line=exp_lines.get("kind"), field="experiment.kind",
        )
    if experiment["snapshot_every"] < 0:
        raise ManifestError("experiment.snapshot_every must be >= 0",
                            line=exp_lines.get("snapshot_every"), field="experiment.snapshot_every")

    torus_values, torus_lines = _section_values("torus", sections["torus"])
    try:
        squared = _squared(torus_values["squared_periods"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ManifestError(f"torus.squared_periods: {exc}", line=torus_lines.get("squared_periods"),
                            field="torus.squared_periods") from exc
    torus = _guard(
        lambda: TorusSpec.build(torus_values["periods"], torus_values["grid"],
                                dealias=torus_values["dealias"], squared_periods=squared),
        "torus", torus_lines,
    )

    run_values, run_lines = _section_values("run", sections.get("run", {}))
    run = _guard(
        lambda: RunConfig(seed=experiment["seed"], dealias=torus.dealias, **run_values),
        "run", run_lines,
    )

    study_values, _ = _section_values("study", sections.get("study", {}))
    study = StudyConfig(**study_values)
    if study.exact not in ("auto", "true", "false"):
        raise ManifestError("study.exact must be auto, true or false", field="study.exact")

    initial_pairs = sections.get("initial", {})
    params = {key: value for key, (value, _) in initial_pairs.items()}
    name = str(params.pop("recipe", "random_solenoidal"))
    if name not in RECIPES:
        line = initial_pairs.get("recipe", (None, None))[1]
        raise ManifestError(f"unknown recipe {name!r}; expected one of {', '.join(RECIPES)}",
                            line=line, field="initial.recipe")
    materialized = dict(RECIPE_DEFAULTS.get(name, {}))
    materialized.update(params)
    initial = InitialRecipe(name, materialized)

    return ExperimentManifest(
        kind=experiment["kind"],
        torus=torus,
        run=run,
        initial=initial,
        study=study,
        seed=experiment["seed"],
        output=experiment["output"],
        snapshot_every=experiment["snapshot_every"],
        source=source,
    )


def parse_manifest(path: Union[str, Path]) -> ExperimentManifest:
    """Load `.env`, read the manifest file and validate it."""
    load_dotenv()
    manifest_path = Path(path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"Manifest not found at {manifest_path}")
    return parse_text(manifest_path.read_text(encoding="utf-8"), source=manifest_path)


# --- echo --------------------------------------------------------------------


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return f'"{value}"'


def echo(manifest: ExperimentManifest) -> str:
    """Manifest text with every default written out."""
    torus = manifest.torus
    squared = torus.squared_periods
    sections: List[Tuple[str, Dict[str, Any]]] = [
        ("experiment", {
            "kind": manifest.kind,
            "seed": manifest.seed,
            "output": manifest.output,
            "snapshot_every": manifest.snapshot_every,
        }),
        ("torus", {
            "periods": torus.periods,
            "grid": torus.grid,
            "dealias": torus.dealias,
            "squared_periods": ", ".join(str(x) for x in squared) if squared else "",
        }),
        ("run", {name: getattr(manifest.run, name) for name in SCHEMA["run"]}),
        ("initial", {"recipe": manifest.initial.name, **manifest.initial.params}),
        ("study", {f.name: getattr(manifest.study, f.name) for f in fields(StudyConfig)}),
    ]
    out: List[str] = []
    for name, values in sections:
        out.append(f"[{name}]")
        for key, value in values.items():
            out.append(f"{key} = {_format(value)}")
        out.append("")
    return "\n".join(out)


def write_echo(manifest: ExperimentManifest, directory: Union[str, Path]) -> Path:
    target = Path(directory) / "manifest.echo"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(echo(manifest), encoding="utf-8")
    return target
