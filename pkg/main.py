from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from string import Template
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from core.errors import EXIT_OK, StratoflowError, ValidationError, exit_code_for
from core.lab import LabSettings, output_directory, run, summarize
from core.manifest import KINDS, parse_manifest
from core.report import jsonable
from core.torus import TorusSpec
from core.waves import build_frame
from db.database import Database
from utils.logger import setup_logger

DEFAULT_CONFIG = {
    "log_level": "INFO",
    "database_path": "db/stratoflow.db",
    "output_root": "runs",
    "workers": 1,
}


def load_config(path: str | Path) -> dict:
    load_dotenv()
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise FileNotFoundError(f"Config not found at {cfg_path}")
    raw = cfg_path.read_text(encoding="utf-8")
    # allow ${VAR} substitution from env
    rendered = Template(raw).safe_substitute(**os.environ)
    data = json.loads(rendered)
    for key, value in list(data.items()):
        if isinstance(value, str) and value.startswith("${"):
            # unresolved placeholder: fall back to the default
            data.pop(key)
    return {**DEFAULT_CONFIG, **data}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="stratoflow",
        description="Pseudospectral lab for the strongly stratified Boussinesq system",
    )
    parser.add_argument("kind", nargs="?", choices=list(KINDS) + ["summarize"],
                        help="Experiment kind, or summarize an output directory")
    parser.add_argument("--manifest", help="Path to the experiment manifest")
    parser.add_argument("--out", help="Output directory (overrides the manifest)")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads (1 = bit-exact)")
    parser.add_argument("--config", default="config.json", help="Path to config.json")
    parser.add_argument("--dump-frame", metavar="N1,N2,N3",
                        help="Print the eigenframe at one frequency as JSON and exit")
    parser.add_argument("--periods", default="1,1,1",
                        help="Torus periods for --dump-frame (default 1,1,1)")
    return parser.parse_args(argv)


def _ints(text: str, name: str) -> List[int]:
    try:
        values = [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"{name} must be three comma-separated integers, got {text!r}") from exc
    if len(values) != 3:
        raise ValidationError(f"{name} must have three entries, got {text!r}")
    return values


def _floats(text: str, name: str) -> List[float]:
    try:
        values = [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ValidationError(f"{name} must be three comma-separated numbers, got {text!r}") from exc
    if len(values) != 3:
        raise ValidationError(f"{name} must have three entries, got {text!r}")
    return values


def dump_frame(spec: str, periods: str = "1,1,1") -> str:
    n = _ints(spec, "--dump-frame")
    periods_ = _floats(periods, "--periods")
    grid = tuple(max(4, 2 * (3 * abs(x) + 2)) for x in n)
    torus = TorusSpec.build(periods_, grid)
    return json.dumps(jsonable(build_frame(torus, n).as_dict()), indent=2)


def write_error(directory: Optional[Path], exc: BaseException, code: int) -> Optional[Path]:
    if directory is None:
        return None
    payload = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
        "details": exc.details() if isinstance(exc, StratoflowError) else {},
    }
    try:
        directory.mkdir(parents=True, exist_ok=True)
        target = directory / "error.json"
        target.write_text(json.dumps(jsonable(payload), indent=2) + "\n", encoding="utf-8")
        return target
    except OSError:
        return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    config_path = Path(args.config)
    try:
        cfg = load_config(config_path) if config_path.exists() else dict(DEFAULT_CONFIG)
    except ValueError as exc:
        setup_logger().error("unreadable config %s: %s", config_path, exc)
        return exit_code_for(exc)
    logger = setup_logger(cfg.get("log_level", "INFO"))
    settings = LabSettings.from_config(cfg)
    directory: Optional[Path] = Path(args.out) if args.out else None

    try:
        if args.dump_frame:
            print(dump_frame(args.dump_frame, args.periods))
            return EXIT_OK
        if not args.kind:
            raise ValidationError("an experiment kind is required")
        if args.kind == "summarize":
            if not args.out:
                raise ValidationError("summarize needs --out <run directory>")
            report = summarize(args.out)
            print(report.text, end="")
            return EXIT_OK
        if not args.manifest:
            raise ValidationError("--manifest is required")

        manifest = parse_manifest(args.manifest)
        if manifest.kind != args.kind:
            raise ValidationError(
                f"manifest kind {manifest.kind!r} does not match the command {args.kind!r}"
            )
        directory = output_directory(manifest, args.out, settings)
        with Database(cfg.get("database_path", DEFAULT_CONFIG["database_path"])) as db:
            summary = run(manifest, out=directory, workers=args.workers, settings=settings,
                          db=db, logger=logger)
        logger.info("wrote %d output file(s) to %s", len(summary["outputs"]), directory)
        return EXIT_OK
    except Exception as exc:
        code = exit_code_for(exc)
        logger.error("%s: %s (exit %d)", type(exc).__name__, exc, code)
        write_error(directory, exc, code)
        return code


if __name__ == "__main__":
    sys.exit(main())
