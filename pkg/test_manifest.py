"""
Experiment manifest parsing, validation and echo
"""

import pytest

from core.errors import EXIT_VALIDATION, ManifestError
from core.manifest import KINDS, echo, parse_manifest, parse_text, write_echo

MINIMAL = """
[experiment]
kind = simulate

[torus]
periods = 1.0, 1.0, 1.37
grid = 8, 8, 8
"""


def test_minimal_manifest_gets_defaults():
    manifest = parse_text(MINIMAL)
    assert manifest.kind == "simulate"
    assert manifest.torus.grid == (8, 8, 8)
    assert manifest.run.epsilon == 0.1 and manifest.run.nu == 0.05
    assert manifest.initial.name == "random_solenoidal"
    assert manifest.initial.params["amplitude"] == 0.1
    assert manifest.study.cutoffs == (2, 4, 8)
    assert manifest.cutoff == manifest.torus.band
    assert manifest.seed == 0 and manifest.snapshot_every == 0


def test_echo_round_trip_and_digest():
    manifest = parse_text(MINIMAL + "\n[run]\nnu = 0.02\nT = 0.5\n\n[study]\nN = 3\n")
    again = parse_text(echo(manifest))
    assert again == manifest
    assert again.digest() == manifest.digest()
    assert manifest.cutoff == 3
    other = parse_text(MINIMAL)
    assert other.digest() != manifest.digest()


def test_negative_viscosity_names_field_and_line():
    text = MINIMAL + "\n[run]\nnu = -0.1\n"
    with pytest.raises(ManifestError) as info:
        parse_text(text)
    err = info.value
    assert err.field == "run.nu"
    assert err.line == text.splitlines().index("nu = -0.1") + 1
    assert err.exit_code == EXIT_VALIDATION
    assert err.details() == {"line": err.line, "field": "run.nu"}


@pytest.mark.parametrize(
    "extra, field",
    [
        ("[run]\nbogus = 1\n", "run.bogus"),
        ("[weird]\n", "weird"),
        ("[run]\ndt = fast\n", "run.dt"),
        ("[run]\nlinearized = 3\n", "run.linearized"),
        ("[initial]\nrecipe = vortex_sheet\n", "initial.recipe"),
        ("[study]\nsamples = 0\n", "study.samples"),
    ],
)
def test_bad_entries_are_rejected(extra, field):
    with pytest.raises(ManifestError) as info:
        parse_text(MINIMAL + "\n" + extra)
    assert info.value.field == field


def test_torus_errors_are_attributed():
    with pytest.raises(ManifestError) as info:
        parse_text("[experiment]\nkind = simulate\n[torus]\nperiods = 1, 1, 1\ngrid = 8, 7, 8\n")
    assert info.value.field.startswith("torus")
    with pytest.raises(ManifestError):
        parse_text("[experiment]\nkind = simulate\n[torus]\nperiods = 1, 1\n")
    with pytest.raises(ManifestError):
        parse_text("[experiment]\nkind = explode\n[torus]\nperiods = 1, 1, 1\n")
    with pytest.raises(ManifestError):
        parse_text("[torus]\nperiods = 1, 1, 1\n")


def test_environment_substitution(monkeypatch):
    monkeypatch.setenv("STRATOFLOW_TEST_EPS", "0.25")
    manifest = parse_text(MINIMAL + "\n[run]\nepsilon = ${STRATOFLOW_TEST_EPS}\n")
    assert manifest.run.epsilon == 0.25


def test_squared_periods_and_comments():
    text = (
        "[experiment]\nkind = certify  # comment\n"
        "[torus]\nperiods = 1.0, 1.0, 1.0\ngrid = 8, 8, 8\nsquared_periods = 1, 1, 1\n"
    )
    manifest = parse_text(text)
    assert manifest.torus.squared_periods is not None
    assert parse_text(echo(manifest)) == manifest


def test_parse_manifest_from_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(MINIMAL, encoding="utf-8")
    manifest = parse_manifest(path)
    assert manifest.source == path
    target = write_echo(manifest, tmp_path / "out")
    assert target.read_text(encoding="utf-8") == echo(manifest)
    with pytest.raises(FileNotFoundError):
        parse_manifest(tmp_path / "missing.ini")
    assert "resonance-scan" in KINDS
