"""
Snapshot file format
"""

import numpy as np
import pytest

from core.errors import ValidationError
from core.initial_data import make_initial_data
from core.snapshot import read_snapshot, write_snapshot
from core.torus import TorusSpec


@pytest.fixture
def torus():
    return TorusSpec.build((1.0, 1.3, 0.8), (8, 8, 6))


def test_round_trip_is_bit_identical(torus, tmp_path):
    field = make_initial_data("random_solenoidal", torus, seed=1)
    path = write_snapshot(tmp_path / "a.snap", field, 0.125)
    snap = read_snapshot(path, torus)
    assert snap.time == 0.125
    assert np.array_equal(snap.field.coeffs, field.coeffs)
    assert snap.field.zero_horizontal_average
    # without a torus the header supplies it
    assert read_snapshot(path).field.torus == torus


def test_half_spectrum_is_stored(torus, tmp_path):
    field = make_initial_data("random_solenoidal", torus, seed=2)
    path = write_snapshot(tmp_path / "b.snap", field)
    header, _, payload = path.read_bytes().partition(b"\n")
    assert b'"format_version": 1' in header
    assert len(payload) == 4 * (torus.N3 // 2 + 1) * torus.N2 * torus.N1 * 16


def test_mismatched_torus_is_rejected(torus, tmp_path):
    field = make_initial_data("random_solenoidal", torus, seed=3)
    path = write_snapshot(tmp_path / "c.snap", field)
    with pytest.raises(ValidationError):
        read_snapshot(path, TorusSpec.build((1.0, 1.3, 0.9), (8, 8, 6)))
    with pytest.raises(ValidationError):
        read_snapshot(path, TorusSpec.build((1.0, 1.3, 0.8), (8, 8, 8)))


def test_missing_and_corrupt_files(torus, tmp_path):
    with pytest.raises(FileNotFoundError):
        read_snapshot(tmp_path / "none.snap", torus)
    broken = tmp_path / "broken.snap"
    broken.write_bytes(b"no header at all")
    with pytest.raises(ValidationError):
        read_snapshot(broken, torus)
    field = make_initial_data("random_solenoidal", torus, seed=4)
    path = write_snapshot(tmp_path / "d.snap", field)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ValidationError):
        read_snapshot(path, torus)
