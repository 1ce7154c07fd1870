import numpy as np
import pytest

from lab_service.errors import FieldFormatError
from lab_service.field_io import read_field, sidecar_path, write_field
from lab_service.spectral_core import SpectralField


def test_write_then_read_keeps_coefficients(tmp_path, bandlimited):
    path = tmp_path / "u0.lpf"
    write_field(path, bandlimited, seed=7, command="test", description="random")
    field, sidecar = read_field(path)
    assert field.grid == bandlimited.grid
    assert np.array_equal(field.coef, bandlimited.coef)
    assert field.mean_zero
    assert sidecar.seed == 7
    assert sidecar.command == "test"
    assert sidecar.j_max == bandlimited.grid.j_max


def test_read_without_sidecar(tmp_path, bandlimited):
    path = tmp_path / "u0.lpf"
    write_field(path, bandlimited)
    sidecar_path(path).unlink()
    field, sidecar = read_field(path)
    assert sidecar is None
    assert np.array_equal(field.coef, bandlimited.coef)


def test_vector_fields_are_refused(tmp_path, grid2):
    field = SpectralField(grid2, np.zeros((2,) + grid2.shape))
    with pytest.raises(FieldFormatError):
        write_field(tmp_path / "v.lpf", field)


def test_foreign_file_is_refused(tmp_path):
    path = tmp_path / "junk.lpf"
    path.write_bytes(b"not a field at all, just some bytes")
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_truncated_body_is_refused(tmp_path, bandlimited):
    path = tmp_path / "u0.lpf"
    write_field(path, bandlimited)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_missing_file(tmp_path):
    with pytest.raises(FieldFormatError):
        read_field(tmp_path / "absent.lpf")
