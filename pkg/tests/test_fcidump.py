import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dqpe.chem.fcidump import fcidump_read, fcidump_write
from dqpe.chem.geometry import h3_plus_ground_start
from dqpe.chem.system import FixedSystem, MolecularSystem
from dqpe.errors import FcidumpFormatError

HEADER = " &FCI NORB=2,NELEC=2,MS2=0,\n  ORBSYM=1,1,\n  ISYM=1,\n &END\n"


@pytest.fixture(scope="module")
def h3_integrals():
    system = MolecularSystem(h3_plus_ground_start())
    return system, system.second_quantized(system.initial_x, include_constants=True)


def test_roundtrip_is_bit_exact(tmp_path, h3_integrals):
    _, sq = h3_integrals
    path = tmp_path / "h3.fcidump"
    fcidump_write(path, sq)
    back = fcidump_read(path)
    assert back.n_orbitals == 3
    assert back.n_electrons == 2
    assert_array_equal(back.one_body, sq.one_body)
    assert_array_equal(back.two_body, sq.two_body)
    assert back.core_energy == sq.core_energy


def test_fixed_system_matches_molecule(tmp_path, h3_integrals):
    system, sq = h3_integrals
    path = tmp_path / "h3.fcidump"
    fcidump_write(path, sq)
    fixed = FixedSystem.from_fcidump(path)
    x = system.initial_x
    assert fixed.n_params == 0
    assert fixed.n_qubits == 6
    assert_allclose(fixed.evaluate(np.zeros(0)), system.evaluate(x), atol=1e-12)
    assert fixed.offset(np.zeros(0)) == system.offset(x)


def test_symmetric_records_are_completed(tmp_path):
    path = tmp_path / "small.fcidump"
    path.write_text(
        HEADER
        + "0.5 1 1 1 1\n0.2 2 1 1 1\n0.3 1 2 2 1\n0.4 2 2 2 2\n"
        + "-1.0 1 1 0 0\n-0.1 1 2 0 0\n-0.5 2 2 0 0\n0.7 0 0 0 0\n"
    )
    sq = fcidump_read(path)
    assert sq.one_body[0, 1] == sq.one_body[1, 0] == -0.1
    assert sq.two_body[0, 1, 1, 0] == sq.two_body[1, 0, 0, 1] == sq.two_body[0, 1, 0, 1] == 0.3
    assert sq.two_body[0, 0, 1, 0] == 0.2
    assert sq.core_energy == 0.7


def test_fortran_exponents(tmp_path):
    path = tmp_path / "d.fcidump"
    path.write_text(HEADER + "1.5D-01 1 1 0 0\n")
    assert fcidump_read(path).one_body[0, 0] == 0.15


@pytest.mark.parametrize(
    "text",
    [
        "NORB=2 1.0 1 1 0 0\n",
        " &FCI NELEC=2 &END\n1.0 1 1 0 0\n",
        HEADER + "1.0 1 1 0\n",
        HEADER + "abc 1 1 0 0\n",
        HEADER + "1.0 3 1 0 0\n",
        HEADER + "0.5 1 1 0 0\n0.6 1 1 0 0\n",
        HEADER + "0.3 1 2 1 2\n0.4 2 1 2 1\n",
        HEADER + "0.7 0 0 0 0\n0.8 0 0 0 0\n",
    ],
)
def test_malformed_files(tmp_path, text):
    path = tmp_path / "bad.fcidump"
    path.write_text(text)
    with pytest.raises(FcidumpFormatError):
        fcidump_read(path)


def test_missing_file(tmp_path):
    with pytest.raises(FcidumpFormatError):
        fcidump_read(tmp_path / "absent.fcidump")


def test_repeated_core_energy_must_agree(tmp_path):
    path = tmp_path / "core.fcidump"
    path.write_text(HEADER + "-1.0 1 1 0 0\n0.7 0 0 0 0\n0.7 0 0 0 0\n")
    assert fcidump_read(path).core_energy == 0.7
    path.write_text(HEADER + "-1.0 1 1 0 0\n0.7 0 0 0 0\n0.9 0 0 0 0\n")
    with pytest.raises(FcidumpFormatError) as info:
        fcidump_read(path)
    assert info.value.details["previous"] == 0.7
