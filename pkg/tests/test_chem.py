import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import erf

from dqpe.chem.basis import sto3g_basis
from dqpe.chem.geometry import (
    BOHR_IN_ANGSTROM,
    Geometry,
    builtin_geometry,
    h2,
    load_geometry,
    nuclear_repulsion,
    nuclear_repulsion_gradient,
)
from dqpe.chem.hamiltonian import (
    SecondQuantizedHamiltonian,
    csf_state,
    determinant_state,
    hartree_fock_bitstring,
    jordan_wigner,
    mo_transform,
    number_operator,
    state_from_spec,
)
from dqpe.chem.integrals import boys_f0, sto3g_integrals
from dqpe.chem.scf import align_orbitals, rhf_scf
from dqpe.chem.system import MolecularSystem
from dqpe.core.spectral import eigendecompose
from dqpe.errors import GeometryError, InputError, StateSpecError, UnsupportedElementError

R_BOHR = 1.4


@pytest.fixture(scope="module")
def h2_bohr():
    return h2(R_BOHR * BOHR_IN_ANGSTROM)


def equilateral_h3(side=0.9):
    coords = np.array([
        [0.0, 0.0, 0.0],
        [side, 0.0, 0.0],
        [side / 2, side * np.sqrt(3) / 2, 0.0],
    ])
    return Geometry(("H", "H", "H"), coords, charge=1)


def test_xyz_roundtrip():
    geom = equilateral_h3()
    parsed = Geometry.from_xyz(geom.to_xyz("frame"), charge=1)
    assert parsed.symbols == ("H", "H", "H")
    assert_allclose(parsed.coordinates, geom.coordinates, atol=1e-12)


def test_multi_frame_xyz_yields_last(tmp_path):
    path = tmp_path / "trace.xyz"
    path.write_text(h2(0.7).to_xyz("first") + h2(0.8).to_xyz("second"))
    geom = load_geometry(path, None)
    assert_allclose(geom.bond_lengths()[(0, 1)], 0.8, atol=1e-12)


def test_geometry_validation():
    with pytest.raises(GeometryError):
        Geometry(("H", "H"), np.zeros((2, 3)))
    with pytest.raises(UnsupportedElementError):
        Geometry(("Xx",), np.zeros((1, 3)))
    with pytest.raises(GeometryError):
        Geometry(("H", "H"), np.zeros((3, 3)))
    with pytest.raises(GeometryError):
        Geometry.from_xyz("two\ncomment\nH 0 0 0\n")
    with pytest.raises(GeometryError):
        builtin_geometry("ch4")
    with pytest.raises(UnsupportedElementError):
        sto3g_basis(Geometry(("Li", "H"), np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.6]])))


def test_symbols_normalized():
    assert Geometry(("he",), np.zeros((1, 3))).symbols == ("He",)


def test_nuclear_repulsion_gradient_matches_finite_difference():
    geom = equilateral_h3()
    x = geom.flat
    h = 1e-6
    fd = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        fd[k] = (nuclear_repulsion(geom.with_coordinates(x + e))
                 - nuclear_repulsion(geom.with_coordinates(x - e))) / (2 * h)
    assert_allclose(nuclear_repulsion_gradient(geom), fd, atol=1e-7)


def test_rigid_body_projection_keeps_internal_forces():
    geom = equilateral_h3()
    grad = nuclear_repulsion_gradient(geom)
    assert geom.rigid_body_basis().shape == (9, 6)
    assert_allclose(geom.project_internal(grad), grad, atol=1e-12)
    shift = np.tile([1.0, 0.0, 0.0], 3)
    assert_allclose(geom.project_internal(shift), 0.0, atol=1e-12)


def test_equilateral_bonds():
    geom = equilateral_h3()
    assert geom.bond_spread() < 1e-12
    assert len(geom.bond_lengths()) == 3


def test_boys_function_branches():
    assert_allclose(boys_f0(0.0), 1.0)
    x = np.array([0.0099, 0.0101])
    assert_allclose(boys_f0(x), 0.5 * np.sqrt(np.pi / x) * erf(np.sqrt(x)), rtol=1e-10)


def test_h2_integrals(h2_bohr):
    ints = sto3g_integrals(h2_bohr)
    assert_allclose(np.diag(ints.overlap), 1.0, atol=1e-8)
    assert_allclose(ints.overlap[0, 1], 0.6593, atol=2e-4)
    assert_allclose(ints.kinetic[0, 0], 0.7600, atol=2e-4)
    assert_allclose(ints.kinetic[0, 1], 0.2365, atol=2e-4)
    assert_allclose(ints.core[0, 0], -1.1204, atol=2e-4)
    assert_allclose(ints.core[0, 1], -0.9584, atol=2e-4)
    assert_allclose(ints.eri[0, 0, 0, 0], 0.7746, atol=2e-4)
    assert_allclose(ints.eri[0, 0, 1, 1], 0.5697, atol=2e-4)
    assert_allclose(ints.eri[1, 0, 0, 0], 0.4441, atol=2e-4)
    assert_allclose(ints.eri[1, 0, 1, 0], 0.2970, atol=2e-4)


def test_h2_rhf_energy(h2_bohr):
    ints = sto3g_integrals(h2_bohr)
    scf = rhf_scf(h2_bohr, ints)
    assert scf.converged
    assert_allclose(scf.energy, -1.1167, atol=2e-4)
    assert_allclose(scf.nuclear_repulsion, 1 / R_BOHR, rtol=1e-12)
    assert scf.orbital_energies[0] < scf.orbital_energies[1]


def test_rhf_rejects_odd_electrons():
    geom = Geometry(("H", "H"), np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.74]]), charge=1)
    with pytest.raises(GeometryError):
        rhf_scf(geom, sto3g_integrals(geom))


def test_jordan_wigner_matches_two_determinant_ci(h2_bohr):
    ints = sto3g_integrals(h2_bohr)
    scf = rhf_scf(h2_bohr, ints)
    sq = mo_transform(scf, ints)
    h, g = sq.one_body, sq.two_body
    ci = np.array([
        [2 * h[0, 0] + g[0, 0, 0, 0], g[0, 1, 0, 1]],
        [g[0, 1, 0, 1], 2 * h[1, 1] + g[1, 1, 1, 1]],
    ])
    fci = np.linalg.eigvalsh(ci)[0]

    qubit = jordan_wigner(sq)
    assert qubit.n_qubits == 4
    sector = np.flatnonzero(np.diag(number_operator(4)) == 2)
    block = qubit.matrix[np.ix_(sector, sector)]
    assert_allclose(np.linalg.eigvalsh(block)[0], fci, atol=1e-10)

    hf = determinant_state(hartree_fock_bitstring(2, 4))
    assert_allclose(np.vdot(hf, qubit.matrix @ hf).real, scf.electronic_energy, atol=1e-10)
    assert_allclose(fci + scf.nuclear_repulsion, -1.1373, atol=2e-4)


def test_jordan_wigner_conserves_particle_number(h2_bohr):
    ints = sto3g_integrals(h2_bohr)
    qubit = jordan_wigner(mo_transform(rhf_scf(h2_bohr, ints), ints))
    N = number_operator(4)
    assert_allclose(qubit.matrix @ N - N @ qubit.matrix, 0.0, atol=1e-12)


def test_integral_symmetry_enforced():
    h = np.array([[1.0, 0.2], [0.3, 1.0]])
    with pytest.raises(InputError):
        SecondQuantizedHamiltonian(h, np.zeros((2, 2, 2, 2)))
    with pytest.raises(InputError):
        SecondQuantizedHamiltonian(np.eye(2), np.zeros((2, 2, 2, 2)), convention="physicist")


def test_state_specs():
    assert np.argmax(np.abs(state_from_spec(4, 2))) == 0b1100
    triplet = csf_state([(1.0, "1001"), (1.0, "0110")])
    assert_allclose(np.linalg.norm(triplet), 1.0)
    assert_allclose(triplet[0b1001], 1 / np.sqrt(2))
    with pytest.raises(StateSpecError):
        determinant_state("10a1")
    with pytest.raises(StateSpecError):
        state_from_spec(4, 2, determinant="110")
    with pytest.raises(StateSpecError):
        state_from_spec(4, 2, determinant="1100", csf=[(1.0, "1100")])
    with pytest.raises(StateSpecError):
        csf_state([(1.0, "1100"), (-1.0, "1100")])
    with pytest.raises(StateSpecError):
        hartree_fock_bitstring(5, 4)


def test_molecular_system(h2_system):
    x = h2_system.initial_x
    assert h2_system.n_params == 6
    assert h2_system.dimension == 16
    H = h2_system(x)
    assert_allclose(H, H.T, atol=1e-12)
    assert_allclose(h2_system.offset(x), nuclear_repulsion(h2_system.geometry))
    assert_allclose(h2_system.local_evaluator(x)(x), H, atol=1e-10)
    ground = eigendecompose(H).eigenvalues[0] + h2_system.offset(x)
    assert ground < h2_system.scf(x).energy


def test_aligned_orbitals_follow_reference(h2_system):
    x = h2_system.initial_x
    ref = h2_system.scf(x)
    shifted = x.copy()
    shifted[-1] += 1e-3
    moved = h2_system.scf(shifted)
    ints = sto3g_integrals(h2_system.geometry_at(shifted))
    C, eps = align_orbitals(-moved.coefficients[:, ::-1], moved.orbital_energies[::-1],
                            ref.coefficients, ints.overlap)
    assert_allclose(C, moved.coefficients, atol=1e-12)
    assert_allclose(eps, moved.orbital_energies)


def test_system_rejects_bad_step():
    with pytest.raises(InputError):
        MolecularSystem(h2(), derivative_step=0.0)
