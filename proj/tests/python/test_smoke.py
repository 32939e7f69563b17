"""End-to-end smoke tests of the python bindings."""

import math

import numpy as np
import pytest

import moirems as mm


@pytest.fixture(scope="module")
def geom():
    return mm.twisted_graphene(3.0)


def test_geometry_basics(geom):
    a = 2.46
    theta = math.radians(3.0)
    moire_a = np.linalg.norm(np.array(geom.moire_cell)[:, 0])
    assert moire_a == pytest.approx(a / (2 * math.sin(theta / 2)), rel=1e-9)
    assert geom.layer1.num_orbitals == 2


def test_commensurate_cell_atom_count():
    cell = mm.commensurate_cell(1, 2)
    assert cell.atom_count == 28
    assert math.degrees(cell.geom.twist_angle) == pytest.approx(21.7867892, abs=1e-4)


def test_engine_bands_and_hermiticity(geom):
    eng = mm.build_engine(geom, mm.nn_only_preset(), threads=2)
    assert eng.dim > 0
    q = np.array(eng.valley)
    H = np.array(eng.hamiltonian(q))
    assert np.abs(H - H.conj().T).max() < 1e-12
    path = mm.default_path(geom, 1, 4)
    bs = mm.bands(eng, path)
    E = np.array(bs.energies)
    assert E.shape == (len(path.points()), eng.dim)
    assert np.all(np.diff(E, axis=1) >= -1e-12)  # rows sorted


def test_dirac_crossing_at_k(geom):
    eng = mm.build_engine(geom, mm.nn_only_preset(), threads=2)
    km = np.array(mm.default_path(geom, 1, 4).vertices[0])
    ev = np.array(eng.eigenvalues(km))
    i = eng.dim // 2
    assert abs(ev[i] - ev[i - 1]) < 1e-4  # twofold Dirac degeneracy (up to truncation splitting)


def test_relax_symmetry():
    geom = mm.twisted_graphene(1.5)
    res = mm.relax(geom, gsfe_c1=3.3e-4, gmax=3, max_iter=500)
    assert res.converged
    u = res.u
    assert u.max_norm() > 1e-4  # actually relaxed
    # identical layers: u1 + u2 = 0 by the antisymmetric representation
    t = np.array([0.21, 0.73])
    assert np.allclose(np.array(u.eval_frac(t)), -np.array(u.eval_frac(-t)), atol=1e-12)


def test_dos_normalization(geom):
    eng = mm.build_engine(geom, mm.nn_only_preset(), threads=2)
    curve = mm.dos([eng], emin=-12.0, emax=12.0, n_energies=1201,
                   epsilon=0.05, nq=4, reported_valleys=2)
    E = np.array(curve.energies)
    D = np.array(curve.dos)
    assert np.trapz(D, E) == pytest.approx(1.0, abs=1e-3)
    assert D.min() >= 0.0


def test_supercell_matches_engine():
    cell = mm.commensurate_cell(1, 2)
    model = mm.nn_only_preset()
    sc = mm.build_supercell(cell, model)
    assert sc.dim == 28
    eng = mm.build_engine(cell.geom, model, threads=2)
    # stay near K_M, where the Dirac states keep the 1 eV window populated
    path = mm.default_path(cell.geom, 1, 4)
    km = np.array(path.vertices[0])
    q = km + 0.07 * (np.array(path.vertices[1]) - km)
    oracle = np.array(mm.supercell_eigenvalues(sc, q))
    ours = np.array(eng.eigenvalues(q))
    win = 1.0
    a = np.sort(oracle[np.abs(oracle) < win])
    b = np.sort(ours[np.abs(ours) < win])
    assert len(a) == len(b) and len(a) > 0
    assert np.abs(a - b).max() < 5e-3
