"""Dominant-subspace extraction against a dense eigendecomposition oracle."""

import numpy as np
import pytest

from mrf_forge.errors import ConvergenceError
from mrf_forge.subspace import (
    Subspace,
    captured_energy,
    compute_subspace,
    gram_matrix,
    lift,
    project,
)


def dense_eigenpairs(atoms, s):
    """Oracle: full Hermitian eigendecomposition of the Gram matrix.

    Returns the conjugated eigenvectors: the atoms as columns live in the
    conjugate of the span of G's eigenvectors, and the compression basis
    must reproduce the atoms.
    """
    g = atoms.conj().T.astype(np.complex128) @ atoms.astype(np.complex128)
    vals, vecs = np.linalg.eigh(g)
    order = np.argsort(vals)[::-1][:s]
    return vals[order], vecs[:, order].conj()


def test_gram_matrix_is_hermitian_psd(small_dictionary):
    g = gram_matrix(small_dictionary)
    assert np.allclose(g, g.conj().T, atol=1e-10)
    evals = np.linalg.eigvalsh(g)
    assert evals.min() > -1e-8
    # unit-norm atoms: trace equals the atom count
    assert np.isclose(np.trace(g).real, small_dictionary.n_atoms, atol=1e-3)


def test_gram_matrix_chunk_invariance(small_dictionary):
    a = gram_matrix(small_dictionary, chunk_size=3)
    b = gram_matrix(small_dictionary, chunk_size=10_000)
    assert np.allclose(a, b, atol=1e-10)


def test_eigenvalues_match_dense_oracle(mid_dictionary, mid_subspace):
    vals, _ = dense_eigenpairs(mid_dictionary.atoms, mid_subspace.n_components)
    assert np.allclose(mid_subspace.eigenvalues, vals, rtol=1e-8)


def test_basis_spans_oracle_eigenvectors(mid_dictionary, mid_subspace):
    # compare projectors: the basis may differ by phases within eigenspaces
    _, vecs = dense_eigenpairs(mid_dictionary.atoms, mid_subspace.n_components)
    p_ours = mid_subspace.basis @ mid_subspace.basis.conj().T
    p_oracle = vecs @ vecs.conj().T
    assert np.allclose(p_ours, p_oracle, atol=1e-7)


def test_basis_is_orthonormal(mid_subspace):
    q = mid_subspace.basis
    assert np.allclose(q.conj().T @ q, np.eye(q.shape[1]), atol=1e-10)


def test_eigenvalues_descend(mid_subspace):
    vals = mid_subspace.eigenvalues
    assert np.all(np.diff(vals) <= 1e-12)
    assert vals[-1] >= 0.0


def test_column_phase_fixing_is_deterministic(small_dictionary):
    a = compute_subspace(small_dictionary, 3, seed=0)
    b = compute_subspace(small_dictionary, 3, seed=99)
    # different random starts, same fixed-phase basis
    assert np.allclose(a.basis, b.basis, atol=1e-7)
    for col in a.basis.T:
        pivot = col[np.argmax(np.abs(col))]
        assert abs(pivot.imag) < 1e-10
        assert pivot.real > 0.0


def test_captured_energy_monotonic(mid_dictionary):
    energies = [
        captured_energy(compute_subspace(mid_dictionary, s, seed=0), mid_dictionary)
        for s in (1, 2, 4, 8)
    ]
    assert all(b >= a - 1e-12 for a, b in zip(energies, energies[1:]))
    assert 0.0 < energies[0] <= 1.0


def test_full_rank_subspace_captures_everything(small_dictionary):
    # s = rank: every atom lies in the span
    s = min(small_dictionary.n_atoms, small_dictionary.n_frames)
    sub = compute_subspace(small_dictionary, s, seed=0)
    assert captured_energy(sub, small_dictionary) > 1.0 - 1e-9


def test_exact_low_rank_case():
    # two orthogonal generators -> rank-2 stack, s=2 captures all energy
    rng = np.random.default_rng(5)
    base = np.linalg.qr(rng.standard_normal((24, 2))
                        + 1j * rng.standard_normal((24, 2)))[0]
    mix = rng.standard_normal((40, 2)) + 1j * rng.standard_normal((40, 2))
    atoms = mix @ base.T
    sub = compute_subspace(atoms, 2, seed=1)
    assert captured_energy(sub, atoms) > 1.0 - 1e-12
    vals, _ = dense_eigenpairs(atoms, 2)
    assert np.allclose(sub.eigenvalues, vals, rtol=1e-10)


def test_project_lift_adjoint_identity(mid_subspace):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((4, mid_subspace.n_frames)) * 1j
    x += rng.standard_normal((4, mid_subspace.n_frames))
    y = rng.standard_normal((4, mid_subspace.n_components)) * 1j
    y += rng.standard_normal((4, mid_subspace.n_components))
    # <project(x), y> == <x, lift(y)>
    lhs = np.sum(project(mid_subspace, x).conj() * y)
    rhs = np.sum(x.conj() * lift(mid_subspace, y))
    assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), 1.0)


def test_project_then_lift_is_projection(mid_subspace):
    rng = np.random.default_rng(8)
    x = rng.standard_normal(mid_subspace.n_frames) + 0j
    p1 = lift(mid_subspace, project(mid_subspace, x))
    p2 = lift(mid_subspace, project(mid_subspace, p1))
    assert np.allclose(p1, p2, atol=1e-10)


def test_in_span_vector_is_reproduced(mid_subspace):
    rng = np.random.default_rng(9)
    coeffs = rng.standard_normal(mid_subspace.n_components) + 0j
    x = lift(mid_subspace, coeffs)
    assert np.allclose(project(mid_subspace, x), coeffs, atol=1e-10)


def test_shape_guards(mid_subspace):
    with pytest.raises(ValueError):
        project(mid_subspace, np.zeros(3))
    with pytest.raises(ValueError):
        lift(mid_subspace, np.zeros(mid_subspace.n_components + 1))
    with pytest.raises(ValueError):
        compute_subspace(np.zeros((4, 8)) + 0j, 0)
    with pytest.raises(ValueError):
        compute_subspace(np.zeros((4, 8)) + 0j, 9)


def test_subspace_validation():
    with pytest.raises(ValueError):
        Subspace(np.zeros((8, 2)) + 0j, np.zeros(3))
    with pytest.raises(ValueError):
        Subspace(np.zeros(8) + 0j, np.zeros(1))


def test_convergence_error_carries_diagnostics(mid_dictionary):
    with pytest.raises(ConvergenceError) as info:
        compute_subspace(mid_dictionary, 8, seed=0, max_iter=1, tol=0.0)
    assert info.value.iterations == 1
    assert info.value.residual > 0.0 or np.isinf(info.value.residual)


def test_reproducible_for_fixed_seed(mid_dictionary):
    a = compute_subspace(mid_dictionary, 4, seed=11)
    b = compute_subspace(mid_dictionary, 4, seed=11)
    assert np.array_equal(a.basis, b.basis)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
