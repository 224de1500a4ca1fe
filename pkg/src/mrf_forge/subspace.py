"""Dominant temporal subspace of a fingerprint dictionary.

The compression basis is the conjugate of the s leading eigenvectors of
the L x L Gram matrix G = sum_j D_j^H D_j (equivalently the leading
eigenvectors of the columnwise covariance sum_j x_j x_j^H), used both for
dictionary matching and as the fixed first layer of the regression
network. G is tiny next to the dictionary (8 MB at L=1000), so it is
formed explicitly and its leading eigenpairs found by blocked orthogonal
iteration with Rayleigh-Ritz extraction; a handful of guard vectors keeps
convergence brisk when the trailing eigenvalues cluster.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError

__all__ = [
    "Subspace",
    "gram_matrix",
    "compute_subspace",
    "project",
    "lift",
    "captured_energy",
]


@dataclass(eq=False)
class Subspace:
    """Orthonormal basis columns (L x s) with their Gram eigenvalues, descending."""

    basis: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        self.basis = np.ascontiguousarray(self.basis, dtype=np.complex128)
        self.eigenvalues = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        if self.basis.ndim != 2:
            raise ValueError("basis must be 2-D (L x s)")
        if self.eigenvalues.shape != (self.basis.shape[1],):
            raise ValueError("one eigenvalue per basis column required")

    @property
    def n_frames(self):
        return self.basis.shape[0]

    @property
    def n_components(self):
        return self.basis.shape[1]


def _atoms_of(dictionary_or_atoms):
    atoms = getattr(dictionary_or_atoms, "atoms", dictionary_or_atoms)
    atoms = np.asarray(atoms)
    if atoms.ndim != 2:
        raise ValueError("expected a dictionary or a 2-D atom array")
    return atoms


def gram_matrix(dictionary_or_atoms, chunk_size=4096):
    """L x L accumulation sum_j D_j^H D_j in fixed chunk order (complex128)."""
    atoms = _atoms_of(dictionary_or_atoms)
    n_frames = atoms.shape[1]
    g = np.zeros((n_frames, n_frames), dtype=np.complex128)
    for lo in range(0, atoms.shape[0], chunk_size):
        block = atoms[lo : lo + chunk_size].astype(np.complex128, copy=False)
        g += block.conj().T @ block
    return g


def _fix_column_phases(q):
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(q), axis=0)
    pivots = q[idx, np.arange(q.shape[1])]
    mags = np.abs(pivots)
    mags[mags == 0.0] = 1.0
    q *= (np.conj(pivots) / mags)[None, :]
    return q


def compute_subspace(dictionary, s, seed=0, max_iter=500, tol=1e-10, n_guard=8):
    """Leading s eigenpairs of the dictionary Gram matrix.

    Blocked orthogonal iteration on s + n_guard random starting vectors
    (seeded, so the result is reproducible), Rayleigh-Ritz extraction each
    sweep, stopping when the leading s Ritz values are stable to ``tol``
    relative. The returned basis holds the conjugated eigenvectors (the
    span of the atoms as column vectors); columns are phase-fixed so the
    largest-magnitude entry of each is real positive.
    """
    atoms = _atoms_of(dictionary)
    n_frames = atoms.shape[1]
    s = int(s)
    if not 1 <= s <= n_frames:
        raise ValueError(f"s must be in [1, {n_frames}], got {s}")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")

    g = gram_matrix(atoms)
    block = min(n_frames, s + int(n_guard))
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n_frames, block)) + 1j * rng.standard_normal(
        (n_frames, block)
    )
    q, _ = np.linalg.qr(q)

    prev = None
    scale = None
    change = np.inf
    for _ in range(int(max_iter)):
        y = g @ q
        q, _ = np.linalg.qr(y)
        h = q.conj().T @ (g @ q)
        h = 0.5 * (h + h.conj().T)
        vals, vecs = np.linalg.eigh(h)
        order = np.argsort(vals)[::-1]
        vals = vals[order]
        q = q @ vecs[:, order]
        if scale is None:
            scale = max(float(vals[0]), np.finfo(np.float64).tiny)
        if prev is not None:
            change = float(np.max(np.abs(vals[:s] - prev[:s]))) / scale
            if change < tol:
                # G's eigenvectors span the conjugate of the atom column
                # space; conjugate them so project()/lift() reproduce atoms
                basis = _fix_column_phases(np.ascontiguousarray(q[:, :s].conj()))
                return Subspace(basis, vals[:s])
        prev = vals
    raise ConvergenceError(
        f"orthogonal iteration did not converge in {max_iter} sweeps "
        f"(last eigenvalue change {change:.3e} relative)",
        iterations=int(max_iter),
        residual=change,
    )


def project(sub, x):
    """Coefficients basis^H x; accepts a single vector or stacked rows."""
    x = np.asarray(x)
    if x.shape[-1] != sub.n_frames:
        raise ValueError(
            f"signal length {x.shape[-1]} does not match basis {sub.n_frames}"
        )
    return x @ sub.basis.conj()


def lift(sub, y):
    """Reconstruction basis @ y; adjoint of project."""
    y = np.asarray(y)
    if y.shape[-1] != sub.n_components:
        raise ValueError(
            f"coefficient length {y.shape[-1]} does not match basis "
            f"{sub.n_components}"
        )
    return y @ sub.basis.T


def captured_energy(sub, dictionary, chunk_size=8192):
    """Fraction of total atom energy inside the subspace, in [0, 1]."""
    atoms = _atoms_of(dictionary)
    if sub.n_components == 0:
        return 0.0
    kept = 0.0
    total = 0.0
    for lo in range(0, atoms.shape[0], chunk_size):
        block = atoms[lo : lo + chunk_size].astype(np.complex128, copy=False)
        coeffs = block @ sub.basis.conj()
        kept += float(np.sum(np.abs(coeffs) ** 2))
        total += float(np.sum(np.abs(block) ** 2))
    if total == 0.0:
        raise ValueError("dictionary has zero total energy")
    return min(kept / total, 1.0)
