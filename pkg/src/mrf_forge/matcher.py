"""Dictionary matching: brute-force nearest-neighbor search, compressed.

Voxels and atoms are compared in the s-dimensional subspace by the real
part of the inner product between unit-norm vectors, which for unit
vectors is equivalent to minimizing Euclidean distance. Atoms are
phase-aligned at build time; voxels are aligned on the way in, so the
score is gauge-invariant. Ties break to the lowest atom index.
"""

from dataclasses import dataclass

import numpy as np

from .dictionary import align_rows
from .errors import DegenerateSignalError
from .qmaps import QMaps
from .subspace import project

__all__ = [
    "CompressedDictionary",
    "compress_dictionary",
    "MatchResult",
    "nns_match",
    "match_image",
    "CostReport",
    "cost_report",
]


@dataclass(eq=False)
class CompressedDictionary:
    """Subspace coordinates of every atom, plus what matching needs.

    ``unit`` rows are the compressed atoms scaled to unit norm (the
    correlation templates); ``raw`` keeps the unscaled coordinates whose
    norms are slightly below 1 (energy outside the subspace); ``lift_sums``
    is the column sum of the basis, used to phase-align compressed vectors
    by the temporal sum of their reconstruction.
    """

    raw: np.ndarray
    unit: np.ndarray
    norms: np.ndarray
    grid: object
    basis: np.ndarray
    lift_sums: np.ndarray
    full_atoms: np.ndarray

    @property
    def n_atoms(self):
        return self.raw.shape[0]

    @property
    def n_components(self):
        return self.raw.shape[1]


def compress_dictionary(dictionary, sub, chunk_size=8192):
    raw = np.empty((dictionary.n_atoms, sub.n_components), dtype=np.complex128)
    for lo in range(0, dictionary.n_atoms, chunk_size):
        block = dictionary.atoms[lo : lo + chunk_size].astype(np.complex128, copy=False)
        raw[lo : lo + block.shape[0]] = block @ sub.basis.conj()
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmax(norms == 0.0))
        raise DegenerateSignalError(
            f"atom {bad} has zero energy inside the subspace"
        )
    return CompressedDictionary(
        raw=raw,
        unit=raw / norms[:, None],
        norms=norms,
        grid=dictionary.grid,
        basis=sub.basis,
        lift_sums=sub.basis.sum(axis=0),
        full_atoms=dictionary.atoms,
    )


@dataclass(frozen=True)
class MatchResult:
    atom_index: int
    t1_ms: float
    t2_ms: float
    correlation: float  # in [-1, 1]
    scale: complex  # inner product of the aligned voxel with the matched unit atom


def _align_compressed(cdict, y):
    """Phase-align compressed vectors by their reconstruction's temporal sum."""
    c = y @ cdict.lift_sums
    mag = np.abs(c)
    if y.ndim == 1:
        return y * (np.conj(c) / mag) if mag > 0 else y
    factors = np.where(mag > 0, np.conj(c) / np.where(mag > 0, mag, 1.0), 1.0)
    return y * factors[..., None]


def _best_correlation(cdict, y_unit, chunk_size=16384, voxel_block=1024):
    """Argmax of Re<y_unit, unit atom> over atom chunks; ties keep lowest index.

    Voxels are processed in blocks too, so the score buffer stays below
    voxel_block x chunk_size regardless of the image size.
    """
    y_unit = np.atleast_2d(y_unit)
    n = y_unit.shape[0]
    best_score = np.full(n, -np.inf)
    best_idx = np.zeros(n, dtype=np.int64)
    for vlo in range(0, n, voxel_block):
        rows = slice(vlo, min(vlo + voxel_block, n))
        block_scores = best_score[rows]  # view: updates land in best_score
        block_idx = best_idx[rows]
        m = block_scores.shape[0]
        for lo in range(0, cdict.n_atoms, chunk_size):
            block = cdict.unit[lo : lo + chunk_size]
            scores = (y_unit[rows] @ block.conj().T).real
            local = np.argmax(scores, axis=1)
            local_best = scores[np.arange(m), local]
            better = local_best > block_scores
            block_idx[better] = lo + local[better]
            block_scores[better] = local_best[better]
    return best_idx, np.clip(best_score, -1.0, 1.0)


def nns_match(cdict, voxel):
    """Match one compressed voxel (length s) against every atom.

    The voxel is phase-aligned, normalized and correlated with the
    unit-norm compressed atoms; the winning index maximizes the real part
    of the inner product. Raises for an all-zero voxel.
    """
    y = np.asarray(voxel, dtype=np.complex128)
    if y.shape != (cdict.n_components,):
        raise ValueError(
            f"voxel must have length {cdict.n_components}, got {y.shape}"
        )
    norm = np.linalg.norm(y)
    if norm == 0.0:
        raise DegenerateSignalError("zero voxel cannot be matched")
    y = _align_compressed(cdict, y)
    idx, corr = _best_correlation(cdict, y / np.linalg.norm(y))
    j = int(idx[0])
    t1, t2 = cdict.grid.params_of(j)
    scale = complex(np.vdot(cdict.unit[j], y))
    return MatchResult(j, t1, t2, float(corr[0]), scale)


def match_image(dictionary, sub, image, shape=None, degeneracy_threshold=1e-9,
                cdict=None, chunk_size=16384):
    """Per-voxel dictionary matching of an (n, L) signal stack.

    Voxels whose norm falls below ``degeneracy_threshold`` times the
    largest voxel norm (and voxels with an undefined alignment phase) are
    flagged and set to zero rather than matched. The scale map is the
    magnitude of the full-length inner product between the aligned voxel
    and its matched atom.
    """
    image = np.asarray(image, dtype=np.complex128)
    if image.ndim != 2 or image.shape[1] != dictionary.n_frames:
        raise ValueError(
            f"image must be (n, {dictionary.n_frames}), got {image.shape}"
        )
    if cdict is None:
        cdict = compress_dictionary(dictionary, sub)
    n = image.shape[0]
    height, width = shape if shape is not None else (1, n)
    if height * width != n:
        raise ValueError(f"shape {shape} does not cover {n} voxels")

    aligned, align_ok = align_rows(image)
    norms = np.linalg.norm(aligned, axis=1)
    max_norm = norms.max() if n else 0.0
    ok = align_ok & (norms > degeneracy_threshold * max_norm) & (norms > 0.0)

    t1 = np.zeros(n)
    t2 = np.zeros(n)
    scale = np.zeros(n)
    if np.any(ok):
        y = project(sub, aligned[ok])
        y = _align_compressed(cdict, y)
        y_norms = np.linalg.norm(y, axis=1)
        good = y_norms > 0.0
        # voxels with no subspace component stay flagged
        rows = np.flatnonzero(ok)
        rows = rows[good]
        if rows.size:
            idx, _ = _best_correlation(cdict, y[good] / y_norms[good, None],
                                       chunk_size=chunk_size)
            entries = cdict.grid.entries()
            t1[rows] = entries[idx, 0]
            t2[rows] = entries[idx, 1]
            matched = cdict.full_atoms[idx].astype(np.complex128, copy=False)
            scale[rows] = np.abs(np.sum(matched.conj() * aligned[rows], axis=1))
        ok = np.zeros(n, dtype=bool)
        ok[rows] = True

    flags = (~ok).astype(np.uint8)
    return QMaps(t1, t2, scale, flags, "DM", height, width)


@dataclass(frozen=True)
class CostReport:
    """Per-voxel multiply-accumulate counts and resident model/dictionary bytes."""

    dm_flops_per_voxel: int
    net_flops_per_voxel: int
    dm_bytes: int
    net_bytes: int
    ratio_flops: float
    ratio_bytes: float

    def as_dict(self):
        return {
            "dm_flops_per_voxel": self.dm_flops_per_voxel,
            "net_flops_per_voxel": self.net_flops_per_voxel,
            "dm_bytes": self.dm_bytes,
            "net_bytes": self.net_bytes,
            "ratio_flops": self.ratio_flops,
            "ratio_bytes": self.ratio_bytes,
        }


def cost_report(n_frames, s, d, net_layout):
    """Arithmetic and storage comparison of matching vs network inference.

    Counts multiply-accumulates per voxel: both engines pay s*L for
    compression; matching then pays s*d correlations while the network
    pays the trainable layer products. Bytes count resident values at 8
    bytes each (complex64 atom coordinates, float64 weights): matching
    keeps the compressed dictionary plus the basis, the network keeps the
    basis plus weights and biases.
    """
    layout = [int(v) for v in net_layout]
    if len(layout) < 2:
        raise ValueError("net_layout needs at least two entries")
    if any(v < 1 for v in layout) or min(n_frames, s, d) < 1:
        raise ValueError("sizes must be positive")
    if layout[0] != s:
        raise ValueError(f"net_layout[0] = {layout[0]} must equal s = {s}")
    dm_flops = s * n_frames + s * d
    net_flops = s * n_frames + sum(
        layout[i] * layout[i + 1] for i in range(len(layout) - 1)
    )
    dm_bytes = 8 * (s * d + n_frames * s)
    net_params = sum(
        layout[i] * layout[i + 1] + layout[i + 1] for i in range(len(layout) - 1)
    )
    net_bytes = 8 * (n_frames * s + net_params)
    return CostReport(
        dm_flops_per_voxel=dm_flops,
        net_flops_per_voxel=net_flops,
        dm_bytes=dm_bytes,
        net_bytes=net_bytes,
        ratio_flops=dm_flops / net_flops,
        ratio_bytes=dm_bytes / net_bytes,
    )
