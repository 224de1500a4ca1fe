"""Piecewise-affine view of the trained network.

With ReLU activations the map from compressed input to weighted outputs
(last-layer pre-activations) is affine inside every activation-pattern
region: z(x) = A[x] x + b[x]. The rows of A[x] act as matched filters the
network correlates against a signal to regress each parameter. This
module extracts those filters by back-propagation, identifies regions by
their activation patterns, and clusters per-atom slopes into segment maps
over the (T1, T2) grid.

All probes live in the phase-aligned real regime: a complex probe's
imaginary part is discarded (aligned fingerprints are single-phase, so
this loses nothing on in-distribution inputs).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .mrfnet import _hidden_forward, weighted_output

__all__ = [
    "ActivationPattern",
    "MatchedFilterSet",
    "SegmentMap",
    "FilterReport",
    "activation_pattern",
    "input_gradient",
    "matched_filters",
    "compressed_slopes",
    "cluster_segments",
    "segment_report",
    "filter_report",
    "write_segment_csv",
    "write_filter_csv",
]


@dataclass(frozen=True)
class ActivationPattern:
    """ReLU on/off bits across trainable layers, layer-then-unit order."""

    bits: np.ndarray

    def __eq__(self, other):
        return isinstance(other, ActivationPattern) and np.array_equal(
            self.bits, other.bits
        )

    def __hash__(self):
        return hash(self.bits.tobytes())


@dataclass(eq=False)
class MatchedFilterSet:
    """Affine form of the weighted outputs at one probe: z = slopes @ x + offsets."""

    slopes: np.ndarray  # (P, L) real
    offsets: np.ndarray  # (P,) real
    at_input: np.ndarray  # (L,) real probe


@dataclass(eq=False)
class SegmentMap:
    labels: np.ndarray
    centroids: np.ndarray
    probe_grid: np.ndarray | None
    inertia: float
    manifold_coords: np.ndarray | None = None  # first three subspace coords per probe


def _real_probe(model, x):
    x = np.asarray(x)
    if x.shape != (model.subspace.n_frames,):
        raise ValueError(
            f"probe must have length {model.subspace.n_frames}, got {x.shape}"
        )
    if np.iscomplexobj(x):
        x = x.real
    x = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("probe must be finite")
    return x


def _compress_real(model, x_rows):
    # u = Re(V^H) x, which for real x is x against the basis real part
    return x_rows @ model.subspace.basis.real


def activation_pattern(model, x):
    """Pattern bits of one probe (pre-activation > 0 per unit)."""
    x = _real_probe(model, x)
    pre, _ = _hidden_forward(model, _compress_real(model, x[None, :]))
    bits = np.concatenate([(z[0] > 0.0) for z in pre]).astype(np.uint8)
    return ActivationPattern(bits)


def activation_patterns_compressed(model, u):
    """(n, total_units) uint8 pattern bits for compressed real inputs."""
    pre, _ = _hidden_forward(model, np.atleast_2d(u))
    return np.concatenate([(z > 0.0) for z in pre], axis=1).astype(np.uint8)


def compressed_slopes(model, u):
    """Jacobian of the physical weighted outputs w.r.t. compressed input.

    Returns (n, P, s) for stacked inputs u of shape (n, s); constant
    within an activation region.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    pre, _ = _hidden_forward(model, u)
    n = u.shape[0]
    p_out = model.n_outputs
    out = np.empty((n, p_out, u.shape[1]))
    masks = [z > 0.0 for z in pre[:-1]]
    for p in range(p_out):
        delta = np.broadcast_to(
            model.weights[-1][p] * model.target_scale[p], (n, model.weights[-1].shape[1])
        )
        for i in range(len(model.weights) - 2, -1, -1):
            delta = delta * masks[i]
            delta = delta @ model.weights[i]
        out[:, p, :] = delta
    return out


def input_gradient(model, x, p):
    """Gradient of weighted output p w.r.t. the length-L real signal."""
    x = _real_probe(model, x)
    p = int(p)
    if not 0 <= p < model.n_outputs:
        raise IndexError(f"output index {p} out of range")
    slopes_s = compressed_slopes(model, _compress_real(model, x[None, :]))[0, p]
    return slopes_s @ model.subspace.basis.real.T


def matched_filters(model, x):
    """Affine form (slopes, offsets) of the weighted outputs at probe x."""
    x = _real_probe(model, x)
    slopes_s = compressed_slopes(model, _compress_real(model, x[None, :]))[0]
    slopes = slopes_s @ model.subspace.basis.real.T
    z = weighted_output(model, x)
    return MatchedFilterSet(slopes, z - slopes @ x, x)


def cluster_segments(features, k, seed=0, max_iter=300):
    """Deterministic k-means (k-means++ seeding, Lloyd iterations).

    Assignment ties break to the lowest centroid index; empty clusters
    keep their previous centroid. Stops when labels stop changing.
    """
    x = np.ascontiguousarray(np.atleast_2d(features), dtype=np.float64)
    n = x.shape[0]
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k = {k} exceeds {n} rows")
    rng = np.random.default_rng(seed)

    sq = np.sum(x**2, axis=1)
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    dist = sq - 2 * x @ centroids[0] + np.dot(centroids[0], centroids[0])
    dist = np.maximum(dist, 0.0)
    for j in range(1, k):
        total = dist.sum()
        if total <= 0.0:
            # all points coincide with chosen centroids; reuse the first point
            centroids[j:] = x[0]
            break
        centroids[j] = x[rng.choice(n, p=dist / total)]
        cand = sq - 2 * x @ centroids[j] + np.dot(centroids[j], centroids[j])
        dist = np.minimum(dist, np.maximum(cand, 0.0))

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(int(max_iter)):
        d2 = sq[:, None] - 2 * x @ centroids.T + np.sum(centroids**2, axis=1)
        new_labels = np.argmin(d2, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if np.any(members):
                centroids[j] = x[members].mean(axis=0)
    d2 = sq[:, None] - 2 * x @ centroids.T + np.sum(centroids**2, axis=1)
    inertia = float(np.maximum(d2[np.arange(n), labels], 0.0).sum())
    return SegmentMap(labels, centroids, None, inertia)


def segment_report(model, dictionary, sub=None, k=12, seed=0, max_iter=300,
                   csv_path=None, chunk_size=8192):
    """Cluster per-atom slope matrices into segments over the whole grid.

    Every dictionary atom is probed; the feature of an atom is its
    concatenated compressed slope rows (P*s values — the first layer is
    shared and linear, so compressed slopes determine the full filters).
    Returns a SegmentMap whose probe_grid holds the (t1, t2) entries and
    whose manifold_coords hold the first three subspace coordinates.
    """
    if sub is None:
        sub = model.subspace
    d = dictionary.n_atoms
    p_out = model.n_outputs
    s = model.subspace.n_components
    features = np.empty((d, p_out * s))
    coords = np.empty((d, 3))
    for lo in range(0, d, chunk_size):
        block = dictionary.atoms[lo : lo + chunk_size].astype(np.complex128, copy=False)
        u = (block @ model.subspace.basis.conj()).real
        features[lo : lo + block.shape[0]] = compressed_slopes(model, u).reshape(
            block.shape[0], -1
        )
        pcs = (block @ sub.basis[:, :3].conj()).real
        coords[lo : lo + block.shape[0], : pcs.shape[1]] = pcs
    seg = cluster_segments(features, k, seed=seed, max_iter=max_iter)
    seg.probe_grid = dictionary.grid.entries()
    seg.manifold_coords = coords
    if csv_path is not None:
        write_segment_csv(seg, csv_path)
    return seg


def write_segment_csv(seg, path):
    """Header t1_ms,t2_ms,label,pc1,pc2,pc3 — one row per probed atom."""
    if seg.probe_grid is None or seg.manifold_coords is None:
        raise ValueError("segment map lacks probe grid or manifold coordinates")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t1_ms", "t2_ms", "label", "pc1", "pc2", "pc3"])
        for (t1, t2), label, pc in zip(
            seg.probe_grid, seg.labels, seg.manifold_coords
        ):
            writer.writerow(
                [repr(float(t1)), repr(float(t2)), int(label),
                 repr(float(pc[0])), repr(float(pc[1])), repr(float(pc[2]))]
            )


@dataclass(eq=False)
class FilterReport:
    """Matched filters at a region's center atom plus the region's fingerprints."""

    frames: np.ndarray
    center_index: int
    center_params: tuple
    center_fingerprint: np.ndarray  # (L,) real part of the center atom
    filters: np.ndarray  # (P, L)
    offsets: np.ndarray
    region_indices: np.ndarray
    region_fingerprints: np.ndarray  # (m, L) real parts


def filter_report(model, dictionary, t1_range, t2_range, csv_path=None):
    """Filters for a rectangular (T1, T2) region, probed at its center atom."""
    entries = dictionary.grid.entries()
    t1_lo, t1_hi = (float(v) for v in t1_range)
    t2_lo, t2_hi = (float(v) for v in t2_range)
    inside = (
        (entries[:, 0] >= t1_lo)
        & (entries[:, 0] <= t1_hi)
        & (entries[:, 1] >= t2_lo)
        & (entries[:, 1] <= t2_hi)
    )
    region = np.flatnonzero(inside)
    if region.size == 0:
        raise ValueError(
            f"region T1 [{t1_lo}, {t1_hi}] x T2 [{t2_lo}, {t2_hi}] "
            "contains no grid points"
        )
    mid = np.array([(t1_lo + t1_hi) / 2.0, (t2_lo + t2_hi) / 2.0])
    steps = np.array([dictionary.grid.t1_step, dictionary.grid.t2_step])
    center = region[
        int(np.argmin(np.sum(((entries[region] - mid) / steps) ** 2, axis=1)))
    ]
    probe = dictionary.atoms[center].real.astype(np.float64)
    filt = matched_filters(model, probe)
    report = FilterReport(
        frames=np.arange(dictionary.n_frames),
        center_index=int(center),
        center_params=tuple(entries[center]),
        center_fingerprint=probe,
        filters=filt.slopes,
        offsets=filt.offsets,
        region_indices=region,
        region_fingerprints=dictionary.atoms[region].real.astype(np.float64),
    )
    if csv_path is not None:
        write_filter_csv(report, csv_path)
    return report


def write_filter_csv(report, path):
    """Header frame,fingerprint_re,filter_t1,filter_t2 — one row per frame."""
    if report.filters.shape[0] < 2:
        raise ValueError("filter CSV expects at least two output filters")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "fingerprint_re", "filter_t1", "filter_t2"])
        for t in report.frames:
            writer.writerow(
                [int(t), repr(float(report.center_fingerprint[t])),
                 repr(float(report.filters[0, t])), repr(float(report.filters[1, t]))]
            )
