"""Fingerprint dictionary: parameter grid, batch simulation, file container.

A dictionary holds one unit-norm, phase-aligned fingerprint per (T1, T2)
grid point, in t1-major row order. Atoms are stored as complex64; the
64-vs-32-bit difference is far below matching tolerances and halves the
~1 GB footprint of the default grid.
"""

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .epg import simulate_fingerprints
from .errors import DegenerateSignalError, FormatError
from .formats import PayloadWriter, open_payload
from .sequences import SequenceParams

__all__ = [
    "ParamGrid",
    "build_grid",
    "Dictionary",
    "phase_align",
    "simulate_dictionary",
    "save_dictionary",
    "load_dictionary",
    "DEFAULT_T1_RANGE",
    "DEFAULT_T2_RANGE",
]

DEFAULT_T1_RANGE = (100.0, 10.0, 4000.0)
DEFAULT_T2_RANGE = (20.0, 2.0, 600.0)

MAGIC = b"MRFD"
VERSION = 1


@dataclass(frozen=True, eq=False)
class ParamGrid:
    """Rectangular (T1, T2) grid, both axes inclusive arithmetic progressions."""

    t1_start: float
    t1_step: float
    t1_count: int
    t2_start: float
    t2_step: float
    t2_count: int

    def __post_init__(self):
        for name in ("t1", "t2"):
            start = getattr(self, f"{name}_start")
            step = getattr(self, f"{name}_step")
            count = getattr(self, f"{name}_count")
            if step <= 0.0:
                raise ValueError(f"{name} step must be positive")
            if count < 1:
                raise ValueError(f"{name} count must be at least 1")
            if start <= 0.0:
                raise ValueError(f"{name} values must be positive")

    @property
    def t1_values(self):
        return self.t1_start + self.t1_step * np.arange(self.t1_count)

    @property
    def t2_values(self):
        return self.t2_start + self.t2_step * np.arange(self.t2_count)

    @property
    def n_atoms(self):
        return self.t1_count * self.t2_count

    def entries(self):
        """(n_atoms, 2) array of (t1, t2) pairs in t1-major order."""
        t1, t2 = np.meshgrid(self.t1_values, self.t2_values, indexing="ij")
        return np.column_stack([t1.ravel(), t2.ravel()])

    def params_of(self, index):
        i1, i2 = divmod(int(index), self.t2_count)
        if not 0 <= i1 < self.t1_count:
            raise IndexError(f"atom index {index} out of range")
        return (
            self.t1_start + self.t1_step * i1,
            self.t2_start + self.t2_step * i2,
        )

    def index_of(self, t1_ms, t2_ms):
        """Exact grid membership; raises for off-grid values."""
        i1 = (t1_ms - self.t1_start) / self.t1_step
        i2 = (t2_ms - self.t2_start) / self.t2_step
        j1, j2 = int(round(i1)), int(round(i2))
        if (
            abs(i1 - j1) > 1e-6
            or abs(i2 - j2) > 1e-6
            or not 0 <= j1 < self.t1_count
            or not 0 <= j2 < self.t2_count
        ):
            raise ValueError(f"({t1_ms}, {t2_ms}) is not a grid point")
        return j1 * self.t2_count + j2

    def nearest_index(self, t1_ms, t2_ms):
        """Index of the closest grid point (axis-wise rounding, clipped)."""
        j1 = int(np.clip(round((t1_ms - self.t1_start) / self.t1_step), 0, self.t1_count - 1))
        j2 = int(np.clip(round((t2_ms - self.t2_start) / self.t2_step), 0, self.t2_count - 1))
        return j1 * self.t2_count + j2

    def contains(self, t1_ms, t2_ms):
        return (
            self.t1_values[0] <= t1_ms <= self.t1_values[-1]
            and self.t2_values[0] <= t2_ms <= self.t2_values[-1]
        )


def _axis_from_range(name, rng):
    try:
        start, step, stop = (float(v) for v in rng)
    except (TypeError, ValueError):
        raise ValueError(f"{name} range must be (start, step, stop)") from None
    if step <= 0.0:
        raise ValueError(f"{name} step must be positive")
    if stop < start:
        raise ValueError(f"{name} range is inverted")
    n_steps = (stop - start) / step
    count = int(round(n_steps)) + 1
    if abs(n_steps - round(n_steps)) > 1e-9 * max(1.0, abs(n_steps)):
        raise ValueError(
            f"{name} range width is not an integer multiple of the step"
        )
    return start, step, count


def build_grid(t1_range=DEFAULT_T1_RANGE, t2_range=DEFAULT_T2_RANGE):
    """ParamGrid from inclusive (start, step, stop) ranges."""
    t1_start, t1_step, t1_count = _axis_from_range("t1", t1_range)
    t2_start, t2_step, t2_count = _axis_from_range("t2", t2_range)
    return ParamGrid(t1_start, t1_step, t1_count, t2_start, t2_step, t2_count)


def phase_align(signal):
    """Rotate a complex signal so its temporal sum is real and non-negative.

    Multiplies by conj(c)/|c| with c = sum(signal). Gauge-invariant: any
    global phase on the input yields the same output.
    """
    signal = np.asarray(signal, dtype=np.complex128)
    c = signal.sum()
    if c == 0:
        raise DegenerateSignalError(
            "signal sums to zero; phase alignment undefined"
        )
    return signal * (np.conj(c) / np.abs(c))


def align_rows(signals):
    """Vectorized phase alignment of (n, L) rows.

    Returns (aligned, ok) where rows with zero temporal sum are left
    untouched and marked False instead of raising.
    """
    signals = np.asarray(signals, dtype=np.complex128)
    sums = signals.sum(axis=1)
    mags = np.abs(sums)
    ok = mags > 0.0
    factors = np.ones_like(sums)
    factors[ok] = np.conj(sums[ok]) / mags[ok]
    return signals * factors[:, None], ok


@dataclass(eq=False)
class Dictionary:
    """Unit-norm fingerprint per grid entry; rows in grid order."""

    atoms: np.ndarray  # (n_atoms, n_frames) complex64
    grid: ParamGrid
    seq_digest: bytes

    def __post_init__(self):
        self.atoms = np.ascontiguousarray(self.atoms, dtype=np.complex64)
        if self.atoms.ndim != 2:
            raise ValueError("atoms must be a 2-D array")
        if self.atoms.shape[0] != self.grid.n_atoms:
            raise ValueError(
                f"{self.atoms.shape[0]} atoms for a grid of {self.grid.n_atoms}"
            )
        if len(self.seq_digest) != 32:
            raise ValueError("seq_digest must be 32 bytes")

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def n_frames(self):
        return self.atoms.shape[1]


DEFAULT_CHUNK = 2048


def simulate_dictionary(grid, seq, n_threads=1, chunk_size=DEFAULT_CHUNK, progress=None):
    """Simulate, align and normalize one atom per grid entry.

    Work is split into fixed-size chunks of atoms; each worker writes a
    disjoint row range of the preallocated output, so the result is
    bit-identical for any thread count.
    """
    if not isinstance(seq, SequenceParams):
        raise TypeError("seq must be a SequenceParams")
    entries = grid.entries()
    d = entries.shape[0]
    atoms = np.empty((d, seq.n_frames), dtype=np.complex64)
    starts = range(0, d, int(chunk_size))

    def run_chunk(lo):
        hi = min(lo + chunk_size, d)
        block = simulate_fingerprints(entries[lo:hi, 0], entries[lo:hi, 1], seq)
        sums = block.sum(axis=1)
        mags = np.abs(sums)
        if np.any(mags == 0.0):
            bad = int(np.argmax(mags == 0.0)) + lo
            t1, t2 = grid.params_of(bad)
            raise DegenerateSignalError(
                f"atom {bad} (T1={t1}, T2={t2}) sums to zero; cannot align"
            )
        block *= (np.conj(sums) / mags)[:, None]
        norms = np.linalg.norm(block, axis=1)
        if np.any(norms == 0.0):
            bad = int(np.argmax(norms == 0.0)) + lo
            t1, t2 = grid.params_of(bad)
            raise DegenerateSignalError(
                f"atom {bad} (T1={t1}, T2={t2}) is identically zero; "
                "cannot normalize"
            )
        block /= norms[:, None]
        atoms[lo:hi] = block
        if progress is not None:
            progress(hi, d)

    if n_threads <= 1:
        for lo in starts:
            run_chunk(lo)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(run_chunk, starts))
    return Dictionary(atoms, grid, seq.digest())


def save_dictionary(dictionary, path):
    """Write the MRFD container; see package docs for the field layout."""
    w = PayloadWriter(MAGIC, VERSION)
    g = dictionary.grid
    w.u32(dictionary.n_frames)
    w.u32(dictionary.n_atoms)
    w.u32(g.t1_count)
    w.u32(g.t2_count)
    w.f64(g.t1_start)
    w.f64(g.t1_step)
    w.f64(g.t2_start)
    w.f64(g.t2_step)
    w.raw(dictionary.seq_digest)
    w.complex_f32_array(dictionary.atoms)
    w.save(path)


def load_dictionary(path):
    """Read an MRFD container, verifying magic, version and checksum."""
    r = open_payload(path, MAGIC, VERSION)
    n_frames = r.u32()
    d = r.u32()
    t1_count = r.u32()
    t2_count = r.u32()
    t1_start = r.f64()
    t1_step = r.f64()
    t2_start = r.f64()
    t2_step = r.f64()
    digest = r.raw(32)
    if d != t1_count * t2_count:
        raise FormatError(
            f"{path}: atom count {d} does not match grid "
            f"{t1_count}x{t2_count}"
        )
    atoms = r.complex_f32_array(d * n_frames).reshape(d, n_frames)
    r.expect_end()
    grid = ParamGrid(t1_start, t1_step, t1_count, t2_start, t2_step, t2_count)
    return Dictionary(atoms, grid, bytes(digest))
