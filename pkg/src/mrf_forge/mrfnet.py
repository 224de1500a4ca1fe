"""Compact regression network mapping compressed fingerprints to (T1, T2).

Layer 1 is fixed: the complex subspace projection followed by taking the
real part (phase-aligned fingerprints are single-phase, so the imaginary
part carries no information). The remaining layers are small dense ReLU
layers trained with Adam on noise-augmented, nearest-neighbor-relabeled
dictionary atoms. Targets are scaled internally (T1/1000, T2/100) so the
two loss terms have comparable size; predictions are returned in ms.

Training data is generated from counter-based random streams keyed by
(seed, pair index), so a training set is fully determined by its config
whether pairs are materialized up front or regenerated per batch.
"""

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, TrainingDivergedError
from .formats import PayloadWriter, open_payload
from .dictionary import align_rows
from .subspace import Subspace, project

__all__ = [
    "MlpModel",
    "TrainConfig",
    "TrainingPair",
    "TrainingSet",
    "DEFAULT_LAYOUT",
    "DEFAULT_TARGET_SCALE",
    "init_model",
    "forward",
    "weighted_output",
    "predict_compressed",
    "predict_signals",
    "prepare_signals",
    "make_training_set",
    "training_loss",
    "parameter_gradients",
    "train",
    "save_model",
    "load_model",
]

DEFAULT_LAYOUT = (1000, 10, 200, 30, 2)
DEFAULT_TARGET_SCALE = (1000.0, 100.0)

MAGIC = b"MRFN"
VERSION = 1


@dataclass(eq=False)
class MlpModel:
    """Fixed subspace first layer plus trained dense ReLU layers."""

    subspace: Subspace
    weights: list  # weights[i]: (layout[i+2], layout[i+1]) float64
    biases: list
    target_scale: np.ndarray
    train_config_echo: dict | None = None

    def __post_init__(self):
        self.target_scale = np.ascontiguousarray(self.target_scale, dtype=np.float64)
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        prev = self.subspace.n_components
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = w = np.ascontiguousarray(w, dtype=np.float64)
            self.biases[i] = b = np.ascontiguousarray(b, dtype=np.float64)
            if w.ndim != 2 or w.shape[1] != prev:
                raise ValueError(
                    f"layer {i + 2} weights {w.shape} do not follow width {prev}"
                )
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {i + 2} bias shape {b.shape} mismatched")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i + 2} parameters must be finite")
            prev = w.shape[0]
        if self.target_scale.shape != (prev,):
            raise ValueError("target_scale needs one entry per output")
        if np.any(self.target_scale <= 0):
            raise ValueError("target_scale entries must be positive")

    @property
    def layout(self):
        dims = [self.subspace.n_frames, self.subspace.n_components]
        dims += [w.shape[0] for w in self.weights]
        return tuple(dims)

    @property
    def n_outputs(self):
        return self.weights[-1].shape[0]

    def copy(self):
        return MlpModel(
            self.subspace,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.target_scale.copy(),
            dict(self.train_config_echo) if self.train_config_echo else None,
        )


def init_model(sub, layout=DEFAULT_LAYOUT, seed=0, target_scale=DEFAULT_TARGET_SCALE):
    """Fresh model: uniform(+-sqrt(6/fan_in)) weights, zero biases, seeded."""
    layout = tuple(int(v) for v in layout)
    if len(layout) < 3:
        raise ValueError("layout needs at least [L, s, P]")
    if layout[0] != sub.n_frames:
        raise ValueError(
            f"layout[0] = {layout[0]} must match basis length {sub.n_frames}"
        )
    if layout[1] != sub.n_components:
        raise ValueError(
            f"layout[1] = {layout[1]} must match subspace width {sub.n_components}"
        )
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layout[1:-1], layout[2:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sub, weights, biases, np.asarray(target_scale, dtype=np.float64))


def prepare_signals(model, signals):
    """Align, unit-normalize and compress raw signals to real network inputs.

    Zero rows pass through as zero inputs; callers that care flag them
    separately (see recon).
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=np.complex128))
    aligned, _ = align_rows(signals)
    norms = np.linalg.norm(aligned, axis=1)
    norms[norms == 0.0] = 1.0
    return project(model.subspace, aligned / norms[:, None]).real


def _hidden_forward(model, u):
    """Pre-activations and activations of the trainable layers for (n, s) input."""
    pre = []
    act = [u]
    h = u
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        if i != last:
            act.append(h)
    return pre, act


def predict_compressed(model, u):
    """(n, P) physical-unit predictions from real compressed inputs."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    pre, _ = _hidden_forward(model, u)
    return np.maximum(pre[-1], 0.0) * model.target_scale


def predict_signals(model, signals):
    """(n, P) physical-unit predictions from raw complex signals."""
    return predict_compressed(model, prepare_signals(model, signals))


def _check_input(model, x):
    x = np.asarray(x)
    if x.shape != (model.subspace.n_frames,):
        raise ValueError(
            f"input must have length {model.subspace.n_frames}, got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("input must be finite")
    return x


def forward(model, x):
    """Physical-unit prediction for one prepared (aligned, unit) signal."""
    x = _check_input(model, x)
    u = project(model.subspace, x.astype(np.complex128)).real
    return predict_compressed(model, u[None, :])[0]


def weighted_output(model, x):
    """Last-layer pre-activation in physical units: forward == ReLU of this."""
    x = _check_input(model, x)
    u = project(model.subspace, x.astype(np.complex128)).real
    pre, _ = _hidden_forward(model, u[None, :])
    return pre[-1][0] * model.target_scale


@dataclass(eq=False)
class TrainConfig:
    """Optimizer and augmentation settings; defaults follow the training recipe."""

    batch_size: int = 50
    epochs: int = 30
    step_size: float = 1e-2
    decay: float = 0.8
    snr_db_range: tuple | None = (40.0, 60.0)
    augmentation_factor: int = 100
    rng_seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    noise_domain: str = "subspace"  # or "signal": full-length noise, then projection

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.augmentation_factor < 1:
            raise ValueError("augmentation_factor must be >= 1")
        if self.snr_db_range is not None:
            lo, hi = self.snr_db_range
            if not lo <= hi:
                raise ValueError("snr_db_range must be ordered (low, high)")
            self.snr_db_range = (float(lo), float(hi))
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ValueError("adam betas must be in [0, 1)")
        if self.adam_eps <= 0.0:
            raise ValueError("adam_eps must be positive")
        if self.noise_domain not in ("subspace", "signal"):
            raise ValueError("noise_domain must be 'subspace' or 'signal'")

    def as_dict(self):
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "step_size": self.step_size,
            "decay": self.decay,
            "snr_db_range": list(self.snr_db_range) if self.snr_db_range else None,
            "augmentation_factor": self.augmentation_factor,
            "rng_seed": self.rng_seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "noise_domain": self.noise_domain,
        }


@dataclass(frozen=True)
class TrainingPair:
    """One noisy compressed input with its nearest-atom label."""

    input: np.ndarray
    label: tuple  # (t1_ms, t2_ms) of the relabeled atom


_MATERIALIZE_LIMIT = 40_000_000  # floats; ~320 MB


class TrainingSet:
    """Noise-augmented, relabeled training pairs over a dictionary.

    Pair p = (atom k, repetition r) with p = k * augmentation_factor + r.
    Noise for pair p comes from a Philox stream keyed by (seed, p), so any
    subset of pairs can be regenerated identically on demand. Labels are
    computed once (nearest clean compressed atom to each noisy input) and
    kept; inputs are materialized when they fit comfortably in memory and
    regenerated per batch otherwise.
    """

    def __init__(self, dictionary, sub, cfg):
        self.cfg = cfg
        self.grid = dictionary.grid
        basis = sub.basis
        atoms = dictionary.atoms
        raw = np.empty((dictionary.n_atoms, sub.n_components), dtype=np.complex128)
        for lo in range(0, dictionary.n_atoms, 8192):
            block = atoms[lo : lo + 8192].astype(np.complex128, copy=False)
            raw[lo : lo + block.shape[0]] = block @ basis.conj()
        self.clean = np.ascontiguousarray(raw.real)
        self.clean_norms = np.linalg.norm(raw, axis=1)
        self._atoms = atoms
        self._basis = basis
        self.n_pairs = dictionary.n_atoms * cfg.augmentation_factor
        self._entries = dictionary.grid.entries()

        n_floats = self.n_pairs * sub.n_components
        self._inputs = None
        if n_floats <= _MATERIALIZE_LIMIT:
            self._inputs = self._generate(np.arange(self.n_pairs))
        self.labels = self._compute_labels()
        self.label_params = self._entries[self.labels]

    def __len__(self):
        return self.n_pairs

    def _generate(self, pair_indices):
        """Noisy inputs for the given pair indices, (len, s) float64."""
        cfg = self.cfg
        s = self.clean.shape[1]
        out = np.empty((len(pair_indices), s), dtype=np.float64)
        aug = cfg.augmentation_factor
        if cfg.snr_db_range is None:
            out[:] = self.clean[np.asarray(pair_indices) // aug]
            return out
        lo_db, hi_db = cfg.snr_db_range
        n_frames = self._atoms.shape[1]
        for row, p in enumerate(np.asarray(pair_indices, dtype=np.int64)):
            k = int(p // aug)
            rng = np.random.Generator(
                np.random.Philox(key=np.uint64(cfg.rng_seed), counter=[0, 0, 0, int(p)])
            )
            snr_db = rng.uniform(lo_db, hi_db)
            snr = 10.0 ** (snr_db / 10.0)
            if cfg.noise_domain == "subspace":
                sigma = self.clean_norms[k] / np.sqrt(s * snr)
                out[row] = self.clean[k] + sigma * rng.standard_normal(s)
            else:
                # unit atoms: signal energy 1 spread over L complex samples
                sigma = 1.0 / np.sqrt(n_frames * snr)
                noise = sigma / np.sqrt(2.0) * (
                    rng.standard_normal(n_frames)
                    + 1j * rng.standard_normal(n_frames)
                )
                noisy = self._atoms[k].astype(np.complex128) + noise
                out[row] = (noisy @ self._basis.conj()).real
        return out

    def _compute_labels(self, chunk=8192):
        """Nearest clean compressed atom per pair, squared-distance argmin."""
        if self.cfg.snr_db_range is None:
            return np.repeat(
                np.arange(self.clean.shape[0], dtype=np.int64),
                self.cfg.augmentation_factor,
            )
        half_sq = 0.5 * np.sum(self.clean**2, axis=1)
        labels = np.empty(self.n_pairs, dtype=np.int64)
        for lo in range(0, self.n_pairs, chunk):
            idx = np.arange(lo, min(lo + chunk, self.n_pairs))
            u = self._inputs[idx] if self._inputs is not None else self._generate(idx)
            scores = u @ self.clean.T
            scores -= half_sq[None, :]
            labels[idx] = np.argmax(scores, axis=1)
        return labels

    def batch(self, pair_indices):
        """(inputs, physical targets) for an index array, regenerating if lazy."""
        pair_indices = np.asarray(pair_indices)
        u = (
            self._inputs[pair_indices]
            if self._inputs is not None
            else self._generate(pair_indices)
        )
        return u, self.label_params[pair_indices]

    def __iter__(self):
        for lo in range(0, self.n_pairs, 8192):
            idx = np.arange(lo, min(lo + 8192, self.n_pairs))
            u, y = self.batch(idx)
            for row in range(len(idx)):
                yield TrainingPair(u[row], (float(y[row, 0]), float(y[row, 1])))


def make_training_set(dictionary, sub, cfg):
    """Deterministic stream of noisy relabeled pairs; see TrainingSet."""
    return TrainingSet(dictionary, sub, cfg)


def training_loss(model, u, targets):
    """Scaled-domain MSE of ReLU(weighted outputs) against physical targets."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64)) / model.target_scale
    pre, _ = _hidden_forward(model, u)
    err = np.maximum(pre[-1], 0.0) - y
    return float(np.mean(err**2))


def parameter_gradients(model, u, targets):
    """(loss, [(dW, db) per trainable layer]) for a batch, physical targets."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64)) / model.target_scale
    pre, act = _hidden_forward(model, u)
    n, p_out = pre[-1].shape
    err = np.maximum(pre[-1], 0.0) - y
    loss = float(np.mean(err**2))
    delta = (2.0 / (n * p_out)) * err * (pre[-1] > 0.0)
    grads = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grads[i] = (delta.T @ act[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i]) * (pre[i - 1] > 0.0)
    return loss, grads


def train(model, pairs, cfg):
    """Mini-batch Adam over the pairs; returns (trained copy, epoch losses).

    Layer 1 (the subspace) is never touched. The shuffle order is drawn
    from a dedicated stream off cfg.rng_seed, so runs are reproducible.
    A non-finite loss or gradient aborts with the failing epoch and batch.
    """
    if isinstance(pairs, TrainingSet):
        ts = pairs
        batch_of = ts.batch
        n_pairs = len(ts)
    else:
        listed = list(pairs)
        u_all = np.stack([np.asarray(p.input, dtype=np.float64) for p in listed])
        y_all = np.array([p.label for p in listed], dtype=np.float64)
        batch_of = lambda idx: (u_all[idx], y_all[idx])
        n_pairs = len(listed)
    if n_pairs == 0:
        raise ValueError("empty training set")

    out = model.copy()
    shuffle_rng = np.random.default_rng([cfg.rng_seed, 1])
    m_state = [
        (np.zeros_like(w), np.zeros_like(b))
        for w, b in zip(out.weights, out.biases)
    ]
    v_state = [
        (np.zeros_like(w), np.zeros_like(b))
        for w, b in zip(out.weights, out.biases)
    ]
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.step_size * cfg.decay**epoch
        order = shuffle_rng.permutation(n_pairs)
        total = 0.0
        for bi, lo in enumerate(range(0, n_pairs, cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            u, y = batch_of(idx)
            loss, grads = parameter_gradients(out, u, y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, bi)
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for li, (gw, gb) in enumerate(grads):
                if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
                    raise TrainingDivergedError(epoch, bi)
                mw, mb = m_state[li]
                vw, vb = v_state[li]
                mw *= b1
                mw += (1 - b1) * gw
                mb *= b1
                mb += (1 - b1) * gb
                vw *= b2
                vw += (1 - b2) * gw**2
                vb *= b2
                vb += (1 - b2) * gb**2
                out.weights[li] -= lr * (mw / c1) / (np.sqrt(vw / c2) + eps)
                out.biases[li] -= lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
            total += loss * len(idx)
        history.append(total / n_pairs)
    out.train_config_echo = cfg.as_dict()
    return out, history


def save_model(model, path):
    """Write the MRFN checkpoint; layer count = layout length."""
    w = PayloadWriter(MAGIC, VERSION)
    layout = model.layout
    w.u32(len(layout))
    for dim in layout:
        w.u32(dim)
    w.u8(1)  # layer 1 fixed
    sub = model.subspace
    w.u32(sub.n_frames)
    w.u32(sub.n_components)
    w.f64_array(sub.eigenvalues)
    w.complex_f64_array(sub.basis)
    for wt, bias in zip(model.weights, model.biases):
        w.u32(wt.shape[0])
        w.u32(wt.shape[1])
        w.f64_array(wt)
        w.f64_array(bias)
    w.json_block(
        {
            "target_scale": [float(v) for v in model.target_scale],
            "train_config": model.train_config_echo,
        }
    )
    w.save(path)


def load_model(path):
    r = open_payload(path, MAGIC, VERSION)
    n_dims = r.u32()
    if not 3 <= n_dims <= 64:
        raise FormatError(f"{path}: implausible layout length {n_dims}")
    layout = [r.u32() for _ in range(n_dims)]
    fixed = r.u8()
    if fixed != 1:
        raise FormatError(f"{path}: unsupported layer-1 flag {fixed}")
    n_frames = r.u32()
    s = r.u32()
    if (n_frames, s) != (layout[0], layout[1]):
        raise FormatError(f"{path}: subspace block disagrees with layout")
    eigenvalues = r.f64_array(s)
    basis = r.complex_f64_array(n_frames * s).reshape(n_frames, s)
    weights, biases = [], []
    for _ in range(n_dims - 2):
        rows = r.u32()
        cols = r.u32()
        weights.append(r.f64_array(rows * cols).reshape(rows, cols))
        biases.append(r.f64_array(rows))
    meta = r.json_block()
    r.expect_end()
    expect = layout[1:]
    got = [layout[1]] + [w.shape[0] for w in weights]
    if got != expect:
        raise FormatError(f"{path}: layer shapes {got} disagree with layout {expect}")
    return MlpModel(
        Subspace(basis, eigenvalues),
        weights,
        biases,
        np.asarray(meta["target_scale"], dtype=np.float64),
        meta.get("train_config"),
    )
