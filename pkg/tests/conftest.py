"""Shared fixtures.

Small fixtures (60-frame sequences, handfuls of atoms) serve the unit
tests. The full-size fixtures at the bottom are session-scoped and only
built when the acceptance suite asks for them; they dominate the suite's
runtime.
"""

import numpy as np
import pytest

import mrf_forge as m
from mrf_forge.mrfnet import TrainConfig, init_model, make_training_set, train

# --------------------------------------------------------------- small


@pytest.fixture(scope="session")
def small_seq():
    return m.default_sequence(60)


@pytest.fixture(scope="session")
def small_grid():
    return m.ParamGrid(200.0, 300.0, 4, 40.0, 40.0, 3)


@pytest.fixture(scope="session")
def small_dictionary(small_grid, small_seq):
    return m.simulate_dictionary(small_grid, small_seq)


@pytest.fixture(scope="session")
def small_subspace(small_dictionary):
    return m.compute_subspace(small_dictionary, 5, seed=0)


# ---------------------------------------------------------------- mid


@pytest.fixture(scope="session")
def mid_seq():
    return m.default_sequence(240)


@pytest.fixture(scope="session")
def mid_grid():
    # 14 x 10 = 140 atoms spanning most of the default parameter box
    return m.ParamGrid(150.0, 250.0, 14, 30.0, 55.0, 10)


@pytest.fixture(scope="session")
def mid_dictionary(mid_grid, mid_seq):
    return m.simulate_dictionary(mid_grid, mid_seq)


@pytest.fixture(scope="session")
def mid_subspace(mid_dictionary):
    return m.compute_subspace(mid_dictionary, 8, seed=0)


@pytest.fixture(scope="session")
def mid_model(mid_dictionary, mid_subspace):
    """A briefly trained model; enough structure for analysis tests."""
    cfg = TrainConfig(epochs=4, augmentation_factor=5, rng_seed=0)
    model = init_model(
        mid_subspace, (240, 8, 24, 12, 2), seed=0, target_scale=(1000.0, 100.0)
    )
    training = make_training_set(mid_dictionary, mid_subspace, cfg)
    trained, _ = train(model, training, cfg)
    return trained


@pytest.fixture(scope="session")
def untrained_mid_model(mid_subspace):
    return init_model(
        mid_subspace, (240, 8, 24, 12, 2), seed=3, target_scale=(1000.0, 100.0)
    )


# ------------------------------------------------------- full (acceptance)


@pytest.fixture(scope="session")
def full_seq():
    return m.default_sequence(1000)


@pytest.fixture(scope="session")
def full_grid():
    return m.build_grid()


@pytest.fixture(scope="session")
def full_dictionary(full_grid, full_seq):
    return m.simulate_dictionary(full_grid, full_seq)


@pytest.fixture(scope="session")
def full_subspace(full_dictionary):
    return m.compute_subspace(full_dictionary, 10, seed=0)


@pytest.fixture(scope="session")
def coarse_grid():
    # T1 100:100:4000, T2 20:20:600 -> 40 x 30 = 1200 atoms
    return m.build_grid((100.0, 100.0, 4000.0), (20.0, 20.0, 600.0))


@pytest.fixture(scope="session")
def coarse_dictionary(coarse_grid, full_seq):
    return m.simulate_dictionary(coarse_grid, full_seq)


@pytest.fixture(scope="session")
def coarse_subspace(coarse_dictionary):
    return m.compute_subspace(coarse_dictionary, 10, seed=0)


@pytest.fixture(scope="session")
def coarse_train_config():
    return TrainConfig(
        batch_size=50,
        epochs=30,
        step_size=1e-2,
        decay=0.8,
        snr_db_range=(40.0, 60.0),
        augmentation_factor=20,
        rng_seed=0,
    )


@pytest.fixture(scope="session")
def coarse_model(coarse_dictionary, coarse_subspace, coarse_train_config):
    """The scaled-down training run shared by the acceptance suite."""
    model = init_model(coarse_subspace, (1000, 10, 200, 30, 2), seed=0)
    training = make_training_set(
        coarse_dictionary, coarse_subspace, coarse_train_config
    )
    trained, history = train(model, training, coarse_train_config)
    trained.loss_history = history
    return trained


def noisy_held_out_atoms(dictionary, snr_db, count, seed):
    """Unit atoms + fixed-SNR complex noise, with their true (t1, t2)."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(dictionary.n_atoms, size=count, replace=False)
    atoms = dictionary.atoms[idx].astype(np.complex128)
    n_frames = atoms.shape[1]
    sigma = 1.0 / np.sqrt(n_frames * 10.0 ** (snr_db / 10.0))
    noise = sigma / np.sqrt(2.0) * (
        rng.standard_normal(atoms.shape) + 1j * rng.standard_normal(atoms.shape)
    )
    return atoms + noise, dictionary.grid.entries()[idx], idx
