"""Phase-graph engine checks against independent oracles.

Oracles used here:
- a hand-rolled per-step loop over the public single-state primitives,
  which must reproduce the vectorized batch engine exactly;
- a brute-force isochromat ensemble (many spins, full Bloch rotations);
- closed-form relaxation and rotation algebra on small states.
"""

import numpy as np
import pytest

from mrf_forge.epg import (
    EpgState,
    epg_relax,
    epg_rf,
    epg_shift,
    isochromat_ensemble,
    rf_rotation,
    simulate_fingerprint,
    simulate_fingerprints,
    state_energy,
)
from mrf_forge.sequences import default_sequence


def reference_fingerprint(t1, t2, seq):
    """Primitive-by-primitive simulation: inversion, then per frame
    rotate, relax to the echo, record F+_0, relax out the frame, shift."""
    state = EpgState.equilibrium(seq.max_order)
    state = epg_rf(state, 180.0, seq.rf_phase_deg)
    state = epg_relax(state, seq.ti_ms, t1, t2)
    out = np.empty(seq.n_frames, dtype=np.complex128)
    for t in range(seq.n_frames):
        state = epg_rf(state, seq.flip_deg[t], seq.rf_phase_deg)
        state = epg_relax(state, seq.te_ms, t1, t2)
        out[t] = state.f_plus[0]
        state = epg_relax(state, seq.tr_ms[t] - seq.te_ms, t1, t2)
        state = epg_shift(state)
    return out


def physical_energy(state):
    """RF-invariant norm: |F+|^2 + |F-|^2 + 2|Z|^2 summed over orders."""
    return float(
        np.sum(np.abs(state.f_plus) ** 2)
        + np.sum(np.abs(state.f_minus) ** 2)
        + 2.0 * np.sum(np.abs(state.z) ** 2)
    )


# ------------------------------------------------------------ rotations


def test_rf_rotation_90_about_y_is_the_known_real_matrix():
    r = rf_rotation(90.0, 90.0)
    expected = np.array(
        [[0.5, -0.5, 1.0], [-0.5, 0.5, 1.0], [-0.5, -0.5, 0.0]]
    )
    assert np.allclose(r, expected, atol=1e-15)
    # the engine's real fast path requires quadrature matrices to be real
    assert np.abs(r.imag).max() < 1e-12


def test_rf_rotation_inversion_flips_z():
    state = EpgState.equilibrium(4)
    inverted = epg_rf(state, 180.0, 0.0)
    assert np.allclose(inverted.z[0], -1.0, atol=1e-15)
    assert np.allclose(inverted.f_plus, 0.0, atol=1e-15)
    assert np.allclose(inverted.f_minus, 0.0, atol=1e-15)


def test_rf_rotation_zero_angle_is_identity():
    assert np.allclose(rf_rotation(0.0, 123.0), np.eye(3), atol=1e-15)


def test_rf_preserves_physical_energy_for_random_states():
    rng = np.random.default_rng(7)
    for _ in range(20):
        state = EpgState(
            rng.standard_normal(6) + 1j * rng.standard_normal(6),
            rng.standard_normal(6) + 1j * rng.standard_normal(6),
            rng.standard_normal(6) + 1j * rng.standard_normal(6),
        )
        alpha = rng.uniform(0.0, 180.0)
        phase = rng.uniform(-180.0, 180.0)
        before = physical_energy(state)
        after = physical_energy(epg_rf(state, alpha, phase))
        assert after == pytest.approx(before, rel=1e-12)


# ----------------------------------------------------------- relaxation


def test_relax_closed_form():
    rng = np.random.default_rng(3)
    state = EpgState(
        rng.standard_normal(5) + 1j * rng.standard_normal(5),
        rng.standard_normal(5) + 1j * rng.standard_normal(5),
        rng.standard_normal(5) + 1j * rng.standard_normal(5),
    )
    t1, t2, dt = 900.0, 80.0, 7.0
    out = epg_relax(state, dt, t1, t2)
    e1, e2 = np.exp(-dt / t1), np.exp(-dt / t2)
    assert np.allclose(out.f_plus, state.f_plus * e2, atol=1e-15)
    assert np.allclose(out.f_minus, state.f_minus * e2, atol=1e-15)
    assert np.allclose(out.z[1:], state.z[1:] * e1, atol=1e-15)
    assert out.z[0] == pytest.approx(state.z[0] * e1 + (1 - e1), rel=1e-14)


def test_long_relaxation_returns_to_equilibrium():
    state = epg_rf(EpgState.equilibrium(3), 90.0, 90.0)
    settled = epg_relax(state, 1e6, 800.0, 80.0)
    assert np.allclose(settled.f_plus, 0.0, atol=1e-12)
    assert settled.z[0] == pytest.approx(1.0, abs=1e-12)


def test_relax_composes():
    state = epg_rf(EpgState.equilibrium(3), 35.0, 90.0)
    once = epg_relax(state, 10.0, 700.0, 60.0)
    twice = epg_relax(epg_relax(state, 4.0, 700.0, 60.0), 6.0, 700.0, 60.0)
    for a, b in zip((once.f_plus, once.f_minus, once.z),
                    (twice.f_plus, twice.f_minus, twice.z)):
        assert np.allclose(a, b, atol=1e-15)


@pytest.mark.parametrize("t1, t2", [(0.0, 80.0), (800.0, -1.0), (np.inf, 80.0)])
def test_invalid_relaxation_times_rejected(t1, t2):
    with pytest.raises(ValueError):
        epg_relax(EpgState.equilibrium(2), 1.0, t1, t2)


def test_negative_duration_rejected():
    with pytest.raises(ValueError, match="dt_ms"):
        epg_relax(EpgState.equilibrium(2), -0.5, 800.0, 80.0)


# ---------------------------------------------------------------- shift


def test_shift_moves_orders_and_mirrors_order_zero():
    fp = np.array([1 + 1j, 2.0, 3.0, 0.0])
    fm = np.array([4 - 2j, 5.0, 6.0, 7.0])
    z = np.array([0.5, 0.25, 0.0, 0.0])
    out = epg_shift(EpgState(fp, fm, z))
    assert np.allclose(out.f_plus[1:], [1 + 1j, 2.0, 3.0])
    assert np.allclose(out.f_minus, [5.0, 6.0, 7.0, 0.0])
    assert out.f_plus[0] == np.conj(out.f_minus[0])
    assert np.allclose(out.z, z)


def test_shift_conserves_energy_when_top_orders_are_empty():
    # state_energy counts order 0 once, so a pure spectrum translation
    # with an empty top order must leave it unchanged
    rng = np.random.default_rng(11)
    fp = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    fm = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    fp[-1] = 0.0
    fm[0] = np.conj(fp[0])  # storage convention
    state = EpgState(fp, fm, np.zeros(6))
    shifted = epg_shift(state)
    assert state_energy(shifted) == pytest.approx(state_energy(state), rel=1e-12)


def test_state_energy_decays_under_relaxation():
    state = epg_rf(EpgState.equilibrium(3), 60.0, 90.0)
    e0 = state_energy(state)
    # short relaxation of an excited state loses transverse energy faster
    # than Z_0 regrows
    e1 = state_energy(epg_relax(state, 5.0, 4000.0, 20.0))
    assert e1 < e0


# ----------------------------------------------- batch engine vs oracles


def _mixed_tr_sequence(n_frames, **overrides):
    tr = np.where(np.arange(n_frames) % 2 == 0, 12.0, 14.5)
    return default_sequence(n_frames, tr_ms=tr, **overrides)


def test_batch_engine_matches_primitive_loop_quadrature_phase():
    seq = _mixed_tr_sequence(90)
    for t1, t2 in [(800.0, 80.0), (3000.0, 550.0), (150.0, 30.0)]:
        fast = simulate_fingerprint(t1, t2, seq)
        slow = reference_fingerprint(t1, t2, seq)
        assert np.linalg.norm(fast - slow) <= 1e-12 * np.linalg.norm(slow)


def test_batch_engine_matches_primitive_loop_generic_phase():
    seq = _mixed_tr_sequence(70, rf_phase_deg=37.0)
    fast = simulate_fingerprint(900.0, 110.0, seq)
    slow = reference_fingerprint(900.0, 110.0, seq)
    assert np.linalg.norm(fast - slow) <= 1e-12 * np.linalg.norm(slow)


def test_batch_equals_singletons():
    seq = default_sequence(60)
    t1 = np.array([300.0, 1200.0, 4000.0])
    t2 = np.array([40.0, 90.0, 600.0])
    batch = simulate_fingerprints(t1, t2, seq)
    for i in range(3):
        single = simulate_fingerprint(t1[i], t2[i], seq)
        assert np.array_equal(batch[i], single)


def test_isochromat_oracle_agrees():
    seq = default_sequence(150)
    for t1, t2 in [(780.0, 78.0), (2500.0, 400.0)]:
        epg = simulate_fingerprint(t1, t2, seq)
        iso = isochromat_ensemble(t1, t2, seq, n_spins=600)
        rel = np.linalg.norm(epg - iso) / np.linalg.norm(epg)
        assert rel < 1e-3


def test_truncation_error_saturates():
    t1, t2 = 4000.0, 600.0  # slowest decay: worst case for truncation
    ref = simulate_fingerprint(t1, t2, default_sequence(400, max_order=512))
    coarse = simulate_fingerprint(t1, t2, default_sequence(400, max_order=8))
    mid = simulate_fingerprint(t1, t2, default_sequence(400, max_order=64))
    fine = simulate_fingerprint(t1, t2, default_sequence(400, max_order=256))
    err = lambda f: np.linalg.norm(f - ref) / np.linalg.norm(ref)
    assert err(coarse) > err(mid) > err(fine)
    assert err(fine) < 1e-9


def test_signal_magnitude_bounded_by_unity():
    seq = default_sequence(200)
    fp = simulate_fingerprints([100.0, 4000.0], [20.0, 600.0], seq)
    assert np.max(np.abs(fp)) <= 1.0 + 1e-9


def test_zero_flip_train_gives_zero_signal():
    seq = default_sequence(25, flip_deg=np.zeros(25))
    fp = simulate_fingerprint(500.0, 50.0, seq)
    assert np.allclose(fp, 0.0, atol=1e-15)


def test_isochromat_spin_count_floor():
    with pytest.raises(ValueError, match="n_spins"):
        isochromat_ensemble(800.0, 80.0, default_sequence(10), n_spins=50)


def test_equilibrium_needs_at_least_one_order():
    with pytest.raises(ValueError):
        EpgState.equilibrium(0)


def test_batch_rejects_mismatched_parameter_arrays():
    seq = default_sequence(10)
    with pytest.raises(ValueError):
        simulate_fingerprints([800.0, 900.0], [80.0], seq)
