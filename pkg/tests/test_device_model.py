import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcsim.device_model import (
    BVG_LSB,
    BVG_NOISE_COMPONENTS_PP,
    BvgModel,
    DriveSegment,
    QubitParams,
    ReadoutPulse,
    bvg_output,
    combine_noise_pp,
    detuning_sigma,
    evolve,
    excited_probability,
    measure,
    noise_for_fidelity,
    pulse_segments,
    quasi_static_detuning,
    qubit_frequency,
    qubit_frequency_slope,
    readout_fidelity,
    readout_points,
    resonator_center,
    resonator_response,
    segment_unitary,
    so3_from_su2,
)
from qcsim.fitting import fit_decaying_cosine

P = QubitParams()
GROUND = np.array([0.0, 0.0, 1.0])


def pi_segments(fraction=1.0, phase=0.0):
    # 2 pi 50 MHz at full scale: a pi pulse is 10 ns
    n = int(round(10 * fraction))
    return [DriveSegment(1e-9, 1.0, phase)] * n


# -- flux tuning and resonator ---------------------------------------------------------

def test_param_invariants():
    with pytest.raises(ValueError):
        QubitParams(t1_s=10e-6, t2_star_s=30e-6)
    with pytest.raises(ValueError):
        QubitParams(kappa_hz=0)


def test_flux_period_from_bias_line():
    assert P.flux_period_volts == pytest.approx(2.067833848e-15 * 1e3 / 2e-12, rel=1e-9)


@given(st.floats(-5, 5))
def test_frequency_periodic_and_symmetric(dv):
    s, per = P.sweet_spot_volts, P.flux_period_volts
    f = qubit_frequency(s + dv)
    assert f == pytest.approx(qubit_frequency(s + dv + per), abs=1e-3)
    assert f == pytest.approx(qubit_frequency(s - dv), abs=1e-3)
    assert P.f_min_hz - 1e-3 <= f <= P.f_max_hz + 1e-3


def test_sweet_spot_is_flat_minimum():
    s = P.sweet_spot_volts
    assert qubit_frequency(s) == pytest.approx(P.f_min_hz)
    assert qubit_frequency_slope(s) == pytest.approx(0, abs=1e-3)
    h = 1e-6
    num = (qubit_frequency(s + 0.1 + h) - qubit_frequency(s + 0.1 - h)) / (2 * h)
    assert qubit_frequency_slope(s + 0.1) == pytest.approx(num, rel=1e-6)


def test_far_off_resonance_transmits():
    for state in (0, 1):
        far = resonator_center(state) + 100 * P.kappa_hz
        assert abs(resonator_response(far, state)) >= 0.999


def test_lorentzian_phase_oracle():
    probe = P.f_r_hz - P.chi_hz
    for state in (0, 1):
        x = 2 * (probe - resonator_center(state)) / P.kappa_hz
        # 1 - d / (1 + jx) = (1 - d + x^2 + j d x) / (1 + x^2)
        ref = np.arctan2(P.coupling_depth * x, 1 - P.coupling_depth + x * x)
        assert np.angle(resonator_response(probe, state)) == pytest.approx(ref, abs=1e-12)


def test_dip_moves_with_bias():
    s = P.sweet_spot_volts
    assert resonator_center(0, P, s) == pytest.approx(resonator_center(0))
    assert resonator_center(0, P, s + 0.2) > resonator_center(0, P, s)


# -- evolution ----------------------------------------------------------------------------

def test_segment_unitary_is_su2_rotation():
    u = segment_unitary(DriveSegment(3e-9, 0.4, 0.7, 2e6), P)
    r = so3_from_su2(u)
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1)
    seg = DriveSegment(3e-9, 0.4, 0.7, 2e6)
    direct = evolve(GROUND, [seg], P, decoherence=False, max_step_s=3e-9)
    assert np.allclose(direct, r @ GROUND, atol=1e-12)


def test_pi_pulse_inverts():
    out = evolve(GROUND, pi_segments(), P, decoherence=False)
    assert np.allclose(out, [0, 0, -1], atol=1e-12)


def test_free_decay_one_over_e():
    excited = np.array([0.0, 0.0, -1.0])
    out = evolve(excited, [DriveSegment(P.t1_s)], P)
    assert excited_probability(out) == pytest.approx(np.exp(-1), abs=1e-6)


def test_ramsey_fringe_frequency():
    taus = np.linspace(0, 8e-6, 161)
    pe = []
    for tau in taus:
        segs = pi_segments(0.5) + [DriveSegment(tau, detuning_hz=0.5e6)] + pi_segments(0.5)
        pe.append(excited_probability(evolve(GROUND, segs, P)))
    fit = fit_decaying_cosine(taus, np.array(pe))
    assert fit["f"] == pytest.approx(0.5e6, rel=0.01)
    assert fit["T"] == pytest.approx(P.t2_star_s, rel=0.01)


def test_long_driven_segment_rejected():
    with pytest.raises(ValueError, match="step limit"):
        evolve(GROUND, [DriveSegment(2e-9, 0.1)], P)
    evolve(GROUND, [DriveSegment(2e-6)], P)


def test_batched_detuning_shape():
    out = evolve(GROUND, pi_segments(0.5) + [DriveSegment(1e-6)], P,
                 extra_detuning_hz=np.array([0.0, 1e5, 2e5]))
    assert out.shape == (3, 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e-9), st.floats(-1, 1), st.floats(-np.pi, np.pi),
                          st.floats(-5e6, 5e6)), min_size=1, max_size=20),
       st.floats(0, 1), st.floats(0, 2 * np.pi))
def test_bloch_vector_stays_in_ball(segs, theta, phi):
    start = [np.sin(theta * np.pi) * np.cos(phi), np.sin(theta * np.pi) * np.sin(phi),
             np.cos(theta * np.pi)]
    out = evolve(start, [DriveSegment(*s) for s in segs], P)
    assert np.linalg.norm(out) <= 1 + 1e-12
    # populations are a probability distribution
    pe = excited_probability(out)
    assert -1e-12 <= pe <= 1 + 1e-12


def test_pulse_segments_merge_idle_runs():
    segs = pulse_segments([0, 0, 0.5, 0, 0.25, 0, 0], 1e9)
    assert [s.amplitude for s in segs] == [0, 0.5, 0, 0.25, 0]
    assert sum(s.duration_s for s in segs) == pytest.approx(7e-9)


# -- measurement -------------------------------------------------------------------------------

def test_ground_always_reads_ground():
    m = measure(np.tile(GROUND, (200, 1)), ReadoutPulse(), P, seed=0)
    assert not m.states.any()
    assert np.allclose(m.post_state[:, 2], 1)


def test_superposition_statistics():
    plus = np.tile([1.0, 0.0, 0.0], (10_000, 1))
    m = measure(plus, ReadoutPulse(), P, seed=3)
    assert m.states.mean() == pytest.approx(0.5, abs=0.015)


def test_emitted_record_carries_resonator_response():
    r = ReadoutPulse()
    m = measure([GROUND, [0, 0, -1.0]], r, P, seed=0)
    t = np.arange(r.n_samples) / r.sample_rate_hz
    z = (m.i_volts + 1j * m.q_volts) * np.exp(-2j * np.pi * r.if_hz * t)
    g, e = readout_points(r, P)
    assert np.allclose(z.mean(axis=1), [g, e], atol=1e-12)


def test_noise_reproduces_assignment_fidelity():
    base = ReadoutPulse()
    sigma = noise_for_fidelity(0.9, base, P)
    r = ReadoutPulse(noise_sigma_volts=sigma)
    assert readout_fidelity(r, P) == pytest.approx(0.9, abs=1e-9)
    shots = 20_000
    t = np.arange(r.n_samples) / r.sample_rate_hz
    carrier = np.exp(-2j * np.pi * r.if_hz * t)
    g, e = readout_points(r, P)
    axis = (e - g) / abs(e - g)
    mid = (g + e) / 2 * r.n_samples
    correct = 0
    for state, vec in ((0, GROUND), (1, [0, 0, -1.0])):
        m = measure(np.tile(vec, (shots, 1)), r, P, seed=state)
        pts = ((m.i_volts + 1j * m.q_volts) @ carrier)
        proj = np.real((pts - mid) * np.conj(axis))
        correct += np.sum((proj > 0) == bool(state))
    assert correct / (2 * shots) == pytest.approx(0.9, abs=0.01)


def test_qnd_repeat_agrees():
    plus = np.tile([1.0, 0.0, 0.0], (2000, 1))
    first = measure(plus, ReadoutPulse(), P, seed=1)
    second = measure(first.post_state, ReadoutPulse(), P, seed=2)
    assert np.array_equal(first.states, second.states)
    leaky = QubitParams(qnd_fidelity=0.9)
    third = measure(measure(plus, ReadoutPulse(), leaky, seed=1).post_state, ReadoutPulse(),
                    leaky, seed=2)
    assert 0.05 < np.mean(first.states != third.states) < 0.15


def test_noise_for_fidelity_range():
    with pytest.raises(ValueError):
        noise_for_fidelity(0.4, ReadoutPulse())


# -- bias voltage generator -------------------------------------------------------------

def test_bvg_resolution():
    assert BVG_LSB * 1e6 == pytest.approx(9.54, abs=0.01)
    m = BvgModel(set_voltage=0.86)
    assert abs(m.quantized_set_voltage() - 0.86) <= BVG_LSB / 2
    assert np.all(bvg_output(m, np.linspace(0, 10, 11)) == m.quantized_set_voltage())


def test_bvg_noise_budget():
    rss = combine_noise_pp(BVG_NOISE_COMPONENTS_PP)
    assert rss * 1e6 == pytest.approx(1.495, abs=0.001)
    # the quoted 1.6 uV total sits between the quadrature and linear sums
    assert rss < 1.6e-6 < combine_noise_pp(BVG_NOISE_COMPONENTS_PP, "linear")
    with pytest.raises(ValueError):
        combine_noise_pp([1.0], "max")


def test_bvg_ten_hour_excursion():
    t = np.arange(0, 36_000, 1.0)
    ptp = np.ptp(bvg_output(BvgModel.lab_defaults(), t, seed=0))
    assert ptp * 1e6 == pytest.approx(6.0, rel=0.2)


def test_bvg_noise_rms_and_scaling():
    t = np.arange(0, 2000, 0.01)
    base = BvgModel(noise_pp_volts=1.5e-6)
    v1 = bvg_output(base, t, seed=4)
    v2 = bvg_output(BvgModel(noise_pp_volts=3e-6), t, seed=4)
    assert np.std(v1) == pytest.approx(base.noise_rms_volts, rel=0.2)
    assert np.std(v2) == pytest.approx(2 * np.std(v1), rel=1e-9)


def test_bvg_range_checked():
    with pytest.raises(ValueError):
        BvgModel(set_voltage=5.5)
    with pytest.raises(ValueError):
        BvgModel(noise_pp_volts=-1)


def test_detuning_tracks_slope():
    bvg = BvgModel.lab_defaults()
    assert detuning_sigma(P.sweet_spot_volts, bvg, P) == pytest.approx(0, abs=1e-3)
    off = P.sweet_spot_volts + 0.2
    d = quasi_static_detuning(off, bvg, P, np.arange(0, 100, 0.05), seed=1)
    assert np.std(d) == pytest.approx(detuning_sigma(off, bvg, P), rel=0.3)
