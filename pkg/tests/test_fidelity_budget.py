import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import unitary_group

from qcsim.fidelity_budget import (
    SIGMA_I,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    BiasBudget,
    NonUnitaryError,
    SpuriousDriveSpec,
    Unitary2,
    bias_precision,
    bias_sweep,
    flux_precision_from_voltage,
    gate_fidelity,
    jitter_for_fidelity,
    jitter_sweep,
    jitter_to_fidelity,
    pauli_exponential,
    phase_for_fidelity,
    rotation_unitary,
    sfdr_sweep,
    spurious_fidelity,
    worst_case_spurious_fidelity,
)

angles = st.floats(-10, 10, allow_nan=False)


def random_unitary(seed):
    return Unitary2(unitary_group.rvs(2, random_state=seed))


def taylor_expm(a, terms=40):
    out = np.eye(2, dtype=complex)
    term = np.eye(2, dtype=complex)
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


# six Pauli eigenstates form a state 2-design: their average equals the Haar average
PAULI_STATES = [np.array(v, dtype=complex) / np.linalg.norm(v) for v in
                ([1, 0], [0, 1], [1, 1], [1, -1], [1, 1j], [1, -1j])]


def design_fidelity(u1, u2):
    m = u2.matrix.conj().T @ u1.matrix
    return np.mean([abs(s.conj() @ m @ s) ** 2 for s in PAULI_STATES])


def test_unitary_rejects_non_unitary():
    with pytest.raises(NonUnitaryError):
        Unitary2([[1, 1], [0, 1]])
    with pytest.raises(NonUnitaryError):
        Unitary2(np.eye(3))


def test_rotation_identity_and_pi():
    assert np.allclose(rotation_unitary(0, 1.234).matrix, SIGMA_I, atol=1e-15)
    assert np.allclose(rotation_unitary(np.pi, 0).matrix, -1j * SIGMA_X, atol=1e-15)


def test_rotation_matches_series_exponential():
    gen = -1j * (np.pi / 4) * (np.cos(np.pi / 2) * SIGMA_X + np.sin(np.pi / 2) * SIGMA_Y)
    assert np.max(np.abs(rotation_unitary(np.pi / 2, np.pi / 2).matrix - taylor_expm(gen))) < 1e-14


@given(angles, angles, angles)
def test_pauli_exponential_matches_expm(a, b, c):
    ref = expm(-1j * (a * SIGMA_X + b * SIGMA_Y + c * SIGMA_Z))
    assert np.max(np.abs(pauli_exponential(a, b, c) - ref)) < 1e-11


def test_gate_fidelity_identical():
    u = rotation_unitary(1.1, 0.3)
    assert gate_fidelity(u, u) == 1.0


def test_phase_error_fidelity_figure():
    f = gate_fidelity(rotation_unitary(np.pi, 0.00387), rotation_unitary(np.pi, 0))
    assert abs(f - 0.99999) < 1e-6
    assert f == pytest.approx((2 + 4 * np.cos(0.00387) ** 2) / 6, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_gate_fidelity_equals_state_average(seed):
    u1, u2 = random_unitary(seed), random_unitary(seed + 100)
    assert gate_fidelity(u1, u2) == pytest.approx(design_fidelity(u1, u2), abs=1e-12)


def test_gate_fidelity_haar_monte_carlo():
    u1, u2 = random_unitary(7), random_unitary(8)
    rng = np.random.default_rng(0)
    z = rng.standard_normal((200_000, 2)) + 1j * rng.standard_normal((200_000, 2))
    psi = z / np.linalg.norm(z, axis=1, keepdims=True)
    m = u2.matrix.conj().T @ u1.matrix
    vals = np.abs(np.einsum("ni,ij,nj->n", psi.conj(), m, psi)) ** 2
    err = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - gate_fidelity(u1, u2)) < 3 * err


@settings(max_examples=60)
@given(st.integers(0, 2**31), st.integers(0, 2**31), st.integers(0, 2**31))
def test_gate_fidelity_symmetry_invariance_and_bounds(s1, s2, s3):
    u1, u2, v = random_unitary(s1), random_unitary(s2), random_unitary(s3)
    f = gate_fidelity(u1, u2)
    assert 1 / 3 - 1e-12 <= f <= 1.0
    assert f == pytest.approx(gate_fidelity(u2, u1), abs=1e-12)
    assert f == pytest.approx(gate_fidelity(v @ u1, v @ u2), abs=1e-12)


@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-np.pi, np.pi))
def test_rotation_composition(t1, t2, phi):
    lhs = (rotation_unitary(t1, phi) @ rotation_unitary(t2, phi)).matrix
    assert np.max(np.abs(lhs - rotation_unitary(t1 + t2, phi).matrix)) < 1e-12


def test_jitter_zero_is_perfect():
    assert jitter_to_fidelity(0.0, 100e6) == (0.0, 1.0)


def test_jitter_inverse_solve():
    assert jitter_for_fidelity(0.99999, 100e6) * 1e12 == pytest.approx(6.2, abs=0.05)


@given(st.floats(0.34, 1.0))
def test_jitter_round_trip(target):
    j = jitter_for_fidelity(target, 100e6)
    _, f = jitter_to_fidelity(j, 100e6)
    assert f == pytest.approx(target, abs=1e-12)


@pytest.mark.parametrize("bad", [1 / 3, 0.2, 1.01])
def test_phase_for_fidelity_range(bad):
    with pytest.raises(ValueError):
        phase_for_fidelity(bad)


def test_jitter_requires_positive_if():
    with pytest.raises(ValueError):
        jitter_to_fidelity(1e-12, 0)


def test_spurious_spec_invariants():
    s = SpuriousDriveSpec.from_sfdr(-40)
    assert s.m == pytest.approx(0.01)
    assert s.sfdr_dbc == pytest.approx(-40)
    assert s.gate_time_s == pytest.approx(10e-9)
    with pytest.raises(ValueError):
        SpuriousDriveSpec(-0.1)
    with pytest.raises(ValueError):
        SpuriousDriveSpec(0.1, rabi_rad_s=0)


def test_spurious_zero_m():
    assert spurious_fidelity(SpuriousDriveSpec(0.0)) == 1.0
    assert worst_case_spurious_fidelity(SpuriousDriveSpec(0.0))[0] == 1.0


def test_spurious_matches_expm_oracle():
    s = SpuriousDriveSpec(0.05, omega_if_rad_s=2 * np.pi * 87e6)
    t = s.gate_time_s
    u1 = expm(-1j * (s.omega_if_rad_s * SIGMA_Z / 2 + s.m * s.rabi_rad_s * SIGMA_X / 2) * t)
    u2 = expm(-1j * s.omega_if_rad_s * SIGMA_Z / 2 * t)
    ref = (2 + abs(np.trace(u2.conj().T @ u1)) ** 2) / 6
    assert spurious_fidelity(s) == pytest.approx(ref, abs=1e-13)


@pytest.mark.parametrize("m", [1e-3, 3e-3, 1e-2])
def test_commensurate_echo_bound(m):
    s = SpuriousDriveSpec(m)
    assert s.if_phase_rad == pytest.approx(2 * np.pi)
    ratio = m * s.rabi_rad_s / s.omega_if_rad_s
    assert spurious_fidelity(s) >= 1 - 10 * ratio ** 4


def test_worst_case_at_minus_40():
    f, psi = worst_case_spurious_fidelity(SpuriousDriveSpec.from_sfdr(-40))
    assert 0.99997 <= f <= 0.999995
    assert 2 * np.pi <= psi < 4 * np.pi


def test_worst_case_is_a_minimum_over_the_turn():
    spec = SpuriousDriveSpec.from_sfdr(-35)
    f, _ = worst_case_spurious_fidelity(spec)
    for w in np.linspace(2 * np.pi * 100e6, 2 * np.pi * 200e6, 40, endpoint=False):
        assert spurious_fidelity(SpuriousDriveSpec(spec.m, omega_if_rad_s=w)) >= f - 1e-12


def test_worst_case_monotone_in_m():
    ms = np.logspace(-4, -1, 20)
    f = [worst_case_spurious_fidelity(SpuriousDriveSpec(m))[0] for m in ms]
    assert all(b <= a + 1e-15 for a, b in zip(f, f[1:]))


def test_bias_precision():
    dv = bias_precision(BiasBudget())
    assert dv * 1e6 == pytest.approx(10.339169, abs=1e-6)
    assert round(dv * 1e6) == 10
    assert bias_precision(BiasBudget(r_ohm=2e3)) == pytest.approx(2 * dv)
    assert flux_precision_from_voltage(dv) == pytest.approx(1e-5)


def test_bias_budget_rejects_nonpositive():
    with pytest.raises(ValueError):
        BiasBudget(m_henry=0)
    with pytest.raises(ValueError):
        flux_precision_from_voltage(1e-6, m_henry=0)


def test_sweeps_rows():
    assert [r["fidelity"] for r in jitter_sweep([0.0])] == [1.0]
    rows = sfdr_sweep([-60, -40])
    assert rows[0]["fidelity_worst"] >= rows[1]["fidelity_worst"]
    assert bias_sweep([10.339169e-6])[0]["flux_precision"] == pytest.approx(1e-5, rel=1e-6)
