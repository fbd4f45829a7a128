"""Minimal flux-tunable qubit with dispersive readout, plus the bias source.

The qubit is a two-level system tracked as a Bloch vector with ``z = +1``
for the ground state. Drive is piecewise constant in the rotating frame of
the drive tone; each segment is an exact SU(2) rotation followed by T1 / T2
damping.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfinv

from .fidelity_budget import PHI0_WB, pauli_exponential
from .timing_fabric import _rng


@dataclass(frozen=True)
class QubitParams:
    f_min_hz: float = 1.82e9
    f_max_hz: float = 4.5e9
    sweet_spot_volts: float | None = None
    t1_s: float = 90e-6
    t2_star_s: float = 19e-6
    f_r_hz: float = 7.0e9
    kappa_hz: float = 1.0e6
    chi_hz: float = 0.5e6
    # notch depth of the resonator dip, kappa_ext / kappa
    coupling_depth: float = 0.9
    coupling_g_hz: float = 100e6
    r_ohm: float = 1e3
    m_henry: float = 2e-12
    # Rabi rate per unit drive amplitude (full-scale), rad/s
    rabi_per_amplitude: float = 2 * np.pi * 50e6
    qnd_fidelity: float = 1.0

    def __post_init__(self):
        if self.t2_star_s > 2 * self.t1_s:
            raise ValueError("T2* cannot exceed 2 T1")
        if self.kappa_hz <= 0 or self.chi_hz <= 0:
            raise ValueError("kappa and chi must be positive")
        if self.f_max_hz < self.f_min_hz:
            raise ValueError("f_max_hz must be >= f_min_hz")
        if self.sweet_spot_volts is None:
            object.__setattr__(self, "sweet_spot_volts", self.flux_period_volts / 2)

    @property
    def flux_period_volts(self) -> float:
        """Bias voltage per flux quantum through the R / M bias line."""
        return PHI0_WB * self.r_ohm / self.m_henry

    @property
    def pure_dephasing_rate(self) -> float:
        return 1 / self.t2_star_s - 1 / (2 * self.t1_s)


def flux_quanta(bias_volts, params: QubitParams):
    return np.asarray(bias_volts) * params.m_henry / (params.r_ohm * PHI0_WB)


def qubit_frequency(bias_volts, params: QubitParams = QubitParams()):
    """Qubit frequency vs bias: periodic in flux, minimum at the sweet spot."""
    x = 2 * np.pi * (np.asarray(bias_volts) - params.sweet_spot_volts) / params.flux_period_volts
    return params.f_min_hz + (params.f_max_hz - params.f_min_hz) * (1 - np.cos(x)) / 2


def qubit_frequency_slope(bias_volts, params: QubitParams = QubitParams()):
    """df/dV in Hz per volt."""
    p = params.flux_period_volts
    x = 2 * np.pi * (np.asarray(bias_volts) - params.sweet_spot_volts) / p
    return (params.f_max_hz - params.f_min_hz) * np.pi / p * np.sin(x)


def resonator_center(state, params: QubitParams = QubitParams(), bias_volts=None):
    """Resonator frequency for a qubit state, with an optional flux-dependent pull."""
    center = params.f_r_hz + params.chi_hz * (2 * np.asarray(state) - 1)
    if bias_volts is not None:
        g2 = params.coupling_g_hz ** 2
        pull = g2 / (params.f_r_hz - qubit_frequency(bias_volts, params))
        center = center + pull - g2 / (params.f_r_hz - params.f_min_hz)
    return center


def resonator_response(probe_hz, state, params: QubitParams = QubitParams(), bias_volts=None):
    """Complex transmission S21 of a notch-type resonator (Lorentzian dip)."""
    x = 2 * (np.asarray(probe_hz) - resonator_center(state, params, bias_volts)) / params.kappa_hz
    return 1 - params.coupling_depth / (1 + 1j * x)


# -- evolution -------------------------------------------------------------------

@dataclass(frozen=True)
class DriveSegment:
    """Constant drive over ``duration_s`` (amplitude in full-scale units)."""

    duration_s: float
    amplitude: float = 0.0
    phase_rad: float = 0.0
    detuning_hz: float = 0.0


def so3_from_su2(u: np.ndarray) -> np.ndarray:
    """Bloch-sphere rotation matrix of a 2x2 unitary."""
    paulis = (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.array([[1, 0], [0, -1]]))
    r = np.empty((3, 3))
    for i, si in enumerate(paulis):
        for j, sj in enumerate(paulis):
            r[i, j] = 0.5 * np.real(np.trace(si @ u @ sj @ u.conj().T))
    return r


def _rotation_batch(ax, ay, az, dt):
    """Rodrigues rotation matrices for angular-velocity vectors (batched)."""
    w = np.stack(np.broadcast_arrays(ax, ay, az), axis=-1).astype(float)
    norm = np.linalg.norm(w, axis=-1)
    angle = norm * dt
    safe = np.where(norm > 0, norm, 1.0)
    k = w / safe[..., None]
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    c, s = np.cos(angle), np.sin(angle)
    cc = 1 - c
    r = np.empty(w.shape[:-1] + (3, 3))
    r[..., 0, 0] = c + kx * kx * cc
    r[..., 0, 1] = kx * ky * cc - kz * s
    r[..., 0, 2] = kx * kz * cc + ky * s
    r[..., 1, 0] = ky * kx * cc + kz * s
    r[..., 1, 1] = c + ky * ky * cc
    r[..., 1, 2] = ky * kz * cc - kx * s
    r[..., 2, 0] = kz * kx * cc - ky * s
    r[..., 2, 1] = kz * ky * cc + kx * s
    r[..., 2, 2] = c + kz * kz * cc
    return r


def segment_unitary(seg: DriveSegment, params: QubitParams, extra_detuning_hz: float = 0.0):
    """Exact 2x2 propagator of one segment in the drive's rotating frame."""
    omega = params.rabi_per_amplitude * seg.amplitude
    delta = 2 * np.pi * (seg.detuning_hz + extra_detuning_hz)
    t = seg.duration_s
    return pauli_exponential(omega * np.cos(seg.phase_rad) * t / 2,
                             omega * np.sin(seg.phase_rad) * t / 2, -delta * t / 2)


def evolve(state, segments: Sequence[DriveSegment], params: QubitParams = QubitParams(),
           seed=None, *, extra_detuning_hz=0.0, max_step_s: float = 1e-9,
           decoherence: bool = True) -> np.ndarray:
    """Propagate Bloch vector(s) through drive segments.

    ``extra_detuning_hz`` may be an array (one quasi-static detuning per
    shot); the result then has shape ``(shots, 3)``. Driven segments longer
    than ``max_step_s`` are rejected because damping is applied after each
    rotation. ``seed`` is accepted for interface symmetry; noise enters only
    through ``extra_detuning_hz``.
    """
    del seed
    extra = np.asarray(extra_detuning_hz, dtype=float)
    r = np.broadcast_to(np.asarray(state, dtype=float), extra.shape + (3,)).copy()
    g1 = 1 / params.t1_s
    g2 = 1 / params.t2_star_s
    for seg in segments:
        if seg.duration_s < 0:
            raise ValueError("segment duration must be >= 0")
        if seg.amplitude != 0 and seg.duration_s > max_step_s * (1 + 1e-9):
            raise ValueError(f"driven segment of {seg.duration_s:g} s exceeds the "
                             f"{max_step_s:g} s step limit")
        omega = params.rabi_per_amplitude * seg.amplitude
        delta = 2 * np.pi * (seg.detuning_hz + extra)
        rot = _rotation_batch(omega * np.cos(seg.phase_rad), omega * np.sin(seg.phase_rad),
                              -delta, seg.duration_s)
        r = np.einsum("...ij,...j->...i", rot, r)
        if decoherence:
            e1 = np.exp(-seg.duration_s * g1)
            e2 = np.exp(-seg.duration_s * g2)
            r[..., 0] *= e2
            r[..., 1] *= e2
            r[..., 2] = 1 - (1 - r[..., 2]) * e1
    return r


def excited_probability(state) -> np.ndarray:
    return (1 - np.asarray(state)[..., 2]) / 2


def ground_probability(state) -> np.ndarray:
    return (1 + np.asarray(state)[..., 2]) / 2


def pulse_segments(envelope, sample_rate_hz: float, phase_rad: float = 0.0,
                   detuning_hz: float = 0.0, scale: float = 1.0) -> list[DriveSegment]:
    """One segment per envelope sample; runs of zeros merge into a single wait."""
    dt = 1.0 / sample_rate_hz
    env = np.asarray(envelope, dtype=float) * scale
    out: list[DriveSegment] = []
    idle = 0
    for a in env:
        if a == 0:
            idle += 1
            continue
        if idle:
            out.append(DriveSegment(idle * dt, 0.0, phase_rad, detuning_hz))
            idle = 0
        out.append(DriveSegment(dt, float(a), phase_rad, detuning_hz))
    if idle:
        out.append(DriveSegment(idle * dt, 0.0, phase_rad, detuning_hz))
    return out


# -- readout -------------------------------------------------------------------------

@dataclass(frozen=True)
class ReadoutPulse:
    probe_hz: float = 7.0e9 - 0.5e6
    if_hz: float = 250e6
    duration_s: float = 48e-9
    amplitude_volts: float = 0.1
    noise_sigma_volts: float = 0.0
    sample_rate_hz: float = 1e9

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


def readout_points(readout: ReadoutPulse, params: QubitParams = QubitParams(), bias_volts=None):
    """Ideal complex IF amplitude (volts) for ground and excited."""
    return tuple(readout.amplitude_volts * resonator_response(
        readout.probe_hz, s, params, bias_volts) for s in (0, 1))


def readout_fidelity(readout: ReadoutPulse, params: QubitParams = QubitParams(),
                     bias_volts=None) -> float:
    """Assignment fidelity of a midpoint threshold for two integrated Gaussian blobs.

    The IF tone is summed coherently over the record, so per-sample noise
    ``sigma`` on each quadrature gives ``sigma * sqrt(N)`` on the integrated
    point, against a separation of ``N * |s_e - s_g|``.
    """
    g, e = readout_points(readout, params, bias_volts)
    n = readout.n_samples
    if readout.noise_sigma_volts == 0:
        return 1.0
    sep = n * abs(e - g)
    sigma = readout.noise_sigma_volts * np.sqrt(n)
    return float(0.5 * (1 + erf(sep / (2 * np.sqrt(2) * sigma))))


def noise_for_fidelity(target: float, readout: ReadoutPulse,
                       params: QubitParams = QubitParams()) -> float:
    """Per-sample noise sigma (V) at which :func:`readout_fidelity` equals ``target``."""
    if not 0.5 < target < 1:
        raise ValueError("target fidelity must be in (0.5, 1)")
    g, e = readout_points(readout, params)
    n = readout.n_samples
    sep = n * abs(e - g)
    return float(sep / (2 * np.sqrt(2) * erfinv(2 * target - 1)) / np.sqrt(n))


@dataclass(frozen=True)
class Measurement:
    states: np.ndarray
    i_volts: np.ndarray
    q_volts: np.ndarray
    post_state: np.ndarray


def measure(state, readout: ReadoutPulse, params: QubitParams = QubitParams(), seed=None,
            *, bias_volts=None) -> Measurement:
    """Projective measurement of Bloch vector(s) with an emitted IF readout record.

    ``state`` may be a single vector or a batch ``(shots, 3)``. Each shot
    collapses with Born probabilities, and the IF tone carries the resonator
    response of the collapsed state plus white Gaussian noise.
    """
    rng = _rng(seed)
    st = np.atleast_2d(np.asarray(state, dtype=float))
    p_exc = excited_probability(st)
    outcome = (rng.random(p_exc.shape) < p_exc).astype(int)
    n = readout.n_samples
    t = np.arange(n) / readout.sample_rate_hz
    amp = readout.amplitude_volts * resonator_response(readout.probe_hz, outcome, params, bias_volts)
    carrier = np.exp(2j * np.pi * readout.if_hz * t)
    sig = amp[:, None] * carrier[None, :]
    i = sig.real
    q = sig.imag
    if readout.noise_sigma_volts:
        i = i + readout.noise_sigma_volts * rng.standard_normal(i.shape)
        q = q + readout.noise_sigma_volts * rng.standard_normal(q.shape)
    post_outcome = outcome
    if params.qnd_fidelity < 1:
        flip = rng.random(outcome.shape) >= params.qnd_fidelity
        post_outcome = np.where(flip, 1 - outcome, outcome)
    post = np.zeros(st.shape)
    post[:, 2] = 1 - 2 * post_outcome
    return Measurement(outcome, i, q, post)


# -- bias voltage generator ---------------------------------------------------------

BVG_RANGE_VOLTS = 5.0
BVG_BITS = 20
BVG_LSB = 2 * BVG_RANGE_VOLTS / 2 ** BVG_BITS
# peak-to-peak / rms for Gaussian 0.1-10 Hz noise
PP_TO_RMS = 6.6

# 0.1-10 Hz noise of the output DAC, amplifier and voltage reference (V p-p)
BVG_NOISE_COMPONENTS_PP = (0.6e-6, 0.66e-6, 1.2e-6)


def combine_noise_pp(components, rule: str = "rss") -> float:
    c = np.asarray(components, dtype=float)
    if rule == "rss":
        return float(np.sqrt(np.sum(c ** 2)))
    if rule == "linear":
        return float(c.sum())
    raise ValueError(f"unknown combination rule {rule!r}")


@dataclass(frozen=True)
class BvgModel:
    set_voltage: float = 0.0
    noise_pp_volts: float = 0.0
    drift_pp_volts_per_10h: float = 0.0
    resolution_bits: int = BVG_BITS
    temp_coefficient: float = 0.0
    temperature_c: Callable[[np.ndarray], np.ndarray] | None = None
    n_tones: int = 200
    band_hz: tuple[float, float] = (0.1, 10.0)

    def __post_init__(self):
        if self.noise_pp_volts < 0:
            raise ValueError("noise_pp_volts must be >= 0")
        if abs(self.set_voltage) > BVG_RANGE_VOLTS:
            raise ValueError(f"set voltage {self.set_voltage} V outside +/-{BVG_RANGE_VOLTS} V")

    @classmethod
    def lab_defaults(cls, set_voltage: float = 0.86) -> BvgModel:
        """Component noise budget plus a slow drift sized for a 10 h run."""
        return cls(set_voltage=set_voltage,
                   noise_pp_volts=combine_noise_pp(BVG_NOISE_COMPONENTS_PP),
                   drift_pp_volts_per_10h=4.5e-6)

    @property
    def lsb_volts(self) -> float:
        return 2 * BVG_RANGE_VOLTS / 2 ** self.resolution_bits

    @property
    def noise_rms_volts(self) -> float:
        return self.noise_pp_volts / PP_TO_RMS

    def quantized_set_voltage(self) -> float:
        code = np.rint((self.set_voltage + BVG_RANGE_VOLTS) / self.lsb_volts)
        code = np.clip(code, 0, 2 ** self.resolution_bits - 1)
        return float(code * self.lsb_volts - BVG_RANGE_VOLTS)


def bvg_output(model: BvgModel, t, seed=None):
    """BVG output voltage at time(s) ``t`` (seconds).

    Quantized set point plus 0.1-10 Hz noise synthesized from random-phase
    log-spaced sinusoids (rms = p-p / 6.6), a linear drift and an optional
    temperature term.
    """
    t = np.asarray(t, dtype=float)
    v = np.full(t.shape, model.quantized_set_voltage())
    if model.noise_pp_volts > 0:
        rng = _rng(seed)
        f = np.logspace(np.log10(model.band_hz[0]), np.log10(model.band_hz[1]), model.n_tones)
        ph = rng.uniform(0, 2 * np.pi, model.n_tones)
        amp = model.noise_rms_volts * np.sqrt(2.0 / model.n_tones)
        tt = t.reshape(-1)
        noise = np.zeros(tt.shape)
        for start in range(0, tt.size, 65536):
            chunk = tt[start:start + 65536]
            noise[start:start + 65536] = amp * np.sin(
                2 * np.pi * f[None, :] * chunk[:, None] + ph[None, :]).sum(axis=1)
        v = v + noise.reshape(t.shape)
    if model.drift_pp_volts_per_10h:
        v = v + model.drift_pp_volts_per_10h * t / 36000.0
    if model.temp_coefficient and model.temperature_c is not None:
        v = v + model.temp_coefficient * np.asarray(model.temperature_c(t))
    return v


def quasi_static_detuning(bias_volts: float, bvg: BvgModel, params: QubitParams,
                          shot_times_s, seed=None) -> np.ndarray:
    """Per-shot qubit detuning (Hz) caused by BVG fluctuations about the set point."""
    v = bvg_output(bvg, shot_times_s, seed) - bvg.quantized_set_voltage()
    return qubit_frequency_slope(bias_volts, params) * v


def detuning_sigma(bias_volts: float, bvg: BvgModel, params: QubitParams) -> float:
    """Standard deviation (Hz) of the quasi-static detuning from BVG noise."""
    return float(abs(qubit_frequency_slope(bias_volts, params)) * bvg.noise_rms_volts)
