"""Experiment engine: closes the AWG -> qubit -> DAQ loop and runs experiments.

Every experiment takes a normalized config (see :mod:`qcsim.config`) and
returns a :class:`RunResult`. Random streams are derived from
``(seed, point index)`` so points can be computed in any order.
"""
from __future__ import annotations

import csv
import io
import json
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .awg_engine import (
    DAC_MAX,
    DAC_RATE_HZ,
    Awg,
    MixerParams,
    PrecompensationError,
    PulseEnvelope,
    PulseSequence,
    ScheduleEntry,
    analytic_correction,
    gaussian_envelope,
    leakage_levels,
    precompensate,
)
from .config import config_hash, validate_config
from .device_model import (
    BvgModel,
    DriveSegment,
    QubitParams,
    ReadoutPulse,
    evolve,
    measure,
    noise_for_fidelity,
    pulse_segments,
    quasi_static_detuning,
    qubit_frequency,
)
from .dsp_demod import (
    ADC_RATE_HZ,
    EIGHT_CHANNEL_PLAN_HZ,
    AdcModel,
    DemodConfig,
    IQSampleStream,
    accumulate,
    adc_digitize,
    calibrate_discriminator,
    classify,
    daq_pipeline_latency,
    digital_mix,
    discriminate,
    multi_channel_demod,
)
from .fidelity_budget import bias_sweep, jitter_sweep, sfdr_sweep
from .fitting import FitResult, fit_decaying_cosine, fit_exp_decay
from .timing_fabric import (
    PS_PER_S,
    ClockEdge,
    ClockTopology,
    LatencyComponent,
    LatencyLedger,
    TriggerEvent,
    _rng,
    distribute_clock_many,
    feedback_latency,
    issue_trigger,
)


@dataclass
class RunResult:
    experiment: str
    seed: int
    config_hash: str
    columns: list[str]
    rows: list[dict]
    fit: dict | None = None
    summary: dict = field(default_factory=dict)
    ledger: list[dict] | None = None
    version: str = __version__

    def summary_document(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed,
                "config_hash": self.config_hash, "version": self.version,
                "points": len(self.rows), "fit": self.fit, "summary": self.summary,
                "ledger": self.ledger}


# -- shared construction helpers ----------------------------------------------------

def device_params(cfg: Mapping) -> QubitParams:
    return QubitParams(**cfg.get("device", {}))


def readout_pulse(cfg: Mapping, device: QubitParams) -> ReadoutPulse:
    doc = dict(cfg.get("readout", {}))
    fidelity = doc.pop("assignment_fidelity", None)
    doc.setdefault("probe_hz", device.f_r_hz - device.chi_hz)
    pulse = ReadoutPulse(**doc)
    if fidelity is not None and fidelity < 1:
        pulse = replace(pulse, noise_sigma_volts=noise_for_fidelity(fidelity, pulse, device))
    return pulse


def sweep_values(cfg: Mapping) -> np.ndarray:
    sw = cfg["sweep"]
    return np.linspace(sw["start"], sw["stop"], sw["points"])


def _envelope(name: str, spec: Mapping) -> PulseEnvelope:
    kind = spec.get("kind", "samples")
    if kind == "samples":
        return PulseEnvelope(name, np.asarray(spec["samples"]))
    amp = spec.get("amplitude", DAC_MAX)
    if kind == "square":
        return PulseEnvelope(name, np.full(spec["length"], amp))
    env = gaussian_envelope(name, spec["sigma_samples"], amp)
    # trim or pad symmetric to the requested length
    n = spec["length"]
    s = env.samples
    if s.size > n:
        cut = (s.size - n) // 2
        s = s[cut:cut + n]
    else:
        s = np.pad(s, ((n - s.size) // 2, n - s.size - (n - s.size) // 2))
    return PulseEnvelope(name, s)


def _default_square(name: str, angle_rad: float, device: QubitParams) -> PulseEnvelope:
    n = int(round(angle_rad / (device.rabi_per_amplitude / DAC_RATE_HZ)))
    return PulseEnvelope(name, np.full(max(n, 1), DAC_MAX))


class DriveLine:
    """AWG channel holding calibrated rotation pulses for one qubit.

    Each pulse is an envelope scaled by the schedule so its drive area
    equals the requested rotation angle.
    """

    def __init__(self, cfg: Mapping, device: QubitParams):
        self.device = device
        self.awg = Awg()
        envs = {n: _envelope(n, s) for n, s in cfg.get("envelopes", {}).items()}
        pulses = cfg.get("pulses", {})
        self.handles: dict[str, int] = {}
        self.lengths: dict[str, int] = {}
        for role, angle in (("pi", np.pi), ("half_pi", np.pi / 2)):
            env = envs[pulses[role]] if role in pulses else _default_square(role, angle, device)
            area = env.samples.sum() / DAC_MAX * device.rabi_per_amplitude / DAC_RATE_HZ
            if area <= 0:
                raise ValueError(f"envelope {env.name!r} has no drive area")
            scale = angle / area
            if scale > 1 + 1e-9:
                raise ValueError(f"envelope {env.name!r} cannot reach a {role} rotation "
                                 f"(needs scale {scale:.3f})")
            seq = PulseSequence({env.name: env},
                                (ScheduleEntry(env.name, 0, min(scale, 1.0), role),))
            self.handles[role] = self.awg.load_sequence(seq)
            self.lengths[role] = len(env)

    def segments(self, role: str, trigger: TriggerEvent, phase_rad: float = 0.0,
                 detuning_hz: float = 0.0) -> list[DriveSegment]:
        out = self.awg.render(self.handles[role], trigger, self.lengths[role])
        return pulse_segments(out.codes / DAC_MAX, DAC_RATE_HZ, phase_rad, detuning_hz)


class ReadoutChain:
    """Measurement, ADC, fs/4 demodulation and thresholding for one qubit."""

    def __init__(self, device: QubitParams, pulse: ReadoutPulse, adc: AdcModel = AdcModel(),
                 bias_volts: float | None = None):
        self.device = device
        self.pulse = pulse
        self.adc = adc
        self.bias_volts = bias_volts
        self.demod = DemodConfig(if_frequency_hz=pulse.if_hz, window_samples=pulse.n_samples,
                                 fast_path=pulse.if_hz * 4 == pulse.sample_rate_hz,
                                 sample_rate_hz=pulse.sample_rate_hz)
        g, e = (self.integrate_ideal(s) for s in (0, 1))
        rot, thr = calibrate_discriminator((g.real, g.imag), (e.real, e.imag))
        self.demod = replace(self.demod, rotation_rad=rot, threshold=thr)

    def integrate(self, i_volts, q_volts, seed=None) -> np.ndarray:
        dig = adc_digitize(i_volts, q_volts, self.adc, seed, sample_rate_hz=self.pulse.sample_rate_hz,
                           tone_hz=self.pulse.if_hz)
        i, q = digital_mix(dig.stream, self.demod)
        si, sq = accumulate(i, q, self.demod.window_samples)
        return si[..., 0] + 1j * sq[..., 0]

    def integrate_ideal(self, state: int) -> complex:
        quiet = replace(self.pulse, noise_sigma_volts=0.0)
        bloch = [0.0, 0.0, 1.0 - 2.0 * state]
        m = measure(bloch, quiet, self.device, 0, bias_volts=self.bias_volts)
        return complex(self.integrate(m.i_volts, m.q_volts, 0)[0])

    def excited_fraction(self, bloch, shots: int, seed) -> float:
        rng = _rng(seed)
        st = np.broadcast_to(np.asarray(bloch, dtype=float), (shots, 3))
        m = measure(st, self.pulse, self.device, rng, bias_volts=self.bias_volts)
        z = self.integrate(m.i_volts, m.q_volts, rng)
        return float(np.mean(classify(z.real, z.imag, self.demod.rotation_rad,
                                      self.demod.threshold)))


def _trigger(t_ps: int = 0) -> TriggerEvent:
    return next(e for e in issue_trigger(t_ps, {"AWG": [(0, "drive")]}) if e.level == 2)


# -- qubit experiments ---------------------------------------------------------------

def _shot_detuning(cfg, device, shots, seed) -> np.ndarray | float:
    """Quasi-static detuning per shot from bias-source noise (zero when unconfigured)."""
    bvg_doc = cfg.get("bvg")
    if not bvg_doc:
        return 0.0
    bvg = BvgModel(**bvg_doc)
    bias = cfg.get("bias_volts", device.sweet_spot_volts)
    # shots repeat every 100 us
    times = np.arange(shots) * 100e-6
    return quasi_static_detuning(bias, bvg, device, times, seed)


def _decay_rows(cfg, delays, frac, seed, h, extra=None):
    rows = []
    for k, (d, p) in enumerate(zip(delays, frac)):
        row = {"index": k, "delay_s": float(d), "excited_fraction": float(p)}
        if extra is not None:
            row.update(extra[k])
        row.update(seed=seed, config_hash=h)
        rows.append(row)
    return rows


def run_t1(cfg: Mapping) -> RunResult:
    seed, h = cfg["seed"], config_hash(cfg)
    device = device_params(cfg)
    chain = ReadoutChain(device, readout_pulse(cfg, device))
    drive = DriveLine(cfg, device)
    delays = sweep_values(cfg)
    frac = []
    for k, d in enumerate(delays):
        segs = drive.segments("pi", _trigger()) + [DriveSegment(float(d))]
        bloch = evolve([0, 0, 1], segs, device)
        frac.append(chain.excited_fraction(bloch, cfg["shots"], _rng(seed, k)))
    fit = _safe_fit(fit_exp_decay, delays, frac)
    summary = {"t1_s": fit.params.get("T"), "converged": fit.converged}
    return RunResult("t1", seed, h, ["index", "delay_s", "excited_fraction", "seed", "config_hash"],
                     _decay_rows(cfg, delays, frac, seed, h), fit.as_dict(), summary)


def run_ramsey(cfg: Mapping) -> RunResult:
    seed, h = cfg["seed"], config_hash(cfg)
    device = device_params(cfg)
    chain = ReadoutChain(device, readout_pulse(cfg, device))
    drive = DriveLine(cfg, device)
    delays = sweep_values(cfg)
    det = float(cfg["detuning_hz"])
    frac = []
    for k, d in enumerate(delays):
        extra = _shot_detuning(cfg, device, cfg["shots"], _rng(seed, k, 2))
        segs = (drive.segments("half_pi", _trigger(), detuning_hz=det)
                + [DriveSegment(float(d), detuning_hz=det)]
                + drive.segments("half_pi", _trigger(), detuning_hz=det))
        bloch = evolve([0, 0, 1], segs, device, extra_detuning_hz=extra)
        frac.append(_fraction_batch(chain, bloch, cfg["shots"], _rng(seed, k)))
    fit = _safe_fit(fit_decaying_cosine, delays, frac)
    summary = {"t2_star_s": fit.params.get("T"), "fringe_hz": fit.params.get("f"),
               "detuning_hz": det, "converged": fit.converged}
    return RunResult("ramsey", seed, h,
                     ["index", "delay_s", "excited_fraction", "seed", "config_hash"],
                     _decay_rows(cfg, delays, frac, seed, h), fit.as_dict(), summary)


def _fraction_batch(chain: ReadoutChain, bloch, shots: int, seed) -> float:
    bloch = np.asarray(bloch)
    if bloch.ndim == 1:
        return chain.excited_fraction(bloch, shots, seed)
    rng = _rng(seed)
    m = measure(bloch, chain.pulse, chain.device, rng, bias_volts=chain.bias_volts)
    z = chain.integrate(m.i_volts, m.q_volts, rng)
    return float(np.mean(classify(z.real, z.imag, chain.demod.rotation_rad,
                                  chain.demod.threshold)))


def _safe_fit(fn: Callable, x, y) -> FitResult:
    try:
        return fn(x, y)
    except ValueError as exc:
        return FitResult(fn.__name__.removeprefix("fit_"), {}, converged=False, message=str(exc))


def run_one_tone(cfg: Mapping) -> RunResult:
    """Resonator transmission vs probe frequency with the qubit in ground."""
    seed, h = cfg["seed"], config_hash(cfg)
    device = device_params(cfg)
    base = readout_pulse(cfg, device)
    bias = cfg.get("bias_volts")
    rows = []
    ref = None
    for k, f in enumerate(sweep_values(cfg)):
        pulse = replace(base, probe_hz=float(f))
        chain = _RawChain(device, pulse, bias)
        z = chain.mean_point(cfg["shots"], _rng(seed, k))
        if ref is None:
            ref = base.amplitude_volts * (2 ** 11) * pulse.n_samples
        rows.append({"index": k, "probe_hz": float(f), "i": float(z.real), "q": float(z.imag),
                     "amplitude": float(abs(z) / ref), "phase_rad": float(np.angle(z)),
                     "seed": seed, "config_hash": h})
    amp = np.array([r["amplitude"] for r in rows])
    k_min = int(np.argmin(amp))
    summary = {"dip_hz": rows[k_min]["probe_hz"], "dip_amplitude": float(amp[k_min]),
               "bias_volts": bias}
    return RunResult("one_tone", seed, h, list(rows[0]), rows, None, summary)


class _RawChain(ReadoutChain):
    """Readout chain reporting averaged IQ points instead of thresholded states."""

    def __init__(self, device, pulse, bias_volts=None):
        self.device, self.pulse, self.adc, self.bias_volts = device, pulse, AdcModel(), bias_volts
        self.demod = DemodConfig(if_frequency_hz=pulse.if_hz, window_samples=pulse.n_samples,
                                 fast_path=pulse.if_hz * 4 == pulse.sample_rate_hz,
                                 sample_rate_hz=pulse.sample_rate_hz)

    def mean_point(self, shots: int, seed) -> complex:
        rng = _rng(seed)
        st = np.tile([0.0, 0.0, 1.0], (shots, 1))
        m = measure(st, self.pulse, self.device, rng, bias_volts=self.bias_volts)
        return complex(np.mean(self.integrate(m.i_volts, m.q_volts, rng)))


def run_two_tone(cfg: Mapping) -> RunResult:
    """Excited fraction vs drive frequency after a 500 ns pulse of pi area on resonance."""
    seed, h = cfg["seed"], config_hash(cfg)
    device = device_params(cfg)
    bias = cfg.get("bias_volts", device.sweet_spot_volts)
    chain = ReadoutChain(device, readout_pulse(cfg, device), bias_volts=bias)
    fq = float(qubit_frequency(bias, device))
    drives = sweep_values(cfg)
    # one shot-independent evolution per drive frequency, batched over the sweep
    amp = 2e-2
    segs = [DriveSegment(1e-9, amp)] * 500
    bloch = evolve([0, 0, 1], segs, device, extra_detuning_hz=drives - fq)
    rows = []
    for k, f in enumerate(drives):
        p = chain.excited_fraction(bloch[k], cfg["shots"], _rng(seed, k))
        rows.append({"index": k, "drive_hz": float(f), "excited_fraction": p,
                     "seed": seed, "config_hash": h})
    frac = np.array([r["excited_fraction"] for r in rows])
    summary = {"qubit_hz": fq, "peak_hz": float(drives[int(np.argmax(frac))]),
               "bias_volts": bias}
    return RunResult("two_tone", seed, h, list(rows[0]), rows, None, summary)


# -- electronics experiments -------------------------------------------------------

FEEDBACK_EVENTS = {
    "adc_conversion": "adc_first_sample",
    "readout_window": "window_complete",
    "daq_dsp": "discrimination",
    "trigger_transport": "feedback_trigger",
    "dac_conversion": "feedback_pulse_start",
    "control_pulse": "feedback_pulse_end",
}


def _ledger_from(cfg: Mapping) -> LatencyLedger:
    if "ledger" not in cfg:
        return LatencyLedger.default()
    return LatencyLedger(tuple(LatencyComponent(c["name"], c["duration_ps"], c["group"])
                               for c in cfg["ledger"]))


def feedback_timeline(ledger: LatencyLedger, excited: bool = True) -> list[tuple[str, int]]:
    """Timestamped feedback-loop events, walking the ledger in loop order.

    A ground-state decision ends the timeline at discrimination.
    """
    t = 0
    events = [("measurement_pulse_start", 0)]
    for comp in ledger.components:
        start = t
        t += comp.duration_ps
        if comp.name == "daq_dsp":
            # pipeline stages inside the DAQ DSP block, clipped to its duration
            lat = daq_pipeline_latency()
            events.append(("mixer_out", start + min(lat["mixer"], comp.duration_ps)))
            events.append(("accumulator_out",
                           start + min(lat["mixer"] + lat["accumulator"], comp.duration_ps)))
        events.append((FEEDBACK_EVENTS.get(comp.name, f"{comp.name}_end"), t))
        if comp.name == "daq_dsp" and not excited:
            break
    if excited and "control_pulse" not in ledger:
        events.append(("feedback_pulse_end", t))
    return events


def run_feedback_latency(cfg: Mapping) -> RunResult:
    """Loopback feedback run: measure, discriminate and, if excited, fire the feedback pulse."""
    seed, h = cfg["seed"], config_hash(cfg)
    ledger = _ledger_from(cfg)
    device = device_params(cfg)
    window_ns = ledger["readout_window"] // 1000 if "readout_window" in ledger else 48
    pulse = replace(readout_pulse(cfg, device), duration_s=max(window_ns, 1) * 1e-9)
    chain = ReadoutChain(device, pulse)
    state = cfg.get("input_state", "excited")
    bloch = [0.0, 0.0, -1.0 if state == "excited" else 1.0]
    m = measure(bloch, pulse, device, _rng(seed, 0))
    z = chain.integrate(m.i_volts, m.q_volts, _rng(seed, 1))[0]
    events_probe = feedback_timeline(ledger, excited=True)
    t_disc = dict(events_probe)["discrimination"] if "daq_dsp" in ledger else 0
    decision, trig = discriminate((z.real, z.imag), chain.demod.rotation_rad,
                                  chain.demod.threshold, timestamp_ps=t_disc)
    excited = trig is not None
    events = feedback_timeline(ledger, excited)
    pulse_codes = 0
    if excited:
        n = max(1, ledger["control_pulse"] // 500) if "control_pulse" in ledger else 1
        awg = Awg()
        env = PulseEnvelope("feedback", np.full(n, DAC_MAX // 2))
        handle = awg.load_sequence(PulseSequence({"feedback": env},
                                                 (ScheduleEntry("feedback", 0),)))
        out = awg.render(handle, trig, n)
        pulse_codes = int(np.count_nonzero(out.codes))
    fb = feedback_latency(ledger)
    rows = [{"index": k, "event": name, "timestamp_ps": ts, "seed": seed, "config_hash": h}
            for k, (name, ts) in enumerate(events)]
    times = dict(events)
    tau = times["feedback_pulse_end"] - times["measurement_pulse_start"] if excited else None
    summary = {
        "outcome": "feedback" if excited else "no feedback",
        "state": decision.name.lower(),
        "tau_fb_ps": tau,
        "tau_el_ps": None if tau is None else tau - fb.readout_ps - fb.control_ps,
        "ledger_total_ps": fb.total_ps,
        "ledger_electronics_ps": fb.electronics_ps,
        "feedback_pulse_samples": pulse_codes,
    }
    ledger_doc = [{"name": c.name, "duration_ps": c.duration_ps, "group": c.group}
                  for c in ledger.components]
    return RunResult("feedback_latency", seed, h, list(rows[0]), rows, None, summary, ledger_doc)


def _topology(cfg: Mapping) -> ClockTopology:
    doc = cfg["topology"]
    mods = list(doc["modules"])
    root = doc.get("root", "TCM")

    def per(key, m):
        v = doc.get(key, 0)
        return v.get(m, 0) if isinstance(v, Mapping) else v

    nodes = {root: "chassis0", **{m: "chassis0" for m in mods}}
    edges = tuple(ClockEdge(root, m, int(per("skew_ps", m)), float(per("jitter_ps", m)))
                  for m in mods)
    return ClockTopology(nodes, edges, root)


JITTER_RECORD = 4096
JITTER_SHOT_INTERVAL_PS = 100_000_000
_JITTER_AMPLITUDE = 0.9
_MIN_TONE_CODES = 16


def tone_phases(codes: np.ndarray, tone_hz: float, sample_rate_hz: float = ADC_RATE_HZ):
    """Phase of the tone bin from fixed-point mixing and accumulation over the record."""
    cfg = DemodConfig(if_frequency_hz=tone_hz, window_samples=codes.shape[-1],
                      fast_path=False, sample_rate_hz=sample_rate_hz)
    stream = IQSampleStream(codes, np.zeros_like(codes), sample_rate_hz)
    i, q = digital_mix(stream, cfg)
    si, sq = accumulate(i, q, cfg.window_samples)
    amp = np.hypot(si[..., 0], sq[..., 0]) * 2 / codes.shape[-1]
    if np.any(amp < _MIN_TONE_CODES):
        raise ValueError(f"tone amplitude {amp.min():.1f} codes is too low for phase extraction")
    return np.arctan2(sq[..., 0], si[..., 0])


def run_jitter_histogram(cfg: Mapping) -> RunResult:
    """Paired AWG captures on one DAQ; per-shot relative delay from the tone phase."""
    seed, h = cfg["seed"], config_hash(cfg)
    topo = _topology(cfg)
    shots = cfg["shots"]
    f = float(cfg["tone_hz"])
    ticks = np.arange(shots, dtype=np.int64) * (JITTER_SHOT_INTERVAL_PS // topo.period_ps)
    stamps = distribute_clock_many(topo, ticks, seed)
    ideal = ticks * topo.period_ps
    delay = {m: stamps[m] - ideal for m in ("AWG1", "AWG2", "DAQ")}
    n = np.arange(JITTER_RECORD)
    adc = AdcModel()
    out = np.empty(shots)
    for start in range(0, shots, 500):
        sl = slice(start, min(shots, start + 500))
        # sample instants on the DAQ clock, in seconds relative to the trigger tick
        t = n[None, :] / ADC_RATE_HZ + delay["DAQ"][sl, None] / PS_PER_S
        amp = np.rint(_JITTER_AMPLITUDE * DAC_MAX) / DAC_MAX
        ch = [amp * np.sin(2 * np.pi * f * (t - delay[m][sl, None] / PS_PER_S))
              for m in ("AWG1", "AWG2")]
        dig = adc_digitize(ch[0], ch[1], adc, _rng(seed, 1, start), tone_hz=f)
        ph1 = tone_phases(dig.stream.i_codes, f)
        ph2 = tone_phases(dig.stream.q_codes, f)
        dphi = np.angle(np.exp(1j * (ph1 - ph2)))
        out[sl] = -dphi / (2 * np.pi * f) * PS_PER_S
    rel = out - out.mean()
    std = float(np.std(out, ddof=1))
    half = max(5 * std, 1.0)
    edges = np.linspace(-half, half, 41)
    counts, _ = np.histogram(rel, edges)
    rows = [{"index": k, "bin_center_ps": float((edges[k] + edges[k + 1]) / 2),
             "count": int(c), "seed": seed, "config_hash": h} for k, c in enumerate(counts)]
    summary = {"std_ps": std, "mean_ps": float(out.mean()), "shots": shots, "tone_hz": f}
    return RunResult("jitter_histogram", seed, h, list(rows[0]), rows, None, summary)


def run_mixer_calibration(cfg: Mapping) -> RunResult:
    seed, h = cfg["seed"], config_hash(cfg)
    params = MixerParams(**cfg["mixer"])
    stages = [("uncompensated", leakage_levels(params)),
              ("analytic", leakage_levels(params, analytic_correction(params)))]
    flagged = None
    try:
        corr = precompensate(params)
        stages.append(("searched", leakage_levels(params, corr)))
    except PrecompensationError as exc:
        flagged = str(exc)
        stages.append(("searched", leakage_levels(params, exc.best)))
    stages.append(("ideal_mixer", leakage_levels(MixerParams())))
    rows = [{"index": k, "stage": name, "lo_dbc": lv.lo_dbc, "image_dbc": lv.image_dbc,
             "seed": seed, "config_hash": h} for k, (name, lv) in enumerate(stages)]
    searched = dict((r["stage"], r) for r in rows)["searched"]
    summary = {"lo_dbc": searched["lo_dbc"], "image_dbc": searched["image_dbc"],
               "converged": flagged is None, "message": flagged}
    return RunResult("mixer_calibration", seed, h, list(rows[0]), rows, None, summary)


def run_budget_sweep(cfg: Mapping) -> RunResult:
    seed, h = cfg["seed"], config_hash(cfg)
    b = cfg["budget"]
    fn = {"jitter": jitter_sweep, "sfdr": sfdr_sweep, "bias": bias_sweep}[b["kind"]]
    rows = [{"index": k, **r, "seed": seed, "config_hash": h}
            for k, r in enumerate(fn(b["values"]))]
    return RunResult("budget_sweep", seed, h, list(rows[0]), rows, None, {"kind": b["kind"]})


def demod_equivalence(streams: int, max_length: int, seed) -> tuple[int, int]:
    """Count random 12-bit streams where the fs/4 fast path equals the general path."""
    fast = DemodConfig()
    general = replace(fast, fast_path=False)
    agree = 0
    for k in range(streams):
        rng = _rng(seed, k)
        n = int(rng.integers(1, max_length + 1))
        iq = rng.integers(-2048, 2048, size=(2, n))
        stream = IQSampleStream(iq[0], iq[1])
        n0 = int(rng.integers(0, 4))
        a = digital_mix(stream, fast, n0)
        b = digital_mix(stream, general, n0)
        agree += bool(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]))
    return agree, streams


def run_demod_selftest(cfg: Mapping) -> RunResult:
    seed, h = cfg["seed"], config_hash(cfg)
    st = cfg["selftest"]
    agree, total = demod_equivalence(st["streams"], st["max_length"], seed)
    i, q = digital_mix(IQSampleStream([100] * 4, [0] * 4), DemodConfig())
    worked = [(int(a), int(b)) for a, b in zip(i, q)]
    rows = [{"index": 0, "check": "fast_equals_general", "passed": agree == total,
             "detail": f"{agree}/{total}", "seed": seed, "config_hash": h},
            {"index": 1, "check": "fs4_worked_example",
             "passed": worked == [(100, 0), (0, -100), (-100, 0), (0, 100)],
             "detail": str(worked), "seed": seed, "config_hash": h}]
    return RunResult("demod_selftest", seed, h, list(rows[0]), rows, None,
                     {"passed": all(r["passed"] for r in rows)})


def rotating_phase_trace(channels=EIGHT_CHANNEL_PLAN_HZ, repetitions: int = 36,
                         window_samples: int = 256, amplitude_volts: float = 0.1,
                         step_rad: float = 2 * np.pi / 36, seed=0) -> np.ndarray:
    """Demodulated IQ point per channel while the tones' common start phase advances.

    Each repetition sends the sum of all tones with initial phase
    ``repetition * step_rad`` through the ADC and the decimating
    multi-channel demodulator. Returns complex ``(repetitions, channels)``.
    """
    n = np.arange(window_samples)
    out = np.empty((repetitions, len(channels)), dtype=complex)
    for r in range(repetitions):
        x = sum(amplitude_volts * np.exp(1j * (2 * np.pi * f * n / ADC_RATE_HZ + r * step_rad))
                for f in channels)
        dig = adc_digitize(x.real, x.imag, AdcModel(), _rng(seed, r))
        out[r] = multi_channel_demod(dig.stream, channels, window_samples)[:, 0]
    return out


RUNNERS: dict[str, Callable[[Mapping], RunResult]] = {
    "t1": run_t1, "ramsey": run_ramsey, "one_tone": run_one_tone, "two_tone": run_two_tone,
    "feedback_latency": run_feedback_latency, "jitter_histogram": run_jitter_histogram,
    "mixer_calibration": run_mixer_calibration, "budget_sweep": run_budget_sweep,
    "demod_selftest": run_demod_selftest,
}


def run(config, *, seed: int | None = None) -> RunResult:
    """Validate (if needed) and execute one experiment."""
    cfg = validate_config(config)
    if seed is not None:
        cfg = validate_config({**cfg, "seed": seed})
    return RUNNERS[cfg["experiment"]](cfg)


# -- persistence ----------------------------------------------------------------------

def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def rows_text(result: RunResult, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=result.columns, lineterminator="\n")
        w.writeheader()
        for r in result.rows:
            w.writerow({k: _cell(r.get(k)) for k in result.columns})
        return buf.getvalue()
    if fmt == "json-lines":
        return "".join(json.dumps({k: r.get(k) for k in result.columns}) + "\n"
                       for r in result.rows)
    raise ValueError(f"unknown output format {fmt!r}")


def write_result(result: RunResult, out_dir, fmt: str = "csv") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "jsonl"
    stem = f"{result.experiment}_{result.config_hash}"
    data = out / f"{stem}.{ext}"
    data.write_text(rows_text(result, fmt))
    summary = out / f"{stem}_summary.json"
    summary.write_text(json.dumps(result.summary_document(), indent=2, sort_keys=True,
                                  default=float) + "\n")
    return {"data": data, "summary": summary}
