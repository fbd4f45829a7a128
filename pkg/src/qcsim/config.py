"""Experiment configuration: YAML documents, schema checks and defaults.

``validate_config`` walks the whole document and collects every problem
with a dotted location (``device.t1_s``, ``pulses.pi``) instead of stopping
at the first one.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from collections.abc import Mapping
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from .awg_engine import MixerParams
from .device_model import BvgModel, QubitParams, ReadoutPulse
from .timing_fabric import DEFAULT_LEDGER_PS, GROUPS

EXPERIMENTS = ("one_tone", "two_tone", "t1", "ramsey", "jitter_histogram", "feedback_latency",
               "mixer_calibration", "budget_sweep", "demod_selftest")

# swept quantity of each experiment that has a sweep
SWEEP_AXES = {"one_tone": "probe_hz", "two_tone": "drive_hz", "t1": "delay_s",
              "ramsey": "delay_s"}

BUDGET_KINDS = ("jitter", "sfdr", "bias")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _integer(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _field_names(cls, skip=()) -> set[str]:
    return {f.name for f in fields(cls) if f.init and f.name not in skip}


_DEVICE_KEYS = _field_names(QubitParams)
_READOUT_KEYS = _field_names(ReadoutPulse) | {"assignment_fidelity"}
_BVG_KEYS = {"set_voltage", "noise_pp_volts", "drift_pp_volts_per_10h", "resolution_bits"}
_MIXER_KEYS = _field_names(MixerParams)

_TOP_KEYS = {
    "experiment", "seed", "shots", "sweep", "device", "readout", "bvg", "envelopes", "pulses",
    "detuning_hz", "bias_volts", "topology", "ledger", "input_state", "mixer", "budget",
    "selftest", "tone_hz", "name", "description",
}


def _defaults(kind: str, device: QubitParams) -> dict:
    d: dict = {"shots": 1}
    if kind == "t1":
        d.update(shots=500, sweep={"name": "delay_s", "start": 0.0, "stop": 4 * device.t1_s,
                                   "points": 40})
    elif kind == "ramsey":
        d.update(shots=500, detuning_hz=0.25e6,
                 sweep={"name": "delay_s", "start": 0.0, "stop": 40e-6, "points": 161})
    elif kind == "one_tone":
        d.update(shots=100, sweep={"name": "probe_hz", "start": device.f_r_hz - 5 * device.kappa_hz,
                                   "stop": device.f_r_hz + 5 * device.kappa_hz, "points": 101})
    elif kind == "two_tone":
        d.update(shots=200, sweep={"name": "drive_hz", "start": device.f_min_hz - 5e6,
                                   "stop": device.f_min_hz + 5e6, "points": 101})
    elif kind == "jitter_histogram":
        d.update(shots=5000, tone_hz=199.951171875e6,
                 topology={"kind": "star", "modules": ["AWG1", "AWG2", "DAQ"],
                           "jitter_ps": {"AWG1": 5 / np.sqrt(2), "AWG2": 5 / np.sqrt(2),
                                         "DAQ": 0.0},
                           "skew_ps": 0})
    elif kind == "feedback_latency":
        d.update(input_state="excited")
    elif kind == "mixer_calibration":
        d.update(mixer={"dc_offset_i": 0.003, "dc_offset_q": 0.003, "gain_imbalance": 0.02,
                        "phase_skew_rad": 0.02})
    elif kind == "budget_sweep":
        d.update(budget={"kind": "jitter", "values": [1e-12, 2e-12, 5e-12, 6.2e-12, 1e-11,
                                                      2e-11]})
    elif kind == "demod_selftest":
        d.update(selftest={"streams": 10000, "max_length": 4096})
    if kind in ("t1", "ramsey", "two_tone"):
        d["readout"] = {"assignment_fidelity": 0.98}
    return d


def _check_mapping(doc, allowed: set[str], where: str, errors: list[str]) -> dict:
    if not isinstance(doc, Mapping):
        errors.append(f"{where}: expected a mapping")
        return {}
    for k in doc:
        if k not in allowed:
            errors.append(f"{where}.{k}: unknown key" if where else f"{k}: unknown key")
    return dict(doc)


def _check_numbers(doc: Mapping, where: str, errors: list[str], positive=()) -> None:
    for k, v in doc.items():
        if isinstance(v, (list, tuple, Mapping, str)) or v is None:
            continue
        if not _number(v):
            errors.append(f"{where}.{k}: expected a number, got {v!r}")
        elif k in positive and not v > 0:
            errors.append(f"{where}.{k}: must be > 0")


def _check_envelopes(envs, errors: list[str]) -> dict:
    out = {}
    if not isinstance(envs, Mapping):
        errors.append("envelopes: expected a mapping of name to definition")
        return out
    for name, spec in envs.items():
        where = f"envelopes.{name}"
        if not isinstance(spec, Mapping):
            errors.append(f"{where}: expected a mapping")
            continue
        kind = spec.get("kind", "samples" if "samples" in spec else None)
        if kind == "samples":
            _check_mapping(spec, {"kind", "samples"}, where, errors)
            s = spec.get("samples")
            if not isinstance(s, list) or not s or not all(_integer(v) for v in s):
                errors.append(f"{where}.samples: expected a non-empty list of integer codes")
        elif kind in ("gaussian", "square"):
            _check_mapping(spec, {"kind", "length", "sigma_samples", "amplitude"}, where, errors)
            if not _integer(spec.get("length")) or spec.get("length", 0) < 1:
                errors.append(f"{where}.length: expected a positive integer")
            if kind == "gaussian" and not (_number(spec.get("sigma_samples"))
                                           and spec["sigma_samples"] > 0):
                errors.append(f"{where}.sigma_samples: expected a positive number")
            amp = spec.get("amplitude", 8191)
            if not _integer(amp) or not 0 < amp <= 8191:
                errors.append(f"{where}.amplitude: expected an integer code in (0, 8191]")
        else:
            errors.append(f"{where}.kind: expected 'samples', 'gaussian' or 'square'")
        out[name] = dict(spec)
    return out


def _check_ledger(ledger, errors: list[str]) -> list:
    default_groups = {n: g for n, _, g in DEFAULT_LEDGER_PS}
    if isinstance(ledger, Mapping):
        ledger = [{"name": k, "duration_ps": v} for k, v in ledger.items()]
    if not isinstance(ledger, list):
        errors.append("ledger: expected a mapping of component to picoseconds or a list")
        return []
    out = []
    for i, c in enumerate(ledger):
        where = f"ledger[{i}]"
        if not isinstance(c, Mapping):
            errors.append(f"{where}: expected a mapping")
            continue
        _check_mapping(c, {"name", "duration_ps", "group"}, where, errors)
        name = c.get("name")
        if not isinstance(name, str):
            errors.append(f"{where}.name: missing component name")
            continue
        group = c.get("group", default_groups.get(name, "electronics"))
        if group not in GROUPS:
            errors.append(f"{where}.group: expected one of {GROUPS}")
        d = c.get("duration_ps")
        if not _integer(d) or d < 0:
            errors.append(f"{where}.duration_ps: expected a non-negative integer")
        out.append({"name": name, "duration_ps": d, "group": group})
    return out


def _check_topology(topo, errors: list[str]) -> None:
    if not isinstance(topo, Mapping):
        errors.append("topology: expected a mapping")
        return
    _check_mapping(topo, {"kind", "modules", "jitter_ps", "skew_ps", "root"}, "topology", errors)
    if topo.get("kind", "star") != "star":
        errors.append("topology.kind: only 'star' topologies are supported in configs")
    mods = topo.get("modules", [])
    if not isinstance(mods, list) or not all(isinstance(m, str) for m in mods):
        errors.append("topology.modules: expected a list of module names")
        mods = []
    for key in ("jitter_ps", "skew_ps"):
        v = topo.get(key, 0)
        if isinstance(v, Mapping):
            for m, x in v.items():
                if m not in mods:
                    errors.append(f"topology.{key}.{m}: references undefined module {m!r}")
                elif not _number(x) or (key == "jitter_ps" and x < 0):
                    errors.append(f"topology.{key}.{m}: expected a non-negative number")
        elif not _number(v) or (key == "jitter_ps" and v < 0):
            errors.append(f"topology.{key}: expected a number or a per-module mapping")
    for m in ("AWG1", "AWG2", "DAQ"):
        if m not in mods:
            errors.append(f"topology.modules: missing required module {m!r}")


def normalize(doc: Mapping) -> dict:
    """Validate a parsed document; return it with defaults filled or raise ConfigError."""
    errors: list[str] = []
    doc = _check_mapping(doc if doc is not None else {}, _TOP_KEYS, "", errors)
    kind = doc.get("experiment")
    if kind is None:
        errors.append("experiment: missing required field")
    elif kind not in EXPERIMENTS:
        errors.append(f"experiment: unknown kind {kind!r}; expected one of {', '.join(EXPERIMENTS)}")
    if "seed" not in doc:
        errors.append("seed: missing required field")
    elif not _integer(doc["seed"]) or doc["seed"] < 0:
        errors.append("seed: expected a non-negative integer")

    device_doc = _check_mapping(doc.get("device", {}), _DEVICE_KEYS, "device", errors)
    _check_numbers(device_doc, "device", errors,
                   positive=("t1_s", "t2_star_s", "kappa_hz", "chi_hz", "r_ohm", "m_henry"))
    device = QubitParams()
    try:
        device = QubitParams(**{k: v for k, v in device_doc.items() if k in _DEVICE_KEYS})
    except (TypeError, ValueError) as exc:
        errors.append(f"device: {exc}")

    out: dict = copy.deepcopy(_defaults(kind, device)) if kind in EXPERIMENTS else {}
    for k, v in doc.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = {**out[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    out["device"] = device_doc

    shots = out.get("shots", 1)
    if not _integer(shots) or shots < 1:
        errors.append("shots: must be an integer >= 1")

    if kind in SWEEP_AXES:
        sw = _check_mapping(out.get("sweep", {}), {"name", "start", "stop", "points"}, "sweep",
                            errors)
        if sw.get("name") != SWEEP_AXES[kind]:
            errors.append(f"sweep.name: {kind} sweeps {SWEEP_AXES[kind]!r}, got {sw.get('name')!r}")
        for k in ("start", "stop"):
            if not _number(sw.get(k)):
                errors.append(f"sweep.{k}: expected a number")
        if not _integer(sw.get("points")) or sw.get("points", 0) < 1:
            errors.append("sweep.points: must be an integer >= 1")
        if kind in ("t1", "ramsey") and _number(sw.get("start")) and sw["start"] < 0:
            errors.append("sweep.start: delays must be >= 0")
    elif "sweep" in doc:
        errors.append(f"sweep: experiment {kind!r} has no sweep axis")

    readout = _check_mapping(out.get("readout", {}), _READOUT_KEYS, "readout", errors)
    _check_numbers(readout, "readout", errors, positive=("duration_s", "sample_rate_hz"))
    fa = readout.get("assignment_fidelity")
    if fa is not None and not (_number(fa) and 0.5 < fa <= 1):
        errors.append("readout.assignment_fidelity: must be in (0.5, 1]")

    bvg = _check_mapping(out.get("bvg", {}), _BVG_KEYS, "bvg", errors)
    _check_numbers(bvg, "bvg", errors)
    if bvg:
        try:
            BvgModel(**bvg)
        except (TypeError, ValueError) as exc:
            errors.append(f"bvg: {exc}")

    envs = _check_envelopes(out.get("envelopes", {}), errors)
    pulses = _check_mapping(out.get("pulses", {}), {"pi", "half_pi", "feedback"}, "pulses", errors)
    for role, name in pulses.items():
        if not isinstance(name, str):
            errors.append(f"pulses.{role}: expected an envelope name")
        elif name not in envs:
            errors.append(f"pulses.{role}: references undefined envelope {name!r}")

    if "ledger" in out:
        out["ledger"] = _check_ledger(out["ledger"], errors)
    if "topology" in out and kind == "jitter_histogram":
        _check_topology(out["topology"], errors)
    if "input_state" in out and out["input_state"] not in ("ground", "excited"):
        errors.append("input_state: expected 'ground' or 'excited'")
    if "mixer" in out:
        m = _check_mapping(out["mixer"], _MIXER_KEYS, "mixer", errors)
        _check_numbers(m, "mixer", errors)
        try:
            MixerParams(**{k: v for k, v in m.items() if k in _MIXER_KEYS})
        except (TypeError, ValueError) as exc:
            errors.append(f"mixer: {exc}")
    if "budget" in out:
        b = _check_mapping(out["budget"], {"kind", "values"}, "budget", errors)
        if b.get("kind") not in BUDGET_KINDS:
            errors.append(f"budget.kind: expected one of {', '.join(BUDGET_KINDS)}")
        vals = b.get("values")
        if not isinstance(vals, list) or not vals or not all(_number(v) for v in vals):
            errors.append("budget.values: expected a non-empty list of numbers")
    if "selftest" in out:
        st = _check_mapping(out["selftest"], {"streams", "max_length"}, "selftest", errors)
        for k in ("streams", "max_length"):
            if not _integer(st.get(k)) or st[k] < 1:
                errors.append(f"selftest.{k}: must be an integer >= 1")
    for k in ("detuning_hz", "bias_volts", "tone_hz"):
        if k in out and not _number(out[k]):
            errors.append(f"{k}: expected a number")
    if errors:
        raise ConfigError(errors)
    return out


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``2.5e5`` (no dot, unsigned exponent) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[0-9][0-9_]*[eE][-+]?[0-9]+
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def load_document(path) -> dict:
    path = Path(path)
    text = path.read_text()
    doc = json.loads(text) if path.suffix == ".json" else yaml.load(text, Loader=_Loader)
    return doc if doc is not None else {}


def validate_config(source) -> dict:
    """Normalize a config file path or an already-parsed mapping.

    Raises :class:`ConfigError` listing every problem found.
    """
    if isinstance(source, Mapping):
        return normalize(source)
    try:
        doc = load_document(source)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<document>: not valid YAML ({exc})"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<document>: not valid JSON ({exc})"]) from None
    return normalize(doc)


def config_hash(config: Mapping) -> str:
    """Short SHA-256 of the canonical JSON form of a normalized config."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
