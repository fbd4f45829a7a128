"""Decay fits for T1 and Ramsey data.

Both models are fit with Levenberg-Marquardt (``scipy.optimize.least_squares``)
using analytic Jacobians, at most 500 function evaluations and relative
tolerances of 1e-10.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

MAX_EVALUATIONS = 500
TOLERANCE = 1e-10


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict[str, float]
    stderr: dict[str, float] = field(default_factory=dict)
    converged: bool = True
    message: str = ""

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def as_dict(self) -> dict:
        return {"model": self.model, "params": dict(self.params),
                "stderr": dict(self.stderr), "converged": self.converged,
                "message": self.message}


def exp_decay(t, a, tau, b):
    return a * np.exp(-np.asarray(t) / tau) + b


def _exp_jac(p, t):
    a, tau, _ = p
    e = np.exp(-t / tau)
    return np.column_stack([e, a * e * t / tau ** 2, np.ones_like(t)])


def decaying_cosine(t, a, tau, freq, phase, b):
    t = np.asarray(t)
    return a * np.exp(-t / tau) * np.cos(2 * np.pi * freq * t + phase) + b


def _cos_jac(p, t):
    a, tau, f, ph, _ = p
    e = np.exp(-t / tau)
    c = np.cos(2 * np.pi * f * t + ph)
    s = np.sin(2 * np.pi * f * t + ph)
    return np.column_stack([e * c, a * e * c * t / tau ** 2, -a * e * s * 2 * np.pi * t,
                            -a * e * s, np.ones_like(t)])


def _solve(fun, jac, p0, t, y, names, model) -> FitResult:
    try:
        res = least_squares(lambda p: fun(t, *p) - y, p0, jac=lambda p: jac(p, t), method="lm",
                            max_nfev=MAX_EVALUATIONS, xtol=TOLERANCE, ftol=TOLERANCE,
                            gtol=TOLERANCE)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return FitResult(model, dict(zip(names, map(float, p0))), converged=False, message=str(exc))
    dof = max(len(y) - len(p0), 1)
    s2 = float(res.fun @ res.fun) / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(len(p0), np.nan)
    ok = bool(res.success) and bool(np.all(np.isfinite(res.x)))
    return FitResult(model, dict(zip(names, map(float, res.x))),
                     dict(zip(names, map(float, err))), ok, res.message)


def fit_exp_decay(t, y) -> FitResult:
    """Fit ``A exp(-t / T) + B``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 4:
        raise ValueError("need at least 4 points for an exponential fit")
    b0 = float(y[-max(1, t.size // 10):].mean())
    a0 = float(y[0] - b0)
    # log-linear guess from the part of the curve well above the floor
    rel = (y - b0) / a0 if a0 else np.zeros_like(y)
    use = rel > 0.2
    if use.sum() >= 2 and np.ptp(t[use]) > 0:
        slope = np.polyfit(t[use], np.log(rel[use]), 1)[0]
        tau0 = -1 / slope if slope < 0 else np.ptp(t) / 3
    else:
        tau0 = np.ptp(t) / 3
    return _solve(exp_decay, _exp_jac, np.array([a0, tau0, b0]), t, y, ("A", "T", "B"), "exp_decay")


def fit_decaying_cosine(t, y) -> FitResult:
    """Fit ``A exp(-t / T) cos(2 pi f t + phi) + B``.

    The starting frequency is the peak of a zero-padded spectrum; amplitude
    and phase then come from a linear solve at that frequency.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 6:
        raise ValueError("need at least 6 points for a decaying-cosine fit")
    dt = np.median(np.diff(t))
    yc = y - y.mean()
    nfft = 16 * int(2 ** np.ceil(np.log2(t.size)))
    spec = np.abs(np.fft.rfft(yc, nfft))
    spec[0] = 0
    f0 = float(np.argmax(spec) / (nfft * dt))
    tau0 = np.ptp(t) / 3
    e = np.exp(-t / tau0)
    basis = np.column_stack([e * np.cos(2 * np.pi * f0 * t), e * np.sin(2 * np.pi * f0 * t),
                             np.ones_like(t)])
    (c, s, b0), *_ = np.linalg.lstsq(basis, y, rcond=None)
    a0 = float(np.hypot(c, s))
    ph0 = float(np.arctan2(-s, c))
    res = _solve(decaying_cosine, _cos_jac, np.array([a0, tau0, f0, ph0, b0]), t, y,
                 ("A", "T", "f", "phi", "B"), "decaying_cosine")
    if res.params["A"] < 0:
        p = dict(res.params)
        p["A"] = -p["A"]
        p["phi"] = p["phi"] + np.pi
        res = FitResult(res.model, p, res.stderr, res.converged, res.message)
    if res.params["f"] < 0:
        p = dict(res.params)
        p["f"] = -p["f"]
        p["phi"] = -p["phi"]
        res = FitResult(res.model, p, res.stderr, res.converged, res.message)
    p = dict(res.params)
    p["phi"] = float((p["phi"] + np.pi) % (2 * np.pi) - np.pi)
    return FitResult(res.model, p, res.stderr, res.converged, res.message)
