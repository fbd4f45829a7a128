"""Gate-fidelity error budgets for control electronics.

Single-qubit rotations, average gate fidelity, and the three requirement
calculators that translate electronics specifications into gate errors:
clock jitter, spurious drive (SFDR) and DC-bias voltage noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

PHI0_WB = 2.067833848e-15

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_UNITARY_TOL = 1e-12


class NonUnitaryError(ValueError):
    pass


class Unitary2:
    """A 2x2 unitary matrix, checked on construction."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (2, 2):
            raise NonUnitaryError(f"expected a 2x2 matrix, got shape {m.shape}")
        err = np.max(np.abs(m.conj().T @ m - SIGMA_I))
        if not err <= _UNITARY_TOL:
            raise NonUnitaryError(f"matrix is not unitary (max |U^dag U - I| = {err:.3e})")
        m.setflags(write=False)
        self.matrix = m

    @property
    def dagger(self) -> Unitary2:
        return Unitary2(self.matrix.conj().T)

    def __matmul__(self, other: Unitary2) -> Unitary2:
        return Unitary2(self.matrix @ other.matrix)

    def __repr__(self) -> str:
        return f"Unitary2({self.matrix.tolist()!r})"


def pauli_exponential(a: float, b: float, c: float) -> np.ndarray:
    """Return exp[-i (a sx + b sy + c sz)] in closed form."""
    r = float(np.sqrt(a * a + b * b + c * c))
    if r == 0.0:
        return SIGMA_I.copy()
    # sin(r)/r stays accurate for tiny r
    s = np.sinc(r / np.pi)
    return np.cos(r) * SIGMA_I - 1j * s * (a * SIGMA_X + b * SIGMA_Y + c * SIGMA_Z)


def rotation_unitary(theta: float, phi: float) -> Unitary2:
    """Rotation by ``theta`` about the equatorial axis at angle ``phi`` from x."""
    half = theta / 2
    return Unitary2(pauli_exponential(half * np.cos(phi), half * np.sin(phi), 0.0))


def gate_fidelity(u1: Unitary2, u2: Unitary2) -> float:
    """Average gate fidelity of ``u1`` with respect to the target ``u2``.

    Evaluates both the general trace expression and its unitary reduction
    (2 + |Tr[U2^dag U1]|^2) / 6 and requires them to agree to 1e-12.
    """
    a, b = u1.matrix, u2.matrix
    if np.array_equal(a, b):
        return 1.0
    d = 2
    overlap = np.trace(b.conj().T @ a)
    general = (np.trace(a @ b.conj().T @ b @ a.conj().T) + abs(overlap) ** 2) / (d * (d + 1))
    reduced = (2.0 + abs(overlap) ** 2) / 6.0
    if abs(general - reduced) > 1e-12:
        raise ArithmeticError(f"fidelity forms disagree: {general} vs {reduced}")
    return float(min(reduced, 1.0))


def _pi_phase_fidelity(phi: float) -> float:
    return (2.0 + 4.0 * np.cos(phi) ** 2) / 6.0


def jitter_to_fidelity(jitter_s: float, f_if_hz: float) -> tuple[float, float]:
    """Phase error and pi-pulse fidelity caused by a timing error on an IF carrier."""
    if f_if_hz <= 0:
        raise ValueError("f_if_hz must be positive")
    phi = 2 * np.pi * f_if_hz * jitter_s
    fid = gate_fidelity(rotation_unitary(np.pi, phi), rotation_unitary(np.pi, 0.0))
    return float(phi), fid


def phase_for_fidelity(target: float, tol: float = 1e-15) -> float:
    """Largest axis-phase error of a pi pulse that still reaches ``target`` fidelity."""
    if not (1.0 / 3.0 < target <= 1.0):
        raise ValueError(f"target fidelity {target} outside (1/3, 1]")
    if target == 1.0:
        return 0.0
    lo, hi = 0.0, np.pi / 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _pi_phase_fidelity(mid) >= target:
            lo = mid
        else:
            hi = mid
    return lo


def jitter_for_fidelity(target: float, f_if_hz: float) -> float:
    """Timing jitter (s) whose phase error on ``f_if_hz`` leaves ``target`` fidelity."""
    if f_if_hz <= 0:
        raise ValueError("f_if_hz must be positive")
    return phase_for_fidelity(target) / (2 * np.pi * f_if_hz)


@dataclass(frozen=True)
class SpuriousDriveSpec:
    """A spurious tone of relative amplitude ``m`` riding on a control pulse.

    Defaults are the reference operating point: 100 MHz IF, 50 MHz Rabi
    frequency, pi rotation (10 ns gate).
    """

    m: float
    omega_if_rad_s: float = 2 * np.pi * 100e6
    rabi_rad_s: float = 2 * np.pi * 50e6
    theta_rad: float = np.pi
    sfdr_dbc: float = field(init=False)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if self.rabi_rad_s <= 0:
            raise ValueError("rabi_rad_s must be > 0")
        object.__setattr__(self, "sfdr_dbc", 20 * np.log10(self.m) if self.m > 0 else -np.inf)

    @classmethod
    def from_sfdr(cls, sfdr_dbc: float, **kw) -> SpuriousDriveSpec:
        return cls(m=10 ** (sfdr_dbc / 20), **kw)

    @property
    def gate_time_s(self) -> float:
        return self.theta_rad / self.rabi_rad_s

    @property
    def if_phase_rad(self) -> float:
        return self.omega_if_rad_s * self.gate_time_s


# Fidelity when the spurious term of strength m*theta acts against an IF
# phase accumulation psi over the gate.
def _spurious_fidelity_at(m_theta: float, psi: float) -> float:
    u1 = pauli_exponential(m_theta / 2, 0.0, psi / 2)
    u2 = pauli_exponential(0.0, 0.0, psi / 2)
    overlap = np.trace(u2.conj().T @ u1)
    return float((2.0 + abs(overlap) ** 2) / 6.0)


def spurious_fidelity(spec: SpuriousDriveSpec) -> float:
    """Gate fidelity of the spuriously driven idle against the undriven idle."""
    t = spec.gate_time_s
    u1 = Unitary2(pauli_exponential(spec.m * spec.rabi_rad_s * t / 2, 0.0, spec.omega_if_rad_s * t / 2))
    u2 = Unitary2(pauli_exponential(0.0, 0.0, spec.omega_if_rad_s * t / 2))
    return gate_fidelity(u1, u2)


def worst_case_spurious_fidelity(spec: SpuriousDriveSpec, grid: int = 4096) -> tuple[float, float]:
    """Minimum fidelity over the IF phase within the current IF turn.

    The accumulated IF phase ``psi = omega_if * t`` is scanned over
    ``[2 pi k, 2 pi (k + 1))`` with ``k = floor(psi / 2 pi)`` while
    ``m * Omega * t`` stays fixed. Returns ``(fidelity, psi_at_minimum)``.
    """
    m_theta = spec.m * spec.theta_rad
    if m_theta == 0:
        return 1.0, spec.if_phase_rad
    # tolerance keeps an exact whole number of turns from rounding down
    k = np.floor(spec.if_phase_rad / (2 * np.pi) + 1e-9)
    lo, hi = 2 * np.pi * k, 2 * np.pi * (k + 1)
    psis = np.linspace(lo, hi, grid, endpoint=False)
    vals = np.array([_spurious_fidelity_at(m_theta, p) for p in psis])
    i = int(np.argmin(vals))
    step = psis[1] - psis[0]
    res = minimize_scalar(
        lambda p: _spurious_fidelity_at(m_theta, p),
        bounds=(max(lo, psis[i] - step), min(hi, psis[i] + step)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if res.fun < vals[i]:
        return float(res.fun), float(res.x)
    return float(vals[i]), float(psis[i])


@dataclass(frozen=True)
class BiasBudget:
    flux_precision: float = 1e-5
    r_ohm: float = 1e3
    m_henry: float = 2e-12
    phi0_wb: float = PHI0_WB

    def __post_init__(self):
        for name in ("flux_precision", "r_ohm", "m_henry", "phi0_wb"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def bias_precision(budget: BiasBudget) -> float:
    """Bias-voltage precision (V) that keeps the flux within the budget."""
    return budget.flux_precision * budget.phi0_wb * budget.r_ohm / budget.m_henry


def flux_precision_from_voltage(delta_v: float, r_ohm: float = 1e3, m_henry: float = 2e-12,
                                phi0_wb: float = PHI0_WB) -> float:
    """Inverse of :func:`bias_precision`: flux error (in flux quanta) for a voltage error."""
    if m_henry <= 0 or r_ohm <= 0:
        raise ValueError("r_ohm and m_henry must be positive")
    return delta_v * m_henry / (phi0_wb * r_ohm)


def jitter_sweep(jitters_s, f_if_hz: float = 100e6):
    rows = []
    for j in jitters_s:
        phi, fid = jitter_to_fidelity(float(j), f_if_hz)
        rows.append({"jitter_s": float(j), "phase_error_rad": phi, "fidelity": fid})
    return rows


def sfdr_sweep(sfdr_dbc_values, **spec_kw):
    rows = []
    for s in sfdr_dbc_values:
        spec = SpuriousDriveSpec.from_sfdr(float(s), **spec_kw)
        worst, _ = worst_case_spurious_fidelity(spec)
        rows.append({"sfdr_dbc": float(s), "m": spec.m,
                     "fidelity_nominal": spurious_fidelity(spec), "fidelity_worst": worst})
    return rows


def bias_sweep(delta_v_values, r_ohm: float = 1e3, m_henry: float = 2e-12):
    return [{"delta_v": float(v),
             "flux_precision": flux_precision_from_voltage(float(v), r_ohm, m_henry)}
            for v in delta_v_values]

# Rabi frequency quoted with the requirements summary; the calculation above
# defaults to the 50 MHz operating point instead.
ALT_RABI_RAD_S = 2 * np.pi * 33e6
