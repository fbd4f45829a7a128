"""Clock distribution, PLL locking and the two-level trigger fabric.

All times are integer picoseconds. Jitter draws are Gaussian, independent
per edge and per clock event, and rounded to the nearest picosecond.
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

PS_PER_S = 10**12

# electronics, readout integration, control pulse
GROUPS = ("electronics", "readout", "control")
# level-2 offsets are programmed in 2 GS/s sample clocks
SAMPLE_CLOCK_PS = 500


def _rng(seed, *stream) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = [] if seed is None else [int(seed)]
    return np.random.default_rng(np.random.SeedSequence(entropy + [int(s) for s in stream]))


# -- PLL ------------------------------------------------------------------

@dataclass(frozen=True)
class PllConfig:
    r1_divider: int = 1
    zero_delay: bool = True
    input_frequency_hz: float = 25e6
    output_frequency_hz: float = 2e9
    # number of distinct input-to-output phase relations without zero-delay mode
    feedback_phases: int = 8

    def __post_init__(self):
        if int(self.r1_divider) != self.r1_divider or self.r1_divider <= 0:
            raise ValueError(f"r1_divider must be a positive integer, got {self.r1_divider}")
        if self.input_frequency_hz <= 0 or self.output_frequency_hz <= 0:
            raise ValueError("frequencies must be positive")
        if self.feedback_phases < 1:
            raise ValueError("feedback_phases must be >= 1")
        _lock_ratio(self.input_frequency_hz, self.output_frequency_hz)

    @property
    def input_period_ps(self) -> int:
        return round(PS_PER_S / self.input_frequency_hz)

    @property
    def output_period_ps(self) -> float:
        return PS_PER_S / self.output_frequency_hz


def _lock_ratio(f_in: float, f_out: float, max_denominator: int = 1000) -> Fraction:
    """Return f_out / f_in as a small-denominator fraction or raise."""
    exact = f_out / f_in
    ratio = Fraction(exact).limit_denominator(max_denominator)
    if abs(float(ratio) - exact) > 1e-12 * exact:
        raise ValueError(f"cannot lock {f_out} Hz to {f_in} Hz: no rational relation")
    return ratio


def divider_start_phases(r1_divider: int, input_period_ps: int) -> list[int]:
    """Phase offsets reachable by an R1 divider, one per power-up start state."""
    return [round(k * input_period_ps / r1_divider) for k in range(r1_divider)]


def pll_lock(config: PllConfig, power_cycle_seed) -> int:
    """Phase offset (ps) of the locked output after one power cycle.

    With ``r1_divider == 1`` and zero-delay mode the result is always 0. An
    R1 divider of N picks one of its N start states at random; without
    zero-delay mode one of ``feedback_phases`` fixed offsets within an
    output period is added on top.
    """
    rng = _rng(power_cycle_seed)
    phase = 0
    if config.r1_divider > 1:
        k = int(rng.integers(config.r1_divider))
        phase += divider_start_phases(config.r1_divider, config.input_period_ps)[k]
    if not config.zero_delay:
        k = int(rng.integers(config.feedback_phases))
        phase += round(k * config.output_period_ps / config.feedback_phases)
    return phase


# -- clock tree -------------------------------------------------------------

@dataclass(frozen=True)
class ClockEdge:
    parent: str
    child: str
    skew_ps: int = 0
    jitter_ps: float = 0.0


@dataclass(frozen=True)
class ClockTopology:
    """A clock distribution tree.

    ``nodes`` maps module name to chassis name. Multi-chassis daisy chains
    are ordinary TCM-to-TCM edges.
    """

    nodes: Mapping[str, str]
    edges: tuple[ClockEdge, ...]
    root: str
    period_ps: int = 40_000

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.root not in self.nodes:
            raise ValueError(f"root {self.root!r} is not a node")
        parents: dict[str, ClockEdge] = {}
        for e in self.edges:
            for end in (e.parent, e.child):
                if end not in self.nodes:
                    raise ValueError(f"edge {e.parent}->{e.child} references unknown node {end!r}")
            if not np.isfinite(e.skew_ps):
                raise ValueError(f"edge {e.parent}->{e.child} has non-finite skew")
            if not e.jitter_ps >= 0:
                raise ValueError(f"edge {e.parent}->{e.child} has negative jitter")
            if e.child == self.root:
                raise ValueError(f"root {self.root!r} cannot have a parent")
            if e.child in parents:
                raise ValueError(f"node {e.child!r} has more than one parent")
            parents[e.child] = e
        for node in self.nodes:
            if node == self.root:
                continue
            seen = {node}
            cur = node
            while cur != self.root:
                if cur not in parents:
                    raise ValueError(f"node {node!r} is unreachable from root {self.root!r}")
                cur = parents[cur].parent
                if cur in seen:
                    raise ValueError(f"cycle through node {node!r}")
                seen.add(cur)

    def path(self, node: str) -> list[ClockEdge]:
        """Edges from the root down to ``node``."""
        if node not in self.nodes:
            raise KeyError(node)
        parents = {e.child: e for e in self.edges}
        out = []
        while node != self.root:
            e = parents[node]
            out.append(e)
            node = e.parent
        return out[::-1]

    @property
    def modules(self) -> list[str]:
        return list(self.nodes)

    def path_skew_ps(self, node: str) -> int:
        return sum(int(e.skew_ps) for e in self.path(node))


def star_topology(modules: Sequence[str], root: str = "TCM", skew_ps: int = 0,
                  jitter_ps: float = 0.0, chassis: str = "chassis0",
                  period_ps: int = 40_000) -> ClockTopology:
    nodes = {root: chassis, **{m: chassis for m in modules}}
    edges = tuple(ClockEdge(root, m, skew_ps, jitter_ps) for m in modules)
    return ClockTopology(nodes, edges, root, period_ps)


def daisy_chain_topology(chassis_modules: Sequence[Sequence[str]], link_skew_ps: int = 0,
                         link_jitter_ps: float = 0.0, skew_ps: int = 0,
                         jitter_ps: float = 0.0, period_ps: int = 40_000) -> ClockTopology:
    """One TCM per chassis, TCMs chained, modules starred off their chassis TCM."""
    nodes: dict[str, str] = {}
    edges: list[ClockEdge] = []
    prev = None
    for c, modules in enumerate(chassis_modules):
        tcm = f"TCM{c}"
        nodes[tcm] = f"chassis{c}"
        if prev is not None:
            edges.append(ClockEdge(prev, tcm, link_skew_ps, link_jitter_ps))
        for m in modules:
            nodes[m] = f"chassis{c}"
            edges.append(ClockEdge(tcm, m, skew_ps, jitter_ps))
        prev = tcm
    return ClockTopology(nodes, tuple(edges), "TCM0", period_ps)


def distribute_clock_many(topology: ClockTopology, tick_indices, seed) -> dict[str, np.ndarray]:
    """Clock-edge timestamps (ps) of every module for each tick in ``tick_indices``.

    Each tick gets its own random stream derived from ``(seed, tick)`` so a
    tick's timestamps do not depend on which other ticks were requested.
    """
    ticks = np.atleast_1d(np.asarray(tick_indices, dtype=np.int64))
    draws = np.zeros((len(topology.edges), ticks.size), dtype=np.int64)
    for j, t in enumerate(ticks):
        rng = _rng(seed, int(t))
        z = rng.standard_normal(len(topology.edges))
        draws[:, j] = np.rint(z * [e.jitter_ps for e in topology.edges]).astype(np.int64)
    index = {(e.parent, e.child): k for k, e in enumerate(topology.edges)}
    ideal = ticks * topology.period_ps
    out = {}
    for node in topology.nodes:
        ts = ideal.copy()
        for e in topology.path(node):
            ts += int(e.skew_ps) + draws[index[(e.parent, e.child)]]
        out[node] = ts
    return out


def distribute_clock(topology: ClockTopology, tick_index: int, seed) -> dict[str, int]:
    """Clock-edge timestamp (ps) of every module for one tick."""
    many = distribute_clock_many(topology, [tick_index], seed)
    return {k: int(v[0]) for k, v in many.items()}


# -- triggers -----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class TriggerEvent:
    timestamp_ps: int
    source: str
    tag: str = ""
    level: int = 2

    def __post_init__(self):
        if self.level not in (1, 2):
            raise ValueError(f"trigger level must be 1 or 2, got {self.level}")
        if self.timestamp_ps < 0:
            raise ValueError("trigger timestamp must be >= 0")
        object.__setattr__(self, "timestamp_ps", int(self.timestamp_ps))


def issue_trigger(level1_time_ps: int, schedules: Mapping[str, Iterable], *,
                  topology: ClockTopology | None = None, seed=None,
                  source: str | None = None) -> list[TriggerEvent]:
    """Fan a level-1 trigger out into per-module level-2 trigger sequences.

    ``schedules`` maps module name to ``(offset_ps, tag)`` pairs. Offsets
    are rounded to the nearest sample clock (500 ps). Each level-2 event
    lands at ``level1_time_ps + offset`` plus the module's clock skew and
    jitter for the level-1 tick.
    """
    root = source or (topology.root if topology is not None else "TCM")
    events = [TriggerEvent(level1_time_ps, root, "start", level=1)]
    delay: dict[str, int] = {}
    if topology is not None:
        tick = level1_time_ps // topology.period_ps
        stamps = distribute_clock(topology, tick, seed)
        ideal = tick * topology.period_ps
        delay = {m: ts - ideal for m, ts in stamps.items()}
    for module, entries in schedules.items():
        if topology is not None and module not in topology.nodes:
            raise KeyError(f"module {module!r} not in topology")
        for offset, tag in entries:
            if offset < 0:
                raise ValueError(f"negative trigger offset {offset} for {module!r}")
            ticks = round(offset / SAMPLE_CLOCK_PS)
            ts = level1_time_ps + ticks * SAMPLE_CLOCK_PS + delay.get(module, 0)
            events.append(TriggerEvent(ts, module, tag, level=2))
    events.sort(key=lambda e: (e.timestamp_ps, e.source, e.tag))
    return events


# -- feedback latency ledger --------------------------------------------------

@dataclass(frozen=True)
class LatencyComponent:
    name: str
    duration_ps: int
    group: str = "electronics"

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown latency group {self.group!r}")
        if int(self.duration_ps) != self.duration_ps:
            raise ValueError("latency components are integer picoseconds")
        object.__setattr__(self, "duration_ps", int(self.duration_ps))


# Stage order follows the closed feedback loop, starting at the measurement pulse.
DEFAULT_LEDGER_PS = (
    ("analog_cabling", 24_000, "electronics"),
    ("adc_conversion", 30_000, "electronics"),
    ("readout_window", 48_000, "readout"),
    ("daq_dsp", 20_000, "electronics"),
    ("trigger_transport", 10_000, "electronics"),
    ("awg_dsp", 16_000, "electronics"),
    ("dac_conversion", 25_000, "electronics"),
    ("control_pulse", 20_000, "control"),
)


@dataclass(frozen=True)
class LatencyLedger:
    components: tuple[LatencyComponent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        comps = tuple(c if isinstance(c, LatencyComponent) else LatencyComponent(*c)
                      for c in self.components)
        names = [c.name for c in comps]
        if len(set(names)) != len(names):
            raise ValueError("duplicate latency component names")
        object.__setattr__(self, "components", comps)

    @classmethod
    def default(cls) -> LatencyLedger:
        return cls(tuple(LatencyComponent(*c) for c in DEFAULT_LEDGER_PS))

    def __getitem__(self, name: str) -> int:
        for c in self.components:
            if c.name == name:
                return c.duration_ps
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.components)

    def replace(self, **durations: int) -> LatencyLedger:
        unknown = set(durations) - {c.name for c in self.components}
        if unknown:
            raise KeyError(f"unknown components: {sorted(unknown)}")
        return LatencyLedger(tuple(
            LatencyComponent(c.name, durations.get(c.name, c.duration_ps), c.group)
            for c in self.components))

    def subtotal(self, group: str) -> int:
        return sum(c.duration_ps for c in self.components if c.group == group)

    @property
    def total_ps(self) -> int:
        return sum(c.duration_ps for c in self.components)


@dataclass(frozen=True)
class FeedbackLatency:
    total_ps: int
    electronics_ps: int
    readout_ps: int
    control_ps: int


def feedback_latency(ledger: LatencyLedger) -> FeedbackLatency:
    """Feedback latency and its electronics / readout / control-pulse split."""
    el = ledger.subtotal("electronics")
    ro = ledger.subtotal("readout")
    cp = ledger.subtotal("control")
    total = ledger.total_ps
    assert el + ro + cp == total
    return FeedbackLatency(total, el, ro, cp)
