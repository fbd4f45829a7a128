import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcsim.timing_fabric import (
    DEFAULT_LEDGER_PS,
    GROUPS,
    ClockEdge,
    ClockTopology,
    LatencyComponent,
    LatencyLedger,
    PllConfig,
    TriggerEvent,
    daisy_chain_topology,
    distribute_clock,
    distribute_clock_many,
    divider_start_phases,
    feedback_latency,
    issue_trigger,
    pll_lock,
    star_topology,
)

# -- PLL -----------------------------------------------------------------------------

def test_zero_delay_r1_is_deterministic():
    cfg = PllConfig()
    assert {pll_lock(cfg, s) for s in range(1000)} == {0}


@pytest.mark.parametrize("n", [2, 3, 4])
def test_divider_phase_count(n):
    cfg = PllConfig(r1_divider=n)
    seen = {pll_lock(cfg, s) for s in range(100 * n)}
    assert len(seen) == n
    assert seen == set(divider_start_phases(n, cfg.input_period_ps))


def test_r1_two_phases_at_25_mhz():
    cfg = PllConfig(r1_divider=2)
    assert {pll_lock(cfg, s) for s in range(100)} == {0, 20_000}


def test_without_zero_delay_phase_is_fixed_per_seed():
    cfg = PllConfig(zero_delay=False)
    assert pll_lock(cfg, 11) == pll_lock(cfg, 11)
    phases = {pll_lock(cfg, s) for s in range(200)}
    assert 1 < len(phases) <= cfg.feedback_phases


@pytest.mark.parametrize("kw", [{"r1_divider": 0}, {"r1_divider": -2}, {"r1_divider": 1.5},
                                {"output_frequency_hz": 2e9 * np.sqrt(2)},
                                {"input_frequency_hz": 0}])
def test_pll_rejects_bad_config(kw):
    with pytest.raises(ValueError):
        PllConfig(**kw)


def test_pll_accepts_fractional_lock():
    # 10 MHz reference to the 25 MHz system clock
    PllConfig(input_frequency_hz=10e6, output_frequency_hz=25e6)


# -- clock distribution ----------------------------------------------------------------

def test_zero_noise_star_is_aligned():
    topo = star_topology(["AWG1", "AWG2", "DAQ"])
    ts = distribute_clock(topo, 5, seed=0)
    assert len(set(ts.values())) == 1
    assert ts["TCM"] == 5 * topo.period_ps


def test_skew_adds_along_path():
    topo = daisy_chain_topology([["A"], ["B"], ["C"]], link_skew_ps=100, skew_ps=7)
    ts = distribute_clock(topo, 0, seed=1)
    assert ts["A"] == 7 and ts["B"] == 107 and ts["C"] == 207


def test_differential_jitter_monte_carlo():
    topo = star_topology(["L1", "L2"], jitter_ps=3.5)
    ts = distribute_clock_many(topo, np.arange(5000), seed=3)
    d = ts["L1"] - ts["L2"]
    # rounding each draw to 1 ps adds 1/12 ps^2 per edge
    expected = np.sqrt(2 * (3.5 ** 2 + 1 / 12))
    assert np.std(d) == pytest.approx(expected, rel=0.05)
    assert np.std(d) == pytest.approx(4.95, rel=0.05)


def test_jitter_scales_with_chain_depth():
    k, sigma = 4, 6.0
    topo = daisy_chain_topology([[]] * (k - 1) + [["END"]], link_jitter_ps=sigma, jitter_ps=sigma)
    ts = distribute_clock_many(topo, np.arange(10_000), seed=2)
    ideal = np.arange(10_000) * topo.period_ps
    assert np.std(ts["END"] - ideal) == pytest.approx(sigma * np.sqrt(k), rel=0.1)


def test_distribution_is_deterministic_and_tick_local():
    topo = star_topology(["A", "B"], jitter_ps=4.0)
    a = distribute_clock_many(topo, [3, 9, 17], seed=5)
    b = distribute_clock_many(topo, [17], seed=5)
    assert a["A"][2] == b["A"][0]
    c = distribute_clock_many(topo, [3, 9, 17], seed=5)
    assert all(np.array_equal(a[m], c[m]) for m in a)


def test_topology_rejects_unreachable_node():
    with pytest.raises(ValueError, match="'ORPHAN'"):
        ClockTopology({"TCM": "c", "A": "c", "ORPHAN": "c"}, (ClockEdge("TCM", "A"),), "TCM")


@pytest.mark.parametrize("edges", [
    (ClockEdge("TCM", "A"), ClockEdge("B", "A"), ClockEdge("TCM", "B")),
    (ClockEdge("TCM", "A", jitter_ps=-1.0),),
    (ClockEdge("TCM", "A", skew_ps=float("inf")),),
    (ClockEdge("A", "TCM"),),
    (ClockEdge("TCM", "X"),),
])
def test_topology_invariants(edges):
    with pytest.raises(ValueError):
        ClockTopology({"TCM": "c", "A": "c", "B": "c"}, edges, "TCM")


def test_topology_rejects_cycle():
    with pytest.raises(ValueError):
        ClockTopology({"TCM": "c", "A": "c", "B": "c"},
                      (ClockEdge("A", "B"), ClockEdge("B", "A")), "TCM")


# -- triggers ----------------------------------------------------------------------------

def test_empty_schedule_is_single_level1():
    ev = issue_trigger(1000, {})
    assert ev == [TriggerEvent(1000, "TCM", "start", level=1)]


def test_awg_daq_spacing():
    topo = star_topology(["AWG", "DAQ"])
    ev = issue_trigger(0, {"AWG": [(0, "readout")], "DAQ": [(48_000, "sample")]},
                       topology=topo, seed=0)
    lvl2 = {e.source: e.timestamp_ps for e in ev if e.level == 2}
    assert lvl2["DAQ"] - lvl2["AWG"] == 48_000


def test_trigger_ordering_and_tiebreak():
    ev = issue_trigger(0, {"DAQ": [(48_000, "sample")], "AWG": [(0, "readout"), (120_000, "feedback")],
                           "AWG0": [(0, "drive")]})
    assert [(e.source, e.tag) for e in ev] == [("AWG", "readout"), ("AWG0", "drive"),
                                              ("TCM", "start"), ("DAQ", "sample"),
                                              ("AWG", "feedback")]


def test_trigger_rejects_negative_offset_and_unknown_module():
    with pytest.raises(ValueError):
        issue_trigger(0, {"AWG": [(-1, "x")]})
    with pytest.raises(KeyError):
        issue_trigger(0, {"NOPE": [(0, "x")]}, topology=star_topology(["AWG"]), seed=0)


@pytest.mark.parametrize("kw", [{"level": 3}, {"timestamp_ps": -1}])
def test_trigger_event_invariants(kw):
    args = {"timestamp_ps": 0, "source": "TCM", **kw}
    with pytest.raises(ValueError):
        TriggerEvent(**args)


# -- latency ledger ------------------------------------------------------------------------

def test_default_ledger():
    ledger = LatencyLedger.default()
    fb = feedback_latency(ledger)
    assert fb.electronics_ps == 125_000
    assert fb.readout_ps == 48_000
    assert ledger["awg_dsp"] == 16_000 and ledger["daq_dsp"] == 20_000
    assert fb.total_ps == sum(d for _, d, _ in DEFAULT_LEDGER_PS)


def test_zero_ledger():
    ledger = LatencyLedger.default().replace(**{n: 0 for n, _, _ in DEFAULT_LEDGER_PS})
    assert feedback_latency(ledger).total_ps == 0


def test_ledger_errors():
    with pytest.raises(ValueError):
        LatencyComponent("x", 1, "other")
    with pytest.raises(ValueError):
        LatencyComponent("x", 1.5)
    with pytest.raises(ValueError):
        LatencyLedger((LatencyComponent("a", 1), LatencyComponent("a", 2)))
    with pytest.raises(KeyError):
        LatencyLedger.default().replace(bogus=1)


ledgers = st.lists(st.tuples(st.integers(0, 10**7), st.sampled_from(GROUPS)), max_size=12)


@settings(max_examples=1000)
@given(ledgers)
def test_ledger_additivity(parts):
    ledger = LatencyLedger(tuple(LatencyComponent(f"c{k}", d, g) for k, (d, g) in enumerate(parts)))
    fb = feedback_latency(ledger)
    assert fb.total_ps == sum(d for d, _ in parts)
    assert fb.electronics_ps + fb.readout_ps + fb.control_ps == fb.total_ps


def test_offsets_snap_to_sample_clock():
    ev = issue_trigger(0, {"AWG": [(1_240, "a"), (1_260, "b")]})
    assert {e.tag: e.timestamp_ps for e in ev if e.level == 2} == {"a": 1_000, "b": 1_500}
