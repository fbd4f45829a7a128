"""Walk one measurement-based feedback cycle and print its timeline.

An excited qubit is read out, demodulated at fs/4, thresholded, and the
resulting trigger fires a pulse from the AWG. Run it again with the qubit
in ground to see the loop stop at the decision.
"""
from qcsim.orchestrator import run
from qcsim.timing_fabric import LatencyLedger

ledger = LatencyLedger.default()
print("latency ledger")
for c in ledger.components:
    print(f"  {c.name:16s} {c.duration_ps / 1000:6.1f} ns  ({c.group})")

for state in ("excited", "ground"):
    res = run({"experiment": "feedback_latency", "seed": 0, "input_state": state})
    print(f"\ninput {state}: {res.summary['outcome']}")
    for row in res.rows:
        print(f"  {row['timestamp_ps'] / 1000:7.1f} ns  {row['event']}")
    if res.summary["tau_fb_ps"] is not None:
        print(f"  total {res.summary['tau_fb_ps'] / 1000:.0f} ns, "
              f"electronics {res.summary['tau_el_ps'] / 1000:.0f} ns")
