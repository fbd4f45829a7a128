"""Calibrate an imbalanced IQ mixer, then measure clock jitter between two AWGs."""
from qcsim.orchestrator import run

mix = run({"experiment": "mixer_calibration", "seed": 0})
for row in mix.rows:
    print(f"{row['stage']:14s} LO {row['lo_dbc']:8.1f} dBc   image {row['image_dbc']:8.1f} dBc")

jit = run({"experiment": "jitter_histogram", "seed": 0})
print(f"\nrelative AWG delay over {jit.summary['shots']} shots: "
      f"sigma = {jit.summary['std_ps']:.2f} ps")
peak = max(jit.rows, key=lambda r: r["count"])
print(f"histogram peak {peak['count']} counts at {peak['bin_center_ps']:+.1f} ps")
