"""Eight readout tones on one ADC pair, separated by the decimating demodulator.

The common start phase of all tones advances by 10 degrees per repetition,
so every channel's IQ point walks once around a circle.
"""
import numpy as np

from qcsim.dsp_demod import EIGHT_CHANNEL_PLAN_HZ
from qcsim.orchestrator import rotating_phase_trace

trace = rotating_phase_trace()
print("channel   tone (MHz)   radius (codes)   mean step (deg)")
for k, f in enumerate(EIGHT_CHANNEL_PLAN_HZ):
    step = np.degrees(np.mean(np.diff(np.unwrap(np.angle(trace[:, k])))))
    print(f"{k:7d}   {f / 1e6:10.3f}   {abs(trace[:, k]).mean():14.0f}   {step:15.2f}")
