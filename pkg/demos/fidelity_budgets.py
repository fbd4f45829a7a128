"""How much timing jitter, spurious tone and bias noise a 0.99999 gate tolerates."""
import numpy as np

from qcsim.fidelity_budget import (BiasBudget, SpuriousDriveSpec, bias_precision,
                                   jitter_for_fidelity, jitter_to_fidelity,
                                   worst_case_spurious_fidelity)

for f_if in (50e6, 100e6, 200e6):
    print(f"IF {f_if / 1e6:5.0f} MHz: jitter budget {jitter_for_fidelity(0.99999, f_if) * 1e12:.2f} ps")

print()
for j in (1e-12, 5e-12, 10e-12):
    phi, f = jitter_to_fidelity(j, 100e6)
    print(f"{j * 1e12:4.0f} ps at 100 MHz -> phase {phi * 1e3:.2f} mrad, F = {f:.7f}")

print()
for sfdr in (-60, -50, -40, -30):
    f, psi = worst_case_spurious_fidelity(SpuriousDriveSpec.from_sfdr(sfdr))
    print(f"SFDR {sfdr} dBc: worst-case F = {f:.7f} at IF phase {psi / np.pi:.3f} pi")

print(f"\nbias precision for 1e-5 flux quanta: {bias_precision(BiasBudget()) * 1e6:.2f} uV")
