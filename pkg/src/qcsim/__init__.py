"""Behavioral simulator of an FPGA control-and-readout stack for superconducting qubits."""

__version__ = "0.1.0"
