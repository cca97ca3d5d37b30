"""Spin-1 chain simulator for protected edge-mode field sensing.

Subpackages cover the single-site spin algebra, chain Hamiltonian assembly,
a Krylov eigensolver for the low-lying quartet, string-operator edge logic,
Trotterized gate evolution with fidelity metrics, and the Monte Carlo
estimation layer for field direction and strength.
"""

__version__ = "0.1.0"
