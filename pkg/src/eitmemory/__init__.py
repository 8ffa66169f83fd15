"""Simulation of a warm-vapour EIT quantum memory.

Subpackages: :mod:`core` (four-level Lindblad model), :mod:`propagation`
(Maxwell-Bloch storage), :mod:`spectral` (broadening, etalons, transmission),
:mod:`noise` (SBR, qubit fidelity) and :mod:`harness` (scenarios and CLI).
"""

__version__ = "0.1.0"
