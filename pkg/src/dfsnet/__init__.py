"""Photon-mediated quantum network simulator with DFS-encoded logical qubits."""

__version__ = "0.1.0"
