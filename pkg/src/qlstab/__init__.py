"""Finite-time stabilization of multipartite quantum states by quasi-local
dissipative circuits: decision procedures, circuit synthesis, simulation, and
continuous-time mixing analysis."""

__version__ = "0.1.0"
