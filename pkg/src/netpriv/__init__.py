"""Simulation and closed-form analysis of parallel-link anonymous networks
(P2Priv and NetPriv)."""

__version__ = "0.1.0"
