"""Simulation and exact-moment toolkit for the uniform q-model silo with absorbing walls."""

__version__ = "0.1.0"
