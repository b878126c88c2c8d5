"""Patch bosonization, coherent polaron dynamics and a finite-mode Fock
simulator for an impurity coupled to a free Fermi gas on the 3-torus."""

__version__ = "0.1.0"
