"""Pump-probe interferometry of autoionizing two-electron states.

Subpackages cover: unit handling and pulse shapes, the essential-states
interference model, a 1D two-electron grid TDSE, exterior complex
scaling for resonances, correlation observables and beat fitting, and a
scenario-driven command line interface.
"""

__version__ = "0.1.0"
