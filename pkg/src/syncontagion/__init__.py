"""Simulators for synchronization-driven contagion in financial markets.

Three mechanisms are covered: strategy decoupling in minority-type games,
coupled integrate-and-fire networks of market indices, and communication
driven sentiment feedback. ``market_data`` holds the empirical
change-blindness analysis that motivates the oscillator model.
"""

__version__ = "0.1.0"

RNG_ALGORITHM = "numpy.random.PCG64 via default_rng(seed)"
