"""
hstnalloc
=========

The 'hstnalloc' Python package implements joint power and channel allocation
for spectrum sharing between a terrestrial multi-BS system and satellite
mobile terminals using only large-scale channel state information.

Per-pair power allocations are obtained from a max-min formulation of the
deterministic-equivalent ergodic rate, users are assigned to channels using
the Kuhn-Munkres algorithm and the rate model is validated against Monte Carlo
simulations of the small-scale fading.
"""
__version__ = "0.1pre"
