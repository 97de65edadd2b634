"""Chance-constrained vaccine cold-chain planning.

Builds the scenario-expanded LP of a multi-tier vaccine supply chain, tunes
shortage penalties by bisection until each (vaccine, clinic, period) meets its
service level on the sample, and reports supply-ratio and full-immunisation
coverage metrics for network and presentation redesigns.
"""

__version__ = "0.1.0"
