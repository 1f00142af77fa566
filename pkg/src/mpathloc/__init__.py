"""Robust sequential radio localization in multipath channels.

Library layout:

- :mod:`mpathloc.mathdist` -- special functions and truncated distributions
- :mod:`mpathloc.signals` -- pulse shaping, snapshot synthesis, image sources
- :mod:`mpathloc.ceda` -- snapshot channel estimation and detection
- :mod:`mpathloc.measmodel` -- LOS/NLOS likelihoods and association model
- :mod:`mpathloc.tracker` -- particle-based sum-product tracking filter
- :mod:`mpathloc.bounds` -- position error bounds (snapshot and posterior)
- :mod:`mpathloc.scenario` -- experiment configs, generators, Monte Carlo
- :mod:`mpathloc.cli` -- command-line entry points
"""

__version__ = "0.1.0"
