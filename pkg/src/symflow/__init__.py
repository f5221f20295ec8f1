"""G-invariant Ricci flow with boundary on [0, 1] x G/H.

Submodules
----------
algebra     structure constants d_k, beta_k, gamma_{i,k}^l from bracket tables
bcdsl       expression language for boundary maps and initial profiles
geometry    reduced curvature, boundary geometry and the F-functional
deturck     gauge-fixed solver, gauge recovery and flow residuals
perelman    modified-flow pairs and monotonicity diagnostics
oracle      independent cross-checks and convergence-order fits
cli         the ``symflow`` command
"""

__version__ = "0.1.0"
