"""
Numerical tolerances shared across the solver, oracle and estimator modules.
"""

# Metric eigenvalues below this are a non-PSD metric, not round-off
NON_PSD_TOL = 1e-8

# Gram-Schmidt rank tolerance for span{g, d_prev}
RANK_TOL = 1e-10

# Orthogonal component allowed for a step said to lie in span{g, d_prev}
IN_SUBSPACE_TOL = 1e-8

# Q + 2λG must have eigenvalues above this for the radius-free solve
INDEFINITE_TOL = 1e-12

# Predicted reductions at or below this are treated as no progress
ZERO_REDUCTION_TOL = 1e-14

# Relative slack on the trust-radius feasibility checks
RADIUS_SLACK = 1e-9
