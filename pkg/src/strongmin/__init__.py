"""strongmin: second-order optimality and quadratic-growth analysis.

The library decides, at a candidate point of a smooth program with
orthant and second-order-cone constraint blocks, whether the point is a
stationary point, whether the second-order necessary and sufficient
conditions hold, what the predicted quadratic-growth modulus is, and
which constraint qualifications are satisfied.  Every analytic verdict
can be cross-checked by brute-force sampling oracles.  A companion
module handles univariate piecewise functions where genuinely nonsmooth
behaviour is exercised.
"""

__version__ = "0.1.0"
