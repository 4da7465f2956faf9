"""ocokit: weighted-regret online convex optimization, robust feasibility
solving, and joint estimation-optimization."""

__version__ = "0.1.0"
