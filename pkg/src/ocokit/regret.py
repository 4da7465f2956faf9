"""Weighted regret and online saddle-point gap measurement.

Realized quantities are measured against offline comparators produced by
the certified reference solvers, so the comparator error is dominated by
test tolerances. Negative realized regret is possible and reported as-is;
the theoretical bounds are one-sided.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import oracle as oracle_mod


def _hash_point(point):
    return hashlib.sha256(np.ascontiguousarray(point, dtype=float).tobytes()).hexdigest()[:16]


@dataclass
class RegretReport:
    """Realized regret (or online SP gap) next to its theoretical bound.

    ``components`` carries the per-player split for saddle-point runs.
    ``flagged`` marks reports whose comparator solve missed its certified
    accuracy target; the values are still returned.
    """

    realized: float
    bound: float
    comparator: np.ndarray
    components: dict | None = None
    flagged: bool = False

    @property
    def slack(self):
        return self.bound - self.realized

    def to_json(self):
        return json.dumps({
            "realized": self.realized,
            "bound": self.bound,
            "slack": self.slack,
            "comparator_hash": _hash_point(self.comparator),
            **({"components": self.components} if self.components else {}),
            **({"flagged": True} if self.flagged else {}),
        }, sort_keys=True)


def weighted_regret(stream, trace, theta, offline, bound=np.nan):
    """sum_t theta_t f_t(x_t) minus the certified offline optimum of the
    theta-weighted sum."""
    if trace.horizon != theta.horizon:
        raise ValueError("trace and weight schedule horizons differ")
    played = sum(theta[t] * stream.value(t, trace.points[t - 1])
                 for t in range(1, theta.horizon + 1))
    best = offline.minimize_weighted_sum(stream, theta, trace.setup)
    return RegretReport(realized=float(played - best.value), bound=float(bound),
                        comparator=best.point, flagged=not best.certified)


def online_sp_gap(stream, trace, theta, offline, setup_x, setup_y, bound=np.nan):
    """sup_y sum_t theta_t phi_t(x_t, y) - inf_x sum_t theta_t phi_t(x, y_t),
    reported together with its exact per-player decomposition."""
    if trace.horizon != theta.horizon:
        raise ValueError("trace and weight schedule horizons differ")
    nx = setup_x.dim
    xs = trace.points[:, :nx]
    ys = trace.points[:, nx:]
    T = theta.horizon

    mid = sum(theta[t] * stream.value(t, xs[t - 1], ys[t - 1]) for t in range(1, T + 1))

    x_comps = [stream.component_x(t, ys[t - 1]) for t in range(1, T + 1)]
    best_x = offline.minimize(oracle_mod.aggregate(x_comps, theta.values), setup_x)

    y_comps = [stream.component_y(t, xs[t - 1]) for t in range(1, T + 1)]
    y_obj = oracle_mod.aggregate(y_comps, theta.values)
    if y_obj.pieces or y_obj.ent_alpha:
        raise oracle_mod.OracleError("y-player comparator must be a concave quadratic")
    best_y = offline.maximize_concave(
        oracle_mod.IsotropicQuadratic(y_obj.alpha, y_obj.lin, y_obj.const), setup_y)

    x_regret = float(mid - best_x.value)
    y_regret = float(best_y.value - mid)
    comparator = np.concatenate([best_x.point, best_y.point])
    return RegretReport(realized=x_regret + y_regret, bound=float(bound),
                        comparator=comparator,
                        components={"x_regret": x_regret, "y_regret": y_regret},
                        flagged=not (best_x.certified and best_y.certified))


def theoretical_bound(regime, T, theta=None, set_width=None, grad_bound=None,
                      strong_convexity=None, smoothness=None):
    """Worst-case weighted regret (or online SP gap) guarantees.

    nonsmooth          sqrt(2 Omega sup(theta)^2 G^2 T)
    strongly-convex    2 G^2 / (alpha (T+1))
    smooth             Omega L sup(theta)
    """
    if regime == "nonsmooth":
        return float(np.sqrt(2.0 * set_width * theta.sup ** 2 * grad_bound ** 2 * T))
    if regime == "strongly-convex":
        return float(2.0 * grad_bound ** 2 / (strong_convexity * (T + 1)))
    if regime == "smooth":
        return float(set_width * smoothness * theta.sup)
    raise ValueError(f"unknown regime {regime!r}")
