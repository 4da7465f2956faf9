"""Joint estimation-optimization.

The task is to approach min_x f(x, u*) while the correct data u* is only
available through a stream of improving estimates u_1, u_2, .... Each
iteration consumes one new estimate and performs one first-order update of
the decision; after T steps the weighted average x_bar is returned.

The quality of x_bar decomposes into a weighted-regret term on the
surrogate losses

    q_t(x) = <grad_x f(x_t, u_t), x>   (+ alpha V_{x_t}(x) under strong
                                         convexity w.r.t. the setup d.g.f.)

plus two data penalties that vanish when u_t = u*:

    |f(x_bar, u_T) - min_x f(x, u*)|
        <= [q-regret] + |f(x_bar, u_T) - f(x_bar, u*)|
           + D sum_t theta_t ||grad_x f(x_t, u_t) - grad_x f(x_t, u*)||_*,

with D the diameter of X. Under a linearly convergent estimator
(||u_t - u*|| <= C beta^t) the weighted distance sum is O(1/T) for uniform
weights and O(1/T^2) for increasing weights, with the exact partial-sum
constant beta (1 - (T+1) beta^T + T beta^{T+1}) / (1-beta)^2, so the
penalties never dominate the regret term.

Three regimes are provided, differing in engine, weights and steps:

    nonsmooth        descent, uniform weights, sqrt-horizon constant step
    smooth           lookahead prox, uniform weights, step 1/L
    strongly-convex  descent, weights 2t/(T(T+1)), steps 2/(alpha (t+1))

In the strongly-convex regime the engine feed is the plain gradient
grad_x f(x_t, u_t); the increasing weights enter only through the regret
functional, which is what yields the O(1/T) guarantee
2 G^2 / (alpha (T+1)) without any log factor.

u* is test-harness material: reports computed without it omit the
u*-dependent terms and still return f(x_bar, u_T) and the regret term.
"""

import json
from dataclasses import dataclass

import numpy as np

from .core import mirror_descent, mirror_prox, step_schedule, weights
from .oracle import (EntropyRegularizedLinear, IsotropicQuadratic, MaxAffine,
                     OfflineOracle, PiecewiseObjective, aggregate)
from .prox import EntropySimplexSetup

REGIMES = ("nonsmooth", "smooth", "strongly-convex")


class StreamError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# objective families
# ---------------------------------------------------------------------------

class TrackingObjective:
    """f(x, u) = ||x - u||^2 / 2: smooth (L = 1) and strongly convex
    (alpha = 1) with unit data-Lipschitz moduli."""

    def value(self, x, u):
        d = np.asarray(x, dtype=float) - u
        return 0.5 * float(d @ d)

    def grad_x(self, x, u):
        return np.asarray(x, dtype=float) - u

    def x_component(self, u):
        return IsotropicQuadratic.from_center(1.0, u)


class MaxAffineDataObjective:
    """f(x, u) = alpha/2 ||x||^2 + max_j ( <a_j, x> + <w_j, u> + b_j ):
    non-smooth in x; the data enters through the piece offsets, so the
    x-gradient can jump with u (no data-smoothness modulus exists)."""

    def __init__(self, rows, data_rows, offsets, alpha=0.0):
        self.rows = np.asarray(rows, dtype=float)
        self.data_rows = np.asarray(data_rows, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.alpha = float(alpha)

    def _offsets_at(self, u):
        return self.offsets + self.data_rows @ u

    def value(self, x, u):
        base = 0.5 * self.alpha * float(x @ x)
        return base + float(np.max(self.rows @ x + self._offsets_at(u)))

    def grad_x(self, x, u):
        j = int(np.argmax(self.rows @ x + self._offsets_at(u)))
        return self.alpha * np.asarray(x, dtype=float) + self.rows[j]

    def x_component(self, u):
        ma = MaxAffine(self.rows, self._offsets_at(u))
        if self.alpha == 0:
            return ma
        return PiecewiseObjective(self.alpha, np.zeros(self.rows.shape[1]), 0.0,
                                  [(1.0, ma)])


@dataclass
class JeoConstants:
    g_fx: float
    alpha_fx: float | None = None
    l_fx: float | None = None
    g_fu: float | None = None
    l_fu: float | None = None


@dataclass
class JeoInstance:
    objective: object
    x_setup: object
    diameter: float
    constants: JeoConstants
    u_star: np.ndarray | None = None

    def spot_check(self, rng, u_box, samples=25, tol=1e-8):
        """Sampled validation of the declared moduli against points from
        the decision domain and a data ball of radius ``u_box``."""
        k = self.constants
        dim_u = len(self.u_star) if self.u_star is not None else self.x_setup.dim
        for _ in range(samples):
            x = self.x_setup.sample(rng)
            u = rng.normal(size=dim_u)
            u *= u_box * rng.uniform() / max(np.linalg.norm(u), 1e-12)
            up = rng.normal(size=dim_u)
            up *= u_box * rng.uniform() / max(np.linalg.norm(up), 1e-12)
            if np.linalg.norm(self.objective.grad_x(x, u)) > k.g_fx + tol:
                raise ValueError("declared G_fX bound violated")
            if k.g_fu is not None:
                dv = abs(self.objective.value(x, u) - self.objective.value(x, up))
                if dv > k.g_fu * np.linalg.norm(u - up) + tol:
                    raise ValueError("declared G_fU bound violated")
            if k.l_fu is not None:
                dg = np.linalg.norm(self.objective.grad_x(x, u)
                                    - self.objective.grad_x(x, up))
                if dg > k.l_fu * np.linalg.norm(u - up) + tol:
                    raise ValueError("declared L_fU bound violated")


def tracking_instance(x_setup, u_star, u_scale):
    """Tracking objective on a Euclidean domain; ``u_scale`` bounds the
    distance of every estimate the paired stream can emit from u*."""
    span = x_setup.set_width()
    diam = 2.0 * np.sqrt(2.0 * span)
    g_fx = np.sqrt(2.0 * span) + u_scale + np.linalg.norm(u_star)
    consts = JeoConstants(g_fx=g_fx, alpha_fx=1.0, l_fx=1.0, g_fu=g_fx, l_fu=1.0)
    return JeoInstance(TrackingObjective(), x_setup, diam, consts,
                       u_star=np.asarray(u_star, dtype=float))


def max_affine_instance(rng, x_setup, u_star, u_scale, pieces=4, alpha=0.0):
    """Piecewise objective with data-driven offsets on a simplex or ball
    domain; non-smooth in x."""
    dim = x_setup.dim
    dim_u = len(u_star)
    rows = rng.uniform(-1, 1, size=(pieces, dim))
    data_rows = rng.uniform(-1, 1, size=(pieces, dim_u)) * 0.5
    offsets = rng.uniform(-0.2, 0.2, size=pieces)
    obj = MaxAffineDataObjective(rows, data_rows, offsets, alpha=alpha)
    if isinstance(x_setup, EntropySimplexSetup):
        diam = 2.0
        x_norm_bound = 1.0
        g_fx = alpha * x_norm_bound + float(np.max(np.abs(rows)))
        # the squared-l2 term is not strongly convex relative to the
        # entropy d.g.f. (its Hessian is dominated by 1/x on the simplex),
        # so no curvature modulus is declared there
        alpha_fx = None
    else:
        diam = 2.0 * np.sqrt(2.0 * x_setup.set_width())
        x_norm_bound = 0.5 * diam
        g_fx = alpha * x_norm_bound + float(np.max(np.linalg.norm(rows, axis=1)))
        alpha_fx = alpha if alpha > 0 else None
    g_fu = float(np.max(np.linalg.norm(data_rows, axis=1)))
    consts = JeoConstants(g_fx=g_fx, alpha_fx=alpha_fx, g_fu=g_fu, l_fu=None)
    return JeoInstance(obj, x_setup, diam, consts,
                       u_star=np.asarray(u_star, dtype=float))


# ---------------------------------------------------------------------------
# estimator streams
# ---------------------------------------------------------------------------

class EstimatorStream:
    """Estimate sequence u_1, u_2, ... with a declared linear decay:
    ||u_t - u*|| <= scale * beta^t against the generating u*."""

    def __init__(self, points_fn, scale, beta, label):
        self._points_fn = points_fn
        self.scale = float(scale)
        self.beta = float(beta)
        self.label = label

    def take(self, T):
        pts = self._points_fn(T)
        if pts.shape[0] < T:
            raise StreamError(f"stream exhausted at {pts.shape[0]} < {T} estimates")
        return pts[:T]

    def decay_bound(self, t):
        return self.scale * self.beta ** t


def geometric_stream(u_star, direction, scale, beta):
    """Synthetic stream with exactly ||u_t - u*|| = scale * beta^t."""
    u_star = np.asarray(u_star, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)

    def points(T):
        t = np.arange(1, T + 1)
        return u_star[None, :] + (scale * beta ** t)[:, None] * d[None, :]

    return EstimatorStream(points, scale, beta, "geometric")


class QuadraticEstimation:
    """Estimation objective g(u) = sum_i d_i (u_i - c_i)^2 / 2 with known
    spectrum, so the gradient-descent contraction factor is exact."""

    def __init__(self, diag, center):
        self.diag = np.asarray(diag, dtype=float)
        self.center = np.asarray(center, dtype=float)
        if np.any(self.diag <= 0):
            raise ValueError("estimation objective must be strongly convex")

    @property
    def condition_number(self):
        return float(np.max(self.diag) / np.min(self.diag))

    def grad(self, u):
        return self.diag * (u - self.center)


def estimator_from_g(g, u0, step=None):
    """Gradient descent on a smooth, strongly convex estimation objective.

    With step 2/(mu + M) each coordinate contracts by at most
    beta = (kappa - 1)/(kappa + 1), so ||u_t - u*|| <= ||u_0 - u*|| beta^t
    is declared as the stream decay. A step that increases the distance to
    the minimizer aborts generation.
    """
    u0 = np.asarray(u0, dtype=float)
    mu, big_m = float(np.min(g.diag)), float(np.max(g.diag))
    h = 2.0 / (mu + big_m) if step is None else float(step)
    beta = max(abs(1.0 - h * mu), abs(1.0 - h * big_m))
    scale = float(np.linalg.norm(u0 - g.center))

    def points(T):
        out = np.empty((T, len(u0)))
        u = u0.copy()
        dist = scale
        for t in range(T):
            u = u - h * g.grad(u)
            d = float(np.linalg.norm(u - g.center))
            if d > dist + 1e-12:
                raise StreamError("estimator step increased the distance to u*")
            dist = d
            out[t] = u
        return out

    return EstimatorStream(points, scale, beta, "gradient-descent")


def weighted_decay_sum(theta, distances):
    """sum_t theta_t ||u_t - u*|| for recorded distances."""
    return float(np.asarray(theta.values) @ np.asarray(distances, dtype=float))


def decay_sum_bound(scale, beta, T, kind):
    """Closed-form bound on sum_t theta_t scale beta^t.

    uniform:    (scale / T) * beta (1 - beta^T) / (1 - beta)
    increasing: (2 scale / (T (T+1)))
                * beta (1 - (T+1) beta^T + T beta^{T+1}) / (1 - beta)^2
    """
    if beta >= 1.0:
        raise ValueError("decay bound needs beta < 1")
    if beta == 0.0:
        return 0.0
    if kind == "uniform":
        return scale * beta * (1.0 - beta ** T) / ((1.0 - beta) * T)
    if kind == "increasing":
        partial = beta * (1.0 - (T + 1) * beta ** T + T * beta ** (T + 1)) \
            / (1.0 - beta) ** 2
        return 2.0 * scale * partial / (T * (T + 1))
    raise ValueError(f"unknown weight kind {kind!r}")


# ---------------------------------------------------------------------------
# runs and reports
# ---------------------------------------------------------------------------

@dataclass
class JeoReport:
    """Outcome of a joint run. u*-dependent fields are None in production
    mode (unknown correct data)."""

    regime: str
    x_bar: np.ndarray
    objective_at_estimate: float
    q_regret: float
    q_regret_bound: float
    computable_gap: float | None = None
    data_penalty: float | None = None
    eval_penalty: float | None = None
    data_penalty_bound: float | None = None
    eval_penalty_bound: float | None = None
    decomposition_slack: float | None = None
    oracle_gap: float = 0.0
    # per-step rows (t, u_dist, gap_partial, regret_partial) for the trace
    # file; u_dist is NaN when u* is unknown
    per_step: list = None

    def to_json(self):
        payload = {"regime": self.regime,
                   "objective_at_estimate": self.objective_at_estimate,
                   "q_regret": self.q_regret,
                   "q_regret_bound": self.q_regret_bound,
                   "oracle_gap": self.oracle_gap}
        for name in ("computable_gap", "data_penalty", "eval_penalty",
                     "data_penalty_bound", "eval_penalty_bound",
                     "decomposition_slack"):
            v = getattr(self, name)
            if v is not None:
                payload[name] = v
        return json.dumps(payload, sort_keys=True)


def _regime_schedule(instance, regime, T, theta):
    k = instance.constants
    if regime == "nonsmooth":
        return step_schedule("constant-nonsmooth", T, theta,
                             set_width=instance.x_setup.set_width(),
                             grad_bound=k.g_fx)
    if regime == "smooth":
        if k.l_fx is None:
            raise ValueError("smooth regime needs the smoothness modulus l_fx")
        return step_schedule("constant-smooth", T, theta, smoothness=k.l_fx)
    if regime == "strongly-convex":
        if k.alpha_fx is None:
            raise ValueError("strongly-convex regime needs alpha_fx")
        return step_schedule("inverse-linear", T, strong_convexity=k.alpha_fx)
    raise ValueError(f"unknown regime {regime!r}")


def run_jeo(instance, stream, regime, T, offline=None):
    """Run one regime for T steps in lockstep with the estimator stream
    (estimate t is revealed at the start of iteration t) and assemble the
    report; see ``gap_decomposition`` for the analysis pieces."""
    offline = offline or OfflineOracle()
    theta = weights("increasing" if regime == "strongly-convex" else "uniform", T)
    sched = _regime_schedule(instance, regime, T, theta)
    us = stream.take(T)
    f = instance.objective

    if regime == "smooth":
        feed_eta = lambda t, v: theta[t] * f.grad_x(v, us[t - 1])
        feed_xi = lambda t, z: theta[t] * f.grad_x(z, us[t - 1])
        trace = mirror_prox(instance.x_setup, T, sched, feed_eta, feed_xi,
                            theta=theta)
    elif regime == "nonsmooth":
        feed = lambda t, x: theta[t] * f.grad_x(x, us[t - 1])
        trace = mirror_descent(instance.x_setup, T, sched, feed, theta=theta)
    else:
        feed = lambda t, x: f.grad_x(x, us[t - 1])
        trace = mirror_descent(instance.x_setup, T, sched, feed, theta=theta)

    return gap_decomposition(instance, trace, us, theta, regime, offline)


def _q_components(instance, xs, grads, regime):
    """Surrogate losses q_t as solver-ready descriptions."""
    alpha = instance.constants.alpha_fx if regime == "strongly-convex" else None
    setup = instance.x_setup
    comps = []
    for x_t, g_t in zip(xs, grads):
        if alpha is None:
            comps.append(IsotropicQuadratic(0.0, g_t))
        elif isinstance(setup, EntropySimplexSetup):
            gw = setup.dgf_grad(x_t)
            comps.append(EntropyRegularizedLinear(
                alpha, g_t - alpha * gw,
                alpha * (float(gw @ x_t) - setup.dgf(x_t))))
        else:
            comps.append(IsotropicQuadratic(
                alpha, g_t - alpha * x_t, 0.5 * alpha * float(x_t @ x_t)))
    return comps


def gap_decomposition(instance, trace, us, theta, regime, offline=None):
    """Regret term, data penalties and (in test mode) the computable gap
    with its decomposition slack."""
    offline = offline or OfflineOracle()
    f = instance.objective
    T = theta.horizon
    xs = trace.points
    grads = [f.grad_x(xs[t], us[t]) for t in range(T)]
    played = sum(theta.values[t] * float(grads[t] @ xs[t]) for t in range(T))

    comps = _q_components(instance, xs, grads, regime)
    best = offline.minimize(aggregate(comps, theta.values), instance.x_setup)
    # the strongly convex q_t adds alpha V_{x_t}(x), which vanishes at x_t,
    # so the played side never carries the Bregman term
    q_regret = float(played - best.value)

    k = instance.constants
    if regime == "strongly-convex":
        bound = 2.0 * k.g_fx ** 2 / (k.alpha_fx * (T + 1))
    elif regime == "smooth":
        bound = instance.x_setup.set_width() * k.l_fx * theta.sup
    else:
        bound = float(np.sqrt(2.0 * instance.x_setup.set_width()
                              * theta.sup ** 2 * k.g_fx ** 2 * T))

    x_bar = trace.averaged_point(theta)
    running_avg = np.cumsum(theta.values[:, None] * xs, axis=0) \
        / np.cumsum(theta.values)[:, None]
    running_played = np.cumsum(theta.values * np.array(
        [float(grads[t] @ xs[t]) for t in range(T)]))
    if instance.u_star is None:
        step_dists = np.full(T, np.nan)
    else:
        step_dists = np.linalg.norm(us - instance.u_star[None, :], axis=1)
    per_step = [(t + 1, float(step_dists[t]),
                 f.value(running_avg[t], us[t]), float(running_played[t]))
                for t in range(T)]
    report = JeoReport(regime=regime, x_bar=x_bar,
                       objective_at_estimate=f.value(x_bar, us[-1]),
                       q_regret=q_regret, q_regret_bound=float(bound),
                       oracle_gap=best.gap, per_step=per_step)

    if instance.u_star is None:
        return report

    u_star = instance.u_star
    dists = step_dists
    data_pen = instance.diameter * sum(
        theta.values[t] * instance.x_setup.dual_norm(grads[t] - f.grad_x(xs[t], u_star))
        for t in range(T))
    eval_pen = abs(f.value(x_bar, us[-1]) - f.value(x_bar, u_star))
    true_best = offline.minimize(
        aggregate([f.x_component(u_star)], [1.0]), instance.x_setup)
    gap = abs(f.value(x_bar, us[-1]) - true_best.value)

    report.computable_gap = float(gap)
    report.data_penalty = float(data_pen)
    report.eval_penalty = float(eval_pen)
    report.decomposition_slack = float(q_regret + data_pen + eval_pen - gap)
    report.oracle_gap = max(report.oracle_gap, true_best.gap)
    if k.g_fu is not None:
        report.eval_penalty_bound = float(k.g_fu * dists[-1])
    if k.l_fu is not None:
        report.data_penalty_bound = float(
            instance.diameter * k.l_fu * weighted_decay_sum(theta, dists))
    return report


def fixed_estimate_gap(instance, u_fixed, offline=None):
    """Quality of the naive scheme that fully minimizes f(., u_fixed):
    returns f(x_hat, u*) - min_x f(x, u*), the plateau the joint runs are
    measured against."""
    offline = offline or OfflineOracle()
    f = instance.objective
    x_hat = offline.minimize(aggregate([f.x_component(u_fixed)], [1.0]),
                             instance.x_setup).point
    best = offline.minimize(aggregate([f.x_component(instance.u_star)], [1.0]),
                            instance.x_setup)
    return float(f.value(x_hat, instance.u_star) - best.value)
