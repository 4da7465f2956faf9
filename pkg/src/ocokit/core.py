"""Iteration engines and schedules.

Two engines are provided. Mirror descent is non-anticipatory: the feed for
step t sees only the current iterate, and each step does

    z_{t+1} = Prox_{z_t}(gamma_t xi_t).

Mirror prox makes 1-lookahead decisions through two prox calls per step:

    z_t = Prox_{v_t}(gamma_t eta_t),   v_{t+1} = Prox_{v_t}(gamma_t xi_t),

where eta_t is evaluated at the leading point v_t before z_t exists.

Feeds return the dual vector exactly as the relevant guarantee prescribes
it (including any weight factor); the engines never rescale. Every run
starts from the setup's center and is deterministic given its inputs.

When comparator points are supplied, each step additionally records the
worst-case residual of the per-step inequality

    gamma_t <xi_t, z_t - z> <= V_{z_t}(z) - V_{z_{t+1}}(z)
                               + gamma_t^2 ||xi_t||_*^2 / 2          (MD)
    gamma_t <xi_t, z_t - z> <= V_{v_t}(z) - V_{v_{t+1}}(z)
        + (gamma_t^2 ||xi_t - eta_t||_*^2 - ||z_t - v_t||^2) / 2     (MP)

over those comparators, scaled by the magnitude of the terms involved. In
exact arithmetic both residuals are nonpositive.
"""

import csv
from dataclasses import dataclass, field

import numpy as np


class FeedError(RuntimeError):
    """A feed produced a non-finite dual vector; the run is aborted."""


@dataclass(frozen=True)
class WeightSchedule:
    """Convex combination weights theta in the T-simplex."""

    kind: str
    values: np.ndarray

    @property
    def horizon(self):
        return len(self.values)

    @property
    def sup(self):
        return float(np.max(self.values))

    def __getitem__(self, t):
        """Weight for 1-based step index t."""
        return float(self.values[t - 1])


def weights(kind, T, values=None):
    """Build a weight schedule.

    kinds: "uniform" (1/T), "increasing" (2t / (T(T+1))), or "custom"
    with explicit values summing to 1.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if kind == "uniform":
        vals = np.full(T, 1.0 / T)
    elif kind == "increasing":
        t = np.arange(1, T + 1, dtype=float)
        vals = 2.0 * t / (T * (T + 1))
    elif kind == "custom":
        vals = np.asarray(values, dtype=float)
        if vals.shape != (T,) or np.any(vals < 0):
            raise ValueError("custom weights must be T nonnegative values")
        if abs(float(np.sum(vals)) - 1.0) > 1e-12:
            raise ValueError("custom weights must sum to 1")
    else:
        raise ValueError(f"unknown weight kind {kind!r}")
    return WeightSchedule(kind, vals)


@dataclass(frozen=True)
class StepSchedule:
    kind: str
    values: np.ndarray

    def __getitem__(self, t):
        """Step size for 1-based step index t."""
        return float(self.values[t - 1])


def step_schedule(kind, T, theta=None, set_width=None, grad_bound=None,
                  strong_convexity=None, smoothness=None):
    """Step sizes for the three structural regimes.

    constant-nonsmooth   gamma   = sqrt(2 Omega / (sup_t theta_t^2 G^2 T))
    inverse-linear       gamma_t = 2 / (alpha (t+1))
    constant-smooth      gamma   = 1 / (L sup_t theta_t)

    The supremum of the weights is computed from the supplied schedule, so
    custom schedules are handled exactly.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")

    def _need(value, name):
        if value is None or not np.isfinite(value) or value <= 0:
            raise ValueError(f"step schedule {kind!r} needs positive finite {name}")
        return float(value)

    if kind == "constant-nonsmooth":
        omega = _need(set_width, "set_width")
        g = _need(grad_bound, "grad_bound")
        if theta is None:
            raise ValueError("constant-nonsmooth schedule needs the weight schedule")
        gamma = np.sqrt(2.0 * omega / (theta.sup ** 2 * g ** 2 * T))
        vals = np.full(T, gamma)
    elif kind == "inverse-linear":
        alpha = _need(strong_convexity, "strong_convexity")
        t = np.arange(1, T + 1, dtype=float)
        vals = 2.0 / (alpha * (t + 1.0))
    elif kind == "constant-smooth":
        lip = _need(smoothness, "smoothness")
        if theta is None:
            raise ValueError("constant-smooth schedule needs the weight schedule")
        vals = np.full(T, 1.0 / (lip * theta.sup))
    else:
        raise ValueError(f"unknown step schedule kind {kind!r}")
    return StepSchedule(kind, vals)


class LossOracle:
    """First-order access to a loss stream f_t."""

    def value(self, t, x):
        raise NotImplementedError

    def subgradient(self, t, x):
        raise NotImplementedError


class SaddleOracle:
    """First-order access to a convex-concave stream phi_t through its
    monotone operator F_t(x, y) = [grad_x phi_t; -grad_y phi_t]."""

    def value(self, t, x, y):
        raise NotImplementedError

    def operator(self, t, x, y):
        raise NotImplementedError


@dataclass
class RunTrace:
    """Per-iteration record of an engine run.

    ``points`` holds the decisions z_1..z_T; ``aux_points`` holds the
    mirror-prox leading points v_1..v_T (None for mirror descent).
    ``residuals`` and ``cancellations`` are NaN when no comparator points
    were supplied.
    """

    algorithm: str
    points: np.ndarray
    gammas: np.ndarray
    thetas: np.ndarray
    xi_norms: np.ndarray
    residuals: np.ndarray
    aux_points: np.ndarray | None = None
    cancellations: np.ndarray | None = None
    setup: object = field(default=None, repr=False)

    @property
    def horizon(self):
        return self.points.shape[0]

    def averaged_point(self, theta):
        return np.asarray(theta.values) @ self.points

    def to_csv(self, path, dump_iterates=None):
        """Write the trace with columns t, gamma, theta, xi_dual_norm,
        step_residual; optionally dump the iterate vectors to a sidecar."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "gamma", "theta", "xi_dual_norm", "step_residual"])
            for t in range(self.horizon):
                w.writerow([t + 1,
                            float(self.gammas[t]),
                            float(self.thetas[t]),
                            float(self.xi_norms[t]),
                            float(self.residuals[t])])
        if dump_iterates:
            np.savetxt(dump_iterates, self.points, delimiter=",")


def _as_finite_dual(xi, t, label):
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise FeedError(f"non-finite {label} at step {t}: aborting run")
    return xi


class MirrorDescentState:
    """Incremental mirror descent, one prox per ``step`` call.

    Exposed so coupled dynamics (e.g. alternating solution/data updates)
    can interleave several engines; ``mirror_descent`` wraps the plain
    single-stream loop.
    """

    def __init__(self, setup, steps, check_points=None):
        self.setup = setup
        self.steps = steps
        self.check_points = check_points
        self.current = setup.omega_center()
        self.t = 1

    def step(self, xi):
        xi = _as_finite_dual(xi, self.t, "dual vector")
        gamma = self.steps[self.t]
        z_next = self.setup.prox(self.current, gamma * xi)
        residual = np.nan
        if self.check_points is not None:
            residual = md_step_residual(self.setup, self.current, z_next,
                                        gamma, xi, self.check_points)
        self.last_residual = residual
        self.current, previous = z_next, self.current
        self.t += 1
        return previous, z_next


def md_step_residual(setup, z_t, z_next, gamma, xi, points):
    """Worst scaled violation of the mirror-descent step inequality over
    the comparator points (nonpositive in exact arithmetic)."""
    half_sq = 0.5 * gamma ** 2 * setup.dual_norm(xi) ** 2
    worst = -np.inf
    for z in points:
        lhs = gamma * float(xi @ (z_t - z))
        v_t = setup.bregman(z_t, z)
        v_next = setup.bregman(z_next, z)
        rhs = v_t - v_next + half_sq
        scale = max(1.0, abs(lhs), v_t, v_next, half_sq)
        worst = max(worst, (lhs - rhs) / scale)
    return worst


def mp_cancellation(setup, v_t, z_t, gamma, eta, xi):
    """gamma^2 ||xi - eta||_*^2 - ||z - v||^2; nonpositive whenever the
    step size matches the smoothness of the feeds."""
    return gamma ** 2 * setup.dual_norm(xi - eta) ** 2 - setup.norm(z_t - v_t) ** 2


def mp_step_residual(setup, v_t, z_t, v_next, gamma, eta, xi, points):
    """Worst scaled violation of the mirror-prox step inequality over the
    comparator points."""
    cancel = mp_cancellation(setup, v_t, z_t, gamma, eta, xi)
    worst = -np.inf
    for z in points:
        lhs = gamma * float(xi @ (z_t - z))
        v_a = setup.bregman(v_t, z)
        v_b = setup.bregman(v_next, z)
        rhs = v_a - v_b + 0.5 * cancel
        scale = max(1.0, abs(lhs), v_a, v_b, 0.5 * abs(cancel))
        worst = max(worst, (lhs - rhs) / scale)
    return worst


class MirrorProxState:
    """Incremental mirror prox. Per step: read ``leading``, call
    ``commit(eta)`` to obtain the decision z_t, then ``advance(xi)``."""

    def __init__(self, setup, steps, check_points=None):
        self.setup = setup
        self.steps = steps
        self.check_points = check_points
        self.leading = setup.omega_center()
        self.decision = None
        self._eta = None
        self.t = 1

    def commit(self, eta):
        if self.decision is not None:
            raise RuntimeError("commit called twice before advance")
        self._eta = _as_finite_dual(eta, self.t, "lookahead dual vector")
        gamma = self.steps[self.t]
        self.decision = self.setup.prox(self.leading, gamma * self._eta)
        return self.decision

    def advance(self, xi):
        if self.decision is None:
            raise RuntimeError("advance called before commit")
        xi = _as_finite_dual(xi, self.t, "dual vector")
        gamma = self.steps[self.t]
        v_next = self.setup.prox(self.leading, gamma * xi)
        cancel = mp_cancellation(self.setup, self.leading, self.decision, gamma,
                                 self._eta, xi)
        residual = np.nan
        if self.check_points is not None:
            residual = mp_step_residual(self.setup, self.leading, self.decision,
                                        v_next, gamma, self._eta, xi,
                                        self.check_points)
        self.last_residual, self.last_cancellation = residual, cancel
        v_prev, z_t = self.leading, self.decision
        self.leading = v_next
        self.decision, self._eta = None, None
        self.t += 1
        return v_prev, z_t, v_next


def _theta_column(theta, T):
    if theta is None:
        return np.full(T, np.nan)
    return np.asarray(theta.values, dtype=float).copy()


def mirror_descent(setup, T, steps, feed, theta=None, check_points=None):
    """Run mirror descent for T steps.

    ``feed(t, z_t)`` returns the dual vector xi_t; it must be
    non-anticipatory (see module docstring). Returns the full trace with
    z_1 = omega-center.
    """
    state = MirrorDescentState(setup, steps, check_points)
    points = np.empty((T, setup.dim))
    xi_norms = np.empty(T)
    residuals = np.empty(T)
    for t in range(1, T + 1):
        z_t = state.current
        xi = _as_finite_dual(feed(t, z_t), t, "dual vector")
        points[t - 1] = z_t
        xi_norms[t - 1] = setup.dual_norm(xi)
        state.step(xi)
        residuals[t - 1] = state.last_residual
    return RunTrace("mirror-descent", points, np.asarray(steps.values[:T]).copy(),
                    _theta_column(theta, T), xi_norms, residuals, setup=setup)


def mirror_prox(setup, T, steps, feed_eta, feed_xi, theta=None, check_points=None):
    """Run mirror prox for T steps.

    ``feed_eta(t, v_t)`` is the single lookahead query, evaluated at the
    leading point before the decision z_t exists; ``feed_xi(t, z_t)`` is
    evaluated at the decision. Returns the full trace with v_1 =
    omega-center.
    """
    state = MirrorProxState(setup, steps, check_points)
    points = np.empty((T, setup.dim))
    aux = np.empty((T, setup.dim))
    xi_norms = np.empty(T)
    residuals = np.empty(T)
    cancels = np.empty(T)
    for t in range(1, T + 1):
        v_t = state.leading
        eta = feed_eta(t, v_t)
        z_t = state.commit(eta)
        xi = feed_xi(t, z_t)
        aux[t - 1] = v_t
        points[t - 1] = z_t
        xi_norms[t - 1] = setup.dual_norm(np.asarray(xi, dtype=float))
        state.advance(xi)
        residuals[t - 1] = state.last_residual
        cancels[t - 1] = state.last_cancellation
    return RunTrace("mirror-prox", points, np.asarray(steps.values[:T]).copy(),
                    _theta_column(theta, T), xi_norms, residuals,
                    aux_points=aux, cancellations=cancels, setup=setup)
