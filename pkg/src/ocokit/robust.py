"""Robust feasibility solving.

Given constraints f^i(x, u^i) that are convex in the decision x and
concave in the uncertain data u^i, the feasibility question

    find x in X with  sup_{u^i in U^i} f^i(x, u^i) <= eps  for all i,
    or declare that no x in X satisfies sup_{u^i} f^i(x, u^i) <= 0,

is answered by running coupled online first-order updates for the
decision and the data, then evaluating two certificates over the produced
sequences {x_t}, {u_t} with weights theta:

    eps_u = max_i [ sup_{u^i} sum_t theta_t f^i(x_t, u^i)
                    - sum_t theta_t f^i(x_t, u_t^i) ]
    eps_x = sum_t theta_t max_i f^i(x_t, u_t^i)
            - inf_x sum_t theta_t max_i f^i(x, u_t^i)

(the multiplier form of eps_x, with simplex weights y_t produced by the
lookahead scheme, replaces the max form when the constraints are smooth in
x). With a split parameter tau in (0, 1):

* if eps_u <= tau * eps and max_i sum_t theta_t f^i(x_t, u_t^i) <=
  (1 - tau) * eps, the weighted average x_bar = sum_t theta_t x_t is
  eps-feasible;
* if eps_x <= (1 - tau) * eps and the same max exceeds (1 - tau) * eps,
  the problem is infeasible;
* otherwise the run is inconclusive (optionally retried with a doubled
  horizon up to a total-iteration cap).

Four update schemes are provided. Their per-step information flow is
enforced through a logical-timestamp monitor: non-anticipatory updates may
only read values stamped strictly earlier than the value they produce,
while the lookahead side of a mixed scheme may additionally read the
current stamp. Pairing lookahead updates on both sides is rejected at
configuration time, since neither side could then produce its step first.

=====================  =========  ==========================  ============
scheme                 weights    x-update                    u-update
=====================  =========  ==========================  ============
strong-strong          2t/T(T+1)  descent, 2/(alpha_x (t+1))  descent, 2/(alpha_u (t+1))
strong-u-smooth-x      2t/T(T+1)  lookahead prox on X x D_m   descent, 2/(alpha_u (t+1))
smooth-u-strong-x      2t/T(T+1)  descent, 2/(alpha_x (t+1))  lookahead prox, 1/(L_u sup theta)
baseline-nonsmooth     uniform    descent, sqrt-horizon step  descent, sqrt-horizon step
=====================  =========  ==========================  ============

The lookahead x-update runs on the width-1 weighted product of X and the
multiplier simplex; its smoothness constant is
L_xy = L_x Omega_x + 2 G_x sqrt(Omega_x log m).
"""

from dataclasses import dataclass, field

import numpy as np

from .core import MirrorDescentState, MirrorProxState, step_schedule, weights
from .oracle import IsotropicQuadratic, MaxAffine, OfflineOracle, PiecewiseObjective
from .prox import EntropySimplexSetup, balanced_product_setup

SCHEMES = ("strong-strong", "strong-u-smooth-x", "smooth-u-strong-x",
           "baseline-nonsmooth")


class ConfigError(ValueError):
    pass


class InfoFlowViolation(AssertionError):
    """A feed read a value stamped later than its contract allows."""


class InfoFlowMonitor:
    """Logical-timestamp registry for coupled runs. Values are published
    once per step under a name; reads declare the latest stamp their
    contract allows and fail loudly on violations."""

    def __init__(self):
        self._store = {}

    def publish(self, name, stamp, value):
        key = (name, stamp)
        if key in self._store:
            raise InfoFlowViolation(f"{name} already published at stamp {stamp}")
        self._store[key] = value

    def read(self, name, stamp, max_stamp):
        if stamp > max_stamp:
            raise InfoFlowViolation(
                f"read of {name}@{stamp} but contract allows stamps <= {max_stamp}")
        try:
            return self._store[(name, stamp)]
        except KeyError:
            raise InfoFlowViolation(f"{name}@{stamp} has not been published")


class QuadraticConstraint:
    """f(x, u) = <u, A x> + alpha_x/2 ||x||^2 - alpha_u/2 ||u - c||^2 + b
    plus an optional max-of-affine term in x.

    Strongly convex in x for alpha_x > 0, strongly concave in u for
    alpha_u > 0, smooth in u (L_u = alpha_u) always, smooth in x
    (L_x = alpha_x) when no max-affine term is present. Zeroing the alphas
    or adding the max term exercises every assumption combination.
    """

    def __init__(self, matrix, concavity_center, alpha_x, alpha_u, offset=0.0,
                 max_affine=None):
        self.matrix = np.asarray(matrix, dtype=float)
        self.concavity_center = np.asarray(concavity_center, dtype=float)
        self.alpha_x = float(alpha_x)
        self.alpha_u = float(alpha_u)
        self.offset = float(offset)
        self.max_affine = max_affine

    @property
    def dim_x(self):
        return self.matrix.shape[1]

    @property
    def dim_u(self):
        return self.matrix.shape[0]

    def value(self, x, u):
        du = u - self.concavity_center
        v = float(u @ (self.matrix @ x)) + 0.5 * self.alpha_x * float(x @ x) \
            - 0.5 * self.alpha_u * float(du @ du) + self.offset
        if self.max_affine is not None:
            v += self.max_affine.value(x)
        return v

    def grad_x(self, x, u):
        g = self.matrix.T @ u + self.alpha_x * np.asarray(x, dtype=float)
        if self.max_affine is not None:
            g = g + self.max_affine.subgradient(x)
        return g

    def grad_u(self, x, u):
        return self.matrix @ x - self.alpha_u * (u - self.concavity_center)

    # oracle-facing descriptions -------------------------------------------

    def weighted_u_objective(self, xs, theta):
        """sum_t theta_t f(x_t, u) as a concave quadratic in u."""
        xbar = theta.values @ xs
        const = 0.5 * self.alpha_x * float(theta.values @ np.sum(xs * xs, axis=1)) \
            + self.offset
        if self.max_affine is not None:
            const += float(sum(th * self.max_affine.value(x)
                               for th, x in zip(theta.values, xs)))
        return IsotropicQuadratic.from_center(-self.alpha_u, self.concavity_center,
                                              lin=self.matrix @ xbar, const=const)

    def x_affine_rows(self, u):
        """f(x, u) - alpha_x/2 ||x||^2 as max-of-affine rows in x."""
        base = -0.5 * self.alpha_u * float((u - self.concavity_center) @
                                           (u - self.concavity_center)) + self.offset
        lin = self.matrix.T @ u
        if self.max_affine is None:
            return lin[None, :], np.array([base])
        rows = lin[None, :] + self.max_affine.rows
        return rows, base + self.max_affine.offsets


@dataclass(frozen=True)
class StructureConstants:
    """User-declared bounds; spot-validated, never estimated."""

    g_x: float
    g_u: float
    alpha_x: float = 0.0
    alpha_u: float = 0.0
    l_x: float | None = None
    l_u: float | None = None


@dataclass
class RobustInstance:
    constraints: list
    x_setup: object
    u_setups: list
    constants: StructureConstants

    @property
    def m(self):
        return len(self.constraints)

    @property
    def dim_x(self):
        return self.x_setup.dim

    def smooth_in_x(self):
        return all(c.max_affine is None for c in self.constraints)

    def spot_check(self, rng, samples=25, tol=1e-8):
        """Sampled validation of convexity/concavity and the declared
        subgradient bounds."""
        for c, us in zip(self.constraints, self.u_setups):
            for _ in range(samples):
                x0, x1 = self.x_setup.sample(rng), self.x_setup.sample(rng)
                u0, u1 = us.sample(rng), us.sample(rng)
                lam = rng.uniform()
                xm = lam * x0 + (1 - lam) * x1
                um = lam * u0 + (1 - lam) * u1
                if c.value(xm, u0) > lam * c.value(x0, u0) + (1 - lam) * c.value(x1, u0) + tol:
                    raise ValueError("constraint is not convex in x")
                if c.value(x0, um) < lam * c.value(x0, u0) + (1 - lam) * c.value(x0, u1) - tol:
                    raise ValueError("constraint is not concave in u")
                if np.linalg.norm(c.grad_x(x0, u0)) > self.constants.g_x + tol:
                    raise ValueError("declared G_x bound violated")
                if np.linalg.norm(c.grad_u(x0, u0)) > self.constants.g_u + tol:
                    raise ValueError("declared G_u bound violated")


@dataclass
class FeasibilityConfig:
    eps: float
    tau: float = 0.5
    scheme: str = "strong-strong"
    horizon: int | None = None
    double_on_inconclusive: bool = True
    max_total_iterations: int = 2 ** 20

    def validate(self, instance):
        if not (self.eps > 0):
            raise ConfigError("eps must be positive")
        if not (0.0 < self.tau < 1.0):
            raise ConfigError("tau must lie in (0, 1)")
        if self.scheme not in SCHEMES:
            if self.scheme in ("smooth-smooth", "smooth-u-smooth-x"):
                raise ConfigError(
                    "lookahead updates on both sides are impossible: each side "
                    "would need the other's current step before producing its own")
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        k = instance.constants
        if self.scheme in ("strong-strong", "strong-u-smooth-x") and not k.alpha_u > 0:
            raise ConfigError(f"{self.scheme} needs alpha_u > 0")
        if self.scheme in ("strong-strong", "smooth-u-strong-x") and not k.alpha_x > 0:
            raise ConfigError(f"{self.scheme} needs alpha_x > 0")
        if self.scheme == "smooth-u-strong-x" and k.l_u is None:
            raise ConfigError("smooth-u-strong-x needs the smoothness bound l_u")
        if self.scheme == "strong-u-smooth-x":
            if k.l_x is None:
                raise ConfigError("strong-u-smooth-x needs the smoothness bound l_x")
            if not instance.smooth_in_x():
                raise ConfigError("strong-u-smooth-x needs constraints smooth in x")


@dataclass
class CertificateValues:
    eps_u: float
    eps_u_per_constraint: np.ndarray
    eps_x: float
    max_weighted_violation: float
    flagged: bool = False


@dataclass
class Verdict:
    outcome: str
    eps: float
    tau: float
    horizon: int
    certificates: CertificateValues
    x_bar: np.ndarray | None = None


@dataclass
class SchemeRun:
    scheme: str
    theta: object
    xs: np.ndarray
    us: list
    ys: np.ndarray | None = None
    x_cancellations: np.ndarray | None = None
    u_cancellations: np.ndarray | None = None
    monitor: InfoFlowMonitor = field(default=None, repr=False)

    @property
    def horizon(self):
        return self.xs.shape[0]

    def x_bar(self):
        return self.theta.values @ self.xs


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def weighted_violations(instance, xs, us, theta):
    """sum_t theta_t f^i(x_t, u_t^i) for every i."""
    out = np.zeros(instance.m)
    for i, c in enumerate(instance.constraints):
        out[i] = sum(th * c.value(x, u)
                     for th, x, u in zip(theta.values, xs, us[i]))
    return out


def argmax_constraint(instance, x, u_blocks):
    """Lowest index attaining max_i f^i(x, u^i)."""
    vals = [c.value(x, u) for c, u in zip(instance.constraints, u_blocks)]
    return int(np.argmax(vals))


def eps_circ(instance, xs, us, theta, offline=None):
    """Worst-case-data certificate: per-constraint weighted u-regret and
    its maximum."""
    offline = offline or OfflineOracle()
    realized = weighted_violations(instance, xs, us, theta)
    per = np.zeros(instance.m)
    flagged = False
    for i, (c, u_setup) in enumerate(zip(instance.constraints, instance.u_setups)):
        res = offline.maximize_concave(c.weighted_u_objective(xs, theta), u_setup)
        per[i] = res.value - realized[i]
        flagged |= not res.certified
    return float(np.max(per)), per, flagged


def _common_alpha_x(instance):
    alphas = {c.alpha_x for c in instance.constraints}
    if len(alphas) != 1:
        raise ConfigError("constraints must share the x-curvature coefficient")
    return alphas.pop()


def _h_component(instance, u_blocks):
    rows, offs = [], []
    for c, u in zip(instance.constraints, u_blocks):
        r, o = c.x_affine_rows(u)
        rows.append(r)
        offs.append(o)
    ma = MaxAffine(np.vstack(rows), np.concatenate(offs))
    return PiecewiseObjective(_common_alpha_x(instance), np.zeros(instance.dim_x),
                              0.0, [(1.0, ma)])


def eps_bullet(instance, xs, us, theta, offline=None):
    """Decision certificate in max form: weighted regret of the sequence
    {x_t} on h_t(x) = max_i f^i(x, u_t^i)."""
    offline = offline or OfflineOracle()
    T = theta.horizon
    played = 0.0
    comps = []
    for t in range(T):
        u_blocks = [us[i][t] for i in range(instance.m)]
        comp = _h_component(instance, u_blocks)
        comps.append(comp)
        played += theta.values[t] * comp.value(xs[t])

    class _Stream:
        def component(self, t):
            return comps[t - 1]

    res = offline.minimize_weighted_sum(_Stream(), theta, instance.x_setup)
    return float(played - res.value), not res.certified


def eps_bullet_y(instance, xs, us, ys, theta, offline=None):
    """Decision certificate in multiplier form: the online saddle-point gap
    of {x_t, y_t} on phi_t(x, y) = sum_i y_i f^i(x, u_t^i)."""
    offline = offline or OfflineOracle()
    first = float(np.max(weighted_violations(instance, xs, us, theta)))
    lin = np.zeros(instance.dim_x)
    const = 0.0
    alpha_x = _common_alpha_x(instance)
    for t in range(theta.horizon):
        th = theta.values[t]
        for i, c in enumerate(instance.constraints):
            if c.max_affine is not None:
                raise ConfigError("multiplier certificate needs constraints smooth in x")
            u = us[i][t]
            w = th * ys[t, i]
            lin += w * (c.matrix.T @ u)
            du = u - c.concavity_center
            const += w * (-0.5 * c.alpha_u * float(du @ du) + c.offset)
    res = offline.minimize(IsotropicQuadratic(alpha_x, lin, const), instance.x_setup)
    return float(first - res.value), not res.certified


def verdict(config, certificates, theta_horizon, x_bar=None):
    """Case analysis on the certificate values."""
    eps, tau = config.eps, config.tau
    c = certificates
    if c.eps_u <= tau * eps and c.max_weighted_violation <= (1 - tau) * eps:
        return Verdict("feasible", eps, tau, theta_horizon, c, x_bar)
    if c.eps_x <= (1 - tau) * eps and c.max_weighted_violation > (1 - tau) * eps:
        return Verdict("infeasible", eps, tau, theta_horizon, c)
    return Verdict("inconclusive", eps, tau, theta_horizon, c, x_bar)


# ---------------------------------------------------------------------------
# horizons from the certificate bounds
# ---------------------------------------------------------------------------

def _horizon_for(bound_fn, target, cap=10 ** 9):
    t = 1
    while bound_fn(t) > target:
        t *= 2
        if t > cap:
            raise ConfigError("no admissible horizon below the iteration cap")
    lo, hi = t // 2, t
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if bound_fn(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def required_horizon(instance, config):
    """Smallest T making both certificate bounds fit the eps split."""
    k = instance.constants
    eps_u_target = config.tau * config.eps
    eps_x_target = (1 - config.tau) * config.eps
    omega_u = max(s.set_width() for s in instance.u_setups)
    omega_x = instance.x_setup.set_width()
    if config.scheme == "strong-strong":
        tu = _horizon_for(lambda t: 2 * k.g_u ** 2 / (k.alpha_u * (t + 1)), eps_u_target)
        tx = _horizon_for(lambda t: 2 * k.g_x ** 2 / (k.alpha_x * (t + 1)), eps_x_target)
    elif config.scheme == "smooth-u-strong-x":
        tu = _horizon_for(lambda t: omega_u * k.l_u * 2.0 / (t + 1), eps_u_target)
        tx = _horizon_for(lambda t: 2 * k.g_x ** 2 / (k.alpha_x * (t + 1)), eps_x_target)
    elif config.scheme == "strong-u-smooth-x":
        l_hybrid = hybrid_smoothness(instance)
        tu = _horizon_for(lambda t: 2 * k.g_u ** 2 / (k.alpha_u * (t + 1)), eps_u_target)
        tx = _horizon_for(lambda t: l_hybrid * 2.0 / (t + 1), eps_x_target)
    elif config.scheme == "baseline-nonsmooth":
        tu = _horizon_for(lambda t: np.sqrt(2 * omega_u * k.g_u ** 2 / t), eps_u_target)
        tx = _horizon_for(lambda t: np.sqrt(2 * omega_x * k.g_x ** 2 / t), eps_x_target)
    else:
        raise ConfigError(f"unknown scheme {config.scheme!r}")
    return max(tu, tx)


def hybrid_smoothness(instance):
    """L_x Omega_x + 2 G_x sqrt(Omega_x log m) for the product of X and the
    multiplier simplex."""
    k = instance.constants
    _, big_l = balanced_product_setup(instance.x_setup,
                                      EntropySimplexSetup(instance.m),
                                      k.l_x, k.g_x, 0.0)
    return big_l


def scheme_bounds(instance, config, T):
    """Theoretical (eps_u, eps_x) guarantees of the scheme at horizon T."""
    k = instance.constants
    omega_u = max(s.set_width() for s in instance.u_setups)
    omega_x = instance.x_setup.set_width()
    if config.scheme == "strong-strong":
        return (2 * k.g_u ** 2 / (k.alpha_u * (T + 1)),
                2 * k.g_x ** 2 / (k.alpha_x * (T + 1)))
    if config.scheme == "smooth-u-strong-x":
        return (omega_u * k.l_u * 2.0 / (T + 1),
                2 * k.g_x ** 2 / (k.alpha_x * (T + 1)))
    if config.scheme == "strong-u-smooth-x":
        return (2 * k.g_u ** 2 / (k.alpha_u * (T + 1)),
                hybrid_smoothness(instance) * 2.0 / (T + 1))
    if config.scheme == "baseline-nonsmooth":
        return (np.sqrt(2 * omega_u * k.g_u ** 2 / T),
                np.sqrt(2 * omega_x * k.g_x ** 2 / T))
    raise ConfigError(f"unknown scheme {config.scheme!r}")


# ---------------------------------------------------------------------------
# coupled update schemes
# ---------------------------------------------------------------------------

def _u_descent_states(instance, kind, T, theta):
    k = instance.constants
    states = []
    for setup in instance.u_setups:
        if kind == "strong":
            sched = step_schedule("inverse-linear", T, strong_convexity=k.alpha_u)
        else:
            sched = step_schedule("constant-nonsmooth", T, theta,
                                  set_width=setup.set_width(), grad_bound=k.g_u)
        states.append(MirrorDescentState(setup, sched))
    return states


def _run_strong_strong(instance, T, theta, baseline=False):
    k = instance.constants
    mon = InfoFlowMonitor()
    if baseline:
        x_sched = step_schedule("constant-nonsmooth", T, theta,
                                set_width=instance.x_setup.set_width(),
                                grad_bound=k.g_x)
    else:
        x_sched = step_schedule("inverse-linear", T, strong_convexity=k.alpha_x)
    x_state = MirrorDescentState(instance.x_setup, x_sched)
    u_states = _u_descent_states(instance, "baseline" if baseline else "strong",
                                 T, theta)
    xs = np.empty((T, instance.dim_x))
    us = [np.empty((T, s.dim)) for s in instance.u_setups]
    for t in range(1, T + 1):
        mon.publish("x", t, x_state.current)
        mon.publish("u", t, [st.current for st in u_states])
        # both updates are non-anticipatory: they read stamps <= t to
        # produce the stamp-(t+1) iterates
        x_t = mon.read("x", t, max_stamp=t)
        u_t = mon.read("u", t, max_stamp=t)
        xs[t - 1] = x_t
        for i in range(instance.m):
            us[i][t - 1] = u_t[i]
        i_t = argmax_constraint(instance, x_t, u_t)
        gx = instance.constraints[i_t].grad_x(x_t, u_t[i_t])
        if baseline:
            gx = theta[t] * gx
        x_state.step(gx)
        for i, st in enumerate(u_states):
            gu = -instance.constraints[i].grad_u(x_t, u_t[i])
            st.step(theta[t] * gu if baseline else gu)
    return SchemeRun("baseline-nonsmooth" if baseline else "strong-strong",
                     theta, xs, us, monitor=mon)


def _run_smooth_u_strong_x(instance, T, theta):
    k = instance.constants
    mon = InfoFlowMonitor()
    x_sched = step_schedule("inverse-linear", T, strong_convexity=k.alpha_x)
    x_state = MirrorDescentState(instance.x_setup, x_sched)
    u_states = []
    for setup in instance.u_setups:
        sched = step_schedule("constant-smooth", T, theta, smoothness=k.l_u)
        u_states.append(MirrorProxState(setup, sched))
    xs = np.empty((T, instance.dim_x))
    us = [np.empty((T, s.dim)) for s in instance.u_setups]
    u_cancels = np.empty((T, instance.m))
    for t in range(1, T + 1):
        mon.publish("x", t, x_state.current)
        # lookahead u-update: reads the current decision x_t
        x_t = mon.read("x", t, max_stamp=t)
        u_t = []
        for i, st in enumerate(u_states):
            eta = -theta[t] * instance.constraints[i].grad_u(x_t, st.leading)
            u_t.append(st.commit(eta))
        mon.publish("u", t, u_t)
        xs[t - 1] = x_t
        for i in range(instance.m):
            us[i][t - 1] = u_t[i]
        i_t = argmax_constraint(instance, x_t, u_t)
        x_state.step(instance.constraints[i_t].grad_x(x_t, u_t[i_t]))
        for i, st in enumerate(u_states):
            xi = -theta[t] * instance.constraints[i].grad_u(x_t, u_t[i])
            st.advance(xi)
            u_cancels[t - 1, i] = st.last_cancellation
    return SchemeRun("smooth-u-strong-x", theta, xs, us,
                     u_cancellations=u_cancels, monitor=mon)


def _run_strong_u_smooth_x(instance, T, theta):
    k = instance.constants
    mon = InfoFlowMonitor()
    m = instance.m
    hybrid, l_hybrid = balanced_product_setup(instance.x_setup,
                                              EntropySimplexSetup(m),
                                              k.l_x, k.g_x, 0.0)
    z_sched = step_schedule("constant-smooth", T, theta, smoothness=l_hybrid)
    z_state = MirrorProxState(hybrid, z_sched)
    u_states = _u_descent_states(instance, "strong", T, theta)
    nx = instance.dim_x
    xs = np.empty((T, nx))
    ys = np.empty((T, m))
    us = [np.empty((T, s.dim)) for s in instance.u_setups]
    x_cancels = np.empty(T)

    def operator(z, u_blocks):
        x, y = z[:nx], z[nx:]
        gx = sum(y[i] * instance.constraints[i].grad_x(x, u_blocks[i])
                 for i in range(m))
        gy = np.array([instance.constraints[i].value(x, u_blocks[i])
                       for i in range(m)])
        return np.concatenate([gx, -gy])

    for t in range(1, T + 1):
        # non-anticipatory u-update published first; the lookahead
        # decision below may read it at the current stamp
        mon.publish("u", t, [st.current for st in u_states])
        u_t = mon.read("u", t, max_stamp=t)
        for i in range(m):
            us[i][t - 1] = u_t[i]
        eta = theta[t] * operator(z_state.leading, u_t)
        z_t = z_state.commit(eta)
        mon.publish("x", t, z_t[:nx])
        xs[t - 1] = z_t[:nx]
        ys[t - 1] = z_t[nx:]
        xi = theta[t] * operator(z_t, u_t)
        z_state.advance(xi)
        x_cancels[t - 1] = z_state.last_cancellation
        x_t = mon.read("x", t, max_stamp=t)
        for i, st in enumerate(u_states):
            st.step(-instance.constraints[i].grad_u(x_t, u_t[i]))
    return SchemeRun("strong-u-smooth-x", theta, xs, us, ys=ys,
                     x_cancellations=x_cancels, monitor=mon)


def run_sequences(instance, config, T):
    """Produce the coupled sequences for one horizon."""
    kind = "uniform" if config.scheme == "baseline-nonsmooth" else "increasing"
    theta = weights(kind, T)
    if config.scheme == "strong-strong":
        return _run_strong_strong(instance, T, theta)
    if config.scheme == "baseline-nonsmooth":
        return _run_strong_strong(instance, T, theta, baseline=True)
    if config.scheme == "smooth-u-strong-x":
        return _run_smooth_u_strong_x(instance, T, theta)
    if config.scheme == "strong-u-smooth-x":
        return _run_strong_u_smooth_x(instance, T, theta)
    raise ConfigError(f"unknown scheme {config.scheme!r}")


def evaluate_certificates(instance, run, offline=None):
    offline = offline or OfflineOracle()
    e_u, per, fl1 = eps_circ(instance, run.xs, run.us, run.theta, offline)
    if run.ys is not None:
        e_x, fl2 = eps_bullet_y(instance, run.xs, run.us, run.ys, run.theta, offline)
    else:
        e_x, fl2 = eps_bullet(instance, run.xs, run.us, run.theta, offline)
    max_wv = float(np.max(weighted_violations(instance, run.xs, run.us, run.theta)))
    return CertificateValues(e_u, per, e_x, max_wv, fl1 or fl2)


def run_scheme(instance, config, offline=None):
    """Run the configured scheme, evaluate the certificates and apply the
    verdict case analysis; on an inconclusive outcome the horizon doubles
    until the total-iteration cap."""
    config.validate(instance)
    offline = offline or OfflineOracle()
    T = config.horizon or required_horizon(instance, config)
    spent = 0
    while True:
        run = run_sequences(instance, config, T)
        spent += T
        certs = evaluate_certificates(instance, run, offline)
        out = verdict(config, certs, T, x_bar=run.x_bar())
        if out.outcome != "inconclusive" or not config.double_on_inconclusive:
            return out, run
        if spent + 2 * T > config.max_total_iterations:
            return out, run
        T *= 2


# ---------------------------------------------------------------------------
# planted instances
# ---------------------------------------------------------------------------

def planted_instance(rng, feasible, m=3, dim_x=5, dim_u=5, margin=0.1,
                     alpha_x=1.5, alpha_u=1.5, x_radius=1.0, u_radius=1.0,
                     smooth=True):
    """Instance whose robust feasibility status is known by construction.

    Feasible: every offset is -margin, so x = 0 satisfies
    sup_u f^i(0, u) = -margin < 0 strictly. Infeasible: offsets are
    +margin and the concavity centers satisfy sum_i A_i' c_i = 0 with
    c_i in U^i, so for every x some constraint has
    f^i(x, c_i) >= margin > 0, hence min_x max_i sup_u f^i > margin.
    """
    from .prox import EuclideanBallSetup

    mats = [rng.normal(size=(dim_u, dim_x)) / np.sqrt(dim_u) for _ in range(m)]
    if feasible:
        centers = [rng.normal(size=dim_u) * (0.3 * u_radius) for _ in range(m)]
        offsets = [-margin] * m
    else:
        centers = [rng.normal(size=dim_u) * (0.3 * u_radius) for _ in range(m - 1)]
        resid = -sum(a.T @ c for a, c in zip(mats, centers))
        last = np.linalg.lstsq(mats[-1].T, resid, rcond=None)[0]
        if np.linalg.norm(mats[-1].T @ last - resid) > 1e-9:
            # the sign-balance condition needs an exact solve; fall back to
            # centers at the origin, which satisfies it trivially
            centers = [np.zeros(dim_u) for _ in range(m)]
        else:
            centers.append(last)
            big = max(np.linalg.norm(c) for c in centers)
            if big > 0.5 * u_radius:
                centers = [c * (0.5 * u_radius / big) for c in centers]
        offsets = [margin] * m
    max_part = None
    if not smooth:
        rows = rng.normal(size=(3, dim_x)) * 0.2
        max_part = MaxAffine(rows - rows.mean(axis=0), np.zeros(3))
    cons = [QuadraticConstraint(a, c, alpha_x, alpha_u, offset=b, max_affine=max_part)
            for a, c, b in zip(mats, centers, offsets)]
    x_setup = EuclideanBallSetup(dim_x, x_radius)
    u_setups = [EuclideanBallSetup(dim_u, u_radius) for _ in range(m)]
    g_x = max(np.linalg.norm(c.matrix, 2) * u_radius for c in cons) + alpha_x * x_radius
    if max_part is not None:
        g_x += max(np.linalg.norm(r) for r in max_part.rows)
    g_u = max(np.linalg.norm(c.matrix, 2) * x_radius
              + alpha_u * (u_radius + np.linalg.norm(c.concavity_center))
              for c in cons)
    constants = StructureConstants(g_x=g_x, g_u=g_u, alpha_x=alpha_x,
                                   alpha_u=alpha_u,
                                   l_x=alpha_x if smooth else None, l_u=alpha_u)
    return RobustInstance(cons, x_setup, u_setups, constants)


def true_worst_case_violation(instance, x, offline=None):
    """max_i sup_u f^i(x, u), each inner sup solved to certified accuracy
    (ground truth for planted checks)."""
    offline = offline or OfflineOracle()
    worst = -np.inf
    for c, u_setup in zip(instance.constraints, instance.u_setups):
        base = 0.5 * c.alpha_x * float(x @ x) + c.offset
        if c.max_affine is not None:
            base += c.max_affine.value(x)
        obj = IsotropicQuadratic.from_center(-c.alpha_u, c.concavity_center,
                                             lin=c.matrix @ x, const=base)
        res = offline.maximize_concave(obj, u_setup)
        worst = max(worst, res.value + res.gap)
    return worst
