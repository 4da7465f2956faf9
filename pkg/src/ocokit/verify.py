"""Deterministic invariant battery behind the ``verify`` command.

Each check re-derives a property the library promises (per-step engine
inequalities, regret-bound conformance, prox/oracle agreement, verdict
soundness, estimation-gap decomposition) at desk scale with seeds derived
from a single battery seed. Every run's trace bytes feed one SHA-256
digest, so two executions with the same seed must produce identical
digests: that digest is the reproducibility witness.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .core import mirror_descent, mirror_prox, step_schedule, weights
from .jeo import geometric_stream, run_jeo, tracking_instance
from .oracle import OfflineOracle
from .prox import EntropySimplexSetup, EuclideanBallSetup
from .regret import online_sp_gap, theoretical_bound, weighted_regret
from .robust import FeasibilityConfig, planted_instance, run_scheme
from .streams import matrix_game, max_affine_stream, quadratic_stream


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyResult:
    checks: list
    digest: str

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary_lines(self):
        lines = [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}"
                 for c in self.checks]
        lines.append(f"trace digest: {self.digest}")
        lines.append(f"verify: {'PASS' if self.passed else 'FAIL'}")
        return lines


class _Digest:
    def __init__(self):
        self._h = hashlib.sha256()

    def add(self, *arrays):
        for a in arrays:
            self._h.update(np.ascontiguousarray(a, dtype=float).tobytes())

    def hex(self):
        return self._h.hexdigest()


def _comparators(setup, k, rng):
    return np.array([setup.sample(rng) for _ in range(k)])


def _check_md_residuals(seed, digest):
    worst = -np.inf
    for offset, setup in enumerate([EntropySimplexSetup(10),
                                    EuclideanBallSetup(10, 1.0)]):
        rng = np.random.default_rng(seed + offset)
        T = 150
        th = weights("uniform", T)
        sched = step_schedule("constant-nonsmooth", T, th,
                              set_width=setup.set_width(), grad_bound=1.0)
        pts = _comparators(setup, 20, rng)
        feed = lambda t, z: th[t] * np.clip(rng.normal(size=10), -1, 1)
        trace = mirror_descent(setup, T, sched, feed, theta=th, check_points=pts)
        digest.add(trace.points, trace.residuals)
        worst = max(worst, float(np.max(trace.residuals)))
    return CheckResult("md-step-inequality", worst <= 1e-8,
                       f"max residual {worst:.3e}")


def _check_mp_residuals(seed, digest):
    from .core import StepSchedule
    worst = -np.inf
    for offset, setup in enumerate([EntropySimplexSetup(10),
                                    EuclideanBallSetup(10, 1.0)]):
        rng = np.random.default_rng(seed + 10 + offset)
        T = 150
        sched = StepSchedule("constant", np.full(T, 0.3))
        pts = _comparators(setup, 20, rng)
        trace = mirror_prox(setup, T, sched,
                            lambda t, v: rng.normal(size=10) * 0.5,
                            lambda t, z: rng.normal(size=10) * 0.5,
                            check_points=pts)
        digest.add(trace.points, trace.residuals)
        worst = max(worst, float(np.max(trace.residuals)))
    return CheckResult("mp-step-inequality", worst <= 1e-8,
                       f"max residual {worst:.3e}")


def _check_nonsmooth_bound(seed, digest, offline):
    setup = EntropySimplexSetup(10)
    reals = {}
    ok = True
    for T in (128, 512):
        rng = np.random.default_rng(seed + 20)
        stream, g = max_affine_stream(rng, T, 10)
        th = weights("uniform", T)
        sched = step_schedule("constant-nonsmooth", T, th,
                              set_width=setup.set_width(), grad_bound=g)
        trace = mirror_descent(setup, T, sched,
                               lambda t, z: th[t] * stream.subgradient(t, z),
                               theta=th)
        digest.add(trace.points)
        bound = theoretical_bound("nonsmooth", T, th,
                                  set_width=setup.set_width(), grad_bound=g)
        rep = weighted_regret(stream, trace, th, offline, bound=bound)
        reals[T] = rep.realized
        ok &= rep.realized <= rep.bound + 1e-6
    ratio = reals[512] / reals[128]
    ok &= ratio <= 0.75
    return CheckResult("nonsmooth-regret-bound", ok,
                       f"ratio(4T)/T {ratio:.3f}, conformance {ok}")


def _check_strongly_convex_bound(seed, digest, offline):
    setup = EuclideanBallSetup(5, 1.0)
    alpha = 1.5
    reals = {}
    ok = True
    for T in (100, 200):
        rng = np.random.default_rng(seed + 30)
        stream, g = quadratic_stream(rng, T, 5, alpha, 1.0)
        th = weights("increasing", T)
        sched = step_schedule("inverse-linear", T, strong_convexity=alpha)
        trace = mirror_descent(setup, T, sched,
                               lambda t, z: stream.subgradient(t, z), theta=th)
        digest.add(trace.points)
        bound = theoretical_bound("strongly-convex", T, grad_bound=g,
                                  strong_convexity=alpha)
        rep = weighted_regret(stream, trace, th, offline, bound=bound)
        reals[T] = rep.realized
        ok &= rep.realized <= rep.bound + 1e-6
    ratio = reals[200] / reals[100]
    ok &= ratio <= 0.75
    return CheckResult("strongly-convex-regret-bound", ok,
                       f"ratio(2T)/T {ratio:.3f}, conformance {ok}")


def _check_smooth_sp(seed, digest, offline):
    rng = np.random.default_rng(seed + 40)
    stream, setup, big_l = matrix_game(rng, 3, 3)
    T = 150
    th = weights("uniform", T)
    sched = step_schedule("constant-smooth", T, th, smoothness=big_l)
    m = 3
    feed_eta = lambda t, v: th[t] * stream.operator(t, v[:m], v[m:])
    feed_xi = lambda t, z: th[t] * stream.operator(t, z[:m], z[m:])
    trace = mirror_prox(setup, T, sched, feed_eta, feed_xi, theta=th)
    digest.add(trace.points, trace.cancellations)
    bound = theoretical_bound("smooth", T, th, set_width=setup.set_width(),
                              smoothness=big_l)
    rep = online_sp_gap(stream, trace, th, offline, EntropySimplexSetup(3),
                        EntropySimplexSetup(3), bound=bound)
    split = rep.components["x_regret"] + rep.components["y_regret"]
    ok = (rep.realized <= rep.bound + 1e-6
          and float(np.max(trace.cancellations)) <= 1e-8
          and abs(rep.realized - split) <= 1e-10)
    return CheckResult("smooth-sp-gap", ok,
                       f"gap {rep.realized:.3e} <= {rep.bound:.3e}, "
                       f"cancel {float(np.max(trace.cancellations)):.2e}")


def _check_prox_agreement(seed, digest, offline):
    worst = 0.0
    certified = True
    for offset, setup in enumerate([EntropySimplexSetup(8),
                                    EuclideanBallSetup(8, 1.2)]):
        rng = np.random.default_rng(seed + 50 + offset)
        zs = np.array([setup.sample(rng) for _ in range(40)])
        if isinstance(setup, EntropySimplexSetup):
            zs = np.maximum(zs, 1e-4)
            zs /= zs.sum(axis=1, keepdims=True)
        xis = rng.normal(size=(40, 8))
        pts, bounds = offline.prox_argmin_reference_batch(setup, zs, xis)
        direct = np.array([setup.prox(z, xi) for z, xi in zip(zs, xis)])
        digest.add(pts)
        worst = max(worst, float(np.max(np.abs(direct - pts))))
        certified &= bool(np.all(bounds <= 1e-6))
    return CheckResult("prox-oracle-agreement", worst <= 1e-8 and certified,
                       f"max linf deviation {worst:.3e}")


def _check_robust_verdicts(seed, digest, offline):
    ok = True
    details = []
    for k, feasible in enumerate((True, False)):
        rng = np.random.default_rng(seed + 60 + k)
        inst = planted_instance(rng, feasible, margin=0.2)
        cfg = FeasibilityConfig(eps=0.1, scheme="strong-strong")
        out, run = run_scheme(inst, cfg, offline)
        digest.add(run.xs)
        want = "feasible" if feasible else "infeasible"
        ok &= out.outcome == want
        details.append(f"{want}->{out.outcome}")
    return CheckResult("robust-verdicts", ok, ", ".join(details))


def _check_jeo(seed, digest, offline):
    rng = np.random.default_rng(seed + 70)
    u_star = rng.normal(size=4)
    u_star *= 0.5 / np.linalg.norm(u_star)
    inst = tracking_instance(EuclideanBallSetup(4, 1.0), u_star, u_scale=0.5)
    stream = geometric_stream(u_star, rng.normal(size=4), 0.5, 0.9)
    ok = True
    slacks = []
    for regime in ("nonsmooth", "smooth", "strongly-convex"):
        rep = run_jeo(inst, stream, regime, 80, offline)
        digest.add(rep.x_bar)
        ok &= rep.decomposition_slack >= -2 * max(rep.oracle_gap, 1e-9)
        ok &= rep.q_regret <= rep.q_regret_bound + 1e-6
        slacks.append(f"{regime} {rep.decomposition_slack:.2e}")
    return CheckResult("jeo-decomposition", ok, "; ".join(slacks))


def run_verify(seed=2024):
    """Run the battery; returns a VerifyResult with one line per check and
    the cumulative trace digest."""
    offline = OfflineOracle()
    digest = _Digest()
    checks = [
        _check_md_residuals(seed, digest),
        _check_mp_residuals(seed, digest),
        _check_nonsmooth_bound(seed, digest, offline),
        _check_strongly_convex_bound(seed, digest, offline),
        _check_smooth_sp(seed, digest, offline),
        _check_prox_agreement(seed, digest, offline),
        _check_robust_verdicts(seed, digest, offline),
        _check_jeo(seed, digest, offline),
    ]
    return VerifyResult(checks, digest.hex())
