"""Experiment runner and verification entry point.

Commands::

    ocokit oco run   --instance F --regime R --horizon T [--seed S] [--out DIR]
    ocokit ro solve  --instance F --scheme S --eps E [--tau T0] [--horizon T]
    ocokit jeo run   --instance F --regime R --horizon T
    ocokit rate-table --instance F --regime R --horizon T0 [--points 4]
    ocokit verify    [--seed S]

Every run writes ``trace.csv``, ``report.json`` and ``summary.txt`` into
the output directory (``--out``, else $OCOKIT_OUT, else ./ocokit-out).
Reports embed the configuration hash and the package version. Exit codes:
0 success, 1 error, 2 inconclusive robust verdict. Seeds drive instance
randomization only; the algorithms themselves are deterministic.
"""

import argparse
import hashlib
import json
import os
import sys
from importlib import resources

import numpy as np

from . import __version__, jeo as jeo_mod, robust as robust_mod
from .core import mirror_descent, mirror_prox, step_schedule, weights
from .oracle import MaxAffine, OfflineOracle
from .prox import EntropySimplexSetup, EuclideanBallSetup, EuclideanBoxSetup
from .regret import online_sp_gap, theoretical_bound, weighted_regret
from .streams import matrix_game, max_affine_stream, quadratic_stream


class InstanceError(ValueError):
    """Malformed instance file; the message names the offending field."""


# ---------------------------------------------------------------------------
# instance file format
# ---------------------------------------------------------------------------

def setup_from_descriptor(d):
    """Domain descriptor: {"kind": "simplex"|"ball"|"box", "dim": n,
    "radius": r, "center": [...], "bounds": [[lo], [hi]]}."""
    try:
        kind = d["kind"]
    except (TypeError, KeyError):
        raise InstanceError("domain descriptor needs a 'kind' field")
    if kind == "simplex":
        return EntropySimplexSetup(int(d["dim"]))
    if kind == "ball":
        center = np.asarray(d["center"], dtype=float) if "center" in d else None
        return EuclideanBallSetup(int(d["dim"]), float(d["radius"]), center)
    if kind == "box":
        try:
            lo, hi = d["bounds"]
        except (KeyError, ValueError):
            raise InstanceError("box descriptor needs 'bounds': [lower, upper]")
        return EuclideanBoxSetup(lo, hi)
    raise InstanceError(f"unknown domain kind {kind!r}")


def setup_to_descriptor(setup):
    if isinstance(setup, EntropySimplexSetup):
        return {"kind": "simplex", "dim": setup.dim}
    if isinstance(setup, EuclideanBallSetup):
        return {"kind": "ball", "dim": setup.dim, "radius": setup.radius,
                "center": setup.center.tolist()}
    if isinstance(setup, EuclideanBoxSetup):
        return {"kind": "box", "dim": setup.dim,
                "bounds": [setup.lower.tolist(), setup.upper.tolist()]}
    raise InstanceError(f"cannot serialize setup {type(setup).__name__}")


def _load_json(path):
    if not os.path.exists(path):
        raise InstanceError(f"instance file not found: {path}")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"{path}:{exc.lineno}: {exc.msg}")


def bundled_path(name):
    """Path of a packaged instance file (data/NAME)."""
    return str(resources.files("ocokit").joinpath("data", name))


def _resolve_instance(path):
    if os.path.exists(path):
        return path
    candidate = bundled_path(path)
    if os.path.exists(candidate):
        return candidate
    raise InstanceError(f"instance file not found: {path}")


def load_robust_instance(path):
    doc = _load_json(_resolve_instance(path))
    try:
        x_setup = setup_from_descriptor(doc["x_domain"])
        u_setups = [setup_from_descriptor(d) for d in doc["u_domains"]]
        cons = []
        for k, c in enumerate(doc["constraints"]):
            if c.get("kind", "bilinear-quadratic") != "bilinear-quadratic":
                raise InstanceError(f"constraints[{k}]: unknown kind {c.get('kind')!r}")
            ma = None
            if c.get("max_affine"):
                ma = MaxAffine(c["max_affine"]["rows"], c["max_affine"]["offsets"])
            cons.append(robust_mod.QuadraticConstraint(
                c["matrix"], c["concavity_center"], c["alpha_x"], c["alpha_u"],
                offset=c.get("offset", 0.0), max_affine=ma))
        kd = doc["constants"]
        constants = robust_mod.StructureConstants(
            g_x=kd["G_X"], g_u=kd["G_U"], alpha_x=kd.get("alpha_X", 0.0),
            alpha_u=kd.get("alpha_U", 0.0), l_x=kd.get("L_X"), l_u=kd.get("L_U"))
    except KeyError as exc:
        raise InstanceError(f"robust instance missing field {exc}")
    if len(u_setups) != len(cons) or len(cons) != int(doc.get("m", len(cons))):
        raise InstanceError("constraint, domain and 'm' counts disagree")
    return robust_mod.RobustInstance(cons, x_setup, u_setups, constants)


def save_robust_instance(instance, path):
    doc = {
        "m": instance.m,
        "n": instance.dim_x,
        "x_domain": setup_to_descriptor(instance.x_setup),
        "u_domains": [setup_to_descriptor(s) for s in instance.u_setups],
        "constraints": [{
            "kind": "bilinear-quadratic",
            "matrix": c.matrix.tolist(),
            "concavity_center": c.concavity_center.tolist(),
            "alpha_x": c.alpha_x,
            "alpha_u": c.alpha_u,
            "offset": c.offset,
            "max_affine": None if c.max_affine is None else {
                "rows": c.max_affine.rows.tolist(),
                "offsets": c.max_affine.offsets.tolist()},
        } for c in instance.constraints],
        "constants": {"G_X": instance.constants.g_x, "G_U": instance.constants.g_u,
                      "alpha_X": instance.constants.alpha_x,
                      "alpha_U": instance.constants.alpha_u,
                      "L_X": instance.constants.l_x, "L_U": instance.constants.l_u},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_jeo_instance(path, seed=None):
    doc = _load_json(_resolve_instance(path))
    try:
        x_setup = setup_from_descriptor(doc["x_domain"])
        u_star = np.asarray(doc["u_star"], dtype=float)
        kind = doc["kind"]
        if kind == "tracking":
            inst = jeo_mod.tracking_instance(x_setup, u_star,
                                             u_scale=float(doc["u_scale"]))
        elif kind == "max-affine":
            data = doc["data"]
            obj = jeo_mod.MaxAffineDataObjective(data["rows"], data["data_rows"],
                                                 data["offsets"],
                                                 alpha=data.get("alpha", 0.0))
            kd = doc["constants"]
            consts = jeo_mod.JeoConstants(
                g_fx=kd["G_fX"], alpha_fx=kd.get("alpha_fX"),
                l_fx=kd.get("L_fX"), g_fu=kd.get("G_fU"), l_fu=kd.get("L_fU"))
            inst = jeo_mod.JeoInstance(obj, x_setup, float(doc["diameter"]),
                                       consts, u_star=u_star)
        else:
            raise InstanceError(f"unknown objective kind {kind!r}")
        sd = doc["stream"]
        if sd["kind"] == "geometric":
            direction = np.asarray(sd["direction"], dtype=float)
            stream = jeo_mod.geometric_stream(u_star, direction,
                                              float(sd["scale"]), float(sd["beta"]))
        elif sd["kind"] == "from-g":
            g = jeo_mod.QuadraticEstimation(sd["diag"], u_star)
            stream = jeo_mod.estimator_from_g(g, np.asarray(sd["u0"], dtype=float))
        else:
            raise InstanceError(f"unknown stream kind {sd['kind']!r}")
    except KeyError as exc:
        raise InstanceError(f"jeo instance missing field {exc}")
    return inst, stream


def load_oco_spec(path):
    doc = _load_json(_resolve_instance(path))
    if "kind" not in doc:
        raise InstanceError("oco instance needs a 'kind' field")
    return doc


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def _config_hash(payload):
    clean = {k: v for k, v in payload.items()
             if isinstance(v, (str, int, float, bool, type(None)))}
    return hashlib.sha256(
        json.dumps(clean, sort_keys=True).encode()).hexdigest()[:16]


def _out_dir(args):
    out = args.out or os.environ.get("OCOKIT_OUT") or "ocokit-out"
    os.makedirs(out, exist_ok=True)
    return out


def _write_report(out, payload, summary_lines):
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(summary_lines) + "\n")


def run_oco(spec, regime, T, seed, offline=None):
    """Run one online convex optimization experiment; returns
    (report, trace, theta)."""
    offline = offline or OfflineOracle()
    rng = np.random.default_rng(seed)
    kind = spec["kind"]
    if kind == "matrix-game":
        if regime != "sp-smooth":
            raise InstanceError("matrix-game instances run under regime sp-smooth")
        m, n = int(spec["m"]), int(spec["n"])
        stream, setup, big_l = matrix_game(rng, m, n)
        th = weights("uniform", T)
        sched = step_schedule("constant-smooth", T, th, smoothness=big_l)
        feed_eta = lambda t, v: th[t] * stream.operator(t, v[:m], v[m:])
        feed_xi = lambda t, z: th[t] * stream.operator(t, z[:m], z[m:])
        trace = mirror_prox(setup, T, sched, feed_eta, feed_xi, theta=th)
        bound = theoretical_bound("smooth", T, th, set_width=setup.set_width(),
                                  smoothness=big_l)
        rep = online_sp_gap(stream, trace, th, offline, EntropySimplexSetup(m),
                            EntropySimplexSetup(n), bound=bound)
        return rep, trace, th

    domain = setup_from_descriptor(spec["domain"])
    if kind == "max-affine-stream":
        stream, g = max_affine_stream(rng, T, domain.dim,
                                      pieces=int(spec.get("pieces", 4)),
                                      scale=float(spec.get("scale", 1.0)))
        alpha = None
    elif kind == "quadratic-stream":
        alpha = float(spec["alpha"])
        stream, g = quadratic_stream(rng, T, domain.dim, alpha,
                                     float(spec["domain"].get("radius", 1.0)))
    else:
        raise InstanceError(f"unknown oco instance kind {kind!r}")

    if regime == "nonsmooth":
        th = weights("uniform", T)
        sched = step_schedule("constant-nonsmooth", T, th,
                              set_width=domain.set_width(), grad_bound=g)
        trace = mirror_descent(domain, T, sched,
                               lambda t, z: th[t] * stream.subgradient(t, z),
                               theta=th)
        bound = theoretical_bound("nonsmooth", T, th, set_width=domain.set_width(),
                                  grad_bound=g)
    elif regime == "strongly-convex":
        if alpha is None:
            raise InstanceError("strongly-convex regime needs a quadratic stream")
        th = weights("increasing", T)
        sched = step_schedule("inverse-linear", T, strong_convexity=alpha)
        trace = mirror_descent(domain, T, sched,
                               lambda t, z: stream.subgradient(t, z), theta=th)
        bound = theoretical_bound("strongly-convex", T, grad_bound=g,
                                  strong_convexity=alpha)
    elif regime == "smooth":
        if alpha is None:
            raise InstanceError("smooth regime needs a quadratic stream")
        th = weights("uniform", T)
        sched = step_schedule("constant-smooth", T, th, smoothness=alpha)
        feed_eta = lambda t, v: th[t] * stream.subgradient(t, v)
        feed_xi = lambda t, z: th[t] * stream.subgradient(t, z)
        trace = mirror_prox(domain, T, sched, feed_eta, feed_xi, theta=th)
        bound = theoretical_bound("smooth", T, th, set_width=domain.set_width(),
                                  smoothness=alpha)
    else:
        raise InstanceError(f"unknown regime {regime!r}")
    rep = weighted_regret(stream, trace, th, offline, bound=bound)
    return rep, trace, th


def emit_rate_table(rows, path):
    """Write a plot-ready rate table.

    ``rows`` are (T, realized, bound) triples for at least three horizons;
    the emitted columns are T, realized, bound, ratio_to_prev as CSV plus a
    gnuplot-friendly whitespace variant next to it.
    """
    if len(rows) < 3:
        raise ValueError("a rate table needs at least three horizons")
    lines = ["T,realized,bound,ratio_to_prev"]
    gnu = ["# T realized bound ratio_to_prev"]
    prev = None
    for T, realized, bound in rows:
        ratio = "" if prev is None else f"{realized / prev:.6f}"
        lines.append(f"{T},{realized:.12g},{bound:.12g},{ratio}")
        gnu.append(f"{T} {realized:.12g} {bound:.12g} {ratio or 'nan'}")
        prev = realized
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.splitext(path)[0] + ".dat", "w") as fh:
        fh.write("\n".join(gnu) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_oco(args):
    out = _out_dir(args)
    spec = load_oco_spec(args.instance)
    rep, trace, th = run_oco(spec, args.regime, args.horizon, args.seed)
    trace.to_csv(os.path.join(out, "trace.csv"),
                 dump_iterates=os.path.join(out, "iterates.csv")
                 if args.dump_iterates else None)
    payload = json.loads(rep.to_json())
    payload.update(config_hash=_config_hash(vars(args)), version=__version__,
                   regime=args.regime, horizon=args.horizon, seed=args.seed)
    ok = rep.realized <= rep.bound + 1e-6 if np.isfinite(rep.bound) else True
    _write_report(out, payload, [
        f"oco run: regime={args.regime} T={args.horizon} seed={args.seed}",
        f"realized={rep.realized:.6g} bound={rep.bound:.6g} slack={rep.slack:.6g}",
        f"bound conformance: {'ok' if ok else 'VIOLATED'}",
    ])
    if args.bound_check and not ok:
        return 1
    return 0


def _cmd_ro(args):
    out = _out_dir(args)
    instance = load_robust_instance(args.instance)
    # declared structure constants are validated on samples, not trusted
    instance.spot_check(np.random.default_rng(args.seed), samples=8)
    cfg = robust_mod.FeasibilityConfig(eps=args.eps, tau=args.tau,
                                       scheme=args.scheme, horizon=args.horizon,
                                       max_total_iterations=args.max_total_iterations)
    verdict, run = robust_mod.run_scheme(instance, cfg)
    bounds = robust_mod.scheme_bounds(instance, cfg, run.horizon)
    np.savetxt(os.path.join(out, "trace.csv"), run.xs, delimiter=",",
               header="x iterates, one row per step", comments="# ")
    certs = verdict.certificates
    payload = {
        "outcome": verdict.outcome,
        "eps": verdict.eps, "tau": verdict.tau, "horizon": verdict.horizon,
        "eps_u": certs.eps_u, "eps_x": certs.eps_x,
        "max_weighted_violation": certs.max_weighted_violation,
        "eps_u_bound": bounds[0], "eps_x_bound": bounds[1],
        "x_bar": None if verdict.x_bar is None else verdict.x_bar.tolist(),
        "config_hash": _config_hash(vars(args)), "version": __version__,
    }
    _write_report(out, payload, [
        f"ro solve: scheme={args.scheme} eps={args.eps} tau={args.tau}",
        f"verdict: {verdict.outcome} at T={verdict.horizon}",
        f"eps_u={certs.eps_u:.6g} (bound {bounds[0]:.6g}) "
        f"eps_x={certs.eps_x:.6g} (bound {bounds[1]:.6g})",
        f"max weighted violation={certs.max_weighted_violation:.6g}",
    ])
    return 2 if verdict.outcome == "inconclusive" else 0


def _cmd_jeo(args):
    out = _out_dir(args)
    instance, stream = load_jeo_instance(args.instance)
    rep = jeo_mod.run_jeo(instance, stream, args.regime, args.horizon)
    with open(os.path.join(out, "trace.csv"), "w") as fh:
        fh.write("t,u_dist,gap_partial,regret_partial\n")
        for row in rep.per_step:
            fh.write("%d,%.12g,%.12g,%.12g\n" % row)
    payload = json.loads(rep.to_json())
    payload.update(config_hash=_config_hash(vars(args)), version=__version__,
                   horizon=args.horizon)
    lines = [f"jeo run: regime={args.regime} T={args.horizon}",
             f"f(x_bar, u_T)={rep.objective_at_estimate:.6g}",
             f"q-regret={rep.q_regret:.6g} (bound {rep.q_regret_bound:.6g})"]
    if rep.computable_gap is not None:
        lines.append(f"gap={rep.computable_gap:.6g} "
                     f"decomposition slack={rep.decomposition_slack:.6g}")
    _write_report(out, payload, lines)
    return 0


def _cmd_rate_table(args):
    out = _out_dir(args)
    spec = load_oco_spec(args.instance)
    rows = []
    for k in range(args.points):
        T = args.horizon * (2 ** k)
        rep, _, _ = run_oco(spec, args.regime, T, args.seed)
        rows.append((T, rep.realized, rep.bound))
    emit_rate_table(rows, os.path.join(out, "rate_table.csv"))
    _write_report(out, {
        "rows": [{"T": T, "realized": r, "bound": b} for T, r, b in rows],
        "config_hash": _config_hash(vars(args)), "version": __version__,
    }, [f"rate table: regime={args.regime} horizons from {args.horizon}"]
        + [f"T={T}: realized={r:.6g} bound={b:.6g}" for T, r, b in rows])
    return 0


def _cmd_verify(args):
    from .verify import run_verify
    out = _out_dir(args)
    result = run_verify(args.seed)
    lines = result.summary_lines()
    _write_report(out, {
        "passed": result.passed,
        "digest": result.digest,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                   for c in result.checks],
        "config_hash": _config_hash(vars(args)), "version": __version__,
    }, lines)
    print("\n".join(lines))
    return 0 if result.passed else 1


def build_parser():
    p = argparse.ArgumentParser(prog="ocokit",
                                description="weighted-regret online convex "
                                            "optimization experiments")
    sub = p.add_subparsers(dest="command", required=True)

    oco = sub.add_parser("oco", help="online convex optimization runs")
    oco_sub = oco.add_subparsers(dest="verb", required=True)
    oco_run = oco_sub.add_parser("run")
    oco_run.add_argument("--instance", default="oco_quadratic.json")
    oco_run.add_argument("--regime", required=True,
                         choices=["nonsmooth", "strongly-convex", "smooth",
                                  "sp-smooth"])
    oco_run.add_argument("--horizon", "--T", type=int, dest="horizon", default=100)
    oco_run.add_argument("--seed", type=int, default=0)
    oco_run.add_argument("--out", default=None)
    oco_run.add_argument("--dump-iterates", action="store_true")
    oco_run.add_argument("--bound-check", action="store_true")
    oco_run.set_defaults(fn=_cmd_oco)

    ro = sub.add_parser("ro", help="robust feasibility solving")
    ro_sub = ro.add_subparsers(dest="verb", required=True)
    ro_solve = ro_sub.add_parser("solve")
    ro_solve.add_argument("--instance", required=True)
    ro_solve.add_argument("--scheme", default="strong-strong",
                          choices=list(robust_mod.SCHEMES))
    ro_solve.add_argument("--eps", type=float, required=True)
    ro_solve.add_argument("--tau", type=float, default=0.5)
    ro_solve.add_argument("--horizon", type=int, default=None)
    ro_solve.add_argument("--max-total-iterations", type=int, default=2 ** 20,
                          help="doubling budget for inconclusive outcomes")
    ro_solve.add_argument("--seed", type=int, default=0)
    ro_solve.add_argument("--out", default=None)
    ro_solve.set_defaults(fn=_cmd_ro)

    jeo = sub.add_parser("jeo", help="joint estimation-optimization runs")
    jeo_sub = jeo.add_subparsers(dest="verb", required=True)
    jeo_run = jeo_sub.add_parser("run")
    jeo_run.add_argument("--instance", default="jeo_tracking.json")
    jeo_run.add_argument("--regime", required=True,
                         choices=list(jeo_mod.REGIMES))
    jeo_run.add_argument("--horizon", "--T", type=int, dest="horizon", default=100)
    jeo_run.add_argument("--seed", type=int, default=0)
    jeo_run.add_argument("--out", default=None)
    jeo_run.set_defaults(fn=_cmd_jeo)

    rt = sub.add_parser("rate-table", help="rate sweep over doubling horizons")
    rt.add_argument("--instance", default="oco_quadratic.json")
    rt.add_argument("--regime", required=True,
                    choices=["nonsmooth", "strongly-convex", "smooth", "sp-smooth"])
    rt.add_argument("--horizon", type=int, default=64)
    rt.add_argument("--points", type=int, default=4)
    rt.add_argument("--seed", type=int, default=0)
    rt.add_argument("--out", default=None)
    rt.set_defaults(fn=_cmd_rate_table)

    ver = sub.add_parser("verify", help="run the invariant battery")
    ver.add_argument("--seed", type=int, default=2024)
    ver.add_argument("--out", default=None)
    ver.set_defaults(fn=_cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InstanceError, robust_mod.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
