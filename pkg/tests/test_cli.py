import json
import os

import numpy as np
import pytest

from ocokit.cli import (InstanceError, bundled_path, emit_rate_table,
                        load_jeo_instance, load_robust_instance, main,
                        save_robust_instance, setup_from_descriptor,
                        setup_to_descriptor)
from ocokit.prox import EntropySimplexSetup, EuclideanBallSetup, EuclideanBoxSetup
from ocokit.robust import planted_instance


def test_domain_descriptor_roundtrip():
    for setup in (EntropySimplexSetup(4), EuclideanBallSetup(3, 2.0),
                  EuclideanBallSetup(2, 1.0, center=np.array([0.5, 0.0])),
                  EuclideanBoxSetup([-1.0, 0.0], [1.0, 2.0])):
        back = setup_from_descriptor(setup_to_descriptor(setup))
        assert type(back) is type(setup)
        assert back.dim == setup.dim


def test_descriptor_errors_name_the_field():
    with pytest.raises(InstanceError, match="kind"):
        setup_from_descriptor({"dim": 3})
    with pytest.raises(InstanceError, match="bounds"):
        setup_from_descriptor({"kind": "box", "dim": 2})


def test_robust_instance_roundtrip(tmp_path):
    inst = planted_instance(np.random.default_rng(0), feasible=True)
    path = tmp_path / "inst.json"
    save_robust_instance(inst, path)
    back = load_robust_instance(str(path))
    assert back.m == inst.m
    assert np.allclose(back.constraints[0].matrix, inst.constraints[0].matrix)
    assert back.constants.g_x == pytest.approx(inst.constants.g_x)
    rng = np.random.default_rng(1)
    x = back.x_setup.sample(rng)
    u = back.u_setups[1].sample(rng)
    assert back.constraints[1].value(x, u) == pytest.approx(
        inst.constraints[1].value(x, u))


def test_malformed_instance_reports_field(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"m": 1, "x_domain": {"kind": "ball", "dim": 2,
                                                     "radius": 1.0}}))
    with pytest.raises(InstanceError, match="u_domains"):
        load_robust_instance(str(path))
    path.write_text("{not json")
    with pytest.raises(InstanceError, match="bad.json:1"):
        load_robust_instance(str(path))


def test_bundled_instances_match_their_schemas():
    from jsonschema import Draft202012Validator
    from referencing import Registry, Resource

    def load(name):
        return json.loads(open(bundled_path(name)).read())

    robust_schema = load("schema_robust.json")
    registry = Registry().with_resource(
        "schema_robust.json", Resource.from_contents(robust_schema))
    Draft202012Validator(robust_schema, registry=registry).validate(
        load("ro_feasible.json"))
    Draft202012Validator(robust_schema, registry=registry).validate(
        load("ro_infeasible.json"))
    Draft202012Validator(load("schema_jeo.json"), registry=registry).validate(
        load("jeo_tracking.json"))
    oco = Draft202012Validator(load("schema_oco.json"), registry=registry)
    for name in ("oco_quadratic.json", "oco_maxaffine.json", "oco_game.json"):
        oco.validate(load(name))


def test_bundled_instances_load():
    inst = load_robust_instance(bundled_path("ro_feasible.json"))
    assert inst.m == 3 and inst.dim_x == 5
    jinst, stream = load_jeo_instance(bundled_path("jeo_tracking.json"))
    assert stream.beta == 0.9
    assert jinst.u_star is not None


def run_cli(args, tmp_path, name):
    out = tmp_path / name
    return main(args + ["--out", str(out)]), out


def test_oco_run_writes_artifacts(tmp_path):
    code, out = run_cli(["oco", "run", "--regime", "strongly-convex",
                         "--T", "100", "--bound-check"], tmp_path, "a")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["realized"] <= report["bound"] + 1e-6
    # bundled quadratic stream: the bound is 2 G^2 / (alpha * 101) with the
    # stream's G recomputed from the same seed
    from ocokit.streams import quadratic_stream
    _, g = quadratic_stream(np.random.default_rng(0), 100, 5, 1.5, 1.0)
    assert report["bound"] == pytest.approx(2 * g ** 2 / (1.5 * 101))
    assert report["version"] and report["config_hash"]
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header == "t,gamma,theta,xi_dual_norm,step_residual"


def test_oco_dump_iterates(tmp_path):
    code, out = run_cli(["oco", "run", "--regime", "nonsmooth",
                         "--instance", "oco_maxaffine.json",
                         "--horizon", "32", "--dump-iterates"], tmp_path, "b")
    assert code == 0
    pts = np.loadtxt(out / "iterates.csv", delimiter=",")
    assert pts.shape == (32, 10)


def test_ro_solve_feasible_exit_zero(tmp_path):
    code, out = run_cli(["ro", "solve", "--instance", "ro_feasible.json",
                         "--eps", "0.08"], tmp_path, "c")
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["outcome"] == "feasible"
    assert report["eps_u"] <= report["eps_u_bound"] + 1e-6


def test_ro_solve_inconclusive_exit_two(tmp_path):
    # a tiny horizon with an exhausted doubling budget cannot certify
    # anything, which must surface as exit code 2
    code, out = run_cli(["ro", "solve", "--instance", "ro_feasible.json",
                         "--eps", "0.08", "--horizon", "3",
                         "--max-total-iterations", "4"], tmp_path, "d")
    assert code == 2
    report = json.loads((out / "report.json").read_text())
    assert report["outcome"] == "inconclusive"


def test_jeo_run_trace_columns(tmp_path):
    code, out = run_cli(["jeo", "run", "--regime", "smooth",
                         "--horizon", "40"], tmp_path, "e")
    assert code == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,u_dist,gap_partial,regret_partial"
    assert len(lines) == 41


def test_rate_table_command(tmp_path):
    code, out = run_cli(["rate-table", "--regime", "strongly-convex",
                         "--horizon", "32", "--points", "3"], tmp_path, "f")
    assert code == 0
    rows = (out / "rate_table.csv").read_text().splitlines()
    assert rows[0] == "T,realized,bound,ratio_to_prev"
    assert len(rows) == 4
    assert os.path.exists(out / "rate_table.dat")


@pytest.mark.parametrize("regime,instance,window",
                         [("strongly-convex", "oco_quadratic.json", (0.40, 0.60)),
                          ("nonsmooth", "oco_maxaffine.json", (0.55, 0.80)),
                          ("sp-smooth", "oco_game.json", (0.40, 0.60))])
def test_rate_table_ratio_signatures(tmp_path, regime, instance, window):
    # doubling horizons reveal each regime's rate: ~0.5 for the 1/T
    # regimes, ~1/sqrt(2) for the sqrt-horizon regime
    code, out = run_cli(["rate-table", "--regime", regime, "--instance", instance,
                         "--horizon", "64", "--points", "4", "--seed", "3"],
                        tmp_path, f"rt-{regime}")
    assert code == 0
    rows = (out / "rate_table.csv").read_text().splitlines()[2:]
    ratios = [float(r.rsplit(",", 1)[1]) for r in rows]
    # the first doubling still carries transient effects; check the tail
    for ratio in ratios[1:]:
        assert window[0] <= ratio <= window[1]


def test_emit_rate_table_needs_three_points(tmp_path):
    with pytest.raises(ValueError):
        emit_rate_table([(1, 1.0, 2.0), (2, 0.5, 1.0)], tmp_path / "t.csv")


def test_error_exit_code(tmp_path):
    code = main(["ro", "solve", "--instance", "missing.json", "--eps", "0.1",
                 "--out", str(tmp_path / "g")])
    assert code == 1


def test_identical_config_reproduces_trace_bytes(tmp_path):
    _, out1 = run_cli(["oco", "run", "--regime", "nonsmooth",
                       "--instance", "oco_maxaffine.json",
                       "--horizon", "64", "--seed", "7"], tmp_path, "h1")
    _, out2 = run_cli(["oco", "run", "--regime", "nonsmooth",
                       "--instance", "oco_maxaffine.json",
                       "--horizon", "64", "--seed", "7"], tmp_path, "h2")
    assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()


def test_verify_command(tmp_path, capsys):
    code = main(["verify", "--seed", "11", "--out", str(tmp_path / "v")])
    assert code == 0
    report = json.loads((tmp_path / "v" / "report.json").read_text())
    assert report["passed"] and len(report["digest"]) == 64
