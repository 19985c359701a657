import json
import os

import pytest

from .. import cli, config, errors, io

BPT = {"command": "bpt", "checks": ["bpt.cross_ratio", "bpt.tangency"]}
CUBE = {
    "command": "bpt",
    "family": cli.PARABOLOID,
    "checks": ["bpt.cube"],
    "params": {
        "z1": 0.2, "z2": 0.5, "z3": -0.3, "p0": [0.0, 0.0], "v1": 1.0, "v2": -1.0,
        "v4": 0.5,
    },
}


def _run(job, out, **kwargs):
    return cli.run_job(job, str(out), **kwargs)


def test_registry():
    assert set(cli.SUITE_DEFAULTS) == set(cli.SUITES)
    for name, entry in cli.CHECKS.items():
        assert entry.suite in cli.SUITES and entry.name == name
    bpt = cli.suite_checks("bpt")
    assert "bpt.menelaus" in bpt and "bpt.two_way" in bpt and "bpt.cube" not in bpt
    assert "family.degenerate" in cli.suite_checks("family")
    everything = cli.suite_checks("verify")
    assert set(bpt) < set(everything)
    assert not any(cli.CHECKS[name].optional for name in everything)
    with pytest.raises(ValueError):
        cli.check("nope.check", 1.0)(lambda ctx: 0.0)


def test_load_job_defaults():
    spec = cli.load_job(None, "roulette")
    assert spec.command == "roulette"
    assert spec.checks == tuple(cli.suite_checks("roulette"))
    assert spec.tol == config.DEFAULT
    assert spec.seed == 0 and spec.exports == {} and spec.family is None
    assert spec.threshold("roulette.cycloid") == 1e-10


def test_load_job_file(tmp_path):
    path = tmp_path / "job.json"
    path.write_text(json.dumps(dict(BPT, seed=3, tolerances={"bpt.tangency": 1e-7})))
    spec = cli.load_job(str(path))
    assert spec.command == "bpt" and spec.seed == 3
    assert spec.threshold("bpt.tangency") == 1e-7
    assert spec.threshold("bpt.cross_ratio") == 1e-8
    assert spec.to_json()["checks"] == BPT["checks"]

    path.write_text("[1, 2]")
    with pytest.raises(errors.BadSchema):
        cli.load_job(str(path))
    with pytest.raises(errors.BadSchema):
        cli.load_job(str(tmp_path / "missing.json"))


@pytest.mark.parametrize(
    "job",
    [
        {"command": "nope"},
        {},
        {"command": "bpt", "extra": 1},
        {"command": "bpt", "checks": "bpt.cad"},
        {"command": "bpt", "checks": ["bpt.nope"]},
        {"command": "bpt", "checks": ["tt.mobius"]},
        {"command": "bpt", "checks": ["bpt.cube"]},
        {"command": "bpt", "params": [1]},
        {"command": "bpt", "family": {"kind": "central", "a": [1, 2, 3]}},
        {"command": "bpt", "family": {"kind": "cone"}},
        {"command": "bpt", "tolerances": {"bpt.cad": -1}},
        {"command": "bpt", "tolerances": {"bpt.cad": "small"}},
        {"command": "bpt", "tolerances": {"bpt.nope": 1}},
        {"command": "bpt", "tol": {"nope": 1e-3}},
        {"command": "bpt", "tol": {"sing": -1}},
        {"command": "bpt", "seed": -1},
        {"command": "bpt", "seed": True},
        {"command": "bpt", "seed": 2 ** 64},
        {"command": "bpt", "exports": {"mesh": "bpt.obj"}},
        {"command": "bpt", "exports": {"video": "bpt.mp4"}},
        {"command": "seed", "exports": {"mesh": 3}},
    ],
)
def test_load_job_bad_schema(job):
    with pytest.raises(errors.BadSchema):
        cli.load_job(job)


def test_load_job_command_line():
    with pytest.raises(errors.BadSchema):
        cli.load_job(BPT, command="tt")
    spec = cli.load_job(BPT, command="bpt", overrides=["sing=1e-7", "bpt.cad=1e-3"])
    assert spec.tol.sing == 1e-7
    assert spec.threshold("bpt.cad") == 1e-3
    assert cli.load_job(dict(BPT, seed=4), seed=5).seed == 5
    for bad in ["sing", "sing=abc", "nope=1", "sing=-1", "bpt.cad=-1"]:
        with pytest.raises(errors.BadSchema):
            cli.load_job(BPT, overrides=[bad])


def test_context():
    spec = cli.load_job({"command": "bpt", "params": {"z1": 0.3}})
    ctx = cli.JobContext(spec, "bpt")
    assert ctx.family.kind == "central"
    assert ctx.param("z1") == 0.3 and ctx.param("z2") == 0.6
    assert ctx.param("u_range") == [1.95, 2.05]
    assert ctx.param("v1_range") == [0.2, 0.4]
    assert ctx.each_family() == [ctx]
    assert ctx.rng("a").random() == ctx.rng("a").random()
    assert ctx.rng("a").random() != ctx.rng("b").random()
    calls = []
    for _ in range(2):
        assert ctx.memo("key", lambda: calls.append(1) or 7) == 7
    assert calls == [1]


def test_each_family():
    ctx = cli.JobContext(cli.load_job(None, "family"), "family")
    assert ctx.param("samples") == 1000
    sweep = ctx.each_family()
    assert [each.family.kind for each in sweep] == ["central", "paraboloid"]
    assert [each.param("u_range") for each in sweep] == [[1.5, 2.5], [-0.5, 0.5]]
    assert ctx.each_family() is sweep

    spec = cli.load_job({"command": "family", "family": cli.PARABOLOID})
    ctx = cli.JobContext(spec, "family")
    assert ctx.each_family() == [ctx]


def test_degenerate_check(tmp_path):
    job = {"command": "family", "checks": ["family.degenerate"]}
    code, report = _run(job, tmp_path)
    assert code == 0
    assert report["checks"][0]["max_residual"] == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("command", ["bpt", "ddq"])
def test_central_suites(tmp_path, command):
    code, report = _run(None, tmp_path, command=command)
    assert code == 0, [entry for entry in report["checks"] if not entry["pass"]]
    names = [entry["name"] for entry in report["checks"]]
    assert names == cli.suite_checks(command)


def test_run_job(tmp_path):
    code, report = _run(BPT, tmp_path)
    assert code == 0 and report["pass"]
    assert [entry["name"] for entry in report["checks"]] == BPT["checks"]
    for entry in report["checks"]:
        assert entry["pass"] and entry["max_residual"] <= entry["tolerance"]
    assert report["environment"]["quadlab"] == cli.__version__
    assert io.read_json(str(tmp_path / cli.REPORT_FILE)) == report

    assert not (tmp_path / cli.RUN_LOG_FILE).exists()
    log = list(io.read_jsonlines(str(tmp_path / (cli.RUN_LOG_FILE + ".gz"))))
    assert [line["kind"] for line in log] == ["header", "check", "check", "summary"]
    assert log[0]["command"] == "bpt" and log[0]["checks"] == 2
    assert log[-1]["pass"] is True


def test_report_is_deterministic(tmp_path, monkeypatch):
    _run(BPT, tmp_path / "a")
    _run(BPT, tmp_path / "b")
    monkeypatch.setenv(config.THREADS_ENV, "3")
    _run(BPT, tmp_path / "c")
    first = (tmp_path / "a" / cli.REPORT_FILE).read_bytes()
    assert (tmp_path / "b" / cli.REPORT_FILE).read_bytes() == first
    assert (tmp_path / "c" / cli.REPORT_FILE).read_bytes() == first


def test_run_job_failures(tmp_path):
    job = {"command": "roulette", "checks": ["roulette.delaunay"], "params": {"b": 0.5}}
    code, report = _run(job, tmp_path / "raised")
    assert code == 1 and not report["pass"]
    (entry,) = report["checks"]
    assert entry["max_residual"] is None
    assert entry["error"].startswith("OutOfRange")
    with pytest.raises(errors.CheckFailure):
        cli.require_pass(report)

    code, report = _run({"command": "nope"}, tmp_path / "invalid")
    assert code == 2 and report is None
    assert not (tmp_path / "invalid" / cli.REPORT_FILE).exists()


def test_empty_checks(tmp_path):
    code, report = _run({"command": "tt", "checks": []}, tmp_path)
    assert code == 0 and report["pass"] and report["checks"] == []


def test_optional_checks(tmp_path):
    code, report = _run(CUBE, tmp_path)
    assert code == 0, report["checks"]
    assert report["job"]["params"] == CUBE["params"]


def test_exports(tmp_path):
    job = {"command": "seed", "checks": [], "exports": {"mesh": "seed.obj"}}
    assert _run(job, tmp_path)[0] == 0
    mesh = io.read_mesh(str(tmp_path / "seed.obj"))
    assert mesh.vertices.shape == (17 * 17, 3)
    assert mesh.faces.shape == (2 * 16 * 16, 3)
    log = list(io.read_jsonlines(str(tmp_path / (cli.RUN_LOG_FILE + ".gz"))))
    export = [line for line in log if line["kind"] == "export"][0]
    assert export["vertices"] == 289 and export["path"] == "seed.obj"

    job = {"command": "billiard", "checks": [], "exports": {"trace": "bounces.csv"}}
    assert _run(job, tmp_path)[0] == 0
    trace = io.read_trace(str(tmp_path / "bounces.csv"))
    assert list(trace.columns) == ["bounce", "x", "y", "z"]
    assert len(trace) == 101


def test_main(tmp_path, capsys):
    assert cli.main(["bpt", "--list"]) == 0
    listed = capsys.readouterr().out.splitlines()
    assert "bpt.cad\t1e-08" in listed
    assert len(listed) == len(cli.suite_checks("bpt"))

    path = tmp_path / "job.json"
    path.write_text(json.dumps(BPT))
    out = tmp_path / "out"
    args = ["bpt", "--job", str(path), "--out", str(out), "--tol", "deg=1e-9"]
    assert cli.main(args) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("[ok] bpt.cross_ratio")
    assert json.loads(lines[-1]) == dict(exit=0, checks=2)
    assert os.path.exists(out / cli.REPORT_FILE)
    assert io.read_json(str(out / cli.REPORT_FILE))["job"]["tol"]["deg"] == 1e-9

    assert cli.main(["tt", "--job", str(path), "--out", str(out)]) == 2
    assert cli.main(["bpt", "--seed", "-1", "--out", str(out)]) == 2


@pytest.mark.slow
def test_verify(tmp_path):
    code, report = _run(None, tmp_path, command="verify")
    failed = [entry for entry in report["checks"] if not entry["pass"]]
    assert code == 0, failed
    assert len(report["checks"]) == len(cli.suite_checks("verify"))


@pytest.mark.slow
@pytest.mark.parametrize("family", [cli.CENTRAL, cli.PARABOLOID])
def test_weingarten_check(tmp_path, family):
    job = {"command": "backlund", "checks": ["backlund.weingarten"], "family": family}
    code, report = _run(job, tmp_path)
    assert code == 0, report["checks"]
    (entry,) = report["checks"]
    assert entry["max_residual"] < 1e-4 and entry["tolerance"] == 1e-4
