import contextlib
import re
import time
import unittest.mock as um

import pytest

from .. import io, logger

ENTRY = dict(name="family.lame", tolerance=1e-10, max_residual=1e-14)
ENTRY["pass"] = True


def test_add_duration():
    event: logger.Event = {}
    with logger.add_duration(event):
        time.sleep(0.01)
    assert event["seconds"] > 0


def test_elapsed():
    header: logger.Event = {}
    stamp = logger.elapsed(header)
    assert re.fullmatch(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}", header["started"])
    assert stamp({})["elapsed"] >= 0
    assert logger.elapsed(None)({})["elapsed"] >= 0


def test_run_id():
    ids = []
    for seed in [123, 123, 124]:
        header: logger.Event = dict(seed=seed)
        assert logger.run_id(header) is None
        ids.append(header["id"])
    assert 0 <= ids[0] < 2 ** 64
    assert ids[0] == ids[1] != ids[2]
    logger.run_id(None)


def _fixed_id(header):
    if header is not None:
        header["id"] = "ID"


def _counter(header):
    count = iter(range(100))
    return lambda event: dict(elapsed=next(count))


@contextlib.contextmanager
def _fixed_duration(event):
    yield
    event["seconds"] = "SECONDS"


def test_log():
    writer = um.Mock()
    with logger.Log(
        writer, dict(command="family", seed=7), stampers=(_fixed_id, _counter)
    ) as log:
        log.check(ENTRY, seconds=0.12345)
        with log.adding("export", scopes=(_fixed_duration,), export="mesh") as line:
            line.set(vertices=289)
            line.set(faces=512)
        log.summary([ENTRY, dict(ENTRY, name="family.gram", **{"pass": False})])

    summary = dict(kind="summary", failed=["family.gram"], elapsed=2)
    summary["pass"] = False
    writer.write.assert_has_calls(
        [
            um.call(dict(kind="header", command="family", seed=7, id="ID")),
            um.call(dict(kind="check", **ENTRY, seconds=0.123, elapsed=0)),
            um.call(
                dict(
                    kind="export",
                    export="mesh",
                    vertices=289,
                    faces=512,
                    seconds="SECONDS",
                    elapsed=1,
                )
            ),
            um.call(summary),
        ]
    )
    assert writer.flush.call_count == 4
    writer.close.assert_called_once()


def test_log_without_header():
    writer = um.Mock()
    with logger.Log(writer, stampers=()) as log:
        log.add("summary", failed=[])
    writer.write.assert_called_once_with(dict(kind="summary", failed=[]))


def test_pending_event_records_errors():
    writer = um.Mock()
    with logger.Log(writer, stampers=()) as log:
        with pytest.raises(ZeroDivisionError):
            with log.export("trace", "kepler.csv"):
                raise ZeroDivisionError("no trace")
    (call,) = writer.write.call_args_list
    event = call.args[0]
    assert event["error"] == "ZeroDivisionError" and event["message"] == "no trace"
    assert event["path"] == "kepler.csv" and event["seconds"] >= 0


def test_pending_event_misuse():
    with logger.Log(um.Mock()) as log:
        with log.adding("export") as line:
            pass
        with pytest.raises(ValueError):
            line.set(rows=1)
        with pytest.raises(ValueError):
            line.write()


def test_file_log(tmp_path):
    path = tmp_path / "run.jsonl"
    with logger.open(path, command="verify", seed=3) as log:
        log.check(ENTRY)
        with log.export("trace", "kepler.csv") as line:
            line.set(rows=10)
        assert path.exists()

    assert not path.exists()
    events = list(io.read_jsonlines(str(tmp_path / "run.jsonl.gz")))
    assert [event["kind"] for event in events] == ["header", "check", "export"]
    header, check, export = events
    assert header["command"] == "verify" and header["seed"] == 3
    assert isinstance(header["id"], int) and "started" in header
    assert check["name"] == "family.lame" and "seconds" not in check
    assert export["rows"] == 10 and export["seconds"] >= 0


def test_file_log_plain(tmp_path):
    path = tmp_path / "run.jsonl"
    with logger.open(path, gzip_on_close=False) as log:
        log.add("check", max_residual=5.0)
    (event,) = io.read_jsonlines(str(path))
    assert event["kind"] == "check" and event["max_residual"] == 5.0


def test_file_log_reserved_header(tmp_path):
    path = tmp_path / "bad.jsonl"
    with pytest.raises(ValueError) as error:
        logger.open(path, command="verify", id=4)
    assert "id" in str(error.value)
    assert not path.exists()
