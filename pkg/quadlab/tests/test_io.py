import gzip
import io as pyio
import os
from typing import Any

import numpy as np
import pandas as pd
import pytest

from .. import errors
from .. import io  # pylint:disable=reimported


def _roundtrip(obj: Any) -> Any:
    stream = pyio.StringIO()
    io.JsonLinesIO[Any](stream).write(obj)
    return io.JsonLinesIO[Any](pyio.StringIO(stream.getvalue())).read()


def test_jsonlinesio():
    stream = pyio.StringIO()
    lines = io.JsonLinesIO[Any](stream)
    lines.write(dict(name="ivory", max_residual=1e-12))
    lines.write(None)
    lines.flush()
    assert stream.getvalue().splitlines()[0] == '{"name":"ivory","max_residual":1e-12}'

    stream.seek(0)
    assert lines.read() == dict(name="ivory", max_residual=1e-12)
    assert lines.read() is None
    with pytest.raises(EOFError):
        lines.read()

    stream.seek(0)
    assert list(lines) == [dict(name="ivory", max_residual=1e-12), None]


def test_jsonlinesio_sort_keys():
    stream = pyio.StringIO()
    io.JsonLinesIO[Any](stream, sort_keys=True).write(dict(c=3, a=1, b=2))
    assert stream.getvalue() == '{"a":1,"b":2,"c":3}\n'


def _assert_array_equal(left, right):
    np.testing.assert_equal(left, right)
    assert left.dtype == right.dtype


def test_numpy_values():
    original = np.linspace(0, 1, 6).reshape((2, 3))
    _assert_array_equal(original, _roundtrip(original))

    reloaded = _roundtrip(dict(R=np.eye(3, dtype=np.float32), kind="motion"))
    _assert_array_equal(reloaded["R"], np.eye(3, dtype=np.float32))
    assert reloaded["kind"] == "motion"

    assert _roundtrip(dict(n=np.int64(7), x=np.float64(0.25))) == dict(n=7, x=0.25)
    assert io.loads(io.dumps(np.bool_(True))) is True


def test_numpy_bad_encoding():
    with pytest.raises(errors.BadSchema):
        io.loads('{"__numpy_dict": 1, "shape": [1], "dtype": "float64", "items": [0]}')


def test_unserializable():
    with pytest.raises(TypeError):
        io.dumps(object())


def test_read_write_jsonlines(tmp_path):
    items = [dict(a=1, b=None), dict(c=True)]
    for filename in ["test.jsonl", "test.jsonl.gz"]:
        io.write_jsonlines(tmp_path / filename, items)
        assert list(io.read_jsonlines(tmp_path / filename)) == items
    with gzip.open(tmp_path / "test.jsonl.gz", "rt") as f:
        assert f.readline() == '{"a":1,"b":null}\n'


def test_gzip(tmp_path):
    original = tmp_path / "original.txt"
    original.write_text("one\ntwo\n")

    assert io.gzip(original) == f"{original}.gz"

    assert not os.path.isfile(original)
    with gzip.open(tmp_path / "original.txt.gz", "rt") as f:
        assert list(f) == ["one\n", "two\n"]


def test_gzip_deterministic(tmp_path):
    for name in ["a.txt", "b.txt"]:
        (tmp_path / name).write_text("same content\n")
        io.gzip(tmp_path / name, delete=False, chunk_size=5)
    assert (tmp_path / "a.txt.gz").read_bytes() == (tmp_path / "b.txt.gz").read_bytes()


def test_json_atomic(tmp_path):
    path = tmp_path / "report.json"
    report = dict(pass_=True, checks=[dict(max_residual=np.float64(1e-13))])
    io.write_json_atomic(path, report)
    text = path.read_text()
    assert text.endswith("}\n")
    assert text == io.dumps_json(report)
    assert io.read_json(path) == dict(pass_=True, checks=[dict(max_residual=1e-13)])
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]


def test_dumps_json_sorted():
    assert io.dumps_json(dict(b=1, a=2)) == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_grid_faces():
    faces = io.grid_faces(2, 3)
    np.testing.assert_equal(faces, [[0, 3, 4], [0, 4, 1], [1, 4, 5], [1, 5, 2]])


def test_export_mesh(tmp_path):
    u, v = np.meshgrid(np.linspace(0, 1, 4), np.linspace(0, 1, 3), indexing="ij")
    points = np.stack([u, v, u * v + 1 / 3], axis=-1)

    mesh = io.export_mesh(points, tmp_path / "grid.obj")
    assert mesh.vertices.shape == (12, 3)
    assert mesh.faces.shape == (2 * 3 * 2, 3)

    reloaded = io.read_mesh(tmp_path / "grid.obj")
    np.testing.assert_array_equal(reloaded.vertices, points.reshape(-1, 3))
    np.testing.assert_array_equal(reloaded.faces, mesh.faces)


def test_export_mesh_errors(tmp_path):
    with pytest.raises(ValueError):
        io.export_mesh(np.zeros((3, 3, 2)), tmp_path / "bad.obj")
    with pytest.raises(errors.GridTooCoarse):
        io.export_mesh(np.zeros((1, 5, 3)), tmp_path / "bad.obj")
    assert not (tmp_path / "bad.obj").exists()


def test_export_trace(tmp_path):
    t = np.linspace(0, 1, 7)
    frame = io.export_trace(dict(t=t, x=np.sin(t) / 3), tmp_path / "trace.csv")
    assert list(frame.columns) == ["t", "x"]
    assert (tmp_path / "trace.csv").read_text().splitlines()[0] == "t,x"

    reloaded = io.read_trace(tmp_path / "trace.csv")
    pd.testing.assert_frame_equal(reloaded, frame)


def test_export_trace_errors(tmp_path):
    with pytest.raises(ValueError):
        io.export_trace({}, tmp_path / "empty.csv")
    with pytest.raises(ValueError):
        io.export_trace(dict(a=[1, 2], b=[1]), tmp_path / "ragged.csv")
