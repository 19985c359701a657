"""Run artifacts: JSON reports, JSON Lines logs, OBJ meshes and CSV traces.

JSON values may contain numpy arrays and scalars. Scalars become plain numbers;
arrays are stored as `{"__numpy_dict": 0, "shape": ..., "dtype": ..., "items": ...}`
and restored on read. Floats in meshes and traces are written with 17 significant
digits, so they parse back bit-exactly.
"""

import dataclasses
import gzip as gzip_
import json
import os
import tempfile
from types import TracebackType
from typing import (
    Any,
    Dict,
    Generic,
    Iterable,
    Iterator,
    Mapping,
    Optional,
    TextIO,
    Type,
    TypeVar,
    cast,
)

import numpy as np
import pandas as pd

from . import errors

T = TypeVar("T")

NUMPY_DICT_KEY = "__numpy_dict"
FLOAT_FORMAT = "%.17g"
GZIP_SUFFIXES = (".gz", ".gzip")


def numpy_to_dict(array: Any) -> Dict[str, Any]:
    """JSON-able form of an array; `numpy_from_dict` restores it."""
    array = np.asarray(array)
    return {
        NUMPY_DICT_KEY: 0,
        "shape": list(array.shape),
        "dtype": array.dtype.base.name,
        "items": array.ravel().tolist(),
    }


def numpy_from_dict(data: Mapping[str, Any]) -> Any:
    """Array from `numpy_to_dict` output; BadSchema for an unknown encoding."""
    if data[NUMPY_DICT_KEY] != 0:
        raise errors.BadSchema(f"Unknown array encoding {data[NUMPY_DICT_KEY]!r}")
    items = np.array(data["items"], dtype=np.dtype(data["dtype"]))
    return items.reshape(tuple(data["shape"]))


def _encode(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return numpy_to_dict(value)
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _decode(data: Dict[str, Any]) -> Any:
    return numpy_from_dict(data) if NUMPY_DICT_KEY in data else data


def dumps(obj: Any, **args: Any) -> str:
    """`json.dumps` with numpy support."""
    return json.dumps(obj, default=_encode, **args)


def loads(text: str) -> Any:
    """`json.loads` restoring arrays."""
    return json.loads(text, object_hook=_decode)


class JsonLinesIO(Generic[T]):
    """One compact JSON value per line over a text stream (https://jsonlines.org/)."""

    def __init__(self, stream: TextIO, sort_keys: bool = False):
        self.stream = stream
        self.sort_keys = sort_keys

    def __enter__(self) -> "JsonLinesIO[T]":
        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc_value: Optional[BaseException],
        traceback: Optional[TracebackType],
    ) -> None:
        self.close()

    def __iter__(self) -> Iterator[T]:
        for line in self.stream:
            if line.strip():
                yield cast(T, loads(line))

    def close(self) -> None:
        self.stream.close()

    def flush(self) -> None:
        self.stream.flush()

    def write(self, obj: T) -> None:
        """Append one value as a line."""
        self.stream.write(
            dumps(obj, separators=(",", ":"), sort_keys=self.sort_keys) + "\n"
        )

    def read(self) -> T:
        """Next value; EOFError at the end of the stream."""
        line = self.stream.readline()
        if not line:
            raise EOFError(f"No more JSON lines in {self.stream!r}")
        return cast(T, loads(line))


def _open_text(path: str, mode: str = "r") -> TextIO:
    if str(path).endswith(GZIP_SUFFIXES):
        return cast(TextIO, gzip_.open(path, mode + "t", encoding="utf-8"))
    return cast(TextIO, open(path, mode, encoding="utf-8"))


def read_jsonlines(path: str) -> Iterator[T]:
    """Values of a JSON Lines file, gzipped if the name ends in .gz."""
    with JsonLinesIO[T](_open_text(path)) as reader:
        yield from reader


def write_jsonlines(path: str, objects: Iterable[T]) -> None:
    """Write values as JSON Lines, gzipped if the name ends in .gz."""
    with JsonLinesIO[T](_open_text(path, "w")) as writer:
        for obj in objects:
            writer.write(obj)


def gzip(path: str, delete: bool = True, chunk_size: int = 1 << 16) -> str:
    """Compress `path` to `<path>.gz` and return the new path.

    The gzip header carries no file name or timestamp, so equal inputs give equal
    bytes.
    """
    target = f"{path}.gz"
    with open(path, "rb") as source, open(target, "wb") as raw:
        with gzip_.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as packed:
            for chunk in iter(lambda: source.read(chunk_size), b""):
                packed.write(chunk)
    if delete:
        os.remove(path)
    return target


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    handle, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as file:
            file.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def dumps_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, indent 2, trailing newline."""
    return dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json_atomic(path: str, obj: Any) -> None:
    """Write `dumps_json(obj)` to a temporary file, then move it over `path`."""
    _write_atomic(path, dumps_json(obj))


def read_json(path: str) -> Any:
    """Read a JSON file (arrays restored)."""
    with open(path, encoding="utf-8") as file:
        return loads(file.read())


@dataclasses.dataclass(frozen=True)
class Mesh:
    """Triangle mesh: vertices (V, 3) and 0-based faces (F, 3)."""

    vertices: Any
    faces: Any


def grid_faces(rows: int, cols: int) -> Any:
    """0-based triangles of a rows x cols grid, quads split along (i, j)-(i+1, j+1)."""
    index = np.arange(rows * cols).reshape(rows, cols)
    a, b = index[:-1, :-1].ravel(), index[1:, :-1].ravel()
    c, d = index[:-1, 1:].ravel(), index[1:, 1:].ravel()
    return np.stack([np.stack([a, b, d], -1), np.stack([a, d, c], -1)], 1).reshape(
        -1, 3
    )


def export_mesh(points: Any, path: str) -> Mesh:
    """Write a point grid (rows, cols, 3) as an OBJ file, returning the mesh written."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 3 or points.shape[-1] != 3:
        raise ValueError(f"Expected a point grid (rows, cols, 3), got {points.shape}")
    rows, cols, _ = points.shape
    if rows < 2 or cols < 2:
        raise errors.GridTooCoarse(
            f"A mesh needs a 2 x 2 grid at least, got {rows} x {cols}"
        )
    mesh = Mesh(vertices=points.reshape(-1, 3), faces=grid_faces(rows, cols))
    lines = [
        "v " + " ".join(FLOAT_FORMAT % value for value in vertex)
        for vertex in mesh.vertices
    ]
    lines.extend("f " + " ".join(str(k + 1) for k in face) for face in mesh.faces)
    _write_atomic(path, "\n".join(lines) + "\n")
    return mesh


def read_mesh(path: str) -> Mesh:
    """Parse the `v` and `f` lines of an OBJ file."""
    vertices, faces = [], []
    with open(path, encoding="utf-8") as file:
        for line in file:
            fields = line.split()
            if not fields:
                continue
            if fields[0] == "v":
                vertices.append([float(value) for value in fields[1:4]])
            elif fields[0] == "f":
                faces.append([int(value.split("/")[0]) - 1 for value in fields[1:]])
    return Mesh(
        vertices=np.array(vertices, dtype=float).reshape(-1, 3),
        faces=np.array(faces, dtype=int).reshape(-1, 3),
    )


def export_trace(series: Mapping[str, Any], path: str) -> pd.DataFrame:
    """Write equal-length columns as CSV (header row, 17 significant digits)."""
    if not series:
        raise ValueError("A trace needs at least one column")
    columns = {name: np.asarray(values).ravel() for name, values in series.items()}
    lengths = {name: len(values) for name, values in columns.items()}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"Trace columns have different lengths: {lengths}")
    frame = pd.DataFrame(columns)
    _write_atomic(
        path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    )
    return frame


def read_trace(path: str) -> pd.DataFrame:
    """Read a CSV trace back with exact float parsing."""
    return pd.read_csv(path, float_precision="round_trip")
