"""Run log of a job, written as JSON Lines next to its report.

The log is a sequence of events, each a flat JSON object with a "kind":

    header   command, version, seed, check count; start time and run id
    check    one per check: name, tolerance, max_residual, pass, seconds
    export   one per exported mesh or trace, with its size and seconds
    summary  overall pass and the names of failed checks

For example:

    with logger.open("run.jsonl", command="bpt", seed=7) as log:
        log.check(entry, seconds=0.25)
        with log.export("mesh", path="seed.obj") as line:
            line.set(vertices=289)
        log.summary([entry])

Every event after the header carries "elapsed" seconds since the log opened. The
report never sees these times, only the log does.
"""

import builtins
import contextlib
import datetime
import random
import time
from types import TracebackType
from typing import (
    Any,
    Callable,
    ContextManager,
    Dict,
    Iterable,
    Iterator,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
    Type,
)

from . import io

Event = Dict[str, Any]
# Called once with the header (which it may extend); returns per-event fields
Stamper = Callable[[Optional[Event]], Optional[Callable[[Event], Event]]]
Scope = Callable[[Event], ContextManager[None]]

HEADER, CHECK, EXPORT, SUMMARY = "header", "check", "export", "summary"
NDIGITS = 3


class Writer(Protocol):
    """Sink for events, such as `io.JsonLinesIO`."""

    def write(self, obj: Event) -> None:
        """Write one event."""

    def flush(self) -> None:
        """Push buffered events out."""

    def close(self) -> None:
        """Close the sink."""


@contextlib.contextmanager
def add_duration(event: Event) -> Iterator[None]:
    """[Scope] Wall seconds spent building the event, as "seconds"."""
    start = time.perf_counter()
    yield
    event["seconds"] = round(time.perf_counter() - start, NDIGITS)


def elapsed(header: Optional[Event]) -> Callable[[Event], Event]:
    """[Stamper] "started" (ISO time) in the header, "elapsed" on later events."""
    start = time.perf_counter()
    if header is not None:
        header["started"] = datetime.datetime.now().isoformat(timespec="seconds")
    return lambda event: dict(elapsed=round(time.perf_counter() - start, NDIGITS))


def run_id(header: Optional[Event]) -> None:
    """[Stamper] 64-bit "id" in the header, reproducible from the job seed."""
    if header is not None:
        header["id"] = random.Random(header.get("seed")).getrandbits(64)


STAMPERS: Tuple[Stamper, ...] = (elapsed, run_id)


class PendingEvent:
    """An event being built in a `with` block; written to the log on exit.

    An exception escaping the block is recorded as "error" and "message" and then
    propagates.
    """

    def __init__(self, log: "Log", event: Event, scopes: Iterable[Scope]):
        self.log = log
        self.event = event
        self._scopes = contextlib.ExitStack()
        for scope in scopes:
            self._scopes.enter_context(scope(event))
        self.written = False

    def __enter__(self) -> "PendingEvent":
        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc_value: Optional[BaseException],
        traceback: Optional[TracebackType],
    ) -> None:
        if exc_value is not None:
            self.event.update(error=type(exc_value).__name__, message=str(exc_value))
        self.write()

    def set(self, **fields: Any) -> None:
        """Add or replace fields."""
        if self.written:
            raise ValueError(f"Event {self.event.get('kind')!r} was already written")
        self.event.update(fields)

    def write(self) -> None:
        """Close the scopes and write the event (once)."""
        if self.written:
            raise ValueError(f"Event {self.event.get('kind')!r} written twice")
        self._scopes.close()
        self.log.add(**self.event)
        self.written = True


class Log:
    """Run log over any `Writer`.

    With a `header`, a "header" event is written first. Stampers see the header once
    and may add fields to every event.
    """

    def __init__(
        self,
        writer: Writer,
        header: Optional[Mapping[str, Any]] = None,
        stampers: Iterable[Stamper] = STAMPERS,
    ):
        self.writer = writer
        first = None if header is None else dict(kind=HEADER, **header)
        self._stamps = [
            stamp for stamp in (stamper(first) for stamper in stampers) if stamp
        ]
        if first is not None:
            self.writer.write(first)
            self.writer.flush()

    def __enter__(self) -> "Log":
        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc_value: Optional[BaseException],
        traceback: Optional[TracebackType],
    ) -> None:
        self.close()

    def close(self) -> None:
        """Close the writer."""
        self.writer.close()

    def add(self, kind: str, **fields: Any) -> None:
        """Write one event of `kind` now."""
        event = dict(kind=kind, **fields)
        for stamp in self._stamps:
            event.update(stamp(event))
        self.writer.write(event)
        self.writer.flush()

    def adding(
        self, kind: str, scopes: Sequence[Scope] = (), **fields: Any
    ) -> PendingEvent:
        """Start an event of `kind`, completed with `PendingEvent.set`."""
        return PendingEvent(self, dict(kind=kind, **fields), scopes)

    def check(self, entry: Mapping[str, Any], seconds: Optional[float] = None) -> None:
        """Log a report entry of one check, with its wall time if known."""
        extra = {} if seconds is None else dict(seconds=round(seconds, NDIGITS))
        self.add(CHECK, **entry, **extra)

    def export(self, what: str, path: str) -> PendingEvent:
        """Start an "export" event, timed until the `with` block ends."""
        return self.adding(EXPORT, scopes=(add_duration,), export=what, path=path)

    def summary(self, entries: Sequence[Mapping[str, Any]]) -> None:
        """Log overall pass and the failed check names."""
        failed = [entry["name"] for entry in entries if not entry["pass"]]
        self.add(SUMMARY, failed=failed, **{"pass": not failed})


class JsonLinesFileLog(Log):
    """`Log` to a local `.jsonl` file, kept plain while open so it can be tailed.

    With `gzip_on_close` the file is replaced by `<path>.gz` on close.
    """

    def __init__(
        self,
        path: str,
        header: Optional[Mapping[str, Any]] = None,
        stampers: Iterable[Stamper] = STAMPERS,
        gzip_on_close: bool = True,
    ):
        super().__init__(
            io.JsonLinesIO[Event](builtins.open(path, "w", encoding="utf-8")),
            header=header,
            stampers=stampers,
        )
        self.path = path
        self.gzip_on_close = gzip_on_close

    def close(self) -> None:
        super().close()
        if self.gzip_on_close:
            io.gzip(self.path)


def open(  # pylint:disable=redefined-builtin
    path: str,
    gzip_on_close: bool = True,
    stampers: Iterable[Stamper] = STAMPERS,
    **header: Any,
) -> JsonLinesFileLog:
    """Open a run log at `path`; keyword arguments form the header event.

    Without keyword arguments no header is written.
    """
    reserved = sorted(set(header) & {"kind", "id", "started"})
    if reserved:
        raise ValueError(f"Header fields {reserved} are set by the log itself")
    return JsonLinesFileLog(
        str(path),
        header=header or None,
        stampers=stampers,
        gzip_on_close=gzip_on_close,
    )
