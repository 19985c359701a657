"""Job runner: named verification checks, exports and the `quadlab` command.

A job is a JSON object; every key is optional:

    {
        "command": "backlund",
        "family": {"kind": "central", "a": [4, -1, 1]},
        "params": {"z": 0.4, "v1_init": 0.3},
        "checks": ["backlund.tangency"],
        "tolerances": {"backlund.tangency": 1e-9},
        "tol": {"sing": 1e-8},
        "seed": 7,
        "exports": {"mesh": "leaf.obj"}
    }

Checks are registered per suite ("<suite>.<name>") and return a maximum residual;
an entry passes when that residual is at most its tolerance. `verify` runs every
suite. Results go to `<out>/report.json` (byte-identical for a fixed job) and the
run log `<out>/run.jsonl.gz`.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid job.
"""

import argparse
import concurrent.futures
import dataclasses
import functools
import json
import logging
import os
import platform
import sys
import threading
import time
import zlib
from typing import (
    Any,
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Type,
    Union,
)

import numpy as np
import pandas as pd
import scipy
import scipy.linalg
import scipy.stats

from . import (
    backlund,
    config,
    errors,
    frames,
    geodesics,
    grids,
    highdim,
    io,
    logger,
    permutability,
    quadric_core,
    rolling,
    roulettes,
    tangency,
)
from ._version import __version__
from .config import DEFAULT, Tolerances

LOG = logging.getLogger(__name__)

Array = Any

SUITES = (
    "family",
    "seed",
    "backlund",
    "bpt",
    "ddq",
    "geodesic",
    "billiard",
    "roulette",
    "tt",
)
COMMANDS = SUITES + ("verify",)
JOB_KEYS = frozenset(
    ["command", "family", "params", "checks", "tolerances", "tol", "seed", "exports"]
)
REPORT_FILE = "report.json"
RUN_LOG_FILE = "run.jsonl"
MAX_SEED = 1 << 64

CENTRAL = {"kind": "central", "a": [4.0, -1.0, 1.0]}
PARABOLOID = {"kind": "paraboloid", "a": [1.0, -1.0]}

# Ranges where tangency partners exist and stay clear of the central pole.
# The weingarten leaf keeps u1 - v1 (central) and the tangency denominator
# (paraboloid) away from zero over the whole seed grid.
RANGES = {
    "central": dict(
        u_range=[1.5, 2.5], v_range=[-0.25, 0.25], v1_range=[0.2, 0.4], v1_init=0.3,
        weingarten_v1=-1.0, weingarten_phi=0.3,
    ),
    "paraboloid": dict(
        u_range=[-0.5, 0.5], v_range=[-0.25, 0.25], v1_range=[0.4, 0.6], v1_init=0.5,
        weingarten_v1=0.5, weingarten_phi=-0.3,
    ),
}

SUITE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "family": dict(
        family=CENTRAL, families=[CENTRAL, PARABOLOID], z=0.4, samples=1000, grid=17
    ),
    "seed": dict(family=CENTRAL, phi=0.3, grid=33),
    "backlund": dict(
        family=CENTRAL, z=0.4, phi=0.3, grid=17, cross_steps=[0.0, 0.02, 0.05, 0.1],
        weingarten_grid=65,
    ),
    # The leaf seed is a small patch around p0 so both leaves keep their partners.
    "bpt": dict(
        family=CENTRAL, z1=0.3, z2=0.6, z3=-0.3, p0=[2.0, 0.0], v1=-1.0, v2=2.0,
        cubes=200, grid=9, u_range=[1.95, 2.05], v_range=[-0.05, 0.05],
        leaf_phi=0.05, leaf_zs=[0.3, 0.6], leaf_v1s=[-1.0, 2.0],
    ),
    # Cross data wander around the first cell so no two cells coincide.
    "ddq": dict(
        family=CENTRAL, size=8, z=0.3, zp=0.6, p00=[2.0, 0.0],
        row=[-1.0, 0.02, -0.97, 0.03, -1.02, -0.01, -0.98, 0.01],
        col=[2.0, -0.02, 2.03, 0.01, 1.97, 0.03, 2.02, -0.01],
    ),
    "geodesic": dict(family=CENTRAL, u=2.0, v=0.0, mix=[1.0, 0.5], T=10.0, h=1e-3),
    "billiard": dict(
        family=CENTRAL, mirror=-2.0, caustic=-1.5, bounces=100,
        start=[0.6 * 6 ** 0.5, 0.0, 0.8 * 3 ** 0.5],
    ),
    "roulette": dict(b=2.0, kepler=[2.0, 3.0, 0.0], kepler_turns=1.5, radius=1.0),
    "tt": dict(
        sigma=float(np.pi / 3), angle=0.6, grid=17, lam=[0.6, 0.8], grid3=9,
        rotation3=[0.4, 0.5, 0.6], sigmas=[0.7, 1.1, 1.9], samples=50,
    ),
}


CheckFn = Callable[["JobContext"], float]


@dataclasses.dataclass(frozen=True)
class Check:
    """A named check: `fn(context)` returns the maximum residual."""

    name: str
    threshold: float
    fn: CheckFn
    optional: bool = False
    requires: Tuple[str, ...] = ()

    @property
    def suite(self) -> str:
        """Suite (= command) the check belongs to."""
        return self.name.split(".", 1)[0]


CHECKS: Dict[str, Check] = {}
MESHES: Dict[str, Callable[["JobContext"], Array]] = {}
TRACES: Dict[str, Callable[["JobContext"], Dict[str, Array]]] = {}


def check(
    name: str, threshold: float, optional: bool = False, requires: Sequence[str] = ()
) -> Callable[[CheckFn], CheckFn]:
    """Register a check.

    Optional checks only run when a job names them; `requires` lists the params
    such a job must provide.
    """

    def register(fn: CheckFn) -> CheckFn:
        if name.split(".", 1)[0] not in SUITES:
            raise ValueError(f"Check {name!r} is not in a known suite")
        CHECKS[name] = Check(name, threshold, fn, optional, tuple(requires))
        return fn

    return register


def suite_checks(suite: str) -> List[str]:
    """Names of the checks a suite runs by default (every suite for "verify")."""
    return [
        name
        for name, entry in CHECKS.items()
        if not entry.optional and (suite == "verify" or entry.suite == suite)
    ]


@dataclasses.dataclass(frozen=True)
class JobSpec:
    """A validated job."""

    command: str
    family: Optional[Dict[str, Any]]
    params: Dict[str, Any]
    checks: Tuple[str, ...]
    thresholds: Dict[str, float]
    tol: Tolerances
    seed: int
    exports: Dict[str, str]

    def threshold(self, name: str) -> float:
        """Acceptance tolerance of a check."""
        return self.thresholds.get(name, CHECKS[name].threshold)

    def to_json(self) -> Dict[str, Any]:
        """The job echoed in the report."""
        return dict(
            command=self.command,
            family=self.family,
            params=self.params,
            checks=list(self.checks),
            tolerances=self.thresholds,
            tol=dataclasses.asdict(self.tol),
            seed=self.seed,
            exports=self.exports,
        )


def _number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise errors.BadSchema(f"{what} must be a number, got {value!r}")
    if not value >= 0:
        raise errors.BadSchema(f"{what} must be non-negative, got {value!r}")
    return float(value)


def _read(job: Union[None, str, Mapping[str, Any]]) -> Dict[str, Any]:
    if job is None:
        return {}
    if isinstance(job, Mapping):
        return dict(job)
    try:
        data = io.read_json(job)
    except (OSError, ValueError) as error:
        raise errors.BadSchema(f"Cannot read job file {job!r}: {error}") from error
    if not isinstance(data, dict):
        raise errors.BadSchema(f"Job {job!r} is not a JSON object")
    return data


def _parse_overrides(
    overrides: Iterable[str],
) -> Tuple[Dict[str, float], Dict[str, float]]:
    tol, thresholds = {}, {}
    names = {field.name for field in dataclasses.fields(Tolerances)}
    for item in overrides:
        name, sep, text = item.partition("=")
        if not sep:
            raise errors.BadSchema(f"Tolerance override {item!r} is not NAME=VALUE")
        try:
            value = float(text)
        except ValueError:
            message = f"Tolerance override {item!r} is not a number"
            raise errors.BadSchema(message) from None
        if name in names:
            tol[name] = _number(value, f"Tolerance {name}")
        elif name in CHECKS:
            thresholds[name] = _number(value, f"Tolerance of {name}")
        else:
            raise errors.BadSchema(f"Unknown tolerance or check {name!r}")
    return tol, thresholds


def load_job(
    job: Union[None, str, Mapping[str, Any]],
    command: Optional[str] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> JobSpec:
    """Validate a job (file path, mapping or None for defaults); raises BadSchema.

    `command`, `overrides` ("name=value", a `Tolerances` field or a check name) and
    `seed` come from the command line and take precedence over the job.
    """
    data = _read(job)
    unknown = sorted(set(data) - JOB_KEYS)
    if unknown:
        raise errors.BadSchema(f"Unknown job keys {unknown}")
    name = data.get("command", command)
    if command is not None and name != command:
        raise errors.BadSchema(f"Job is for {name!r}, not {command!r}")
    if name not in COMMANDS:
        raise errors.BadSchema(f"Unknown command {name!r}, expected one of {COMMANDS}")

    family = data.get("family")
    if family is not None:
        try:
            quadric_core.family_from_json(family)
        except (KeyError, TypeError, errors.InputError, ValueError) as error:
            raise errors.BadSchema(f"Invalid family {family!r}: {error}") from error

    params = data.get("params", {})
    if not isinstance(params, dict):
        raise errors.BadSchema("params must be a JSON object")

    checks = data.get("checks")
    if checks is None:
        checks = suite_checks(name)
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        raise errors.BadSchema("checks must be a list of check names")
    for check_name in checks:
        if check_name not in CHECKS:
            raise errors.BadSchema(f"Unknown check {check_name!r}")
        entry = CHECKS[check_name]
        if name != "verify" and entry.suite != name:
            raise errors.BadSchema(f"Check {check_name!r} is not in suite {name!r}")
        missing = [key for key in entry.requires if key not in params]
        if missing:
            raise errors.BadSchema(f"Check {check_name!r} needs params {missing}")

    thresholds = data.get("tolerances", {})
    if not isinstance(thresholds, dict):
        raise errors.BadSchema("tolerances must be a JSON object")
    for check_name, value in thresholds.items():
        if check_name not in CHECKS:
            raise errors.BadSchema(f"Tolerance for unknown check {check_name!r}")
        _number(value, f"Tolerance of {check_name}")
    thresholds = {key: float(value) for key, value in thresholds.items()}

    tol_data = data.get("tol", {})
    if not isinstance(tol_data, dict):
        raise errors.BadSchema("tol must be a JSON object")
    tol_overrides, threshold_overrides = _parse_overrides(overrides)
    try:
        tol = DEFAULT.replace(**{**tol_data, **tol_overrides})
    except (TypeError, ValueError) as error:
        raise errors.BadSchema(str(error)) from error
    thresholds.update(threshold_overrides)

    seed = data.get("seed", 0) if seed is None else seed
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < MAX_SEED:
        raise errors.BadSchema(f"seed must be an integer in [0, 2^64), got {seed!r}")

    exports = data.get("exports", {})
    if not isinstance(exports, dict):
        raise errors.BadSchema("exports must be a JSON object")
    for kind, path in exports.items():
        table = dict(mesh=MESHES, trace=TRACES).get(kind)
        if table is None or not isinstance(path, str):
            raise errors.BadSchema(f"Invalid export {kind!r}: {path!r}")
        if name not in table:
            raise errors.BadSchema(f"Command {name!r} has no {kind} export")

    return JobSpec(
        command=name,
        family=family,
        params=params,
        checks=tuple(checks),
        thresholds=thresholds,
        tol=tol,
        seed=seed,
        exports=dict(exports),
    )


class JobContext:
    """What a check sees of its job: the family, params, tolerances and RNG.

    Expensive shared objects (seeds, leaves, fields) are built once via `memo`.
    """

    def __init__(self, spec: JobSpec, suite: str):
        self.spec = spec
        self.suite = suite
        self.tol = spec.tol
        self._memo: Dict[Any, Any] = {}
        self._lock = threading.RLock()

    @property
    def family(self) -> quadric_core.ConfocalFamily:
        """The job's family, or the suite's default."""
        data = self.spec.family or SUITE_DEFAULTS[self.suite]["family"]
        return quadric_core.family_from_json(data)

    def each_family(self) -> List["JobContext"]:
        """Contexts for the families a suite sweeps: the job's own family, else the
        `families` param when the suite has one."""
        if self.spec.family is not None or "families" not in SUITE_DEFAULTS[self.suite]:
            return [self]

        def build() -> List["JobContext"]:
            return [
                JobContext(dataclasses.replace(self.spec, family=data), self.suite)
                for data in self.param("families")
            ]

        return self.memo("families", build)

    def param(self, name: str) -> Any:
        """Job param, falling back on the suite and family-range defaults."""
        if name in self.spec.params:
            return self.spec.params[name]
        if name in SUITE_DEFAULTS[self.suite]:
            return SUITE_DEFAULTS[self.suite][name]
        return RANGES[self.family.kind][name]

    def rng(self, name: str) -> np.random.Generator:
        """Generator seeded by the job seed and the check name."""
        return np.random.default_rng([self.spec.seed, zlib.crc32(name.encode())])

    def memo(self, key: Any, build: Callable[[], Any]) -> Any:
        """`build()` once per key."""
        with self._lock:
            if key not in self._memo:
                self._memo[key] = build()
            return self._memo[key]


def _order_shortfall(coarse: float, fine: float, expected: float = 1.8) -> float:
    """How far the observed convergence order falls below `expected` (0 if exact)."""
    if fine <= 1e-11:
        return 0.0
    return max(0.0, expected - grids.convergence_order(coarse, fine))


def _ratio_shortfall(
    coarse: float, fine: float, target: float = 4.0, band: float = 0.2
) -> float:
    """Relative distance of the halving ratio coarse/fine outside target * (1 +- band).

    Ratios are only meaningful above round-off, so a fine residual near zero passes.
    """
    if fine <= 1e-11:
        return 0.0
    return max(0.0, abs(coarse / fine / target - 1) - band)


def _axis(bounds: Sequence[float], n: int) -> Array:
    return np.linspace(float(bounds[0]), float(bounds[1]), int(n))


def _refine(n: int) -> int:
    return 2 * int(n) - 1


# ---------------------------------------------------------------------------
# family: Ivory affinity, rigid motions, tangency identities


def _per_family(fn: CheckFn) -> CheckFn:
    """Run a check on each family of `JobContext.each_family`; the worst counts."""

    @functools.wraps(fn)
    def sweep(ctx: JobContext) -> float:
        return max(fn(each) for each in ctx.each_family())

    return sweep


def _tc_samples(ctx: JobContext, name: str) -> List[Tuple[Tuple[float, float], float]]:
    rng = ctx.rng(name)
    count = int(ctx.param("samples"))
    u = rng.uniform(*ctx.param("u_range"), size=count)
    v = rng.uniform(*ctx.param("v_range"), size=count)
    v1 = rng.uniform(*ctx.param("v1_range"), size=count)
    return [((float(a), float(b)), float(c)) for a, b, c in zip(u, v, v1)]


def _partners(
    ctx: JobContext, name: str
) -> List[Tuple[Tuple[float, float], Tuple[float, float]]]:
    family, z = ctx.family, float(ctx.param("z"))
    return [
        (p0, (quadric_core.tc_solve_u1(family, z, p0, v1, ctx.tol), v1))
        for p0, v1 in _tc_samples(ctx, name)
    ]


@check("family.ivory_length", 1e-10)
@_per_family
def _ivory_length(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    rng = ctx.rng("family.ivory_length")
    count = int(ctx.param("samples"))
    params = [
        quadric_core.evaluate(
            family,
            0.0,
            rng.uniform(*ctx.param("u_range"), size=count),
            rng.uniform(*ctx.param("v_range"), size=count),
        )
        for _ in range(2)
    ]
    p, q = params
    ip, iq = quadric_core.ivory_map(family, z, p), quadric_core.ivory_map(family, z, q)
    lhs = np.sum((ip - q) ** 2, axis=-1)
    rhs = np.sum((p - iq) ** 2, axis=-1)
    return float((np.abs(lhs - rhs) / np.maximum(lhs, rhs)).max())


@check("family.rmpia_mapping", 1e-9)
@_per_family
def _rmpia_mapping(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    return max(
        quadric_core.rmpia_residual(
            family, z, p0, p1, quadric_core.rmpia(family, z, p0, p1, tol=ctx.tol)
        )
        for p0, p1 in _partners(ctx, "family.rmpia_mapping")
    )


@check("family.rmpia_det", 1e-10)
@_per_family
def _rmpia_det(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    return max(
        abs(quadric_core.rmpia(family, z, p0, p1, tol=ctx.tol).det() - 1)
        for p0, p1 in _partners(ctx, "family.rmpia_det")
    )


@check("family.gram", 1e-10)
@_per_family
def _gram(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    return max(
        quadric_core.gram_gap(family, z, p0, p1)
        for p0, p1 in _partners(ctx, "family.gram")
    )


@check("family.tc_exchange", 1e-9)
@_per_family
def _tc_exchange(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    return max(
        tangency.exchange_residual(family, z, p0, p1, ctx.tol)
        for p0, p1 in _partners(ctx, "family.tc_exchange")
    )


@check("family.product_identity", 1e-9)
@_per_family
def _product_identity(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    return max(
        tangency.product_identity_residual(tangency.deltas(family, z, p0, p1, ctx.tol))
        for p0, p1 in _partners(ctx, "family.product_identity")
    )


@check("family.projection", 1e-9)
@_per_family
def _projection(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    return max(
        tangency.projection_residual(family, z, p0, v1)
        for p0, v1 in _tc_samples(ctx, "family.projection")
    )


@check("family.integrability", 1e-9)
@_per_family
def _integrability(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    return max(
        tangency.integrability_residual(family, z, p0, v1)
        for p0, v1 in _tc_samples(ctx, "family.integrability")
    )


@check("family.du1_partials", 1e-6)
@_per_family
def _du1_partials(ctx: JobContext) -> float:
    family, z = ctx.family, float(ctx.param("z"))
    worst = 0.0
    for p0, p1 in _partners(ctx, "family.du1_partials")[:20]:
        predicted = tangency.du1_partials(tangency.deltas(family, z, p0, p1, ctx.tol))
        measured = tangency.du1_fd(family, z, p0, p1[1])
        gap = np.abs(predicted - measured).max() / np.abs(measured).max()
        worst = max(worst, float(gap))
    return worst


@check("family.lame", 1e-10)
@_per_family
def _lame(ctx: JobContext) -> float:
    family = ctx.family
    rng = ctx.rng("family.lame")
    count = int(ctx.param("samples"))
    signs = rng.choice([-1.0, 1.0], (count, 3))
    points = rng.uniform(0.3, 1.5, size=(count, 3)) * signs
    return max(
        quadric_core.lame_residual(
            family, quadric_core.elliptic_coords(family, q, ctx.tol)
        )
        for q in points
    )


@check("family.degenerate", 0.0)
def _degenerate(ctx: JobContext) -> float:
    """Count of degenerate inputs that are not rejected with their own error."""
    cases: List[Tuple[Type[Exception], Callable[..., Any], Tuple[Any, ...]]] = [
        (errors.DegenerateAxes, quadric_core.make_family, ("central", 1, 1, 2)),
        (errors.DegenerateAxes, quadric_core.make_family, ("paraboloid", 1, 1)),
        (errors.InvalidSignature, quadric_core.make_family, ("central", 4, 1, 2)),
    ]
    for each in ctx.each_family():
        family = each.family
        for p0, _ in _tc_samples(each, "family.degenerate")[:20]:
            # On x_0 the ruling v1 = v0 lies in its own tangent plane
            args = (family, 0.0, p0, p0[1], each.tol)
            cases.append((errors.DegenerateHomography, quadric_core.tc_solve_u1, args))
            if family.is_central:
                args = (family, 0.0, p0[0], p0[0], each.tol)
                cases.append((errors.SingularRuling, quadric_core.evaluate, args))
    missed = 0
    for expected, fn, args in cases:
        try:
            fn(*args)
        except expected:
            continue
        LOG.warning("%s%r did not raise %s", fn.__name__, args, expected.__name__)
        missed += 1
    return float(missed)


def _family_mesh(ctx: JobContext) -> Array:
    n = int(ctx.param("grid"))
    uu, vv = np.meshgrid(
        _axis(ctx.param("u_range"), n), _axis(ctx.param("v_range"), n), indexing="ij"
    )
    return quadric_core.evaluate(ctx.family, float(ctx.param("z")), uu, vv, ctx.tol)


MESHES["family"] = _family_mesh


# ---------------------------------------------------------------------------
# seed: ruled seeds and their rolling


def _ruled_seed(ctx: JobContext, n: int, phi: Optional[float] = None) -> rolling.Seed:
    phi = float(ctx.param("phi")) if phi is None else phi

    def build() -> rolling.Seed:
        return rolling.ruled_seed(
            ctx.family,
            phi,
            _axis(ctx.param("u_range"), n),
            _axis(ctx.param("v_range"), n),
            tol=ctx.tol,
        )

    return ctx.memo(("seed", n, phi), build)


def _seed_order(ctx: JobContext, residual: Callable[[rolling.Seed], float]) -> float:
    n = int(ctx.param("grid"))
    coarse = residual(_ruled_seed(ctx, n))
    fine = residual(_ruled_seed(ctx, _refine(n)))
    return _order_shortfall(coarse, fine)


@check("seed.metric_order", 0.0)
def _seed_metric(ctx: JobContext) -> float:
    return _seed_order(ctx, rolling.metric_residual)


@check("seed.rolling_order", 0.0)
def _seed_rolling(ctx: JobContext) -> float:
    return _seed_order(ctx, rolling.rolling_residual)


@check("seed.flatness_order", 0.0)
def _seed_flatness(ctx: JobContext) -> float:
    n = int(ctx.param("grid"))
    coarse, fine = (
        rolling.flatness_field(_ruled_seed(ctx, size)) for size in (n, _refine(n))
    )
    return _ratio_shortfall(*grids.shared_maxima(coarse, fine, width=2))


@check("seed.axis", 1e-5)
def _seed_axis(ctx: JobContext) -> float:
    return rolling.axis_residual(_ruled_seed(ctx, _refine(int(ctx.param("grid")))))


MESHES["seed"] = lambda ctx: _ruled_seed(ctx, int(ctx.param("grid"))).x


# ---------------------------------------------------------------------------
# backlund: leaves of a ruled seed


def _leaf(
    ctx: JobContext,
    n: int,
    v1_init: Optional[float] = None,
    phi: Optional[float] = None,
) -> backlund.Leaf:
    v1_init = float(ctx.param("v1_init")) if v1_init is None else v1_init
    seed = _ruled_seed(ctx, n, phi)
    z = float(ctx.param("z"))
    return ctx.memo(
        ("leaf", n, v1_init, phi),
        lambda: backlund.leaf_integrate(seed, z, v1_init, tol=ctx.tol),
    )


@check("backlund.closure", 1e-6)
def _backlund_closure(ctx: JobContext) -> float:
    seed = _ruled_seed(ctx, int(ctx.param("grid")))
    return backlund.closure_gap(
        seed, float(ctx.param("z")), float(ctx.param("v1_init")), ctx.tol
    )


@check("backlund.tangency", 1e-9)
def _backlund_tangency(ctx: JobContext) -> float:
    return backlund.tangency_residual(_leaf(ctx, int(ctx.param("grid"))))


@check("backlund.acpia_order", 0.0)
def _backlund_acpia(ctx: JobContext) -> float:
    n = int(ctx.param("grid"))
    coarse = backlund.acpia_check(_leaf(ctx, n))
    fine = backlund.acpia_check(_leaf(ctx, _refine(n)))
    return _order_shortfall(coarse, fine)


@check("backlund.cross_ratio", 1e-6)
def _backlund_cross_ratio(ctx: JobContext) -> float:
    n = int(ctx.param("grid"))
    start = float(ctx.param("v1_init"))
    fields = [_leaf(ctx, n, start + step).v1 for step in ctx.param("cross_steps")]
    ratio = backlund.cross_ratio(*fields)
    return float(np.std(ratio) / abs(np.mean(ratio)))


@check("backlund.ruling_leaf", 1e-12)
def _backlund_ruling_leaf(ctx: JobContext) -> float:
    start = float(ctx.param("v1_init"))
    leaf = _leaf(ctx, int(ctx.param("grid")), start, phi=0.0)
    return float(np.abs(leaf.v1 - start).max())


@check("backlund.weingarten", 1e-4)
def _backlund_weingarten(ctx: JobContext) -> float:
    leaf = _leaf(
        ctx,
        int(ctx.param("weingarten_grid")),
        float(ctx.param("weingarten_v1")),
        phi=float(ctx.param("weingarten_phi")),
    )
    report = backlund.weingarten_check(leaf.seed, leaf)
    if report.criterion is None:
        return report.closed_form
    return max(report.closed_form, report.criterion)


MESHES["backlund"] = lambda ctx: _leaf(ctx, int(ctx.param("grid"))).x1


# ---------------------------------------------------------------------------
# bpt: Bianchi quadrilaterals and the Mobius cube


def _edge(ctx: JobContext, z_key: str, v_key: str) -> Tuple[float, float]:
    p0 = tuple(ctx.param("p0"))
    v = float(ctx.param(v_key))
    return (
        quadric_core.tc_solve_u1(ctx.family, float(ctx.param(z_key)), p0, v, ctx.tol),
        v,
    )


def _quad(ctx: JobContext) -> permutability.BianchiQuad:
    def build() -> permutability.BianchiQuad:
        return permutability.BianchiQuad.close(
            ctx.family,
            float(ctx.param("z1")),
            float(ctx.param("z2")),
            tuple(ctx.param("p0")),
            _edge(ctx, "z1", "v1"),
            _edge(ctx, "z2", "v2"),
            tol=ctx.tol,
        )

    return ctx.memo("quad", build)


@check("bpt.tangency", 1e-9)
def _bpt_tangency(ctx: JobContext) -> float:
    return float(_quad(ctx).tangency_residuals().max())


@check("bpt.ruling_ratio", 1e-8)
def _bpt_ruling_ratio(ctx: JobContext) -> float:
    quad = _quad(ctx)
    return abs(quad.ruling_ratio() - quad.z1 / quad.z2)


@check("bpt.cross_ratio", 1e-8)
def _bpt_cross_ratio(ctx: JobContext) -> float:
    quad = _quad(ctx)
    return abs(quad.cross_ratio() - quad.z1 / quad.z2)


@check("bpt.cocycle", 1e-8)
def _bpt_cocycle(ctx: JobContext) -> float:
    return _quad(ctx).cocycle_residual()


@check("bpt.cad", 1e-8)
def _bpt_cad(ctx: JobContext) -> float:
    return _quad(ctx).cad_gap()


def _cube(ctx: JobContext) -> permutability.Mobius3:
    def build() -> permutability.Mobius3:
        return permutability.mobius3(
            ctx.family,
            float(ctx.param("z1")),
            float(ctx.param("z2")),
            float(ctx.param("z3")),
            tuple(ctx.param("p0")),
            float(ctx.param("v1")),
            float(ctx.param("v2")),
            float(ctx.param("v4")),
            tol=ctx.tol,
        )

    return ctx.memo("cube", build)


def _cubes(ctx: JobContext) -> List[permutability.Mobius3]:
    def build() -> List[permutability.Mobius3]:
        seed = int(ctx.rng("bpt.cubes").integers(2 ** 32))
        return permutability.mobius_samples(
            ctx.family,
            [float(ctx.param(key)) for key in ("z1", "z2", "z3")],
            int(ctx.param("cubes")),
            seed=seed,
            tol=ctx.tol,
        )

    return ctx.memo("cubes", build)


@check("bpt.mobius_path", 1e-8)
def _bpt_mobius_path(ctx: JobContext) -> float:
    return max(cube.path_gap for cube in _cubes(ctx))


@check("bpt.menelaus", 1e-9)
def _bpt_menelaus(ctx: JobContext) -> float:
    return max(abs(cube.menelaus - 1) for cube in _cubes(ctx))


@check("bpt.cube", 1e-8, optional=True, requires=("v4",))
def _bpt_cube(ctx: JobContext) -> float:
    cube = _cube(ctx)
    return max(cube.path_gap, abs(cube.menelaus - 1))


def _bianchi_leaf(ctx: JobContext) -> permutability.BianchiLeaf:
    def build() -> permutability.BianchiLeaf:
        n = int(ctx.param("grid"))
        seed = _ruled_seed(ctx, n, float(ctx.param("leaf_phi")))
        leaves = [
            backlund.inversion_rolling(
                seed, backlund.leaf_integrate(seed, z, v1, tol=ctx.tol), ctx.tol
            )
            for z, v1 in zip(ctx.param("leaf_zs"), ctx.param("leaf_v1s"))
        ]
        return permutability.bpt_apply(seed, leaves[0], leaves[1], ctx.tol)

    return ctx.memo("bianchi_leaf", build)


@check("bpt.two_way", 1e-6)
def _bpt_two_way(ctx: JobContext) -> float:
    return _bianchi_leaf(ctx).two_way_gap


@check("bpt.commutativity", 1e-6)
def _bpt_commutativity(ctx: JobContext) -> float:
    leaf = _bianchi_leaf(ctx)
    return permutability.commutativity_gap(leaf.seed, leaf.leaf1, leaf.leaf2, ctx.tol)


@check("bpt.leaf_cocycle", 1e-8)
def _bpt_leaf_cocycle(ctx: JobContext) -> float:
    return _bianchi_leaf(ctx).cocycle_residual()


# ---------------------------------------------------------------------------
# ddq: discrete deformations


def _lattice(ctx: JobContext) -> permutability.DDQLattice:
    def build() -> permutability.DDQLattice:
        size = int(ctx.param("size"))
        row, col = ctx.param("row"), ctx.param("col")
        return permutability.ddq_build(
            ctx.family,
            [float(ctx.param("z"))] * size,
            [float(ctx.param("zp"))] * size,
            tuple(ctx.param("p00")),
            [float(row[j % len(row)]) for j in range(size)],
            [float(col[k % len(col)]) for k in range(size)],
            ctx.tol,
        )

    return ctx.memo("lattice", build)


@check("ddq.planarity", 1e-9)
def _ddq_planarity(ctx: JobContext) -> float:
    return float(_lattice(ctx).planarity_residuals().max())


@check("ddq.curvature", 1e-8)
def _ddq_curvature(ctx: JobContext) -> float:
    return float(_lattice(ctx).curvature_residuals().max())


@check("ddq.gauss", 1e-9)
def _ddq_gauss(ctx: JobContext) -> float:
    lattice = _lattice(ctx)
    facets = lattice.facet_products()
    return float(
        (np.abs(lattice.gauss_triple_products() - facets) / np.abs(facets)).max()
    )


@check("ddq.tangency", 1e-9)
def _ddq_tangency(ctx: JobContext) -> float:
    return _lattice(ctx).tangency_residual()


@check("ddq.cocycle", 1e-9)
def _ddq_cocycle(ctx: JobContext) -> float:
    return float(_lattice(ctx).conflicts.max())


MESHES["ddq"] = lambda ctx: _lattice(ctx).points


# ---------------------------------------------------------------------------
# geodesic and billiard


def _trajectory(ctx: JobContext) -> geodesics.Trajectory:
    def build() -> geodesics.Trajectory:
        family = ctx.family
        u, v = float(ctx.param("u")), float(ctx.param("v"))
        w, w_tilde = quadric_core.ruling_directions(family, 0.0, u, v)
        mix = ctx.param("mix")
        direction = quadric_core.unit(mix[0] * w + mix[1] * w_tilde)
        x0 = quadric_core.evaluate(family, 0.0, u, v, ctx.tol)
        return geodesics.geodesic_integrate(
            family, x0, direction, float(ctx.param("T")), float(ctx.param("h")), ctx.tol
        )

    return ctx.memo("trajectory", build)


def _caustic(ctx: JobContext) -> geodesics.CausticSeries:
    return ctx.memo(
        "caustic", lambda: geodesics.jacobi_caustic(_trajectory(ctx), ctx.tol)
    )


@check("geodesic.caustic_drift", 1e-6)
def _geodesic_drift(ctx: JobContext) -> float:
    return _caustic(ctx).drift


@check("geodesic.liouville", 1e-9)
def _geodesic_liouville(ctx: JobContext) -> float:
    trajectory, caustic = _trajectory(ctx), _caustic(ctx)
    index = int(np.argmin(caustic.degenerate))
    value = geodesics.liouville_caustic(
        ctx.family, trajectory.x[index], trajectory.velocity[index], ctx.tol
    )
    return abs(value - caustic.values[index]) / abs(caustic.values[index])


@check("geodesic.surface", 1e-10)
def _geodesic_surface(ctx: JobContext) -> float:
    return _trajectory(ctx).surface_residual()


@check("geodesic.speed", 1e-6)
def _geodesic_speed(ctx: JobContext) -> float:
    return _trajectory(ctx).speed_drift()


def _geodesic_trace(ctx: JobContext) -> Dict[str, Array]:
    trajectory = _trajectory(ctx)
    return dict(
        t=trajectory.times,
        x=trajectory.x[:, 0],
        y=trajectory.x[:, 1],
        z=trajectory.x[:, 2],
        caustic=_caustic(ctx).values,
    )


TRACES["geodesic"] = _geodesic_trace


def _billiard(ctx: JobContext) -> geodesics.BilliardRun:
    return ctx.memo(
        "billiard",
        lambda: geodesics.billiard_run(
            ctx.family,
            float(ctx.param("mirror")),
            np.asarray(ctx.param("start"), dtype=float),
            int(ctx.param("bounces")),
            caustic=float(ctx.param("caustic")),
            tol=ctx.tol,
        ),
    )


@check("billiard.tangency", 1e-6)
def _billiard_tangency(ctx: JobContext) -> float:
    return _billiard(ctx).tangency_residual(float(ctx.param("caustic")))


@check("billiard.chasles", 1e-8)
def _billiard_chasles(ctx: JobContext) -> float:
    return _billiard(ctx).chasles_residual()


def _billiard_trace(ctx: JobContext) -> Dict[str, Array]:
    run = _billiard(ctx)
    return dict(
        bounce=np.arange(len(run.points)),
        x=run.points[:, 0],
        y=run.points[:, 1],
        z=run.points[:, 2],
    )


TRACES["billiard"] = _billiard_trace


# ---------------------------------------------------------------------------
# roulette


def _kepler(ctx: JobContext) -> roulettes.KeplerRoll:
    return ctx.memo("kepler", lambda: roulettes.kepler_roll(*ctx.param("kepler")))


@check("roulette.catenary", 1e-10)
def _roulette_catenary(ctx: JobContext) -> float:
    return roulettes.catenary_deviation(roulettes.parabola_catenary())


@check("roulette.delaunay", 1e-5)
def _roulette_delaunay(ctx: JobContext) -> float:
    b = float(ctx.param("b"))
    mean = roulettes.ellipse_delaunay(b).revolution_mean_curvature()
    return float(np.abs(grids.interior(mean + 1 / b, 2, ndim=1)).max())


@check("roulette.kepler_period", 1e-6)
def _roulette_kepler_period(ctx: JobContext) -> float:
    a, b, z = (float(value) for value in ctx.param("kepler"))
    turns = float(ctx.param("kepler_turns"))
    span = (0.0, 2 * np.pi * turns * np.sqrt(a - z))
    roll = roulettes.kepler_roll(a, b, z, span, n=int(4096 * turns) + 1)
    return abs(roll.measured_period() - roll.period) / roll.period


@check("roulette.kepler_areal", 1e-8)
def _roulette_kepler_areal(ctx: JobContext) -> float:
    return _kepler(ctx).areal_gap()


@check("roulette.kepler_energy", 1e-7)
def _roulette_kepler_energy(ctx: JobContext) -> float:
    return _kepler(ctx).energy_drift()


@check("roulette.wheel_road", 1e-8)
def _roulette_wheel_road(ctx: JobContext) -> float:
    return float(np.abs(roulettes.wheel_road_demo().trace[:, 1]).max())


@check("roulette.cycloid", 1e-10)
def _roulette_cycloid(ctx: JobContext) -> float:
    roll = roulettes.circle_on_line(float(ctx.param("radius")))
    return roll.deviation(roll.series["cycloid"])


def _kepler_trace(ctx: JobContext) -> Dict[str, Array]:
    roll = _kepler(ctx)
    return dict(
        s=roll.s,
        t=roll.t,
        theta=roll.theta,
        G=np.linalg.norm(roll.G, axis=-1),
        energy=roll.energy(),
    )


TRACES["roulette"] = _kepler_trace


# ---------------------------------------------------------------------------
# tt: higher-dimensional transformation


def _tt_seed(ctx: JobContext, n: int) -> highdim.OrthoField:
    axes = [_axis((0.7, 1.3), n), _axis((-0.3, 0.3), n)]
    return ctx.memo(("tt_seed", n), lambda: highdim.pseudosphere_field(2, None, axes))


def _tt_field(ctx: JobContext, n: int) -> highdim.OrthoField:
    seed = _tt_seed(ctx, n)
    sigma = float(ctx.param("sigma"))
    start = frames.rotation_2d(float(ctx.param("angle")))
    return ctx.memo(
        ("tt_field", n), lambda: highdim.tt_backlund(seed, sigma, start, tol=ctx.tol)
    )


def _tt_order(ctx: JobContext, residual: Callable[[int], float]) -> float:
    n = int(ctx.param("grid"))
    return _order_shortfall(residual(n), residual(_refine(n)))


@check("tt.orthogonality", 1e-8)
def _tt_orthogonality(ctx: JobContext) -> float:
    return _tt_field(ctx, int(ctx.param("grid"))).orthogonality_error()


@check("tt.gsge_order", 0.0)
def _tt_gsge(ctx: JobContext) -> float:
    n = int(ctx.param("grid"))
    coarse, fine = (highdim.gsge_residual(_tt_field(ctx, k)) for k in (n, _refine(n)))
    return _order_shortfall(
        *grids.shared_maxima(coarse.per_node, fine.per_node, width=coarse.width)
    )


@check("tt.ricatti_order", 0.0)
def _tt_ricatti(ctx: JobContext) -> float:
    sigma = float(ctx.param("sigma"))
    return _tt_order(
        ctx,
        lambda n: highdim.ricatti_residual(_tt_seed(ctx, n), _tt_field(ctx, n), sigma),
    )


@check("tt.invariants", 1e-8)
def _tt_invariants(ctx: JobContext) -> float:
    field = _tt_field(ctx, int(ctx.param("grid")))
    return max(highdim.curvature_line_invariants(field))


@check("tt.isoclinic", 1e-8)
def _tt_isoclinic(ctx: JobContext) -> float:
    n, sigma = int(ctx.param("grid")), float(ctx.param("sigma"))
    seed = _tt_seed(ctx, n)
    immersion = highdim.tt_immersion(_tt_field(ctx, n), seed, sigma)
    assert seed.frame is not None
    return float(np.abs(highdim.isoclinic_angles(seed.frame, immersion) - sigma).max())


@check("tt.curvature_order", 0.0)
def _tt_curvature(ctx: JobContext) -> float:
    sigma = float(ctx.param("sigma"))

    def gap(n: int) -> float:
        field = _tt_field(ctx, n)
        immersion = highdim.tt_immersion(field, _tt_seed(ctx, n), sigma)
        return float(np.abs(highdim.surface_curvature(immersion, field) + 1).max())

    return _tt_order(ctx, gap)


def _tt_field3(ctx: JobContext) -> Tuple[highdim.OrthoField, highdim.OrthoField]:
    def build() -> Tuple[highdim.OrthoField, highdim.OrthoField]:
        n = int(ctx.param("grid3"))
        axes = [_axis((0.8, 1.2), n), _axis((-0.2, 0.2), n), _axis((-0.2, 0.2), n)]
        seed = highdim.pseudosphere_field(3, ctx.param("lam"), axes)
        start = scipy.linalg.expm(frames.hat(np.asarray(ctx.param("rotation3"))))
        field = highdim.tt_backlund(seed, float(ctx.param("sigma")), start, tol=ctx.tol)
        return seed, field

    return ctx.memo("tt_field3", build)


@check("tt.orthogonality_3d", 1e-8)
def _tt_orthogonality3(ctx: JobContext) -> float:
    _, field = _tt_field3(ctx)
    return max(field.orthogonality_error(), *highdim.curvature_line_invariants(field))


@check("tt.clifford", 1e-8)
def _tt_clifford(ctx: JobContext) -> float:
    seed, _ = _tt_field3(ctx)
    return float(np.abs(highdim.clifford_slice_curvature(seed)).max())


def _orthogonal(rng: np.random.Generator, n: int) -> Array:
    return scipy.stats.ortho_group.rvs(dim=n, random_state=rng)


@check("tt.permutability", 1e-8)
def _tt_permutability(ctx: JobContext) -> float:
    rng = ctx.rng("tt.permutability")
    s1, s2, _ = ctx.param("sigmas")
    worst = 0.0
    for _ in range(int(ctx.param("samples"))):
        a0, a1, a2 = (_orthogonal(rng, 3) for _ in range(3))
        a3 = highdim.tt_permutability(a0, a1, a2, s1, s2, ctx.tol)
        worst = max(worst, frames.orthogonality_error(a3))
    return worst


@check("tt.mobius", 1e-6)
def _tt_mobius(ctx: JobContext) -> float:
    rng = ctx.rng("tt.mobius")
    s1, s2, s3 = (float(s) for s in ctx.param("sigmas"))
    worst = 0.0
    for _ in range(int(ctx.param("samples"))):
        a0, a1, a2, a4 = (_orthogonal(rng, 3) for _ in range(4))
        a3, a5, a6 = highdim.mobius_faces(a0, a1, a2, a4, (s1, s2, s3), ctx.tol)
        cube = highdim.tt_mobius3(
            [a0, a1, a2, a3, a4, a5, a6], (s1, s2, s3), ctx.tol
        )
        worst = max(worst, cube.agreement_gap())
    return worst


def _tt_mesh(ctx: JobContext) -> Array:
    n, sigma = int(ctx.param("grid")), float(ctx.param("sigma"))
    return highdim.tt_immersion(_tt_field(ctx, n), _tt_seed(ctx, n), sigma).x


MESHES["tt"] = _tt_mesh


# ---------------------------------------------------------------------------
# Running jobs


def _evaluate(ctx: JobContext, name: str) -> Dict[str, Any]:
    tolerance = ctx.spec.threshold(name)
    entry: Dict[str, Any] = dict(name=name, tolerance=tolerance)
    try:
        value = float(CHECKS[name].fn(ctx))
    except errors.QuadlabError as error:
        LOG.warning("Check %s raised %s: %s", name, type(error).__name__, error)
        entry.update(max_residual=None, error=f"{type(error).__name__}: {error}")
        entry["pass"] = False
        return entry
    finite = bool(np.isfinite(value))
    entry.update(max_residual=value if finite else None)
    entry["pass"] = finite and value <= tolerance
    return entry


def environment() -> Dict[str, str]:
    """Versions echoed in reports."""
    return dict(
        quadlab=__version__,
        python=platform.python_version(),
        numpy=np.__version__,
        scipy=scipy.__version__,
        pandas=pd.__version__,
    )


def execute(spec: JobSpec, out: str) -> Dict[str, Any]:
    """Run a validated job, writing the report, run log and exports under `out`.

    Checks run on up to QDEF_THREADS threads; the report lists them in job order.
    """
    os.makedirs(out, exist_ok=True)
    contexts: Dict[str, JobContext] = {}

    def context(name: str) -> JobContext:
        suite = CHECKS[name].suite if spec.command == "verify" else spec.command
        if suite not in contexts:
            contexts[suite] = JobContext(spec, suite)
        return contexts[suite]

    for name in spec.checks:
        context(name)

    def timed(name: str) -> Tuple[Dict[str, Any], float]:
        start = time.perf_counter()
        entry = _evaluate(context(name), name)
        return entry, time.perf_counter() - start

    with logger.open(
        os.path.join(out, RUN_LOG_FILE),
        command=spec.command,
        seed=spec.seed,
        version=__version__,
        checks=len(spec.checks),
    ) as log:
        workers = config.threads()
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(timed, spec.checks))
        for entry, seconds in results:
            log.check(entry, seconds)
        entries = [entry for entry, _ in results]
        for kind, filename in sorted(spec.exports.items()):
            ctx = contexts.setdefault(spec.command, JobContext(spec, spec.command))
            path = os.path.join(out, filename)
            with log.export(kind, filename) as line:
                if kind == "mesh":
                    mesh = io.export_mesh(MESHES[spec.command](ctx), path)
                    line.set(vertices=len(mesh.vertices), faces=len(mesh.faces))
                else:
                    frame = io.export_trace(TRACES[spec.command](ctx), path)
                    line.set(rows=len(frame), columns=list(frame.columns))
        report = dict(
            job=spec.to_json(),
            checks=entries,
            environment=environment(),
        )
        report["pass"] = all(entry["pass"] for entry in entries)
        io.write_json_atomic(os.path.join(out, REPORT_FILE), report)
        log.summary(entries)
    return report


def run_job(
    job: Union[None, str, Mapping[str, Any]],
    out: str,
    command: Optional[str] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
) -> Tuple[int, Optional[Dict[str, Any]]]:
    """Validate and run a job: (exit code, report). No report for an invalid job."""
    try:
        spec = load_job(job, command, overrides, seed)
    except errors.BadSchema as error:
        LOG.error("Invalid job: %s", error)
        return 2, None
    report = execute(spec, out)
    try:
        require_pass(report)
    except errors.CheckFailure as error:
        LOG.error("%s", error)
        return 1, report
    return 0, report


def require_pass(report: Dict[str, Any]) -> None:
    """Raise CheckFailure unless every check of the report passed."""
    failed = [entry["name"] for entry in report["checks"] if not entry["pass"]]
    if failed:
        raise errors.CheckFailure(f"Checks failed: {', '.join(failed)}", report)


def build_parser() -> argparse.ArgumentParser:
    """The `quadlab` argument parser."""
    parser = argparse.ArgumentParser(
        prog="quadlab",
        description="Run verification jobs for deformations of quadrics.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Suite to run")
    parser.add_argument("--job", help="JSON job file (suite defaults if omitted)")
    parser.add_argument("--out", default=".", help="Output directory (default: .)")
    parser.add_argument(
        "--tol",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="Override a tolerance field or a check's tolerance. Repeatable.",
    )
    parser.add_argument("--seed", type=int, help="Random seed, 0 <= seed < 2^64")
    parser.add_argument(
        "--list", action="store_true", help="List the command's checks and exit"
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the `quadlab` command; returns the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.list:
        for name in suite_checks(args.command):
            print(f"{name}\t{CHECKS[name].threshold:g}")
        return 0
    code, report = run_job(
        args.job, args.out, command=args.command, overrides=args.tol, seed=args.seed
    )
    if report is not None:
        for entry in report["checks"]:
            status = "ok" if entry["pass"] else "FAIL"
            print(
                f"[{status}] {entry['name']}: {entry['max_residual']}"
                f" <= {entry['tolerance']:g}"
            )
        print(json.dumps(dict(exit=code, checks=len(report["checks"]))))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
