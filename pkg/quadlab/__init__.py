"""A numerical lab for deformations of doubly ruled quadrics.

Quadlab builds confocal families of quadrics, rolls surfaces applicable to them,
integrates Backlund transformations and checks the classical theorems (Ivory,
Bianchi permutability, Jacobi, Chasles) to a stated residual. Every check is a
function returning a maximum residual; the `quadlab` command runs them as jobs.

**Example**

A family is given by its kind and diagonal data. Points on the base quadric x_0
are addressed by ruling parameters (u, v):

>>> import quadlab as Q
>>> family = Q.quadric_core.make_family("paraboloid", 1, -1)
>>> Q.quadric_core.evaluate(family, 0.0, 0.5, 0.5).tolist()
[1.0, 0.0, 0.5]

Its tangency partner on the member z = 0.2 along the ruling v1 = 1:

>>> round(Q.quadric_core.tc_solve_u1(family, 0.2, (0.0, 0.0), 1.0), 6)
-0.05

Jobs run named checks and write `report.json` and `run.jsonl.gz` into a directory:

>>> job = {"command": "bpt", "checks": ["bpt.cross_ratio"]}
>>> code, report = Q.cli.run_job(job, "out")
>>> code, [entry["pass"] for entry in report["checks"]]
(0, [True])
"""

from . import (  # noqa: F401
    backlund,
    cli,
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
from ._version import __version__  # noqa: F401

__pdoc__ = dict(tests=False)
