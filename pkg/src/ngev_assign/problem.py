"""Equilibrium problem instance and shared solver plumbing."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .algebra import Model, NgevParams, make_params
from .cost import BprModel
from .errors import ValidationError
from .loading import METHODS, LoadResult, load
from .network import DemandTable, Network


@dataclass
class AssignmentProblem:
    """A network, its demand and the route-choice parameters.

    Parameters default to the given model with scales computed from
    free-flow shortest-path costs; they stay fixed while costs change.
    """

    network: Network
    demand: DemandTable
    model: str = "model3"
    method: str = "mta"
    params: NgevParams = None
    bpr_coefficient: float = 1.0
    bpr: BprModel = field(init=False)
    q_rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown loading method {self.method!r}")
        if self.params is None:
            self.params = make_params(Model.parse(self.model), self.network, self.demand)
        self.bpr = BprModel.from_network(self.network, self.bpr_coefficient)
        self.q_rows = self.params.commodity_demand(self.demand)
        self._mu_cache = None

    @property
    def total_demand(self) -> float:
        return float(self.demand.total)

    def scaled(self, factor: float) -> "AssignmentProblem":
        """Same instance with demand multiplied by ``factor`` (parameters unchanged)."""
        return AssignmentProblem(self.network, self.demand.scaled(factor), self.model, self.method,
                                 self.params, self.bpr_coefficient)

    def load(self, costs, warm: bool = True) -> LoadResult:
        """Flow-independent loading at ``costs``, warm-starting the cost-to-go solve."""
        init = self._mu_cache if warm else None
        res = load(self.network, costs, self.params, self.q_rows, method=self.method, mu_init=init)
        if warm:
            self._mu_cache = res.mu
        return res


def eta(values, reference, floor: float = 1e-9) -> float:
    """Largest relative deviation from ``reference`` over entries above ``floor``."""
    values = np.asarray(values, float)
    reference = np.asarray(reference, float)
    keep = reference >= floor
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(values[keep] - reference[keep]) / reference[keep]))


class Trace:
    """Per-iteration solver log with a fixed column schema."""

    def __init__(self, columns, meta=None):
        self.columns = tuple(columns)
        self.rows: list[tuple] = []
        self.meta = dict(meta or {})
        self.meta.setdefault("started", time.strftime("%Y-%m-%dT%H:%M:%S"))
        self._t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0

    def add(self, **values):
        missing = set(self.columns) - set(values) - {"elapsed_seconds"}
        if missing:
            raise ValidationError(f"trace row missing {sorted(missing)}")
        values.setdefault("elapsed_seconds", self.elapsed())
        self.rows.append(tuple(values[c] for c in self.columns))

    def column(self, name) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, header_comments: bool = True) -> str:
        buf = io.StringIO()
        if header_comments:
            for k, v in self.meta.items():
                buf.write(f"# {k} = {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def first_reach(trace: Trace, column: str, level: float, key: str = "iter") -> float:
    """First ``key`` value at which ``column`` drops to ``level`` or below (inf if never)."""
    vals = trace.column(column)
    hit = np.flatnonzero(vals <= level)
    return float(trace.column(key)[hit[0]]) if hit.size else float("inf")
