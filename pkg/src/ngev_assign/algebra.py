"""Path algebra for shortest-path, logit and network-GEV recursions.

All three models solve the same fixed point ``mu = W (x) mu (+) e_d`` under
different semiring operations. The destination is absorbing, so its row of
``W`` is empty and ``mu_d = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .errors import DivergenceError, StructureError, ValidationError
from .network import Network, sp_distance_table

DEFAULT_TOL = 1e-10
DEFAULT_CAP = 10_000
PROB_FLOOR = 1e-303
DENSE_NODE_LIMIT = 64


# --------------------------------------------------------------------------
# Scalar semirings
# --------------------------------------------------------------------------


def _soft_min(x, y, theta):
    if x == math.inf:
        return y
    if y == math.inf:
        return x
    lo, hi = (x, y) if x <= y else (y, x)
    return lo - math.log1p(math.exp(-theta * (hi - lo))) / theta


@dataclass(frozen=True)
class ShortestPath:
    """(min, +) semiring."""

    zero = math.inf
    unit = 0.0

    def oplus(self, x, y, i=None):
        return min(x, y)

    def otimes(self, x, y, i=None):
        return x + y

    def weights(self, network, costs):
        return np.asarray(costs, dtype=float)


@dataclass(frozen=True)
class Logit:
    """Soft-min semiring with a single scale ``theta``."""

    theta: float = 1.0
    zero = math.inf
    unit = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValidationError("logit scale must be positive")

    def oplus(self, x, y, i=None):
        return _soft_min(x, y, self.theta)

    def otimes(self, x, y, i=None):
        return x + y

    def weights(self, network, costs):
        return np.asarray(costs, dtype=float)


@dataclass(frozen=True, eq=False)
class Ngev:
    """Node-specific soft-min semiring for one destination.

    ``theta`` holds a scale per node and ``alpha`` an allocation weight per
    link ``ij`` (membership of ``j`` to predecessor ``i``).
    """

    theta: np.ndarray
    alpha: np.ndarray
    zero = math.inf
    unit = 0.0

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        al = np.asarray(self.alpha, dtype=float)
        if np.any(~(th > 0)):
            raise ValidationError("NGEV scales must be strictly positive")
        if np.any(al < 0):
            raise ValidationError("allocation weights must be non-negative")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "alpha", al)

    def oplus(self, x, y, i):
        return _soft_min(x, y, float(self.theta[i]))

    def otimes(self, x, y, i=None):
        return x + y

    def weights(self, network, costs):
        costs = np.asarray(costs, dtype=float)
        with np.errstate(divide="ignore"):
            return costs - np.log(self.alpha) / self.theta[network.tail]


AlgebraKind = ShortestPath | Logit | Ngev


# --------------------------------------------------------------------------
# Batched parameters
# --------------------------------------------------------------------------


class Model(str, Enum):
    MODEL1 = "model1"
    MODEL2 = "model2"
    MODEL3 = "model3"
    MODEL4 = "model4"

    @classmethod
    def parse(cls, value) -> "Model":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace(" ", "").replace("_", "")
        if v in {"1", "2", "3", "4"}:
            v = "model" + v
        try:
            return cls(v)
        except ValueError:
            raise ValidationError(f"unknown model {value!r}") from None


@dataclass(frozen=True, eq=False)
class NgevParams:
    """Scales and allocation weights, one row per loading commodity.

    A commodity is a destination, or an OD pair when the scales depend on
    the origin (``origin[r] >= 0``). ``theta`` has shape ``(R, n_nodes)`` and
    ``alpha`` shape ``(R, n_links)``.
    """

    dest: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    origin: np.ndarray = None

    def __post_init__(self):
        dest = np.asarray(self.dest, dtype=np.int64).reshape(-1)
        theta = np.array(self.theta, dtype=float, ndmin=2)
        alpha = np.array(self.alpha, dtype=float, ndmin=2)
        origin = np.full(dest.size, -1, np.int64) if self.origin is None else np.asarray(self.origin, np.int64)
        if theta.shape[0] != dest.size or alpha.shape[0] != dest.size or origin.shape != dest.shape:
            raise StructureError("one row of theta/alpha per commodity is required")
        if np.any(~(theta > 0)):
            raise ValidationError("NGEV scales must be strictly positive")
        if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
            raise ValidationError("allocation weights must be finite and non-negative")
        for a in (dest, theta, alpha, origin):
            a.setflags(write=False)
        object.__setattr__(self, "dest", dest)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "origin", origin)

    @property
    def n_rows(self) -> int:
        return int(self.dest.size)

    @property
    def od_specific(self) -> bool:
        return bool(np.any(self.origin >= 0))

    def algebra(self, r: int) -> Ngev:
        return Ngev(self.theta[r], self.alpha[r])

    def allocation_sums(self, network: Network) -> np.ndarray:
        """Sum of allocation weights over predecessors, per (row, node)."""
        return network.graph.incoming_sum(self.alpha)

    @classmethod
    def uniform(cls, network: Network, destinations, theta=1.0, alpha=1.0) -> "NgevParams":
        dest = np.atleast_1d(np.asarray(destinations, np.int64))
        return cls(dest, np.full((dest.size, network.n_nodes), float(theta)),
                   np.full((dest.size, network.n_links), float(alpha)))

    def commodity_demand(self, demand) -> np.ndarray:
        """Demand matrix aligned with the rows, shape ``(R, n_nodes)``."""
        q = np.zeros((self.n_rows, demand.n_nodes))
        row_of = {int(d): k for k, d in enumerate(demand.destinations)}
        for r, (d, o) in enumerate(zip(self.dest, self.origin)):
            k = row_of.get(int(d))
            if k is None:
                continue
            if o >= 0:
                q[r, o] = demand.flows[k, o]
            else:
                q[r] = demand.flows[k]
        return q


def make_params(model, network: Network, demand, sp_table=None, costs=None) -> NgevParams:
    """Scale/allocation settings of the four reference models.

    ``sp_table`` holds shortest-path costs to each demand destination (rows
    aligned with ``demand.destinations``); by default it is computed from
    ``costs`` or the free-flow costs. Model 1 is the logit model. Models 2-4
    use ``alpha_ji = 1 / |B(j)|`` and scales ``D(o)/D(i)``,
    ``pi / sqrt(3 D(i))`` and ``pi / sqrt(6 D(i))``. The scale at the
    destination itself is unused and set to 1.
    """
    model = Model.parse(model)
    dests = np.asarray(demand.destinations, np.int64)
    n, m = network.n_nodes, network.n_links
    if sp_table is None:
        sp_table = sp_distance_table(network, network.free_flow_cost if costs is None else costs, dests)
    sp_table = np.asarray(sp_table, dtype=float)
    if sp_table.shape != (dests.size, n):
        raise StructureError("sp_table must have one row per destination")
    if model is Model.MODEL1:
        return NgevParams.uniform(network, dests, 1.0, 1.0)

    in_deg = network.graph.in_degree[network.head].astype(float)
    alpha_row = 1.0 / in_deg
    rows_d, rows_o, thetas = [], [], []
    for k, d in enumerate(dests):
        D = sp_table[k]
        off = np.arange(n) != d
        if np.any(D[off] <= 0):
            raise ValidationError("zero shortest-path cost at a node other than the destination")
        theta = np.ones(n)
        ok = off & np.isfinite(D)
        if model is Model.MODEL2:
            for o in np.flatnonzero(demand.flows[k] > 0):
                if not np.isfinite(D[o]):
                    raise ValidationError(f"destination {d} unreachable from origin {o}")
                th = np.ones(n)
                th[ok] = D[o] / D[ok]
                rows_d.append(d)
                rows_o.append(o)
                thetas.append(th)
            continue
        factor = 3.0 if model is Model.MODEL3 else 6.0
        theta[ok] = np.pi / np.sqrt(factor * D[ok])
        rows_d.append(d)
        rows_o.append(-1)
        thetas.append(theta)
    R = len(rows_d)
    return NgevParams(np.array(rows_d, np.int64), np.array(thetas).reshape(R, n),
                      np.tile(alpha_row, (R, 1)).reshape(R, m), np.array(rows_o, np.int64))


# --------------------------------------------------------------------------
# Fixed-point solvers
# --------------------------------------------------------------------------


def value_iteration(update, init, tol: float = DEFAULT_TOL, cap: int = DEFAULT_CAP):
    """Iterate ``x <- update(x)`` until the sup-norm change is at most ``tol``.

    Infinite entries must stay infinite; a change in the pattern of finite
    entries counts as an infinite change. Returns ``(x, sweeps)``.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    x = np.asarray(init, dtype=float)
    for sweep in range(1, cap + 1):
        new = np.asarray(update(x), dtype=float)
        fin_old, fin_new = np.isfinite(x), np.isfinite(new)
        if np.any(np.isnan(new)):
            raise DivergenceError(f"value iteration produced NaN at sweep {sweep}")
        if np.array_equal(fin_old, fin_new):
            delta = float(np.max(np.abs(new[fin_new] - x[fin_new]), initial=0.0))
        else:
            delta = math.inf
        x = new
        if delta <= tol:
            return x, sweep
    raise DivergenceError(f"value iteration did not converge within {cap} sweeps")


def _link_exponents(network, costs, theta, log_alpha, mu, blocked):
    """theta_i * (c_ij + mu_j) - ln alpha_ji per (row, link); blocked links get inf."""
    tail, head = network.tail, network.head
    with np.errstate(invalid="ignore"):
        v = theta[:, tail] * (costs[None, :] + mu[:, head]) - log_alpha
    v[blocked | np.isnan(v)] = np.inf
    return v


def _soft_min_map(network, costs, theta, log_alpha, mu, blocked, dest, reachable):
    """One Bellman sweep; also returns the link choice probabilities."""
    g = network.graph
    v = _link_exponents(network, costs, theta, log_alpha, mu, blocked)
    vmin = g.segment_min(v)
    shift = vmin[:, network.tail]
    fin = np.isfinite(v)
    e = np.zeros_like(v)
    e[fin] = np.exp(-(v[fin] - shift[fin]))
    s = g.segment_sum(e)
    new = np.full_like(mu, np.inf)
    ok = reachable & (s > 0)
    new[ok] = (vmin[ok] - np.log(s[ok])) / theta[ok]
    rows = np.arange(mu.shape[0])
    new[rows, dest] = 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(fin, e / s[:, network.tail], 0.0)
    p[p < PROB_FLOOR] = 0.0
    return new, p


def markov_solve(network: Network, prob: np.ndarray, rhs: np.ndarray, transpose: bool) -> np.ndarray:
    """Solve ``(I - P) y = rhs`` (or with ``P`` transposed) for every row.

    ``prob`` holds link probabilities ``p_ij`` with shape ``(R, n_links)``;
    small networks use batched dense solves, larger ones one block-diagonal
    sparse system.
    """
    R, m = prob.shape
    n = network.n_nodes
    if n <= DENSE_NODE_LIMIT:
        A = np.zeros((R, n, n))
        A[:, np.arange(n), np.arange(n)] = 1.0
        if transpose:
            A[:, network.head, network.tail] -= prob
        else:
            A[:, network.tail, network.head] -= prob
        try:
            return np.linalg.solve(A, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return np.full((R, n), np.nan)
    off = (np.arange(R) * n)[:, None]
    rows = (off + network.tail[None, :]).ravel()
    cols = (off + network.head[None, :]).ravel()
    vals = prob.ravel()
    keep = vals != 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    if transpose:
        rows, cols = cols, rows
    eye = np.arange(R * n)
    A = sp.csc_matrix((np.r_[np.ones(R * n), -vals], (np.r_[eye, rows], np.r_[eye, cols])), shape=(R * n, R * n))
    # a singular system comes back as nan; callers check finiteness
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", MatrixRankWarning)
        y = spsolve(A, rhs.ravel())
    return np.asarray(y).reshape(R, n)


@dataclass
class MuSolution:
    """Expected minimum costs and the link choice probabilities at them."""

    mu: np.ndarray
    prob: np.ndarray
    iterations: int
    residual: float


def _initial_mu(network, costs, dest, blocked):
    """Shortest-path distances on the unblocked links, one row per commodity."""
    R = dest.size
    out = np.empty((R, network.n_nodes))
    plain = ~blocked.any(axis=1) if R else np.zeros(0, bool)
    # blocked links differ per row only via allocation zeros or link masks
    uniq = np.unique(dest[plain])
    if uniq.size:
        table = sp_distance_table(network, costs, uniq)
        pos = {int(d): k for k, d in enumerate(uniq)}
        for r in np.flatnonzero(plain):
            out[r] = table[pos[int(dest[r])]]
    for r in np.flatnonzero(~plain):
        keep = ~blocked[r]
        sub = Network.from_links(network.n_nodes, zip(network.tail[keep], network.head[keep]),
                                 costs[keep], np.ones(int(keep.sum())))
        out[r] = sp_distance_table(sub, costs[keep], [dest[r]])[0]
    return out


def solve_mu(network: Network, costs, theta, alpha, dest, link_mask=None, method: str = "newton",
             tol: float = DEFAULT_TOL, cap: int = DEFAULT_CAP, init=None) -> MuSolution:
    """Batched NGEV expected minimum costs.

    ``theta`` is ``(R, n)``, ``alpha`` ``(R, m)``, ``dest`` ``(R,)``. Links
    with ``link_mask`` False (or zero allocation weight) are removed, as are
    links leaving each row's destination. ``method`` is ``"newton"`` or
    ``"jacobi"`` (plain value iteration). Iteration starts from the
    shortest-path distances unless ``init`` is given.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (network.n_links,) or np.any(~(costs > 0)):
        raise ValidationError("link costs must be strictly positive, one per link")
    theta = np.asarray(theta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    dest = np.asarray(dest, dtype=np.int64)
    R = dest.size
    blocked = (alpha <= 0) | (network.tail[None, :] == dest[:, None])
    if link_mask is not None:
        blocked = blocked | ~np.broadcast_to(np.asarray(link_mask, bool), blocked.shape)
    with np.errstate(divide="ignore"):
        log_alpha = np.where(alpha > 0, np.log(np.where(alpha > 0, alpha, 1.0)), -np.inf)
    structural = blocked & (network.tail[None, :] != dest[:, None])
    if init is not None and link_mask is None and np.shape(init) == (R, network.n_nodes):
        # reachability does not depend on (positive) costs, so a previous solution carries it
        sp0 = None
        mu = np.array(init, dtype=float)
        reachable = np.isfinite(mu)
    else:
        sp0 = _initial_mu(network, costs, dest, structural)
        reachable = np.isfinite(sp0)
        mu = sp0.copy() if init is None else np.where(reachable, np.asarray(init, float), np.inf)
    rows = np.arange(R)
    mu[rows, dest] = 0.0

    def bellman(x):
        return _soft_min_map(network, costs, theta, log_alpha, x, blocked, dest, reachable)

    if method == "jacobi":
        x, sweeps = value_iteration(lambda x: bellman(x)[0], mu, tol, cap)
        new, p = bellman(x)
        return MuSolution(x, p, sweeps, _residual(x, new))
    if method != "newton":
        raise ValidationError(f"unknown fixed-point method {method!r}")

    best = math.inf
    for it in range(1, cap + 1):
        new, p = bellman(mu)
        with np.errstate(invalid="ignore"):
            gap = np.where(reachable, new - mu, 0.0)
        res = float(np.max(np.abs(gap), initial=0.0))
        if res <= tol:
            return MuSolution(mu, p, it, res)
        step = markov_solve(network, p, gap, transpose=False)
        if not np.all(np.isfinite(step)) or res > 1e3 * best + 1.0:
            # Newton broke down (P not transient here); plain sweeps are the safe fallback
            if sp0 is None:
                sp0 = _initial_mu(network, costs, dest, structural)
            x, sweeps = value_iteration(lambda x: bellman(x)[0], sp0, tol, cap)
            new, p = bellman(x)
            return MuSolution(x, p, it + sweeps, _residual(x, new))
        best = min(best, res)
        mu = np.where(reachable, mu + step, np.inf)
    raise DivergenceError(f"Newton iteration did not converge within {cap} steps")


def _residual(mu, new):
    fin = np.isfinite(mu)
    return float(np.max(np.abs(new[fin] - mu[fin]), initial=0.0))


def expected_min_cost(network: Network, costs, algebra: AlgebraKind, d: int, method: str = "newton",
                      tol: float = DEFAULT_TOL, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Expected minimum cost from every node to destination ``d``.

    Shortest paths use min-plus value iteration started from the unit vector
    at ``d``; logit and NGEV delegate to :func:`solve_mu`.
    """
    costs = np.asarray(costs, dtype=float)
    if np.any(~(costs > 0)):
        raise ValidationError("link costs must be strictly positive")
    if isinstance(algebra, ShortestPath):
        init = np.full(network.n_nodes, np.inf)
        init[d] = 0.0
        return value_iteration(lambda x: bellman_update(network, costs, algebra, d, x), init, tol, cap)[0]
    if isinstance(algebra, Logit):
        theta = np.full((1, network.n_nodes), algebra.theta)
        alpha = np.ones((1, network.n_links))
    else:
        theta, alpha = algebra.theta[None, :], algebra.alpha[None, :]
    return solve_mu(network, costs, theta, alpha, [d], method=method, tol=tol, cap=cap).mu[0]


def bellman_update(network: Network, costs, algebra: AlgebraKind, d: int, mu) -> np.ndarray:
    """``W (x) mu (+) e_d`` evaluated with the scalar semiring operations."""
    w = algebra.weights(network, costs)
    out = np.full(network.n_nodes, algebra.zero)
    for k, (i, j) in enumerate(zip(network.tail, network.head)):
        if i == d:
            continue
        out[i] = algebra.oplus(out[i], algebra.otimes(w[k], mu[j], i), i)
    out[d] = algebra.oplus(out[d], algebra.unit, d)
    return out


def power_series(network: Network, costs, algebra: AlgebraKind, d: int, terms: int) -> np.ndarray:
    """Truncated ``(E (+) W (+) W^2 (+) ...) (x) e_d`` with ``terms`` powers of ``W``."""
    w = algebra.weights(network, costs)
    n = network.n_nodes
    term = np.full(n, algebra.zero)
    term[d] = algebra.unit
    acc = term.copy()
    for _ in range(terms):
        nxt = np.full(n, algebra.zero)
        for k, (i, j) in enumerate(zip(network.tail, network.head)):
            if i == d or term[j] == algebra.zero:
                continue
            nxt[i] = algebra.oplus(nxt[i], algebra.otimes(w[k], term[j], i), i)
        term = nxt
        acc = np.array([algebra.oplus(a, t, i) for i, (a, t) in enumerate(zip(acc, term))])
    return acc


def fixed_point_residual(network: Network, costs, theta, alpha, d: int, mu) -> np.ndarray:
    """``1 - sum_j alpha_ji exp(-theta_i (c_ij + mu_j - mu_i))`` per node (NaN where not applicable)."""
    costs = np.asarray(costs, float)
    tail, head = network.tail, network.head
    with np.errstate(invalid="ignore", over="ignore"):
        terms = alpha * np.exp(-theta[tail] * (costs + mu[head] - mu[tail]))
    terms[(tail == d) | ~np.isfinite(mu[head]) | ~np.isfinite(mu[tail])] = 0.0
    out = 1.0 - network.graph.segment_sum(terms)
    out[~np.isfinite(mu)] = np.nan
    out[d] = np.nan
    out[network.graph.out_degree == 0] = np.nan
    return out
