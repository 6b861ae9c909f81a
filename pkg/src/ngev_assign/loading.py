"""Flow-independent network loading: MTA, Dial, path enumeration and probit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .algebra import DEFAULT_CAP, DEFAULT_TOL, PROB_FLOOR, Ngev, NgevParams, markov_solve, solve_mu
from .errors import DivergenceError, OracleInfeasibleError, UnreachableError, ValidationError
from .network import DemandTable, Network, sp_distance_table

METHODS = ("mta", "dial")


@dataclass
class FlowState:
    """Link and node flows, one row per loading commodity.

    ``dest``/``origin`` identify the commodity of each row (origin is -1 for
    destination-level rows). ``X`` is the aggregate over rows, summed in row
    order.
    """

    dest: np.ndarray
    origin: np.ndarray
    x: np.ndarray
    z: np.ndarray
    X: np.ndarray = field(init=False)

    def __post_init__(self):
        self.X = aggregate(self.x)

    def per_destination(self) -> tuple[np.ndarray, np.ndarray]:
        """Link flows summed over rows that share a destination (ascending)."""
        dests = np.unique(self.dest)
        out = np.zeros((dests.size, self.x.shape[1]))
        for k, d in enumerate(dests):
            out[k] = aggregate(self.x[self.dest == d])
        return dests, out


@dataclass
class LoadResult(FlowState):
    mu: np.ndarray = None
    prob: np.ndarray = None
    diagnostics: dict = None


def aggregate(x: np.ndarray) -> np.ndarray:
    """Sum rows in ascending order, independent of how rows were computed."""
    out = np.zeros(x.shape[1])
    for row in x:
        out = out + row
    return out


def choice_probabilities(network: Network, costs, algebra: Ngev, mu, d: int, form: str = "ratio") -> np.ndarray:
    """Link choice probabilities toward ``d`` given expected minimum costs.

    ``form="ratio"`` normalizes ``alpha exp(-theta (c + mu_j))`` over the
    successors of each node; ``form="direct"`` uses
    ``alpha exp(-theta (c + mu_j - mu_i))``. They coincide at the fixed point.
    Links out of ``d`` and out of nodes with infinite ``mu`` get zero.
    """
    costs = np.asarray(costs, float)
    mu = np.asarray(mu, float)
    tail, head = network.tail, network.head
    theta = algebra.theta[tail]
    live = (tail != d) & np.isfinite(mu[tail]) & np.isfinite(mu[head]) & (algebra.alpha > 0)
    p = np.zeros(network.n_links)
    if form == "direct":
        p[live] = algebra.alpha[live] * np.exp(-theta[live] * (costs[live] + mu[head][live] - mu[tail][live]))
    elif form == "ratio":
        v = np.full(network.n_links, np.inf)
        v[live] = theta[live] * (costs[live] + mu[head][live]) - np.log(algebra.alpha[live])
        vmin = network.graph.segment_min(v)
        e = np.zeros(network.n_links)
        e[live] = np.exp(-(v[live] - vmin[tail][live]))
        s = network.graph.segment_sum(e)
        p[live] = e[live] / s[tail][live]
    else:
        raise ValidationError(f"unknown probability form {form!r}")
    p[p < PROB_FLOOR] = 0.0
    return p


def solve_node_flows(network: Network, prob, q, dest, method: str = "direct", tol: float = 1e-12,
                     cap: int = DEFAULT_CAP) -> np.ndarray:
    """Node inflows ``z = P^T z + q`` for each row.

    ``prob`` is ``(R, m)`` (or ``(m,)``), ``q`` ``(R, n)``. Demand at a node
    that has no way to continue toward its destination raises
    :class:`UnreachableError`.
    """
    prob = np.atleast_2d(np.asarray(prob, float))
    q = np.atleast_2d(np.asarray(q, float))
    dest = np.atleast_1d(np.asarray(dest, np.int64))
    rows = np.arange(dest.size)
    out_mass = network.graph.segment_sum(prob)
    stuck = (q > 0) & (out_mass <= 0)
    stuck[rows, dest] = False
    if np.any(stuck):
        r, i = np.argwhere(stuck)[0]
        raise UnreachableError(
            f"demand at node {network.node_ids[i]} cannot reach destination {network.node_ids[dest[r]]}")
    scale = max(1.0, float(np.max(np.abs(q), initial=0.0)))
    if method == "direct":
        z = markov_solve(network, prob, q, transpose=True)
    elif method == "iterate":
        z = q.copy()
        for _ in range(cap):
            new = q + network.graph.incoming_sum(prob * z[:, network.tail])
            delta = float(np.max(np.abs(new - z), initial=0.0))
            z = new
            if delta <= tol * scale:
                break
        else:
            raise DivergenceError("node-flow iteration did not converge")
    else:
        raise ValidationError(f"unknown node-flow method {method!r}")
    if not np.all(np.isfinite(z)) or np.min(z, initial=0.0) < -1e-9 * scale:
        raise DivergenceError("node-flow system is not transient (cyclic mass does not decay)")
    return np.maximum(z, 0.0)


def conservation_residual(network: Network, x, q_modified) -> np.ndarray:
    """Outflow minus inflow minus modified demand, per row and node."""
    x = np.atleast_2d(x)
    return network.graph.segment_sum(x) - network.graph.incoming_sum(x) - np.atleast_2d(q_modified)


def modified_rows(q, dest) -> np.ndarray:
    qt = np.array(np.atleast_2d(q), dtype=float)
    rows = np.arange(qt.shape[0])
    qt[rows, dest] = -(qt.sum(axis=1) - qt[rows, dest])
    return qt


def load(network: Network, costs, params: NgevParams, q, method: str = "mta", mu_method: str = "newton",
         mu_init=None, tol: float = DEFAULT_TOL) -> LoadResult:
    """NGEV loading of the demand rows ``q`` (aligned with ``params`` rows).

    MTA uses every link. Dial keeps only links ``ij`` with ``D(j) < D(i)``
    for the shortest-path costs ``D`` under the same link costs.
    """
    costs = np.asarray(costs, float)
    q = np.atleast_2d(np.asarray(q, float))
    dest = params.dest
    diagnostics = {}
    mask = None
    if method == "dial":
        uniq, inv = np.unique(dest, return_inverse=True)
        D = sp_distance_table(network, costs, uniq)[inv]
        Dt, Dh = D[:, network.tail], D[:, network.head]
        mask = Dh < Dt
        diagnostics["dial_ties"] = int(np.sum(np.isfinite(Dt) & (Dh == Dt)))
    elif method != "mta":
        raise ValidationError(f"unknown loading method {method!r}")
    sol = solve_mu(network, costs, params.theta, params.alpha, dest, link_mask=mask, method=mu_method,
                   tol=tol, init=mu_init)
    rows = np.arange(dest.size)
    bad = (q > 0) & ~np.isfinite(sol.mu)
    bad[rows, dest] = False
    if np.any(bad):
        r, i = np.argwhere(bad)[0]
        raise UnreachableError(
            f"demand at node {network.node_ids[i]} cannot reach destination {network.node_ids[dest[r]]}")
    z = solve_node_flows(network, sol.prob, q, dest)
    x = sol.prob * z[:, network.tail]
    diagnostics["mu_iterations"] = sol.iterations
    diagnostics["mu_residual"] = sol.residual
    return LoadResult(dest, params.origin, x, z, mu=sol.mu, prob=sol.prob, diagnostics=diagnostics)


def assign_all(network: Network, costs, params: NgevParams, demand: DemandTable, method: str = "mta",
               **kwargs) -> LoadResult:
    """Load every destination (or OD row) of ``demand``."""
    q = params.commodity_demand(demand)
    if params.n_rows == 0:
        empty = np.zeros((0, network.n_links))
        return LoadResult(params.dest, params.origin, empty, np.zeros((0, network.n_nodes)),
                          mu=np.zeros((0, network.n_nodes)), prob=empty, diagnostics={})
    return load(network, costs, params, q, method=method, **kwargs)


def aon_assign(network: Network, costs, demand: DemandTable) -> np.ndarray:
    """All-or-nothing shortest-path assignment; returns aggregate link flows."""
    return _aon(network, np.asarray(costs, float), demand.destinations, demand.flows, _link_lookup(network))


def _link_lookup(network):
    keys = network.tail * network.n_nodes + network.head
    order = np.argsort(keys)
    return keys[order], order


def _aon(network, costs, dests, flows, lookup):
    n = network.n_nodes
    keys, order = lookup
    X = np.zeros(network.n_links)
    if dests.size == 0:
        return X
    rev = csr_matrix((costs, (network.head, network.tail)), shape=(n, n))
    dist, pred = dijkstra(rev, directed=True, indices=dests, return_predecessors=True)
    if np.any((flows > 0) & ~np.isfinite(dist)):
        raise UnreachableError("demand toward an unreachable destination")
    z = np.array(flows, dtype=float)
    rows = np.arange(dests.size)
    seq = np.argsort(-np.where(np.isfinite(dist), dist, -1.0), axis=1, kind="stable")
    for pos in range(n):
        v = seq[:, pos]
        nxt = pred[rows, v]
        ok = (nxt >= 0) & (z[rows, v] > 0)
        if not np.any(ok):
            continue
        r, v, nxt = rows[ok], v[ok], nxt[ok]
        np.add.at(z, (r, nxt), z[r, v])
        link = order[np.searchsorted(keys, v * n + nxt)]
        np.add.at(X, link, z[r, v])
    return X


def probit_load(network: Network, costs, demand: DemandTable, draws: int, variance_scale: float = 0.3,
                seed: int = 0, floor: float = 1e-6, keep_traces: bool = False):
    """Monte-Carlo probit loading.

    Each draw samples independent link costs ``N(c, variance_scale * c0)``
    (``c0`` the free-flow cost), floors them at ``floor`` and runs an
    all-or-nothing assignment. Returns the mean flows and, if requested, the
    per-draw flows with shape ``(draws, n_links)``.
    """
    if int(draws) != draws or draws < 1:
        raise ValidationError("number of draws must be a positive integer")
    if not variance_scale > 0:
        raise ValidationError("variance scale must be positive")
    costs = np.asarray(costs, float)
    rng = np.random.default_rng(seed)
    sd = np.sqrt(variance_scale * network.free_flow_cost)
    lookup = _link_lookup(network)
    total = np.zeros(network.n_links)
    traces = np.zeros((int(draws), network.n_links)) if keep_traces else None
    for r in range(int(draws)):
        sample = np.maximum(costs + sd * rng.standard_normal(network.n_links), floor)
        X = _aon(network, sample, demand.destinations, demand.flows, lookup)
        total += X
        if keep_traces:
            traces[r] = X
    return total / draws, traces


def probit_running_means(network: Network, costs, demand: DemandTable, checkpoints, variance_scale=0.3,
                         seed=0, floor=1e-6) -> dict[int, np.ndarray]:
    """Mean probit flows after each draw count in ``checkpoints`` from one seeded stream."""
    checkpoints = sorted({int(c) for c in checkpoints})
    costs = np.asarray(costs, float)
    rng = np.random.default_rng(seed)
    sd = np.sqrt(variance_scale * network.free_flow_cost)
    lookup = _link_lookup(network)
    total = np.zeros(network.n_links)
    out = {}
    want = set(checkpoints)
    for r in range(1, checkpoints[-1] + 1):
        sample = np.maximum(costs + sd * rng.standard_normal(network.n_links), floor)
        total += _aon(network, sample, demand.destinations, demand.flows, lookup)
        if r in want:
            out[r] = total / r
    return out


@dataclass
class PathEnumeration:
    flows: np.ndarray
    path_probabilities: list
    truncated_mass: float


def enumerate_path_flows(network: Network, prob, origin: int, dest: int, demand: float = 1.0,
                         max_loops: int = 0, max_paths: int = 200_000) -> PathEnumeration:
    """Path-by-path loading from link choice probabilities.

    Walks every path from ``origin`` to ``dest`` that visits each node at
    most ``1 + max_loops`` times, takes the path probability as the product
    of its link probabilities and accumulates ``demand * p(path)`` on its
    links. Paths that would exceed the visit budget are dropped; their
    probability is reported as ``truncated_mass``.
    """
    prob = np.asarray(prob, float)
    succ: dict[int, list[tuple[int, int, float]]] = {}
    for k, (i, j) in enumerate(zip(network.tail, network.head)):
        if prob[k] > 0:
            succ.setdefault(int(i), []).append((k, int(j), float(prob[k])))
    flows = np.zeros(network.n_links)
    paths = []
    visits = np.zeros(network.n_nodes, np.int64)
    budget = 1 + int(max_loops)
    links: list[int] = []

    def walk(node, p):
        if node == dest:
            if len(paths) >= max_paths:
                raise OracleInfeasibleError(f"more than {max_paths} paths; enumeration is infeasible")
            paths.append((tuple(links), p))
            for k in links:
                flows[k] += demand * p
            return
        for k, j, pk in succ.get(node, ()):
            if visits[j] >= budget:
                continue
            visits[j] += 1
            links.append(k)
            walk(j, p * pk)
            links.pop()
            visits[j] -= 1

    visits[origin] = 1
    walk(int(origin), 1.0)
    mass = 1.0 - sum(p for _, p in paths)
    return PathEnumeration(flows, paths, max(mass, 0.0))


def expected_path_length(network: Network, prob, dest: int) -> np.ndarray:
    """Expected number of links still to traverse from each node."""
    prob = np.atleast_2d(np.asarray(prob, float))
    ones = np.ones((1, network.n_nodes))
    ones[0, dest] = 0.0
    return markov_solve(network, prob, ones, transpose=False)[0]
