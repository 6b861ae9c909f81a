"""Directed networks, TNTP ingestion, grid generation and demand tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import ParseError, StructureError, ValidationError


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed graph with links stored as (tail, head) pairs.

    Links keep their input order. ``out_order`` is a stable permutation that
    groups links by tail node; segmented reductions over successor links go
    through it.
    """

    n_nodes: int
    tail: np.ndarray
    head: np.ndarray
    out_order: np.ndarray = field(init=False, repr=False)
    out_starts: np.ndarray = field(init=False, repr=False)
    out_nodes: np.ndarray = field(init=False, repr=False)
    in_degree: np.ndarray = field(init=False, repr=False)
    out_degree: np.ndarray = field(init=False, repr=False)
    _head_incidence: csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        tail = _frozen(self.tail, np.int64)
        head = _frozen(self.head, np.int64)
        if tail.shape != head.shape or tail.ndim != 1:
            raise StructureError("tail and head must be 1-d arrays of equal length")
        n = int(self.n_nodes)
        if n < 0:
            raise StructureError("negative node count")
        if tail.size:
            if min(tail.min(), head.min()) < 0 or max(tail.max(), head.max()) >= n:
                raise StructureError("link references a node outside 0..n_nodes-1")
            if np.any(tail == head):
                raise StructureError("self-loops are not allowed")
            keys = tail * n + head
            if np.unique(keys).size != keys.size:
                raise StructureError("parallel links between the same node pair")
        order = np.argsort(tail, kind="stable")
        sorted_tail = tail[order]
        starts = np.flatnonzero(np.r_[True, sorted_tail[1:] != sorted_tail[:-1]]) if tail.size else np.zeros(0, np.int64)
        object.__setattr__(self, "n_nodes", n)
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "out_order", _frozen(order, np.int64))
        object.__setattr__(self, "out_starts", _frozen(starts, np.int64))
        object.__setattr__(self, "out_nodes", _frozen(sorted_tail[starts], np.int64))
        object.__setattr__(self, "in_degree", _frozen(np.bincount(head, minlength=n), np.int64))
        object.__setattr__(self, "out_degree", _frozen(np.bincount(tail, minlength=n), np.int64))
        m = tail.size
        object.__setattr__(self, "_head_incidence", csr_matrix((np.ones(m), (head, np.arange(m))), shape=(n, m)))

    @property
    def n_links(self) -> int:
        return int(self.tail.size)

    def successors(self, i: int) -> list[int]:
        return sorted(int(j) for j in self.head[self.tail == i])

    def predecessors(self, j: int) -> list[int]:
        return sorted(int(i) for i in self.tail[self.head == j])

    def link_index(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(zip(self.tail, self.head))}

    def segment_min(self, values: np.ndarray) -> np.ndarray:
        """Per-node minimum of link values over successor links.

        ``values`` has links on the last axis; nodes without successors get
        ``+inf``.
        """
        values = np.asarray(values, dtype=float)
        out = np.full(values.shape[:-1] + (self.n_nodes,), np.inf)
        if self.out_starts.size:
            red = np.minimum.reduceat(values[..., self.out_order], self.out_starts, axis=-1)
            out[..., self.out_nodes] = red
        return out

    def segment_sum(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape[:-1] + (self.n_nodes,))
        if self.out_starts.size:
            red = np.add.reduceat(values[..., self.out_order], self.out_starts, axis=-1)
            out[..., self.out_nodes] = red
        return out

    def incoming_sum(self, values: np.ndarray) -> np.ndarray:
        """Per-node sum of link values over predecessor links."""
        values = np.asarray(values, dtype=float)
        flat = values.reshape(-1, self.n_links)
        out = (self._head_incidence @ flat.T).T
        return np.asarray(out).reshape(values.shape[:-1] + (self.n_nodes,))

    def outgoing_sum(self, values: np.ndarray) -> np.ndarray:
        return self.segment_sum(values)


@dataclass(frozen=True, eq=False)
class Network:
    """A graph with free-flow link costs and capacities.

    ``node_ids`` maps dense internal indices to external (usually 1-based)
    identifiers.
    """

    graph: Graph
    free_flow_cost: np.ndarray
    capacity: np.ndarray
    node_ids: np.ndarray = None

    def __post_init__(self):
        m = self.graph.n_links
        c = _frozen(self.free_flow_cost, float)
        k = _frozen(self.capacity, float)
        if c.shape != (m,) or k.shape != (m,):
            raise StructureError("free_flow_cost and capacity need one entry per link")
        if np.any(~(c > 0)) or np.any(~(k > 0)):
            raise ValidationError("free-flow costs and capacities must be strictly positive")
        ids = np.arange(1, self.graph.n_nodes + 1) if self.node_ids is None else self.node_ids
        ids = _frozen(ids, np.int64)
        if ids.shape != (self.graph.n_nodes,):
            raise StructureError("node_ids needs one entry per node")
        object.__setattr__(self, "free_flow_cost", c)
        object.__setattr__(self, "capacity", k)
        object.__setattr__(self, "node_ids", ids)

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def n_links(self) -> int:
        return self.graph.n_links

    @property
    def tail(self) -> np.ndarray:
        return self.graph.tail

    @property
    def head(self) -> np.ndarray:
        return self.graph.head

    @classmethod
    def from_links(cls, n_nodes, links, free_flow_cost=None, capacity=None, node_ids=None):
        """Build from an iterable of ``(tail, head)`` pairs in internal ids."""
        links = list(links)
        tail = [a for a, _ in links]
        head = [b for _, b in links]
        m = len(links)
        c = np.ones(m) if free_flow_cost is None else free_flow_cost
        k = np.full(m, 1e30) if capacity is None else capacity
        return cls(Graph(n_nodes, tail, head), c, k, node_ids)

    def node_index(self, external_id: int) -> int:
        hits = np.flatnonzero(self.node_ids == external_id)
        if hits.size != 1:
            raise StructureError(f"unknown node id {external_id}")
        return int(hits[0])

    def link_labels(self) -> list[str]:
        ids = self.node_ids
        return [f"{ids[i]}-{ids[j]}" for i, j in zip(self.tail, self.head)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tail_id", "head_id", "free_flow_cost", "capacity"])
        for i, j, c, k in zip(self.tail, self.head, self.free_flow_cost, self.capacity):
            w.writerow([int(self.node_ids[i]), int(self.node_ids[j]), repr(float(c)), repr(float(k))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class DemandTable:
    """Destination-indexed node demand vectors.

    ``flows[k, i]`` is the demand from node ``i`` to destination
    ``destinations[k]``. Destinations are kept in ascending internal id.
    ``listed_pairs`` records how many OD entries a source file declared,
    zero entries included.
    """

    destinations: np.ndarray
    flows: np.ndarray
    listed_pairs: int | None = None

    def __post_init__(self):
        d = _frozen(self.destinations, np.int64).reshape(-1)
        q = np.array(self.flows, dtype=float)
        if q.ndim != 2 or q.shape[0] != d.size:
            raise StructureError("flows must have one row per destination")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValidationError("demand must be finite and non-negative")
        if d.size and np.unique(d).size != d.size:
            raise StructureError("duplicate destination")
        order = np.argsort(d, kind="stable")
        d, q = d[order], q[order]
        if np.any(q[np.arange(d.size), d] != 0):
            raise ValidationError("demand from a destination to itself must be zero")
        q.setflags(write=False)
        object.__setattr__(self, "destinations", _frozen(d, np.int64))
        object.__setattr__(self, "flows", q)

    @classmethod
    def empty(cls, n_nodes: int) -> "DemandTable":
        return cls(np.zeros(0, np.int64), np.zeros((0, n_nodes)))

    @classmethod
    def from_pairs(cls, n_nodes: int, pairs: dict[tuple[int, int], float]) -> "DemandTable":
        """Build from ``{(origin, destination): flow}`` in internal ids."""
        dests = sorted({d for (o, d), v in pairs.items() if v > 0})
        q = np.zeros((len(dests), n_nodes))
        row = {d: k for k, d in enumerate(dests)}
        for (o, d), v in pairs.items():
            if v > 0:
                q[row[d], o] += v
        return cls(np.array(dests, np.int64), q)

    @property
    def n_nodes(self) -> int:
        return self.flows.shape[1]

    @property
    def total(self) -> float:
        return float(self.flows.sum())

    @property
    def origins(self) -> np.ndarray:
        return np.flatnonzero(self.flows.sum(axis=0) > 0)

    @property
    def od_pairs(self) -> list[tuple[int, int]]:
        return [(int(o), int(d)) for d, row in zip(self.destinations, self.flows) for o in np.flatnonzero(row > 0)]

    def modified(self) -> np.ndarray:
        """Modified demand: origin entries unchanged, destination entry is minus the total."""
        qt = np.array(self.flows)
        qt[np.arange(self.destinations.size), self.destinations] = -self.flows.sum(axis=1)
        return qt

    def scaled(self, factor: float) -> "DemandTable":
        if factor < 0:
            raise ValidationError("demand multiplier must be non-negative")
        return DemandTable(self.destinations, self.flows * factor, self.listed_pairs)


# --------------------------------------------------------------------------
# TNTP text format
# --------------------------------------------------------------------------


def _split_metadata(text):
    meta, body = {}, []
    in_body = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("~"):
            continue
        if not in_body and line.startswith("<"):
            close = line.find(">")
            if close < 0:
                raise ParseError("unterminated metadata tag", lineno)
            key = line[1:close].strip().upper()
            if key == "END OF METADATA":
                in_body = True
            else:
                meta[key] = line[close + 1:].strip()
            continue
        in_body = True
        body.append((lineno, line))
    return meta, body


def _meta_int(meta, key, required=True):
    if key not in meta:
        if required:
            raise ParseError(f"missing <{key}> metadata")
        return None
    try:
        return int(float(meta[key]))
    except ValueError:
        raise ParseError(f"<{key}> is not a number: {meta[key]!r}") from None


def parse_tntp(net_text: str, trips_text: str) -> tuple[Network, DemandTable]:
    """Parse TNTP net and trips texts.

    Link cost is the free-flow-time column and capacity the capacity column;
    the remaining BPR columns are read but not used.
    """
    meta, body = _split_metadata(net_text)
    n = _meta_int(meta, "NUMBER OF NODES")
    n_links = _meta_int(meta, "NUMBER OF LINKS")
    _meta_int(meta, "FIRST THRU NODE", required=False)
    tails, heads, caps, costs = [], [], [], []
    for lineno, line in body:
        row = line.rstrip(";").strip()
        if not row:
            continue
        parts = row.split()
        if len(parts) < 5:
            raise ParseError(f"expected at least 5 columns, got {len(parts)}", lineno)
        try:
            a, b = int(parts[0]), int(parts[1])
            cap, fft = float(parts[2]), float(parts[4])
            [float(p) for p in parts[5:]]
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", lineno) from None
        if not (1 <= a <= n and 1 <= b <= n):
            raise StructureError(f"line {lineno}: link {a}-{b} references an unknown node (1..{n})")
        if cap < 0 or fft < 0:
            raise ValidationError(f"line {lineno}: negative capacity or free-flow time")
        tails.append(a - 1)
        heads.append(b - 1)
        caps.append(cap)
        costs.append(fft)
    if len(tails) != n_links:
        raise StructureError(f"<NUMBER OF LINKS> says {n_links} but {len(tails)} rows were read")
    if any(c == 0 for c in costs) or any(k == 0 for k in caps):
        raise ValidationError("free-flow times and capacities must be strictly positive")
    network = Network(Graph(n, tails, heads), costs, caps, np.arange(1, n + 1))

    tmeta, tbody = _split_metadata(trips_text)
    total_declared = tmeta.get("TOTAL OD FLOW")
    pairs: dict[tuple[int, int], float] = {}
    listed = 0
    origin = None
    for lineno, line in tbody:
        if line.lower().startswith("origin"):
            parts = line.split()
            try:
                origin = int(parts[1])
            except (IndexError, ValueError):
                raise ParseError("malformed Origin line", lineno) from None
            if not 1 <= origin <= n:
                raise StructureError(f"line {lineno}: origin {origin} is not a node")
            continue
        if origin is None:
            raise ParseError("trip entry before any Origin line", lineno)
        for entry in line.split(";"):
            entry = entry.strip()
            if not entry:
                continue
            if ":" not in entry:
                raise ParseError(f"malformed trip entry {entry!r}", lineno)
            d_txt, v_txt = entry.split(":", 1)
            try:
                d, v = int(d_txt), float(v_txt)
            except ValueError:
                raise ParseError(f"malformed trip entry {entry!r}", lineno) from None
            if not 1 <= d <= n:
                raise StructureError(f"line {lineno}: destination {d} is not a node")
            if v < 0:
                raise ValidationError(f"line {lineno}: negative trip flow")
            listed += 1
            if v > 0 and d != origin:
                pairs[(origin - 1, d - 1)] = pairs.get((origin - 1, d - 1), 0.0) + v
    demand = DemandTable.from_pairs(n, pairs)
    demand = DemandTable(demand.destinations, demand.flows, listed)
    if total_declared is not None:
        try:
            declared = float(total_declared)
        except ValueError:
            raise ParseError("<TOTAL OD FLOW> is not a number") from None
        if not math.isclose(declared, demand.total, rel_tol=1e-6, abs_tol=1e-6):
            raise ValidationError(f"<TOTAL OD FLOW> {declared} disagrees with parsed total {demand.total}")
    return network, demand


def write_tntp(network: Network, demand: DemandTable) -> tuple[str, str]:
    """Serialize to TNTP net and trips texts (1-based node ids)."""
    net = [
        f"<NUMBER OF ZONES> {network.n_nodes}",
        f"<NUMBER OF NODES> {network.n_nodes}",
        "<FIRST THRU NODE> 1",
        f"<NUMBER OF LINKS> {network.n_links}",
        "<END OF METADATA>",
        "",
        "~\tinit_node\tterm_node\tcapacity\tlength\tfree_flow_time\tb\tpower\tspeed\ttoll\tlink_type\t;",
    ]
    for i, j, k, c in zip(network.tail, network.head, network.capacity, network.free_flow_cost):
        net.append(f"\t{i + 1}\t{j + 1}\t{float(k)!r}\t{float(c)!r}\t{float(c)!r}\t0.15\t4\t0\t0\t1\t;")
    trips = [f"<NUMBER OF ZONES> {network.n_nodes}", f"<TOTAL OD FLOW> {demand.total!r}", "<END OF METADATA>", ""]
    by_origin: dict[int, list[tuple[int, float]]] = {}
    for d, row in zip(demand.destinations, demand.flows):
        for o in np.flatnonzero(row > 0):
            by_origin.setdefault(int(o), []).append((int(d), float(row[o])))
    for o in sorted(by_origin):
        trips.append(f"Origin {o + 1}")
        trips.append(" ".join(f"{d + 1} : {v!r};" for d, v in sorted(by_origin[o])))
        trips.append("")
    return "\n".join(net) + "\n", "\n".join(trips) + "\n"


def load_tntp(net_path, trips_path) -> tuple[Network, DemandTable]:
    return parse_tntp(Path(net_path).read_text(), Path(trips_path).read_text())


def sioux_falls() -> tuple[Network, DemandTable]:
    """The bundled Sioux Falls instance (24 nodes, 76 links, 360600 trips)."""
    data = resources.files("ngev_assign") / "data"
    return parse_tntp(
        (data / "SiouxFalls_net.tntp").read_text(),
        (data / "SiouxFalls_trips.tntp").read_text(),
    )


# --------------------------------------------------------------------------
# Shortest paths and grids
# --------------------------------------------------------------------------


def sp_distance_table(network: Network, costs, destinations=None) -> np.ndarray:
    """Shortest-path cost from every node to each destination.

    Returns an array of shape ``(len(destinations), n_nodes)`` with ``+inf``
    where the destination cannot be reached.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.shape != (network.n_links,):
        raise StructureError("costs need one entry per link")
    if np.any(~(costs > 0)):
        raise ValidationError("shortest-path costs must be strictly positive")
    n = network.n_nodes
    if destinations is None:
        destinations = np.arange(n)
    destinations = np.atleast_1d(np.asarray(destinations, dtype=np.int64))
    if destinations.size == 0:
        return np.zeros((0, n))
    # reversed graph: distances from d on it are distances to d on the original
    rev = csr_matrix((costs, (network.head, network.tail)), shape=(n, n))
    return dijkstra(rev, directed=True, indices=destinations)


def generate_grid(k: int, reference_flow: float, decay: float = 0.1, free_flow_cost: float = 1.0,
                  capacity: float = 10000.0) -> tuple[Network, DemandTable]:
    """Bidirectional (4k+1)x(4k+1) lattice with gravity-model demand.

    OD nodes sit on the even-spaced sub-lattice at points (2a, 2b) with
    a + b even, which gives 2k(k+1)+1 of them. Each OD node is both origin
    and destination; origin ``o`` generates ``out_degree(o) * reference_flow``
    split over the other OD nodes by ``exp(-decay * free_flow_distance)``.
    """
    if int(k) != k or k < 1:
        raise ValidationError("grid size k must be a positive integer")
    if not reference_flow > 0 or not decay > 0:
        raise ValidationError("reference flow and decay must be positive")
    side = 4 * int(k) + 1
    node = lambda r, c: r * side + c  # noqa: E731
    links = []
    for r in range(side):
        for c in range(side):
            if c + 1 < side:
                links += [(node(r, c), node(r, c + 1)), (node(r, c + 1), node(r, c))]
            if r + 1 < side:
                links += [(node(r, c), node(r + 1, c)), (node(r + 1, c), node(r, c))]
    m = len(links)
    network = Network.from_links(side * side, links, np.full(m, float(free_flow_cost)), np.full(m, float(capacity)))
    od = sorted(node(2 * a, 2 * b) for a in range(2 * k + 1) for b in range(2 * k + 1) if (a + b) % 2 == 0)
    od = np.array(od, dtype=np.int64)
    dist = sp_distance_table(network, network.free_flow_cost, od)  # dist[d_row, o]
    q = np.zeros((od.size, network.n_nodes))
    out_deg = network.graph.out_degree
    for oi, o in enumerate(od):
        others = [di for di in range(od.size) if di != oi]
        w = np.exp(-decay * dist[others, o])
        q[others, o] = out_deg[o] * reference_flow * w / w.sum()
    return network, DemandTable(od, q)


# Nine-node cyclic example: a 3x3 lattice numbered row by row from 1, with
# two re-entry links (8-5, 6-5) that create cycles. Costs reproduce a
# known two-decimal loading table for the unit OD flow 1 -> 9.
CYCLIC_EXAMPLE_LINKS = (
    (1, 2, 2.0), (1, 4, 1.0), (2, 3, 2.0), (2, 5, 1.0), (3, 6, 1.0), (4, 5, 1.0), (5, 6, 1.0),
    (4, 7, 1.0), (5, 8, 1.0), (6, 9, 1.0), (7, 8, 2.0), (8, 9, 2.0), (8, 5, 1.0), (6, 5, 1.0),
)


def cyclic_example(costs=None, demand: float = 1.0) -> tuple[Network, DemandTable]:
    """The nine-node cyclic example network with a single OD pair 1 -> 9.

    ``costs`` overrides the default link costs (in ``CYCLIC_EXAMPLE_LINKS``
    order). Capacities are effectively unbounded.
    """
    links = [(a - 1, b - 1) for a, b, _ in CYCLIC_EXAMPLE_LINKS]
    c = np.array([w for _, _, w in CYCLIC_EXAMPLE_LINKS]) if costs is None else np.asarray(costs, float)
    network = Network.from_links(9, links, c)
    return network, DemandTable.from_pairs(9, {(0, 8): float(demand)})
