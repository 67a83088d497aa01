"""Directed road networks: link cost models, their conjugates, and instance loading.

A network is a directed multigraph with per-edge travel-time functions and a
list of origin-destination (OD) demands.  Two cost models are supported:

* ``bpr``   -- polynomial congestion: tau(f) = t_free * (1 + rho * (f/capacity)**(1/mu_power))
* ``sd``    -- stable dynamics: constant time t_free while f <= capacity

All heavy numerics are vectorised over edges; per-edge scalar access goes
through :class:`CostParams`.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

BPR = "bpr"
STABLE_DYNAMICS = "sd"

EDGE_COLUMNS = ("tail", "head", "t_free", "capacity", "rho", "mu_power", "model")
TRIP_COLUMNS = ("origin", "destination", "demand")


class NetworkError(ValueError):
    """Malformed instance data: bad CSV fields, unknown vertices, unreachable demand."""


@dataclass(frozen=True)
class CostParams:
    """Per-edge cost parameters; fields may be scalars or aligned numpy arrays.

    ``mu_power`` is the exponent parameter mu in tau(f) = t_free*(1 + rho*(f/capacity)**(1/mu));
    the textbook polynomial link-time function corresponds to mu_power = 0.25.
    For ``sd`` edges ``rho`` and ``mu_power`` are unused.
    """

    t_free: np.ndarray | float
    capacity: np.ndarray | float
    rho: np.ndarray | float = 1.0
    mu_power: np.ndarray | float = 0.25
    model: np.ndarray | str = BPR

    def bpr_mask(self) -> np.ndarray:
        """Boolean mask of edges following the polynomial (bpr) model."""
        return np.asarray(self.model) == BPR


def _as_arrays(params: CostParams):
    t0 = np.asarray(params.t_free, dtype=float)
    cap = np.asarray(params.capacity, dtype=float)
    rho = np.asarray(params.rho, dtype=float)
    mu = np.asarray(params.mu_power, dtype=float)
    return t0, cap, rho, mu


def validate_cost_params(params: CostParams) -> None:
    t0, cap, rho, mu = _as_arrays(params)
    model = np.asarray(params.model)
    bad = ~np.isin(model, (BPR, STABLE_DYNAMICS))
    if np.any(bad):
        raise NetworkError(f"unknown cost model(s): {np.unique(model[bad])!r}")
    if np.any(~np.isfinite(t0)) or np.any(t0 <= 0):
        raise NetworkError("t_free must be finite and positive")
    if np.any(~np.isfinite(cap)) or np.any(cap <= 0):
        raise NetworkError("capacity must be finite and positive")
    is_bpr = model == BPR
    if np.any(is_bpr & (~np.isfinite(rho) | (rho < 0))):
        raise NetworkError("rho must be finite and nonnegative on bpr edges")
    if np.any(is_bpr & (rho > 0) & (~np.isfinite(mu) | (mu <= 0))):
        raise NetworkError("mu_power must be finite and positive on bpr edges")


def edge_cost(params: CostParams, f_e) -> np.ndarray | float:
    """Travel time tau_e(f_e) of each edge at flow f_e >= 0.

    Hard-capacity (``sd``) edges have no finite travel time above capacity;
    flows beyond it are rejected.
    """
    f = np.asarray(f_e, dtype=float)
    if np.any(f < 0):
        raise ValueError("edge flow must be nonnegative")
    t0, cap, rho, mu = _as_arrays(params)
    bpr = np.asarray(params.model) == BPR
    if np.any(~bpr & (f > cap * (1.0 + 1e-12) + 1e-12)):
        raise ValueError("flow above capacity on a hard-capacity edge: travel time is undefined")
    out = np.broadcast_arrays(t0, f)[0].astype(float).copy()
    if np.any(bpr):
        cong = t0 * (1.0 + rho * (f / cap) ** (1.0 / mu))
        out = np.where(bpr, cong, out)
    return out if out.ndim else float(out)


def edge_cost_integral(params: CostParams, f_e) -> np.ndarray | float:
    """Integral sigma_e(f_e) of the travel time from 0 to f_e.

    For ``sd`` edges this is t_free * f_e; the capacity bound f_e <= capacity
    is a constraint of the surrounding optimisation problem, not of sigma.
    """
    f = np.asarray(f_e, dtype=float)
    if np.any(f < 0):
        raise ValueError("edge flow must be nonnegative")
    t0, cap, rho, mu = _as_arrays(params)
    bpr = np.asarray(params.model) == BPR
    linear = t0 * f
    if not np.any(bpr):
        return linear if linear.ndim else float(linear)
    cong = linear + t0 * rho * cap * (f / cap) ** (1.0 + 1.0 / mu) * (mu / (1.0 + mu))
    out = np.where(bpr, cong, linear)
    return out if out.ndim else float(out)


def _check_domain(t, t0):
    slack = 1e-9 * (1.0 + np.abs(t0))
    if np.any(t < t0 - slack):
        raise ValueError("dual time below free-flow time: outside the conjugate domain")
    return np.maximum(t, t0)


def conjugate_cost(params: CostParams, t_e) -> np.ndarray | float:
    """Convex conjugate sigma*_e(t_e) of the cost integral, for t_e >= t_free.

    bpr:  capacity * ((t-t_free)/(t_free*rho))**mu * (t-t_free) / (1+mu)
    sd:   capacity * (t - t_free)

    bpr edges with rho = 0 have constant cost; their conjugate is 0 at
    t = t_free and +inf above it, so any t > t_free is rejected.
    """
    t = np.asarray(t_e, dtype=float)
    t0, cap, rho, mu = _as_arrays(params)
    t = _check_domain(t, t0)
    bpr = np.asarray(params.model) == BPR
    excess = t - t0
    out = np.broadcast_arrays(cap * excess, t)[0].astype(float).copy()
    frozen = bpr & np.broadcast_to(rho == 0, out.shape)
    if np.any(frozen & (np.broadcast_to(excess, out.shape) > 1e-9 * (1.0 + np.abs(t0)))):
        raise ValueError("conjugate is unbounded above t_free on a constant-cost bpr edge")
    if np.any(bpr):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rho > 0, excess / (t0 * np.where(rho > 0, rho, 1.0)), 0.0)
            val = cap * ratio ** mu * excess / (1.0 + mu)
        out = np.where(bpr, np.where(np.broadcast_to(rho == 0, out.shape), 0.0, val), out)
    return out if out.ndim else float(out)


def conjugate_cost_gradient(params: CostParams, t_e) -> np.ndarray | float:
    """Derivative of sigma*_e at t_e: the flow whose travel time equals t_e.

    For ``sd`` edges the conjugate is piecewise linear; the convention here is
    0 exactly at t = t_free and capacity above it.
    """
    t = np.asarray(t_e, dtype=float)
    t0, cap, rho, mu = _as_arrays(params)
    t = _check_domain(t, t0)
    bpr = np.asarray(params.model) == BPR
    excess = t - t0
    interior = np.broadcast_to(excess, np.broadcast_shapes(excess.shape, np.shape(cap))) > 0
    out = np.where(interior, cap, 0.0).astype(float)
    if np.any(bpr):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rho > 0, excess / (t0 * np.where(rho > 0, rho, 1.0)), 0.0)
            val = cap * ratio ** mu
        out = np.where(bpr, np.where(np.broadcast_to(rho == 0, out.shape), 0.0, val), out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TopologicalOrder:
    """Vertex order over the subgraph that can reach ``sink``.

    ``order`` lists exactly the vertices with a directed path to the sink,
    sink last; when ``valid`` every edge between listed vertices goes forward
    in the order.  ``valid`` is False when that subgraph contains a cycle,
    in which case ``order`` is empty.
    """

    sink: int
    order: np.ndarray
    valid: bool
    reach: np.ndarray  # boolean mask over vertices


class Network:
    """Immutable directed multigraph with edge costs and OD demands.

    Vertices are referred to by integer index; ``vertex_labels`` keeps the
    original identifiers from the input files.  Parallel edges are allowed by
    default (they are distinct edges with distinct indices); self-loops are
    rejected by default.  Both are configurable.
    """

    def __init__(
        self,
        n_vertices: int,
        edge_tail: Sequence[int],
        edge_head: Sequence[int],
        cost: CostParams,
        od_origin: Sequence[int],
        od_dest: Sequence[int],
        od_demand: Sequence[float],
        vertex_labels: Sequence[str] | None = None,
        allow_self_loops: bool = False,
        allow_parallel_edges: bool = True,
    ):
        self._allow_self_loops = bool(allow_self_loops)
        self._allow_parallel_edges = bool(allow_parallel_edges)
        self.n_vertices = int(n_vertices)
        self.edge_tail = np.ascontiguousarray(edge_tail, dtype=np.int64)
        self.edge_head = np.ascontiguousarray(edge_head, dtype=np.int64)
        if self.edge_tail.shape != self.edge_head.shape or self.edge_tail.ndim != 1:
            raise NetworkError("edge_tail/edge_head must be 1-d arrays of equal length")
        self.n_edges = self.edge_tail.size
        t0, cap, rho, mu = (np.broadcast_to(a, (self.n_edges,)).astype(float) for a in _as_arrays(cost))
        model = np.broadcast_to(np.asarray(cost.model), (self.n_edges,)).copy()
        self.cost = CostParams(t0.copy(), cap.copy(), rho.copy(), mu.copy(), model)
        validate_cost_params(self.cost)
        self.od_origin = np.ascontiguousarray(od_origin, dtype=np.int64)
        self.od_dest = np.ascontiguousarray(od_dest, dtype=np.int64)
        self.od_demand = np.ascontiguousarray(od_demand, dtype=float)
        self.n_ods = self.od_origin.size
        if vertex_labels is None:
            vertex_labels = [str(i) for i in range(self.n_vertices)]
        self.vertex_labels = list(vertex_labels)
        self._validate_structure()
        self._out_ptr, self._out_edges = _adjacency(self.edge_tail, self.n_vertices)
        self._in_ptr, self._in_edges = _adjacency(self.edge_head, self.n_vertices)
        self._sink_orders: dict[int, TopologicalOrder] = {}
        self._sink_plans: dict[int, "_SinkPlan"] = {}
        self._validate_reachability()

    # -- validation -----------------------------------------------------

    def _validate_structure(self) -> None:
        for name, arr in (("edge endpoints", self.edge_tail), ("edge endpoints", self.edge_head)):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_vertices):
                raise NetworkError(f"{name} out of range")
        if self.n_edges == 0:
            raise NetworkError("network has no edges")
        if len(self.vertex_labels) != self.n_vertices:
            raise NetworkError("vertex_labels length mismatch")
        if not (self.od_origin.shape == self.od_dest.shape == self.od_demand.shape):
            raise NetworkError("OD arrays must have equal length")
        if self.n_ods == 0:
            raise NetworkError("instance has no OD pairs")
        for arr in (self.od_origin, self.od_dest):
            if arr.min() < 0 or arr.max() >= self.n_vertices:
                raise NetworkError("OD endpoint out of range")
        if np.any(~np.isfinite(self.od_demand)) or np.any(self.od_demand <= 0):
            raise NetworkError("demand must be finite and positive")
        if np.any(self.od_origin == self.od_dest):
            k = int(np.argmax(self.od_origin == self.od_dest))
            raise NetworkError(f"OD pair {k}: origin equals destination")
        if not self._allow_self_loops and np.any(self.edge_tail == self.edge_head):
            e = int(np.argmax(self.edge_tail == self.edge_head))
            raise NetworkError(f"edge {e}: self-loop at {self.vertex_labels[self.edge_tail[e]]!r}")
        if not self._allow_parallel_edges:
            pairs = set()
            for e in range(self.n_edges):
                pair = (int(self.edge_tail[e]), int(self.edge_head[e]))
                if pair in pairs:
                    raise NetworkError(f"edge {e}: parallel edge "
                                       f"{self.vertex_labels[pair[0]]!r} -> {self.vertex_labels[pair[1]]!r}")
                pairs.add(pair)

    def _validate_reachability(self) -> None:
        by_dest: dict[int, list[int]] = {}
        for k in range(self.n_ods):
            by_dest.setdefault(int(self.od_dest[k]), []).append(k)
        for dest, ks in by_dest.items():
            reach = self._reaches(dest)
            for k in ks:
                if not reach[self.od_origin[k]]:
                    o, d = self.od_origin[k], self.od_dest[k]
                    raise NetworkError(
                        f"OD pair {k}: unreachable: no directed path from "
                        f"{self.vertex_labels[o]!r} to {self.vertex_labels[d]!r}"
                    )

    def _reaches(self, sink: int) -> np.ndarray:
        """Vertices with a directed path to ``sink`` (the sink included)."""
        reach = np.zeros(self.n_vertices, dtype=bool)
        reach[sink] = True
        stack = [sink]
        while stack:
            v = stack.pop()
            for e in self._in_edges[self._in_ptr[v]:self._in_ptr[v + 1]]:
                u = self.edge_tail[e]
                if not reach[u]:
                    reach[u] = True
                    stack.append(int(u))
        return reach

    # -- cost shortcuts over all edges ----------------------------------

    def edge_costs(self, f: np.ndarray) -> np.ndarray:
        return edge_cost(self.cost, f)

    def cost_integrals(self, f: np.ndarray) -> np.ndarray:
        return edge_cost_integral(self.cost, f)

    def conjugates(self, t: np.ndarray) -> np.ndarray:
        return conjugate_cost(self.cost, t)

    def conjugate_gradients(self, t: np.ndarray) -> np.ndarray:
        return conjugate_cost_gradient(self.cost, t)

    @property
    def t_free(self) -> np.ndarray:
        return self.cost.t_free

    @property
    def total_demand(self) -> float:
        return float(self.od_demand.sum())

    def out_edges(self, v: int) -> np.ndarray:
        return self._out_edges[self._out_ptr[v]:self._out_ptr[v + 1]]

    def in_edges(self, v: int) -> np.ndarray:
        return self._in_edges[self._in_ptr[v]:self._in_ptr[v + 1]]

    def sinks(self) -> np.ndarray:
        """Distinct OD destinations in increasing vertex order."""
        return np.unique(self.od_dest)

    def ods_for_sink(self, sink: int) -> np.ndarray:
        return np.flatnonzero(self.od_dest == sink)

    def topological_order(self, sink: int) -> TopologicalOrder:
        if sink not in self._sink_orders:
            self._sink_orders[sink] = topological_order(self, sink)
        return self._sink_orders[sink]

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"Network(|V|={self.n_vertices}, |E|={self.n_edges}, "
            f"|OD|={self.n_ods}, demand={self.total_demand:g})"
        )


def _adjacency(endpoint: np.ndarray, n: int):
    """CSR-style grouping of edge indices by one endpoint array."""
    order = np.argsort(endpoint, kind="stable").astype(np.int64)
    counts = np.bincount(endpoint, minlength=n)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, order


def topological_order(network: Network, sink: int) -> TopologicalOrder:
    """Order the vertices that can reach ``sink`` so every edge goes forward.

    Kahn's algorithm on the reaching subgraph with smallest-index tie-breaking,
    so the result is deterministic.  ``valid`` is False when the reaching
    subgraph has a directed cycle.
    """
    if not 0 <= sink < network.n_vertices:
        raise NetworkError("sink out of range")
    reach = network._reaches(sink)
    sub = reach[network.edge_tail] & reach[network.edge_head]
    indeg = np.bincount(network.edge_head[sub], minlength=network.n_vertices)
    indeg[~reach] = -1
    import heapq

    ready = [int(v) for v in np.flatnonzero(reach) if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    sub_edge_ids = np.flatnonzero(sub)
    out_by_tail: dict[int, list[int]] = {}
    for e in sub_edge_ids:
        out_by_tail.setdefault(int(network.edge_tail[e]), []).append(int(e))
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for e in out_by_tail.get(v, ()):
            h = int(network.edge_head[e])
            indeg[h] -= 1
            if indeg[h] == 0:
                heapq.heappush(ready, h)
    valid = len(order) == int(reach.sum())
    if valid and order[-1] != sink:  # pragma: no cover - defensive; sink is the unique terminal
        order.remove(sink)
        order.append(sink)
    return TopologicalOrder(
        sink=sink,
        order=np.asarray(order if valid else [], dtype=np.int64),
        valid=valid,
        reach=reach,
    )


class _SinkPlan:
    """Static sweep schedule for one sink: level-batched edges of the reaching DAG.

    ``level[v]`` is the maximum edge count of a path v -> sink; vertices in one
    level never link to each other, so each level is processed with a handful
    of vectorised segment reductions.
    """

    def __init__(self, network: Network, sink: int):
        topo = network.topological_order(sink)
        self.sink = sink
        self.valid = topo.valid
        self.reach = topo.reach
        if not topo.valid:
            return
        n = network.n_vertices
        level = np.full(n, -1, dtype=np.int64)
        level[sink] = 0
        groups_vertices: list[np.ndarray] = []
        groups_ptr: list[np.ndarray] = []
        groups_edges: list[np.ndarray] = []
        self.out_reach: dict[int, np.ndarray] = {}
        # reverse topological order = sweep order (sink first)
        verts: list[int] = []
        ptr: list[int] = [0]
        edges: list[int] = []
        cur_level = 0
        for v in topo.order[::-1]:
            if v == sink:
                continue
            es = [int(e) for e in network.out_edges(int(v)) if topo.reach[network.edge_head[e]]]
            self.out_reach[int(v)] = np.asarray(es, dtype=np.int64)
            lv = 1 + max(level[network.edge_head[e]] for e in es)
            level[v] = lv
            if lv != cur_level:
                if verts:
                    groups_vertices.append(np.asarray(verts, dtype=np.int64))
                    groups_ptr.append(np.asarray(ptr, dtype=np.int64))
                    groups_edges.append(np.asarray(edges, dtype=np.int64))
                verts, ptr, edges = [], [0], []
                cur_level = lv
            verts.append(int(v))
            edges.extend(es)
            ptr.append(len(edges))
        if verts:
            groups_vertices.append(np.asarray(verts, dtype=np.int64))
            groups_ptr.append(np.asarray(ptr, dtype=np.int64))
            groups_edges.append(np.asarray(edges, dtype=np.int64))
        self.level = level
        self.group_vertices = groups_vertices
        self.group_ptr = groups_ptr
        self.group_edges = groups_edges
        self.max_level = int(level.max(initial=0))

    def longest_path(self, origin: int) -> int:
        """Edge count of the longest simple path origin -> sink (DAG case)."""
        return int(self.level[origin])


def sink_plan(network: Network, sink: int) -> _SinkPlan:
    plan = network._sink_plans.get(sink)
    if plan is None:
        plan = _SinkPlan(network, sink)
        network._sink_plans[sink] = plan
    return plan


# -- instance loading ----------------------------------------------------


def _open(path_or_file, mode="r"):
    if hasattr(path_or_file, "read") or hasattr(path_or_file, "write"):
        return path_or_file, False
    return open(path_or_file, mode, newline=""), True


def _parse_float(row_no: int, col: str, raw: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise NetworkError(f"row {row_no}: column {col!r}: not a number: {raw!r}") from None


def read_edges_csv(path_or_file):
    """Parse the edge CSV (columns: tail,head,t_free,capacity,rho,mu_power,model)."""
    f, close = _open(path_or_file)
    try:
        reader = csv.DictReader(f)
        missing = set(EDGE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise NetworkError(f"edge CSV missing columns: {sorted(missing)}")
        rows = []
        for i, row in enumerate(reader, start=2):
            model = (row["model"] or "").strip().lower()
            if model not in (BPR, STABLE_DYNAMICS):
                raise NetworkError(f"row {i}: unknown model {row['model']!r}")
            rows.append(
                (
                    row["tail"].strip(),
                    row["head"].strip(),
                    _parse_float(i, "t_free", row["t_free"]),
                    _parse_float(i, "capacity", row["capacity"]),
                    _parse_float(i, "rho", row["rho"]) if model == BPR else _maybe_float(row["rho"]),
                    _parse_float(i, "mu_power", row["mu_power"]) if model == BPR else _maybe_float(row["mu_power"]),
                    model,
                )
            )
        if not rows:
            raise NetworkError("edge CSV has no data rows")
        return rows
    finally:
        if close:
            f.close()


def _maybe_float(raw) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        return float("nan")


def read_trips_csv(path_or_file):
    """Parse the trips CSV (columns: origin,destination,demand)."""
    f, close = _open(path_or_file)
    try:
        reader = csv.DictReader(f)
        missing = set(TRIP_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise NetworkError(f"trips CSV missing columns: {sorted(missing)}")
        rows = [
            (row["origin"].strip(), row["destination"].strip(), _parse_float(i, "demand", row["demand"]))
            for i, row in enumerate(reader, start=2)
        ]
        if not rows:
            raise NetworkError("trips CSV has no data rows")
        return rows
    finally:
        if close:
            f.close()


def load_network(edges, trips, model_override: str | None = None,
                 allow_self_loops: bool = False, allow_parallel_edges: bool = True) -> Network:
    """Build a validated :class:`Network` from edge and trip tables.

    ``edges`` / ``trips`` may be CSV paths, open files, or pre-parsed row lists
    as returned by :func:`read_edges_csv` / :func:`read_trips_csv`.
    ``model_override`` forces every edge to the given cost model.
    """
    edge_rows = edges if isinstance(edges, list) else read_edges_csv(edges)
    trip_rows = trips if isinstance(trips, list) else read_trips_csv(trips)
    labels: list[str] = []
    index: dict[str, int] = {}
    for r in edge_rows:
        for lab in (r[0], r[1]):
            if lab not in index:
                index[lab] = len(labels)
                labels.append(lab)
    tails = np.array([index[r[0]] for r in edge_rows], dtype=np.int64)
    heads = np.array([index[r[1]] for r in edge_rows], dtype=np.int64)
    t0 = np.array([r[2] for r in edge_rows])
    cap = np.array([r[3] for r in edge_rows])
    rho = np.array([r[4] for r in edge_rows])
    mu = np.array([r[5] for r in edge_rows])
    model = np.array([r[6] for r in edge_rows], dtype=object)
    if model_override is not None:
        if model_override not in (BPR, STABLE_DYNAMICS):
            raise NetworkError(f"unknown model override {model_override!r}")
        model[:] = model_override
    is_bpr = model == BPR
    rho = np.where(is_bpr, rho, np.where(np.isfinite(rho), rho, 1.0))
    mu = np.where(is_bpr, mu, np.where(np.isfinite(mu), mu, 0.25))
    if np.any(is_bpr & ~np.isfinite(rho)):
        raise NetworkError("bpr edge lacks a rho value (model override from sd?)")
    if np.any(is_bpr & ~np.isfinite(mu)):
        raise NetworkError("bpr edge lacks a mu_power value (model override from sd?)")
    o_idx, d_idx, dem = [], [], []
    for i, (o, d, q) in enumerate(trip_rows, start=2):
        if o not in index:
            raise NetworkError(f"trips row {i}: unknown origin vertex {o!r}")
        if d not in index:
            raise NetworkError(f"trips row {i}: unknown destination vertex {d!r}")
        o_idx.append(index[o])
        d_idx.append(index[d])
        dem.append(q)
    return Network(
        n_vertices=len(labels),
        edge_tail=tails,
        edge_head=heads,
        cost=CostParams(t0, cap, rho, mu, model),
        od_origin=np.array(o_idx, dtype=np.int64),
        od_dest=np.array(d_idx, dtype=np.int64),
        od_demand=np.array(dem, dtype=float),
        vertex_labels=labels,
        allow_self_loops=allow_self_loops,
        allow_parallel_edges=allow_parallel_edges,
    )


# -- TNTP convenience converter ------------------------------------------


def convert_tntp(net_file, trips_file, edges_out, trips_out) -> None:
    """Convert a pair of community TNTP files to the CSV formats used here.

    Link records map as t_free = free_flow_time, rho = b, mu_power = 1/power,
    model = bpr.  Values are converted verbatim; validation happens on load.
    """
    links = _read_tntp_links(net_file)
    trips = _read_tntp_trips(trips_file)
    f, close = _open(edges_out, "w")
    try:
        w = csv.writer(f)
        w.writerow(EDGE_COLUMNS)
        for tail, head, cap, fft, b, power in links:
            mu = 1.0 / power if power else float("nan")
            w.writerow([tail, head, repr(fft), repr(cap), repr(b), repr(mu), BPR])
    finally:
        if close:
            f.close()
    f, close = _open(trips_out, "w")
    try:
        w = csv.writer(f)
        w.writerow(TRIP_COLUMNS)
        for o, d, q in trips:
            w.writerow([o, d, repr(q)])
    finally:
        if close:
            f.close()


def _tntp_payload(path) -> str:
    text = Path(path).read_text() if not hasattr(path, "read") else path.read()
    marker = "<END OF METADATA>"
    return text[text.index(marker) + len(marker):] if marker in text else text


def _read_tntp_links(path):
    links = []
    for line in _tntp_payload(path).splitlines():
        line = line.strip().rstrip(";").strip()
        if not line or line.startswith(("~", "<")):
            continue
        parts = line.split()
        if len(parts) < 7:
            raise NetworkError(f"TNTP link record too short: {line!r}")
        tail, head = parts[0], parts[1]
        cap, _length, fft, b, power = (float(x) for x in parts[2:7])
        links.append((tail, head, cap, fft, b, power))
    if not links:
        raise NetworkError("no link records found in TNTP net file")
    return links


def _read_tntp_trips(path):
    trips = []
    origin = None
    for line in _tntp_payload(path).splitlines():
        line = line.strip()
        if not line or line.startswith(("~", "<")):
            continue
        if line.lower().startswith("origin"):
            origin = line.split()[1]
            continue
        for chunk in line.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            if ":" not in chunk:
                raise NetworkError(f"TNTP trips record malformed: {chunk!r}")
            dest, q = chunk.split(":")
            if origin is None:
                raise NetworkError("TNTP trips record before any Origin header")
            q = float(q)
            if q > 0 and dest.strip() != origin:
                trips.append((origin, dest.strip(), q))
    if not trips:
        raise NetworkError("no positive demands found in TNTP trips file")
    return trips
