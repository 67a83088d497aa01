"""Smoothed shortest-path potentials, их gradients, and path sampling.

The soft minimum over the paths of one OD pair

    psi_w(t/gamma) = gamma * ln( sum_{p in P_w} exp(-g_p(t)/gamma) ),
    g_p(t) = sum of t_e over edges of p,

is computed without enumerating paths.  Two recursions are provided: an
ordered sweep per sink (exact on acyclic reaching subgraphs, O(m)), and a
layered horizon-H recursion (O(H*m)) that also covers cyclic graphs, where it
sums over walks of at most H edges.  Expected edge loads -- the exact gradient
of the smoothed potential -- follow from a forward mass-propagation pass (or
the adjoint sweep of the layered recursion).  All values are kept in time
units, i.e. the tables store gamma * psi(t/gamma); minus infinity marks
vertices with no path (walk) to the sink and is propagated algebraically.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .network import Network, sink_plan
from .oracles import OracleReport

logger = logging.getLogger(__name__)

_STEP_LIMIT_FACTOR = 1  # walk guard: m * |V| steps


class SolverError(RuntimeError):
    """Numerical or structural failure inside a solver or smoothing routine."""


@dataclass(frozen=True)
class DualPoint:
    """Per-edge time vector t together with the smoothing temperature gamma >= 0."""

    t: np.ndarray
    gamma: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        if t.ndim != 1 or not np.all(np.isfinite(t)):
            raise ValueError("t must be a 1-d finite array")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and nonnegative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "gamma", float(self.gamma))


@dataclass(frozen=True)
class PotentialTable:
    """Per-vertex smoothed cost-to-go values gamma*psi_{v,sink}(t/gamma); -inf = cannot reach."""

    sink: int
    values: np.ndarray
    gamma: float


@dataclass(frozen=True)
class LayeredTable:
    """Walk-sum tables from a fixed source vertex.

    ``a[l-1, j]`` aggregates walks source -> j with exactly l edges,
    ``b[l-1, j]`` with at most l edges, both as gamma-scaled log-sums
    (-inf where no such walk exists).
    """

    source: int
    a: np.ndarray
    b: np.ndarray
    gamma: float
    horizon: int


@dataclass(frozen=True)
class EdgeFlow:
    """Per-edge nonnegative flows."""

    f: np.ndarray


def log_sum_exp(values) -> float:
    """ln(sum  exp(v_i)) with max subtraction; empty or all -inf gives -inf."""
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        return -math.inf
    m = float(np.max(a))
    if not np.isfinite(m):
        if m == -math.inf:
            return -math.inf
        raise ValueError("log_sum_exp: +inf or nan input")
    return m + math.log(float(np.exp(a - m).sum()))


def _segment_lse(vals: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    """Per-segment ln-sum-exp of ``vals`` split at ``ptr`` (segments non-empty)."""
    m = np.maximum.reduceat(vals, ptr[:-1])
    safe = np.where(np.isfinite(m), m, 0.0)
    sums = np.add.reduceat(np.exp(vals - np.repeat(safe, np.diff(ptr))), ptr[:-1])
    with np.errstate(divide="ignore"):
        out = safe + np.log(sums)
    return np.where(m == -np.inf, -np.inf, out)


def _segment_first_argmax(vals: np.ndarray, ptr: np.ndarray) -> np.ndarray:
    """Index (into vals) of the first maximum of each segment."""
    m = np.maximum.reduceat(vals, ptr[:-1])
    pos = np.arange(vals.size)
    cand = np.where(vals == np.repeat(m, np.diff(ptr)), pos, vals.size)
    return np.minimum.reduceat(cand, ptr[:-1])


# -- ordered per-sink sweep ------------------------------------------------


def _potentials(network: Network, plan, t: np.ndarray, gamma: float) -> np.ndarray:
    phi = np.full(network.n_vertices, -np.inf)
    phi[plan.sink] = 0.0
    head = network.edge_head
    for verts, ptr, edges in zip(plan.group_vertices, plan.group_ptr, plan.group_edges):
        scores = phi[head[edges]] - t[edges]
        if gamma == 0.0:
            phi[verts] = np.maximum.reduceat(scores, ptr[:-1])
        else:
            phi[verts] = gamma * _segment_lse(scores / gamma, ptr)
    return phi


def psi_sink_ordered(network: Network, sink: int, dual_point: DualPoint) -> PotentialTable:
    """Smoothed cost-to-go of every vertex toward ``sink`` via one ordered sweep.

    Requires the subgraph reaching the sink to be acyclic; raises
    :class:`SolverError` otherwise (use the layered recursion there).
    """
    _check_t(network, dual_point)
    plan = sink_plan(network, sink)
    if not plan.valid:
        raise SolverError(
            f"sink {network.vertex_labels[sink]!r}: reaching subgraph has a directed cycle; "
            "no ordered sweep exists"
        )
    phi = _potentials(network, plan, dual_point.t, dual_point.gamma)
    return PotentialTable(sink=sink, values=phi, gamma=dual_point.gamma)


def _expected_flows_sink(network, plan, phi, t, gamma, origins, demands):
    n, m = network.n_vertices, network.n_edges
    load = np.zeros(m)
    mass = np.zeros(n)
    np.add.at(mass, origins, demands)
    head = network.edge_head
    for verts, ptr, edges in zip(
        reversed(plan.group_vertices), reversed(plan.group_ptr), reversed(plan.group_edges)
    ):
        mv = mass[verts]
        if not np.any(mv != 0.0):
            continue
        scores = phi[head[edges]] - t[edges]
        if gamma == 0.0:
            w = np.zeros(edges.size)
            w[_segment_first_argmax(scores, ptr)] = 1.0
        else:
            w = np.exp((scores - np.repeat(phi[verts], np.diff(ptr))) / gamma)
        contrib = np.repeat(mv, np.diff(ptr)) * w
        load[edges] += contrib
        mass += np.bincount(head[edges], weights=contrib, minlength=n)
    return load


# -- layered horizon-H recursion --------------------------------------------


def _layer_structs(network: Network, reverse: bool):
    """Static grouping for one layer update.

    Forward (reverse=False): the new value of a vertex aggregates its in-edges,
    reading the previous value at the tail.  Reversed: aggregates out-edges,
    reading at the head (used for sink-anchored tables).
    """
    if reverse:
        ptr, edges = network._out_ptr, network._out_edges
        nbr = network.edge_head
    else:
        ptr, edges = network._in_ptr, network._in_edges
        nbr = network.edge_tail
    deg = np.diff(ptr)
    nz = np.flatnonzero(deg > 0)
    if nz.size:
        grouped = np.concatenate([edges[ptr[v]:ptr[v + 1]] for v in nz])
    else:
        grouped = edges[:0]
    nz_ptr = np.concatenate(([0], np.cumsum(deg[nz])))
    return nz, nz_ptr, grouped, nbr


def _layered_tables(network: Network, t, gamma, start, horizon, reverse=False):
    nz, nz_ptr, grouped, nbr = _layer_structs(network, reverse)
    n = network.n_vertices
    nbr_of_grouped = nbr[grouped]
    t_grouped = t[grouped]
    v_prev = np.full(n, -np.inf)
    v_prev[start] = 0.0
    a_layers = np.full((horizon, n), -np.inf)
    b_layers = np.full((horizon, n), -np.inf)
    b = np.full(n, -np.inf)
    for layer in range(horizon):
        scores = v_prev[nbr_of_grouped] - t_grouped
        a = np.full(n, -np.inf)
        if gamma == 0.0:
            a[nz] = np.maximum.reduceat(scores, nz_ptr[:-1]) if nz.size else 0.0
            b = np.maximum(b, a)
        else:
            a[nz] = gamma * _segment_lse(scores / gamma, nz_ptr)
            b = gamma * np.logaddexp(b / gamma, a / gamma)
        a_layers[layer] = a
        b_layers[layer] = b
        v_prev = a
    return a_layers, b_layers


def psi_source_layered(network: Network, source: int, dual_point: DualPoint, horizon: int | None = None) -> LayeredTable:
    """Horizon-limited walk-sum tables from ``source`` (works on cyclic graphs).

    With ``horizon`` >= the longest path length this reproduces the path sum on
    acyclic graphs; on cyclic graphs it aggregates walks of at most ``horizon``
    edges, so values grow with the horizon.  Default horizon is |V| - 1.
    """
    _check_t(network, dual_point)
    if horizon is None:
        horizon = max(network.n_vertices - 1, 1)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    a, b = _layered_tables(network, dual_point.t, dual_point.gamma, source, horizon, reverse=False)
    return LayeredTable(source=source, a=a, b=b, gamma=dual_point.gamma, horizon=horizon)


def _layered_flows_sink(network, t, gamma, sink, horizon, origins, demands):
    """Exact gradient (expected traversal counts) of the sink-anchored layered sums."""
    if gamma == 0.0:
        raise SolverError("deterministic loading via the layered recursion is not supported")
    n, m = network.n_vertices, network.n_edges
    a, _b = _layered_tables(network, t, gamma, sink, horizon, reverse=True)
    # a[l-1, v] = gamma-scaled sum over walks v -> sink with exactly l edges
    seed = np.full(n, -np.inf)
    seed[sink] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        b_total = gamma * np.log(np.sum(np.exp(a / gamma), axis=0))
        b_total = np.where(np.all(a == -np.inf, axis=0), -np.inf, b_total)
    lam_direct = np.zeros((horizon, n))
    for w_origin, w_demand in zip(origins, demands):
        if b_total[w_origin] == -np.inf:
            raise SolverError("demand origin cannot reach its sink within the horizon")
        lam_direct[:, w_origin] += w_demand * np.exp((a[:, w_origin] - b_total[w_origin]) / gamma)
    tail, head = network.edge_tail, network.edge_head
    load = np.zeros(m)
    carried = np.zeros(n)
    for layer in range(horizon - 1, -1, -1):
        lam = lam_direct[layer] + carried
        prev = a[layer - 1] if layer > 0 else seed
        with np.errstate(invalid="ignore"):
            p = np.exp((prev[head] - t - a[layer][tail]) / gamma)
        p[~np.isfinite(a[layer][tail])] = 0.0
        p[~np.isfinite(prev[head])] = 0.0
        contrib = lam[tail] * p
        load += contrib
        carried = np.bincount(head, weights=contrib, minlength=n)
    return load


# -- totals and gradients ----------------------------------------------------


def _check_t(network: Network, dual_point: DualPoint) -> None:
    if dual_point.t.size != network.n_edges:
        raise ValueError("dual point has wrong number of edges")


def _sink_value_and_flows(network, sink, t, gamma, want_flows):
    ods = network.ods_for_sink(sink)
    origins = network.od_origin[ods]
    demands = network.od_demand[ods]
    plan = sink_plan(network, sink)
    if plan.valid:
        phi = _potentials(network, plan, t, gamma)
        vals = phi[origins]
        if np.any(vals == -np.inf):
            raise SolverError("an OD pair lost reachability during the sweep")
        value = float(np.dot(demands, vals))
        flows = (
            _expected_flows_sink(network, plan, phi, t, gamma, origins, demands)
            if want_flows
            else None
        )
        return value, flows
    horizon = max(network.n_vertices - 1, 1)
    a, b = _layered_tables(network, t, gamma, sink, horizon, reverse=True)
    vals = b[-1, origins]
    if np.any(vals == -np.inf):
        raise SolverError("an OD pair cannot reach its sink within the layered horizon")
    value = float(np.dot(demands, vals))
    flows = (
        _layered_flows_sink(network, t, gamma, sink, horizon, origins, demands)
        if want_flows
        else None
    )
    return value, flows


def _value_and_flows(network: Network, t: np.ndarray, gamma: float, want_flows=True, threads=1):
    sinks = network.sinks()
    if threads > 1 and sinks.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda s: _sink_value_and_flows(network, int(s), t, gamma, want_flows), sinks)
            )
    else:
        results = [_sink_value_and_flows(network, int(s), t, gamma, want_flows) for s in sinks]
    # fixed summation order by sink index regardless of completion order
    value = 0.0
    flows = np.zeros(network.n_edges) if want_flows else None
    for v, fl in results:
        value += v
        if want_flows:
            flows += fl
    return value, flows


def psi_total(network: Network, dual_point: DualPoint, threads: int = 1) -> float:
    """Demand-weighted total gamma*psi(t/gamma) = sum_w d_w * gamma*psi_w(t/gamma).

    Sinks with an acyclic reaching subgraph use the ordered sweep; the others
    fall back to the layered recursion with horizon |V| - 1.
    """
    _check_t(network, dual_point)
    value, _ = _value_and_flows(network, dual_point.t, dual_point.gamma, want_flows=False, threads=threads)
    return value


def flow_from_dual(network: Network, dual_point: DualPoint, threads: int = 1) -> EdgeFlow:
    """Expected edge loads: the exact negative gradient of psi_total in t."""
    _check_t(network, dual_point)
    _, flows = _value_and_flows(network, dual_point.t, dual_point.gamma, want_flows=True, threads=threads)
    return EdgeFlow(f=flows)


def psi_and_flow(network: Network, dual_point: DualPoint, threads: int = 1):
    """psi_total and flow_from_dual from a single pass; the solvers' hot path."""
    _check_t(network, dual_point)
    value, flows = _value_and_flows(network, dual_point.t, dual_point.gamma, want_flows=True, threads=threads)
    return value, EdgeFlow(f=flows)


def transition_probabilities(network: Network, table: PotentialTable, dual_point: DualPoint, vertex: int):
    """Edge choice probabilities out of ``vertex`` toward ``table.sink``.

    Ratios of exponentials are evaluated max-relative (softmax form), so every
    numerator is the exp of a nonpositive difference.
    Returns (edge_ids, probabilities).
    """
    if table.gamma != dual_point.gamma:
        raise ValueError("potential table does not match the dual point")
    plan = sink_plan(network, table.sink)
    if not plan.valid:
        raise SolverError("transition probabilities need an orderable sink")
    edges = plan.out_reach.get(int(vertex))
    if edges is None or edges.size == 0:
        raise SolverError("vertex has no edge toward the sink")
    probs = _transition_probs(table.values, table.gamma, dual_point.t, network.edge_head[edges], edges)
    return edges, probs


def _transition_probs(phi, gamma, t, heads, edges):
    scores = phi[heads] - t[edges]
    if gamma == 0.0:
        p = np.zeros(edges.size)
        p[int(np.argmax(scores))] = 1.0
        return p
    z = (scores - scores.max()) / gamma
    w = np.exp(z)
    return w / w.sum()


def sample_path(network: Network, od_index: int, dual_point: DualPoint, rng: np.random.Generator, potentials: PotentialTable | None = None) -> np.ndarray:
    """Draw one path of the Gibbs path distribution of OD pair ``od_index``.

    Walks from the origin choosing each edge with probability
    exp((phi_head - t_e - phi_tail)/gamma); requires an orderable sink.
    Returns the edge indices of the sampled path.
    """
    _check_t(network, dual_point)
    sink = int(network.od_dest[od_index])
    plan = sink_plan(network, sink)
    if not plan.valid:
        raise SolverError("path sampling requires an acyclic reaching subgraph")
    if potentials is None:
        potentials = psi_sink_ordered(network, sink, dual_point)
    elif potentials.sink != sink or potentials.gamma != dual_point.gamma:
        raise ValueError("potential table does not match the OD pair / dual point")
    phi = potentials.values
    t, gamma = dual_point.t, dual_point.gamma
    head = network.edge_head
    v = int(network.od_origin[od_index])
    path = []
    limit = network.n_edges * network.n_vertices + 1
    while v != sink:
        edges = plan.out_reach[v]
        probs = _transition_probs(phi, gamma, t, head[edges], edges)
        if edges.size == 1:
            k = 0
        elif gamma == 0.0:
            k = int(np.argmax(probs))
        else:
            k = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            k = min(k, edges.size - 1)
        e = int(edges[k])
        path.append(e)
        v = int(head[e])
        if len(path) >= limit:
            raise SolverError("sampled walk exceeded the step limit m*|V|")
    return np.asarray(path, dtype=np.int64)


def sample_stochastic_gradient(
    network: Network,
    dual_point: DualPoint,
    rng: np.random.Generator,
    potentials: dict[int, PotentialTable] | None = None,
) -> EdgeFlow:
    """One-sample unbiased estimate of the expected edge loads.

    Picks an OD pair with probability proportional to demand (cumulative-sum
    tree lookup), samples one path, and loads the total demand on its edges.
    The squared Euclidean norm of the estimate is at most H * (sum_w d_w)^2
    where H bounds the path length.
    """
    _check_t(network, dual_point)
    cum = np.cumsum(network.od_demand)
    total = cum[-1]
    k = int(np.searchsorted(cum, rng.random() * total, side="right"))
    k = min(k, network.n_ods - 1)
    table = None
    if potentials is not None:
        sink = int(network.od_dest[k])
        table = potentials.get(sink)
        if table is None:
            table = psi_sink_ordered(network, sink, dual_point)
            potentials[sink] = table
    path = sample_path(network, k, dual_point, rng, potentials=table)
    f = np.zeros(network.n_edges)
    np.add.at(f, path, total)
    return EdgeFlow(f=f)


def gumbel_check(
    network: Network,
    od_index: int,
    dual_point: DualPoint,
    n_samples: int,
    rng: np.random.Generator,
) -> OracleReport:
    """Monte-Carlo check of the max-of-perturbations identity.

    With iid noise xi_p = gamma*(G_p - EulerGamma), G_p standard Gumbel, the
    expectation of max_p(-g_p(t) + xi_p) equals gamma*psi_w(t/gamma).  Passes
    when the empirical mean is within 3 standard errors of the exact value.
    """
    _check_t(network, dual_point)
    if dual_point.gamma <= 0:
        raise ValueError("the identity is for gamma > 0")
    origin = int(network.od_origin[od_index])
    sink = int(network.od_dest[od_index])
    costs = _enumerate_path_costs(network, origin, sink, dual_point.t)
    gamma = dual_point.gamma
    exact = gamma * log_sum_exp(-np.asarray(costs) / gamma)
    g = np.asarray(costs)
    batch = 200_000 // max(len(costs), 1) + 1
    done = 0
    acc = 0.0
    acc2 = 0.0
    while done < n_samples:
        nb = min(batch, n_samples - done)
        xi = gamma * (rng.gumbel(size=(nb, g.size)) - np.euler_gamma)
        vals = np.max(-g + xi, axis=1)
        acc += float(vals.sum())
        acc2 += float((vals ** 2).sum())
        done += nb
    mean = acc / n_samples
    var = max(acc2 / n_samples - mean ** 2, 0.0)
    stderr = math.sqrt(var / n_samples)
    passed = abs(mean - exact) <= 3.0 * stderr + 1e-12
    return OracleReport(
        name="gumbel-identity",
        passed=bool(passed),
        computed=mean,
        expected=exact,
        tolerance=3.0 * stderr + 1e-12,
        details={"n_samples": n_samples, "stderr": stderr, "n_paths": len(costs)},
    )


def _enumerate_path_costs(network: Network, origin: int, sink: int, t: np.ndarray, limit: int = 100_000):
    """Costs of all simple paths origin -> sink (diagnostic-scale DFS)."""
    reach = sink_plan(network, sink).reach
    head = network.edge_head
    costs = []
    stack = [(origin, 0.0, frozenset((origin,)))]
    while stack:
        v, c, seen = stack.pop()
        if v == sink:
            costs.append(c)
            if len(costs) > limit:
                raise SolverError("too many paths to enumerate")
            continue
        for e in network.out_edges(v):
            h = int(head[e])
            if reach[h] and h not in seen:
                stack.append((h, c + float(t[e]), seen | {h}))
    if not costs:
        raise SolverError("OD pair has no path")
    return costs
