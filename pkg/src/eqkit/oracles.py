"""Slow, independent reference computations used to validate the solvers.

Everything here is deliberately brute-force and shares no code with the
recursion- and prox-based solver modules beyond the network primitives
(cost functions, adjacency).  Log-sum-exp and softmax come from scipy so even
the floating-point kernels differ from the hand-written ones under test.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .network import Network, edge_cost

logger = logging.getLogger(__name__)


class OracleError(RuntimeError):
    """An oracle could not produce a trustworthy answer."""


@dataclass(frozen=True)
class OracleReport:
    """Outcome of one verification check."""

    name: str
    passed: bool
    computed: float
    expected: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def absolute_deviation(self) -> float:
        return abs(self.computed - self.expected)

    @property
    def relative_deviation(self) -> float:
        return self.absolute_deviation / max(abs(self.expected), 1e-300)

    @classmethod
    def check(cls, name: str, computed: float, expected: float, tolerance: float,
              relative: bool = False, **details) -> "OracleReport":
        """Build a report whose pass flag is derived from the stated tolerance."""
        dev = abs(float(computed) - float(expected))
        if relative:
            dev /= max(abs(float(expected)), 1e-300)
        return cls(
            name=name,
            passed=bool(dev <= tolerance),
            computed=float(computed),
            expected=float(expected),
            tolerance=float(tolerance),
            details={"relative": relative, **details},
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "computed": float(self.computed),
            "expected": float(self.expected),
            "absolute_deviation": float(self.absolute_deviation),
            "relative_deviation": float(self.relative_deviation),
            "tolerance": float(self.tolerance),
            "details": {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _simple_paths(network: Network, origin: int, sink: int, limit: int = 200_000):
    """All simple paths origin -> sink as edge-index tuples (plain DFS)."""
    out = []
    head = network.edge_head
    stack = [(origin, (), frozenset((origin,)))]
    while stack:
        v, edges, seen = stack.pop()
        if v == sink:
            out.append(edges)
            if len(out) > limit:
                raise OracleError("path enumeration limit exceeded")
            continue
        for e in network.out_edges(v):
            h = int(head[e])
            if h not in seen:
                stack.append((h, edges + (int(e),), seen | {h}))
    return out


def psi_by_enumeration(network: Network, od_index: int, t: np.ndarray, gamma: float) -> float:
    """gamma * psi_w(t/gamma) for one OD pair by explicit path enumeration."""
    t = np.asarray(t, dtype=float)
    origin = int(network.od_origin[od_index])
    sink = int(network.od_dest[od_index])
    paths = _simple_paths(network, origin, sink)
    if not paths:
        raise OracleError("OD pair has no simple path")
    costs = np.array([t[list(p)].sum() for p in paths])
    if gamma == 0.0:
        return float(-costs.min())
    return float(gamma * logsumexp(-costs / gamma))


def path_count(network: Network, od_index: int) -> int:
    """Number of simple paths of an OD pair (enumeration-based)."""
    return len(_simple_paths(network, int(network.od_origin[od_index]), int(network.od_dest[od_index])))


def _require_parallel(network: Network):
    o = np.unique(network.od_origin)
    d = np.unique(network.od_dest)
    if o.size != 1 or d.size != 1:
        raise OracleError("parallel-link oracle needs a single OD pair")
    o, d = int(o[0]), int(d[0])
    if not (np.all(network.edge_tail == o) and np.all(network.edge_head == d)):
        raise OracleError("parallel-link oracle needs every edge to connect origin to destination")
    return float(network.od_demand.sum())


def logit_fixed_point_parallel(
    network: Network, gamma: float, tol: float = 1e-12, max_iter: int = 200_000
) -> np.ndarray:
    """Equilibrium flows on parallel links by damped fixed-point iteration.

    Iterates f <- (1-beta) f + beta * d * softmax(-tau(f)/gamma), halving the
    damping when the residual grows, until the fixed-point residual
    ||f - d*softmax(-tau(f)/gamma)||_inf falls below ``tol``.
    """
    if gamma <= 0:
        raise OracleError("fixed-point oracle needs gamma > 0")
    d = _require_parallel(network)
    m = network.n_edges
    f = np.full(m, d / m)
    beta = 1.0
    res_prev = math.inf
    for _ in range(max_iter):
        target = d * softmax(-edge_cost(network.cost, f) / gamma)
        res = float(np.abs(f - target).max())
        if res <= tol:
            return f
        if res > res_prev and beta > 1e-6:
            beta *= 0.5
        res_prev = res
        f = (1.0 - beta) * f + beta * target
    raise OracleError(f"fixed point did not converge (residual {res_prev:.3e})")


def wardrop_parallel(network: Network, tol: float = 1e-13) -> np.ndarray:
    """Deterministic equilibrium flows on parallel links by bisection.

    Finds the common travel time T such that the link flows solving
    tau_e(f_e) = T (zero for links with tau_e(0) > T) absorb the whole demand.
    Links with constant time (sd model, or bpr with rho = 0) act as steps: they
    absorb any amount (up to capacity for sd) once T reaches their t_free.
    """
    d = _require_parallel(network)
    c = network.cost
    t0 = np.asarray(c.t_free, dtype=float)
    cap = np.asarray(c.capacity, dtype=float)
    rho = np.asarray(c.rho, dtype=float)
    mu = np.asarray(c.mu_power, dtype=float)
    is_bpr = c.bpr_mask()
    smooth = is_bpr & (rho > 0)
    stepped = ~smooth

    def supply_smooth(T: float) -> np.ndarray:
        s = np.zeros(network.n_edges)
        act = smooth & (T > t0)
        s[act] = cap[act] * ((T - t0[act]) / (t0[act] * rho[act])) ** mu[act]
        return s

    def total(T: float) -> float:
        s = supply_smooth(T).sum()
        open_steps = stepped & (T > t0)
        if np.any(open_steps & is_bpr):
            return math.inf  # constant-cost bpr link absorbs anything
        return s + cap[open_steps].sum()

    lo = float(t0.min())
    hi = max(lo + 1.0, float(t0.max()) + 1.0)
    for _ in range(200):
        if total(hi) >= d:
            break
        hi *= 2.0
    else:
        raise OracleError("could not bracket the equilibrium time level")
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if total(mid) >= d:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    T = hi
    f = supply_smooth(T)
    rest = d - f.sum()
    if rest > 0:
        frontier = stepped & (t0 <= T + max(1e-9, 10 * tol * max(1.0, T)))
        for e in np.flatnonzero(frontier):
            take = rest if is_bpr[e] else min(rest, cap[e])
            f[e] += take
            rest -= take
            if rest <= 1e-12 * d:
                break
    if rest > 1e-6 * d:
        raise OracleError("bisection left demand unassigned")
    return f


def _project_scaled_simplex(y: np.ndarray, s: float) -> np.ndarray:
    """Euclidean projection of y onto {x >= 0, sum x = s} (sort-based)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - s
    ks = np.arange(1, y.size + 1)
    cond = u - css / ks > 0
    k = int(ks[cond][-1])
    theta = css[k - 1] / k
    return np.maximum(y - theta, 0.0)


def primal_minimize_tiny(network: Network, paths, gamma: float, iters: int = 200_000):
    """Projected-gradient reference minimiser of the path-flow objective.

    Deliberately simple and slow: fixed tiny step, Euclidean projection onto
    each demand simplex per iteration.  Suitable only for instances with a
    handful of paths.  Returns (x, objective value).
    """
    theta = paths.theta
    od_of_path = paths.od_of_path
    n = theta.shape[1]
    d = network.od_demand
    x = np.array([d[w] for w in od_of_path], dtype=float)
    counts = np.bincount(od_of_path, minlength=network.n_ods)
    x /= counts[od_of_path]
    floor = 1e-12 * d.min()
    tau_scale = float(np.max(edge_cost(network.cost, np.full(network.n_edges, d.sum()))))
    step = 0.02 / (1.0 + tau_scale + gamma * 20.0)
    for _ in range(iters):
        f = theta @ x
        g = theta.T @ edge_cost(network.cost, f)
        if gamma > 0:
            g = g + gamma * (np.log(np.maximum(x, floor) / d[od_of_path]) + 1.0)
        y = x - step * g
        for w in range(network.n_ods):
            sel = od_of_path == w
            x[sel] = _project_scaled_simplex(y[sel], d[w])
    f = theta @ x
    obj = float(np.sum(_integral(network, f)))
    if gamma > 0:
        xs = x[x > 0]
        dws = d[od_of_path][x > 0]
        obj += float(gamma * np.sum(xs * np.log(xs / dws)))
    return x, obj


def _integral(network: Network, f: np.ndarray) -> np.ndarray:
    from .network import edge_cost_integral

    return np.asarray(edge_cost_integral(network.cost, f))
