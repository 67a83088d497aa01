"""Route-based solvers on explicitly enumerated path sets.

These methods keep the route flows x as the variable and are practical only
when every OD pair has a modest number of simple routes.  Two are provided:

* solve_path_fgm - accelerated composite scheme directly on
      sum_e sigma_e((Theta x)_e) + gamma * sum_w sum_p x_p ln(x_p / d_w)
  over the product of scaled simplexes, with the entropy handled in closed
  form by exponential reweighting.  An optional strongly-convex mode restarts
  the scheme on a doubling schedule, carrying the best iterate.

* solve_penalty - the same objective with the coupling f = Theta x relaxed
  into a quadratic penalty: min over (x, f) of
      0.5*||Theta x - f||^2 + lam*(sum_e sigma_e(f_e) + gamma * entropy).
  The composite splits per block: exponential reweighting in x and the scalar
  stationarity solve penalty_f_step in f.  Small lam enforces the coupling
  tightly, at the price of a weak objective signal, so the solver descends a
  halving lam schedule by default, warm-starting each stage.

Certificates for solve_path_fgm pair the primal value with the dual value at
the time vector tau(Theta x); the sum is nonnegative and vanishes exactly at
the equilibrium.  Hard-capacity cost models have no finite time map, so these
solvers reject them - use the time-variable solvers instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dual_solver import Certificate, dual_objective
from .network import (
    BPR,
    CostParams,
    Network,
    edge_cost,
    edge_cost_integral,
    sink_plan,
)
from .smoothing import DualPoint, EdgeFlow, SolverError

log = logging.getLogger(__name__)

PATH_FGM = "path_fgm"
PATH_PENALTY = "path_penalty"

_SIMPLEX_TOL = 1e-9


class PathSet:
    """Simple routes per OD pair with their edge-incidence matrix.

    ``paths`` lists edge-index arrays grouped by OD: paths of OD w occupy
    positions od_ptr[w]:od_ptr[w+1].  ``theta`` is the (n_edges x n_paths)
    incidence matrix, kept column-sparse; a dense copy is cached for small
    problems since the solvers multiply with it every iteration.
    """

    def __init__(self, network: Network, paths: list, od_ptr: np.ndarray, truncated: bool):
        self.network = network
        self.paths = paths
        self.od_ptr = np.asarray(od_ptr, dtype=np.int64)
        self.truncated = truncated
        self.n_paths = len(paths)
        indices = np.concatenate([p for p in paths]) if paths else np.zeros(0, dtype=np.int64)
        indptr = np.zeros(self.n_paths + 1, dtype=np.int64)
        np.cumsum([len(p) for p in paths], out=indptr[1:])
        self.theta = sp.csc_matrix(
            (np.ones(len(indices)), indices, indptr),
            shape=(network.n_edges, self.n_paths),
        )
        self.theta.sort_indices()
        self._dense = self.theta.toarray() if network.n_edges * max(self.n_paths, 1) <= 200_000 else None
        self.max_edges_per_path = max((len(p) for p in paths), default=0)

    @property
    def od_of_path(self) -> np.ndarray:
        return np.repeat(np.arange(self.network.n_ods), np.diff(self.od_ptr))

    def path_counts(self) -> np.ndarray:
        return np.diff(self.od_ptr)

    def demands(self) -> np.ndarray:
        """Demand of the OD owning each path."""
        return np.repeat(self.network.od_demand, np.diff(self.od_ptr))

    def edge_flows(self, x: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ x
        return self.theta @ x

    def path_costs(self, t: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return t @ self._dense
        return self.theta.T @ t

    def segment_sums(self, values: np.ndarray) -> np.ndarray:
        """Per-OD sums of a per-path vector."""
        if self.n_paths == 0:
            return np.zeros(self.network.n_ods)
        counts = np.diff(self.od_ptr)
        starts = np.minimum(self.od_ptr[:-1], self.n_paths - 1)
        out = np.add.reduceat(values, starts)
        return np.where(counts > 0, out, 0.0)


def enumerate_paths(network: Network, od: int, max_paths: int, max_edges: int, allow_truncation: bool = False):
    """All simple routes of one OD pair, in lexicographic edge-index order.

    Raises SolverError when the count would exceed ``max_paths`` (or a route
    would exceed ``max_edges`` edges) unless truncation is explicitly allowed;
    a truncated route set silently changes the optimisation problem, which the
    path solvers refuse.  Returns (list of edge arrays, truncated flag).
    """
    if max_paths < 1 or max_edges < 1:
        raise ValueError("enumeration limits must be positive")
    origin = int(network.od_origin[od])
    sink = int(network.od_dest[od])
    reach = network.topological_order(sink).reach
    found: list[np.ndarray] = []
    truncated = False
    stack: list[int] = []
    on_path = np.zeros(network.n_vertices, dtype=bool)
    on_path[origin] = True

    def visit(v: int) -> bool:
        nonlocal truncated
        if v == sink:
            found.append(np.asarray(stack, dtype=np.int64))
            if len(found) > max_paths:
                truncated = True
                found.pop()
                return False
            return True
        if len(stack) >= max_edges:
            truncated = True
            return allow_truncation
        for e in network.out_edges(v):
            head = int(network.edge_head[e])
            if on_path[head] or not reach[head]:
                continue
            stack.append(int(e))
            on_path[head] = True
            ok = visit(head)
            on_path[head] = False
            stack.pop()
            if not ok:
                return False
        return True

    ok = visit(origin)
    if truncated and not allow_truncation:
        raise SolverError(
            f"OD pair {od} exceeds {max_paths} routes (or {max_edges} edges per route); "
            "route enumeration is only sound when complete - use the time-variable solvers"
        )
    if not ok and not allow_truncation:
        raise SolverError(f"route enumeration for OD pair {od} was cut off")
    return found, truncated


def build_path_set(network: Network, max_paths: int = 100_000, max_edges: int | None = None,
                   allow_truncation: bool = False) -> PathSet:
    """Enumerate every OD pair and assemble the PathSet."""
    if max_edges is None:
        max_edges = network.n_vertices - 1
    all_paths: list[np.ndarray] = []
    od_ptr = np.zeros(network.n_ods + 1, dtype=np.int64)
    truncated = False
    for od in range(network.n_ods):
        routes, cut = enumerate_paths(network, od, max_paths, max_edges, allow_truncation)
        truncated = truncated or cut
        all_paths.extend(routes)
        od_ptr[od + 1] = len(all_paths)
    return PathSet(network, all_paths, od_ptr, truncated)


@dataclass
class PathFlow:
    """Route flows on a fixed PathSet; must sit on the product of scaled simplexes."""

    paths: PathSet
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape != (self.paths.n_paths,):
            raise ValueError("one flow per route required")

    def validate(self, tol: float = _SIMPLEX_TOL) -> None:
        d = self.paths.network.od_demand
        if np.any(self.x < -tol * (1.0 + d.max(initial=1.0))):
            raise ValueError("negative route flow")
        sums = self.paths.segment_sums(self.x)
        if np.any(np.abs(sums - d) > tol * (1.0 + d)):
            raise ValueError("route flows do not add up to the OD demands")

    def edge_flows(self) -> np.ndarray:
        return self.paths.edge_flows(self.x)

    def entropy(self) -> float:
        """sum_w sum_p x_p ln(x_p / d_w), with 0 ln 0 = 0."""
        d = self.paths.demands()
        x = self.x
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0) / d), 0.0)
        return float(terms.sum())


def uniform_flow(paths: PathSet) -> PathFlow:
    counts = paths.path_counts()
    if np.any(counts == 0):
        raise SolverError("an OD pair has no routes in the path set")
    x = np.repeat(paths.network.od_demand / counts, counts)
    return PathFlow(paths, x)


def primal_objective(network: Network, paths: PathSet, x: PathFlow, gamma: float) -> float:
    """sum_e sigma_e(f_e) + gamma * entropy at f = Theta x."""
    x.validate()
    f = paths.edge_flows(np.maximum(x.x, 0.0))
    return float(np.sum(edge_cost_integral(network.cost, f))) + gamma * x.entropy()


def _entropy_argmin(paths: PathSet, b: np.ndarray, omega: float, beta: float, anchor: np.ndarray) -> np.ndarray:
    """argmin over the product of scaled simplexes of

        <b, z> + omega * sum_w sum_p z_p ln(z_p/d_w) + beta * sum_w d_w * KL_w(z, anchor).

    Closed form: z_p proportional (within its OD block) to
        exp[(beta*d_w*ln(anchor_p) - b_p) / (omega + beta*d_w)],
    rescaled to mass d_w, evaluated max-relative per block.
    """
    d = paths.demands()
    denom = omega + beta * d
    with np.errstate(divide="ignore"):
        logits = (beta * d * np.log(np.maximum(anchor, 1e-300)) - b) / denom
    ptr = paths.od_ptr[:-1]
    block_max = np.maximum.reduceat(logits, ptr)
    shifted = np.exp(logits - np.repeat(block_max, paths.path_counts()))
    mass = np.add.reduceat(shifted, ptr)
    return shifted * np.repeat(paths.network.od_demand / mass, paths.path_counts())


def entropy_prox_step(x: PathFlow, grad: np.ndarray, step: float, gamma: float) -> PathFlow:
    """One composite mirror step from x:

        argmin_z <step*grad, z> + step*gamma*sum z ln(z/d_w) + sum_w d_w*KL_w(z, x).

    Exponential reweighting per OD block; the output lands exactly on the
    scaled simplexes.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    z = _entropy_argmin(x.paths, step * np.asarray(grad, dtype=float), step * gamma, 1.0, x.x)
    return PathFlow(x.paths, z)


def _require_bpr(network: Network, who: str) -> None:
    if np.any(np.asarray(network.cost.model) != BPR):
        raise SolverError(
            f"{who} needs a finite time map tau(f); hard-capacity edges have none - "
            "solve those instances in the time variable"
        )


def _product_norm_sq(paths: PathSet, delta: np.ndarray) -> float:
    """Squared product norm sum_w ||delta_w||_1^2 used by the backtracking tests."""
    per_od = paths.segment_sums(np.abs(delta))
    return float(per_od @ per_od)


def entropy_prox_radius_sq(paths: PathSet) -> float:
    """Worst-case anchor distance sum_w d_w^2 ln|P_w| from the uniform start."""
    d = paths.network.od_demand
    counts = np.maximum(paths.path_counts(), 1)
    return float(np.sum(d * d * np.log(counts)))


def power_prox_exponent(path_count: int) -> float:
    """Block exponent 2*ln|P_w| / (2*ln|P_w| - 1) of the power prox function.

    Defined only for OD pairs with at least two routes (ln|P_w| >= ln 2 keeps
    the denominator positive); the value is always > 1 and -> 1 as the route
    count grows.
    """
    if path_count < 2:
        raise ValueError("the power prox exponent needs at least two routes")
    lp = math.log(path_count)
    return 2.0 * lp / (2.0 * lp - 1.0)


def _path_certificate(network, paths, gamma, epsilon, x_best, f_best, value_best, iterations, trace, converged):
    t_hat = edge_cost(network.cost, f_best)
    dual = dual_objective(network, DualPoint(t=t_hat, gamma=gamma))
    return Certificate(
        method=PATH_FGM,
        gamma=gamma,
        epsilon=epsilon,
        iterations=iterations,
        primal_value=value_best,
        dual_value=dual,
        gap=value_best + dual,
        trace=trace,
        entropy_term=x_best.entropy(),
        penalty_term=0.0,
        converged=converged,
    )


def _path_fgm_segment(network, paths, gamma, epsilon, x0, lips, max_iters, check_every, trace, offset, state):
    """One run of the accelerated scheme anchored at x0; returns updated state.

    state carries (x_best, value_best, converged, iterations_done, lips).
    """
    cost = network.cost
    d = paths.demands()
    big_a = 0.0
    grad_sum = np.zeros(paths.n_paths)
    y = x0.copy()
    v = x0.copy()

    def smooth_value(z):
        return float(np.sum(edge_cost_integral(cost, paths.edge_flows(z))))

    for k in range(1, max_iters + 1):
        while True:
            a = (1.0 + math.sqrt(1.0 + 4.0 * lips * big_a)) / (2.0 * lips)
            big_a_next = big_a + a
            u = (big_a * y + a * v) / big_a_next
            tau_u = edge_cost(cost, paths.edge_flows(u))
            g = paths.path_costs(tau_u)
            v_try = _entropy_argmin(paths, grad_sum + a * g, big_a_next * gamma, 1.0, x0)
            y_try = (big_a * y + a * v_try) / big_a_next
            diff = y_try - u
            upper = smooth_value(u) + float(g @ diff) + 0.5 * lips * _product_norm_sq(paths, diff)
            if smooth_value(y_try) <= upper + 1e-12 * (1.0 + abs(upper)):
                break
            lips *= 2.0
            if lips > 1e18:
                raise SolverError("backtracking diverged: curvature estimate exceeded 1e18")
        grad_sum += a * g
        v, y, big_a = v_try, y_try, big_a_next
        lips = max(lips / 2.0, 1e-12)
        state["iterations"] = offset + k
        if k % check_every == 0 or k == max_iters:
            flow = PathFlow(paths, y)
            value = primal_objective(network, paths, flow, gamma)
            if value < state["value_best"]:
                state["value_best"] = value
                state["x_best"] = y.copy()
            f_best = paths.edge_flows(state["x_best"])
            dual = dual_objective(network, DualPoint(t=edge_cost(cost, f_best), gamma=gamma))
            gap = state["value_best"] + dual
            trace.append({"iteration": state["iterations"], "gap": gap, "dual_value": dual})
            if gap <= epsilon:
                state["converged"] = True
                state["lips"] = lips
                return
    state["lips"] = lips


def solve_path_fgm(network: Network, paths: PathSet, gamma: float, epsilon: float,
                   strongly_convex: bool = False, max_iters: int = 100_000,
                   check_every: int = 25):
    """Accelerated composite scheme over route flows; returns (PathFlow, Certificate).

    The smooth part is the cost integral of the edge loads; the entropy with
    the simplex constraints is the composite, solved in closed form by
    exponential reweighting.  The backtracked curvature estimate refers to the
    product norm sum_w ||.||_1^2.  With strongly_convex=True the scheme is
    restarted each time the iteration count doubles, re-anchoring the prox at
    the best route flows found so far - with entropy weight gamma > 0 the
    objective is strongly convex (modulus gamma / max_w d_w), which turns the
    restarts into geometric convergence.
    """
    if paths.truncated:
        raise SolverError("refusing to optimise over a truncated route set")
    _require_bpr(network, "solve_path_fgm")
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma > 0:
        mu_sc = gamma / float(np.max(network.od_demand))
        scale = epsilon / float(np.sum(network.od_demand))
        log.debug(
            "entropy weight %.3g vs accuracy-per-demand %.3g: %s regime; strong convexity %.3g",
            gamma, scale, "smooth-dominant" if gamma > scale else "accuracy-dominant", mu_sc,
        )
        counts = paths.path_counts()
        if np.any(counts >= 2):
            chi = 2.0 * float(np.max(np.log(counts[counts >= 2])))
            log.debug("restart contraction factor bound %.3g", chi)
    x0 = uniform_flow(paths).x
    trace: list = []
    state = {
        "x_best": x0.copy(),
        "value_best": primal_objective(network, paths, PathFlow(paths, x0), gamma),
        "converged": False,
        "iterations": 0,
        "lips": 1.0,
    }
    if not strongly_convex:
        _path_fgm_segment(network, paths, gamma, epsilon, x0, state["lips"], max_iters,
                          check_every, trace, 0, state)
    else:
        segment = 16
        while state["iterations"] < max_iters and not state["converged"]:
            budget = min(segment, max_iters - state["iterations"])
            _path_fgm_segment(network, paths, gamma, epsilon, state["x_best"].copy(), state["lips"],
                              budget, min(check_every, budget), trace, state["iterations"], state)
            segment *= 2
    flow = PathFlow(paths, state["x_best"])
    cert = _path_certificate(network, paths, gamma, epsilon, flow, flow.edge_flows(),
                             state["value_best"], state["iterations"], trace, state["converged"])
    return flow, cert


# ---------------------------------------------------------------------------
# quadratic-penalty reformulation
# ---------------------------------------------------------------------------


def penalty_f_step(params: CostParams, y, lam: float) -> np.ndarray:
    """Componentwise argmin over f >= 0 (and f <= capacity on hard-capacity
    edges) of 0.5*(f - y)^2 + lam*sigma(f).

    Stationarity (f - y) + lam*tau(f) = 0 gives f = 0 whenever y <= lam*t_free;
    linear costs are closed-form and the remaining polynomial cases use Newton
    with a bisection safeguard on the increasing residual.
    """
    if not (lam > 0):
        raise ValueError("lam must be positive")
    t0 = np.asarray(params.t_free, dtype=float)
    shape = np.broadcast_shapes(np.shape(y), t0.shape)
    t0 = np.broadcast_to(t0, shape)
    cap = np.broadcast_to(np.asarray(params.capacity, dtype=float), shape)
    rho = np.broadcast_to(np.asarray(params.rho, dtype=float), shape)
    mu = np.broadcast_to(np.asarray(params.mu_power, dtype=float), shape)
    model = np.broadcast_to(np.asarray(params.model), shape)
    y = np.broadcast_to(np.asarray(y, dtype=float), shape)

    base = np.maximum(y - lam * t0, 0.0)
    out = base.copy()  # correct for constant-cost edges (bpr rho=0)
    sd = model != BPR
    if np.any(sd):
        out[sd] = np.minimum(base[sd], cap[sd])

    smooth = (model == BPR) & (rho > 0) & (base > 0)
    if not np.any(smooth):
        return out
    idx = np.flatnonzero(smooth)
    rhs = base[idx]
    coef = lam * t0[idx] * rho[idx]
    capi = cap[idx]
    inv_mu = 1.0 / mu[idx]
    linear = inv_mu == 1.0
    if np.any(linear):
        li = idx[linear]
        out[li] = base[li] / (1.0 + lam * t0[li] * rho[li] / cap[li])
    work = np.flatnonzero(~linear)
    if work.size == 0:
        return out
    r = rhs[work]
    c = coef[work]
    ca = capi[work]
    p = inv_mu[work]
    lo = np.zeros_like(r)
    hi = r.copy()  # G(r) = c*(r/cap)**p >= 0
    f = r / (1.0 + c / ca)  # linearised warm start
    tol = 1e-14 * (r + c + 1.0)
    for _ in range(200):
        with np.errstate(over="ignore"):
            ratio = f / ca
            g_val = f - r + c * ratio ** p
            g_der = 1.0 + c * p * np.where(ratio > 0, ratio, 1.0) ** (p - 1.0) / ca
        done = (np.abs(g_val) <= tol) | (hi - lo <= 4e-16 * (hi + 1.0))
        if np.all(done):
            break
        hi = np.where(g_val > 0, np.minimum(hi, f), hi)
        lo = np.where(g_val < 0, np.maximum(lo, f), lo)
        cand = f - g_val / g_der
        inside = (cand > lo) & (cand < hi)
        f = np.where(done, f, np.where(inside, cand, 0.5 * (lo + hi)))
    else:
        raise SolverError("penalty_f_step did not converge within 200 Newton iterations")
    out[idx[work]] = f
    return out


def penalty_f_residual(params: CostParams, f, y, lam: float) -> np.ndarray:
    """First-order residual of penalty_f_step; zero exactly at the argmin.

    Interior points report |f - y + lam*tau(f)|; the bounds f = 0 and (for
    hard-capacity edges) f = capacity report only the infeasible side of the
    stationarity value.
    """
    t0 = np.asarray(params.t_free, dtype=float)
    shape = np.broadcast_shapes(np.shape(f), np.shape(y), t0.shape)
    f = np.broadcast_to(np.asarray(f, dtype=float), shape)
    y = np.broadcast_to(np.asarray(y, dtype=float), shape)
    cap = np.broadcast_to(np.asarray(params.capacity, dtype=float), shape)
    model = np.broadcast_to(np.asarray(params.model), shape)
    stat = f - y + lam * edge_cost(params, f)
    res = np.abs(stat)
    at_zero = f <= 1e-14 * (1.0 + np.abs(y))
    res = np.where(at_zero, np.maximum(0.0, -stat), res)
    at_cap = (model != BPR) & (f >= cap * (1.0 - 1e-12))
    res = np.where(at_cap, np.maximum(0.0, stat), res)
    return res


@dataclass
class PenaltyConfig:
    """Penalty coefficient and the inner solve budget."""

    lam: float = 1.0
    epsilon: float = 1e-4
    max_iters: int = 60_000
    inner_iters: int = 300
    continuation: bool = True
    check_every: int = 20

    def __post_init__(self):
        if not (self.lam > 0):
            raise ValueError("lam must be positive")
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")


@dataclass
class PenaltyResult:
    """Both blocks of the penalised problem plus the run report."""

    x: PathFlow
    f: EdgeFlow
    residual: float
    objective: float
    lam: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)

    def edge_flows(self) -> np.ndarray:
        return self.x.edge_flows()


def _penalty_stage(network, paths, gamma, lam, x0, f0, budget, state, trace, epsilon):
    """Accelerated scheme on 0.5*||Theta x - f||^2 + lam*(costs + gamma*entropy),
    prox anchored at (x0, f0)."""
    cost = network.cost
    n = paths.n_paths
    lips = state["lips"]
    big_a = 0.0
    sum_gx = np.zeros(n)
    sum_gf = np.zeros(network.n_edges)
    yx, yf = x0.copy(), f0.copy()
    vx, vf = x0.copy(), f0.copy()

    def objective(zx, zf):
        r = paths.edge_flows(zx) - zf
        ent = PathFlow(paths, zx).entropy()
        sigma = float(np.sum(edge_cost_integral(cost, np.maximum(zf, 0.0))))
        return 0.5 * float(r @ r) + lam * (sigma + gamma * ent)

    for k in range(1, budget + 1):
        while True:
            a = (1.0 + math.sqrt(1.0 + 4.0 * lips * big_a)) / (2.0 * lips)
            big_a_next = big_a + a
            ux = (big_a * yx + a * vx) / big_a_next
            uf = (big_a * yf + a * vf) / big_a_next
            resid = paths.edge_flows(ux) - uf
            gx = paths.path_costs(resid)
            gf = -resid
            vx_try = _entropy_argmin(paths, sum_gx + a * gx, big_a_next * lam * gamma, 2.0, x0)
            vf_try = penalty_f_step(cost, f0 - 0.5 * (sum_gf + a * gf), 0.5 * big_a_next * lam)
            yx_try = (big_a * yx + a * vx_try) / big_a_next
            yf_try = (big_a * yf + a * vf_try) / big_a_next
            dx = yx_try - ux
            df = yf_try - uf
            r_new = paths.edge_flows(yx_try) - yf_try
            lhs = 0.5 * float(r_new @ r_new)
            rhs = (
                0.5 * float(resid @ resid)
                + float(gx @ dx)
                + float(gf @ df)
                + 0.5 * lips * (_product_norm_sq(paths, dx) + float(df @ df))
            )
            if lhs <= rhs + 1e-12 * (1.0 + abs(rhs)):
                break
            lips *= 2.0
            if lips > 1e18:
                raise SolverError("backtracking diverged: curvature estimate exceeded 1e18")
        sum_gx += a * gx
        sum_gf += a * gf
        vx, vf, yx, yf, big_a = vx_try, vf_try, yx_try, yf_try, big_a_next
        lips = max(lips / 2.0, 1e-12)
        state["iterations"] += 1
        if k % state["check_every"] == 0 or k == budget:
            val = objective(yx, yf)
            if val < state["best_value"]:
                state["best_value"] = val
                state["best"] = (yx.copy(), yf.copy())
            res = float(np.linalg.norm(paths.edge_flows(state["best"][0]) - state["best"][1]))
            trace.append({"iteration": state["iterations"], "lam": lam, "residual": res,
                          "objective": state["best_value"]})
            if res <= epsilon and lam <= state["lam_target"]:
                state["converged"] = True
                state["lips"] = lips
                return
    state["lips"] = lips


def solve_penalty(network: Network, paths: PathSet, gamma: float, lam: float | None = None,
                  epsilon: float | None = None, config: PenaltyConfig | None = None) -> PenaltyResult:
    """Quadratic-penalty solver; returns both blocks and the coupling residual.

    Success means ||Theta x - f||_2 <= epsilon at the target lam.  At the
    penalised optimum the residual equals lam*||tau(f)||_2, so reaching a small
    epsilon requires a correspondingly small lam; the default continuation
    halves lam from max(lam, 1) down to the target, warm-starting every stage,
    which costs far fewer iterations than attacking the weak small-lam
    objective cold.
    """
    if paths.truncated:
        raise SolverError("refusing to optimise over a truncated route set")
    _require_bpr(network, "solve_penalty")
    cfg = config if config is not None else PenaltyConfig()
    lam = cfg.lam if lam is None else lam
    epsilon = cfg.epsilon if epsilon is None else epsilon
    if not (lam > 0 and epsilon > 0):
        raise ValueError("lam and epsilon must be positive")

    stages = [lam]
    if cfg.continuation and lam < 1.0:
        value = 1.0
        stages = []
        while value > lam * 1.0000001:
            stages.append(value)
            value /= 2.0
        stages.append(lam)

    x = uniform_flow(paths).x
    f = paths.edge_flows(x)
    trace: list = []
    state = {
        "iterations": 0,
        "lips": float(sum_longest_paths(network) + 1.0),
        "best": (x, f),
        "best_value": math.inf,
        "converged": False,
        "check_every": cfg.check_every,
        "lam_target": lam,
    }
    for stage_lam in stages:
        x0, f0 = state["best"]
        state["best_value"] = math.inf  # objective changes with lam
        budget = cfg.inner_iters if stage_lam > lam else max(cfg.inner_iters, cfg.max_iters - state["iterations"])
        budget = min(budget, max(cfg.max_iters - state["iterations"], 1))
        _penalty_stage(network, paths, gamma, stage_lam, x0.copy(), f0.copy(), budget, state, trace, epsilon)
        if state["converged"] or state["iterations"] >= cfg.max_iters:
            break
    x_best, f_best = state["best"]
    flow = PathFlow(paths, x_best)
    residual = float(np.linalg.norm(flow.edge_flows() - f_best))
    return PenaltyResult(
        x=flow,
        f=EdgeFlow(f=f_best),
        residual=residual,
        objective=state["best_value"],
        lam=lam,
        iterations=state["iterations"],
        converged=state["converged"],
        trace=trace,
    )


def penalty_lambda_sweep(network: Network, paths: PathSet, gamma: float, lam_values,
                         epsilon: float = 1e-4, config: PenaltyConfig | None = None) -> list:
    """Run solve_penalty at each lam (no continuation), reusing nothing between
    runs; a diagnostic for picking the penalty coefficient."""
    cfg = config if config is not None else PenaltyConfig()
    results = []
    for lam in lam_values:
        one = PenaltyConfig(lam=lam, epsilon=epsilon, max_iters=cfg.max_iters,
                            inner_iters=cfg.inner_iters, continuation=False,
                            check_every=cfg.check_every)
        results.append(solve_penalty(network, paths, gamma, lam, epsilon, one))
    return results


def sum_longest_paths(network: Network) -> float:
    """sum_w H_w: additive bound on the squared product-norm of Theta."""
    total = 0.0
    for w in range(network.n_ods):
        plan = sink_plan(network, int(network.od_dest[w]))
        if plan.valid:
            total += max(int(plan.longest_path(int(network.od_origin[w]))), 1)
        else:
            total += network.n_vertices - 1
    return total


def write_paths_csv(path, paths: PathSet) -> None:
    """Route table `od_index,path_index,edge_list` with semicolon-joined edges."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("od_index,path_index,edge_list\n")
        for od in range(paths.network.n_ods):
            lo, hi = paths.od_ptr[od], paths.od_ptr[od + 1]
            for j in range(lo, hi):
                edges = ";".join(str(int(e)) for e in paths.paths[j])
                fh.write(f"{od},{j - lo},{edges}\n")


def write_path_flows_csv(path, flow: PathFlow) -> None:
    """Route flow table `od_index,path_index,flow`; 17 significant digits."""
    paths = flow.paths
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("od_index,path_index,flow\n")
        for od in range(paths.network.n_ods):
            lo, hi = paths.od_ptr[od], paths.od_ptr[od + 1]
            for j in range(lo, hi):
                fh.write(f"{od},{j - lo},{flow.x[j]:.17g}\n")
