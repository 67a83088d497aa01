"""Solvers working in the space of edge travel times.

The route-flow problem

    min  sum_e sigma_e(f_e) + gamma * sum_w sum_p x_p ln(x_p / d_w)
    over x in the product of scaled simplexes, f = Theta x

is minimised here through its unconstrained counterpart in the time variable,

    min_{t >= t_free}  Phi(t) = gamma*psi(t/gamma) + sum_e sigma*_e(t_e),

where gamma*psi is the smoothed shortest-path aggregate from `smoothing` and
sigma* is the convex conjugate of the edge cost integral.  The negative of the
optimal Phi value equals the optimal route-flow value, and the gradient of the
smooth part is minus the expected edge loads, so averaged loads from the
iterates reconstruct the primal solution.

Three solvers are provided: an accelerated composite scheme with a fixed
curvature bound (solve_dual_fgm), the same scheme with halve/double
backtracking so no bound is needed up front (solve_dual_universal), and
stochastic mirror descent driven by single sampled route loads
(solve_dual_smd).  All of them emit a certificate whose gap
primal_value + dual_value is nonnegative by weak duality and upper-bounds the
true accuracy of the returned flows; it is measured, never inferred from rate
constants.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .network import (
    BPR,
    STABLE_DYNAMICS,
    CostParams,
    Network,
    conjugate_cost,
    edge_cost,
    edge_cost_integral,
    sink_plan,
)
from .smoothing import (
    DualPoint,
    EdgeFlow,
    SolverError,
    psi_and_flow,
    psi_total,
    sample_stochastic_gradient,
)

log = logging.getLogger(__name__)

DUAL_FGM = "dual_fgm"
DUAL_UNIVERSAL = "dual_universal"
DUAL_SMD = "dual_smd"
_DUAL_METHODS = (DUAL_FGM, DUAL_UNIVERSAL, DUAL_SMD)


@dataclass
class SolverConfig:
    """Knobs shared by the time-variable solvers.

    ``initial_lipschitz_guess`` only affects dual_universal, ``seed`` and
    ``step_radius`` only dual_smd.  ``check_every`` is the cadence (in
    iterations) of exact certificate evaluations; each costs one extra sweep.
    """

    method: str = DUAL_FGM
    gamma: float = 1.0
    epsilon: float = 1e-6
    max_iters: int = 200_000
    initial_lipschitz_guess: float | None = None
    seed: int | None = None
    averaging: bool = True
    check_every: int = 10
    threads: int = 1
    step_radius: float | None = None

    def __post_init__(self):
        if self.method not in _DUAL_METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {_DUAL_METHODS}")
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        if self.gamma < 0 or not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite and nonnegative")
        if self.gamma == 0 and self.method != DUAL_SMD:
            raise ValueError("gamma = 0 degenerates the smooth part; use method=dual_smd")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.check_every < 1:
            raise ValueError("check_every must be at least 1")
        if self.initial_lipschitz_guess is not None and not (self.initial_lipschitz_guess > 0):
            raise ValueError("initial_lipschitz_guess must be positive")


@dataclass
class Certificate:
    """Accuracy certificate: gap = primal_value + dual_value >= 0.

    ``primal_value`` evaluates the route-flow objective at the averaged loads,
    with the entropy taken as the load-weighted average of per-iterate route
    entropies (an upper bound by convexity, so the gap remains sound).
    ``dual_value`` is Phi at the best dual iterate.  ``entropy_term`` and
    ``penalty_term`` are stored so the primal value can be re-derived from the
    flows alone; ``trace`` records (iteration, gap, dual_value) at every exact
    evaluation.
    """

    method: str
    gamma: float
    epsilon: float
    iterations: int
    primal_value: float
    dual_value: float
    gap: float
    trace: list = field(default_factory=list)
    entropy_term: float = 0.0
    penalty_term: float = 0.0
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "trace": [dict(entry) for entry in self.trace],
            "entropy_term": self.entropy_term,
            "penalty_term": self.penalty_term,
            "converged": self.converged,
        }


@dataclass
class Equilibrium:
    """Solver output: best time vector, averaged loads, and the certificate."""

    t_star: DualPoint
    f_star: EdgeFlow
    certificate: Certificate
    stats: dict = field(default_factory=dict)


def dual_objective(network: Network, dual_point: DualPoint, threads: int = 1) -> float:
    """Phi(t) = gamma*psi(t/gamma) + sum_e sigma*_e(t_e), to be minimised over t >= t_free."""
    smooth = psi_total(network, dual_point, threads=threads)
    return smooth + float(np.sum(conjugate_cost(network.cost, dual_point.t)))


# ---------------------------------------------------------------------------
# scalar composite prox
# ---------------------------------------------------------------------------

_PROX_MAX_NEWTON = 200
_PROX_TOL = 1e-13


def _prox_theta(cost: CostParams, b, q, omega, y, tol_scale: float = _PROX_TOL) -> np.ndarray:
    """Componentwise argmin over theta >= t_free of

        b*theta + (q/2)*(theta - y)**2 + omega*sigma*(theta).

    Linear-cost cases are closed-form; the remaining edges solve the monotone
    stationarity condition by Newton with a bisection safeguard, after the
    substitution theta = t_free + t_free*rho*s which turns it into
    q*t_free*rho*s + omega*capacity*s**mu = q*(y - t_free) - b.
    """
    t0 = np.broadcast_to(np.asarray(cost.t_free, dtype=float), np.shape(b)).astype(float)
    cap = np.broadcast_to(np.asarray(cost.capacity, dtype=float), t0.shape)
    rho = np.broadcast_to(np.asarray(cost.rho, dtype=float), t0.shape)
    mu = np.broadcast_to(np.asarray(cost.mu_power, dtype=float), t0.shape)
    model = np.broadcast_to(np.asarray(cost.model), t0.shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), t0.shape)
    y = np.broadcast_to(np.asarray(y, dtype=float), t0.shape)
    if not (q > 0):
        raise ValueError("prox weight must be positive")
    if omega < 0:
        raise ValueError("conjugate weight must be nonnegative")

    theta = t0.copy()
    sd = model == STABLE_DYNAMICS
    if np.any(sd):
        theta[sd] = np.maximum(t0[sd], y[sd] - (b[sd] + omega * cap[sd]) / q)

    bpr = model == BPR
    frozen = bpr & (rho == 0)  # constant-cost edges stay pinned at t_free
    smooth = bpr & (rho > 0)
    if not np.any(smooth):
        return theta

    rhs = q * (y - t0) - b
    scale = t0 * rho
    linear = smooth & (mu == 1.0)
    if np.any(linear):
        c = omega * cap[linear] / scale[linear]
        root = (q * y[linear] - b[linear] + c * t0[linear]) / (q + c)
        theta[linear] = np.maximum(t0[linear], root)

    general = smooth & (mu != 1.0) & (rhs > 0)
    if not np.any(general):
        return theta
    idx = np.flatnonzero(general)
    r = rhs[idx]
    sc = q * scale[idx]
    oc = omega * cap[idx]
    m_exp = mu[idx]
    # The root of sc*s + oc*s**mu = r can be as small as (r/oc)**(1/mu), far
    # below floating-point resolution of a linear bracket when mu is small, so
    # we solve for u = ln(s).  Both increasing terms are <= r at the root and
    # one of them is >= r/2, which brackets u within ln(max(2, 2**(1/mu))).
    safe_oc = np.where(oc > 0, oc, 1.0)
    inv_m = 1.0 / m_exp
    u_lin_hi = np.log(r / sc)
    u_con_hi = np.where(oc > 0, np.log(r / safe_oc) * inv_m, np.inf)
    u_con_lo = np.where(oc > 0, np.log(0.5 * r / safe_oc) * inv_m, np.inf)
    u_hi = np.minimum(u_lin_hi, u_con_hi)
    u_lo = np.minimum(u_lin_hi - math.log(2.0), u_con_lo)
    u = u_hi.copy()
    tol = tol_scale * (np.abs(r) + sc + oc)
    for _ in range(_PROX_MAX_NEWTON):
        with np.errstate(over="ignore", under="ignore"):
            lin = sc * np.exp(u)
            con = oc * np.exp(m_exp * u)
        g_val = lin + con - r
        # stop per component on a small residual, or once the bracket has
        # collapsed to floating-point resolution (the best any u can do)
        done = (np.abs(g_val) <= tol) | (u_hi - u_lo <= 4e-16 * (np.abs(u_hi) + 1.0))
        if np.all(done):
            break
        u_hi = np.where(g_val > 0, np.minimum(u_hi, u), u_hi)
        u_lo = np.where(g_val < 0, np.maximum(u_lo, u), u_lo)
        g_der = lin + m_exp * con  # d/du, positive
        cand = u - g_val / np.maximum(g_der, 1e-300)
        inside = (cand > u_lo) & (cand < u_hi)
        u = np.where(done, u, np.where(inside, cand, 0.5 * (u_lo + u_hi)))
    else:  # pragma: no cover - bisection pinches the bracket well within the budget
        raise SolverError(
            f"scalar prox did not converge within {_PROX_MAX_NEWTON} Newton iterations "
            f"on edges {idx.tolist()[:8]}"
        )
    with np.errstate(under="ignore"):
        theta[idx] = t0[idx] + scale[idx] * np.exp(u)
    # frozen edges were never touched; assert the invariant cheaply in debug runs
    if np.any(frozen):
        theta[frozen] = t0[frozen]
    return theta


def composite_prox_step(network: Network, anchor: DualPoint, grad, step_L: float) -> DualPoint:
    """argmin over t >= t_free of <g, t> + (step_L/2)*||t - anchor||^2 + sum sigma*_e(t_e).

    Polished to near machine precision; the solvers call the underlying scalar
    routine with a looser (faster) tolerance matched to their certificates.
    """
    g = np.asarray(getattr(grad, "f", grad), dtype=float)
    theta = _prox_theta(network.cost, g, step_L, 1.0, anchor.t, tol_scale=1e-16)
    return DualPoint(t=theta, gamma=anchor.gamma)


def composite_prox_residual(cost: CostParams, theta, b, q, omega, y) -> np.ndarray:
    """First-order residual of the scalar prox solution (0 at the exact argmin).

    Interior points report |b + q*(theta - y) + omega*d(sigma*)(theta)|; points
    at the t_free boundary report how much the one-sided derivative would have
    to be negative, using the smallest subgradient of omega*sigma* there.
    """
    t0, cap, rho, mu = (
        np.asarray(cost.t_free, dtype=float),
        np.asarray(cost.capacity, dtype=float),
        np.asarray(cost.rho, dtype=float),
        np.asarray(cost.mu_power, dtype=float),
    )
    theta = np.asarray(theta, dtype=float)
    shape = np.broadcast_shapes(theta.shape, t0.shape, np.shape(b), np.shape(y))
    t0, cap, rho, mu = (np.broadcast_to(a, shape) for a in (t0, cap, rho, mu))
    model = np.broadcast_to(np.asarray(cost.model), shape)
    b = np.broadcast_to(np.asarray(b, dtype=float), shape)
    y = np.broadcast_to(np.asarray(y, dtype=float), shape)
    theta = np.broadcast_to(theta, shape)
    excess = np.maximum(theta - t0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope_bpr = cap * np.where(rho > 0, excess / np.where(rho > 0, t0 * rho, 1.0), 0.0) ** mu
    slope = np.where(model == STABLE_DYNAMICS, cap, np.where(rho > 0, slope_bpr, 0.0))
    interior = excess > 1e-12 * (1.0 + np.abs(t0))
    stat = b + q * (theta - y) + omega * slope
    # At the boundary the condition is b + q*(t_free - y) + omega*s >= 0 for some
    # subgradient s of sigma* there: [0, cap] for hard-capacity edges, {0} for
    # congestible ones, [0, inf) for constant-cost edges (never violated).
    largest_sub = np.where(
        model == STABLE_DYNAMICS, cap, np.where((model == BPR) & (rho == 0), np.inf, 0.0)
    )
    with np.errstate(invalid="ignore"):
        at_bound = np.maximum(0.0, -(b + q * (t0 - y)) - omega * largest_sub)
    at_bound = np.where(np.isinf(largest_sub), 0.0, at_bound)
    return np.where(interior, np.abs(stat), at_bound)


# ---------------------------------------------------------------------------
# shared certificate plumbing
# ---------------------------------------------------------------------------


class _PrimalAverage:
    """Weight-averaged loads and route entropy across gradient evaluations.

    The per-iterate entropy never needs the route flows themselves: at the
    Gibbs distribution induced by t the identity
        gamma*psi(t/gamma) + <f(t), t> = -gamma * sum_w sum_p x_p ln(x_p/d_w)
    holds (differentiate the log-partition), so the value and gradient of the
    smooth part give it directly.
    """

    def __init__(self, n_edges: int, gamma: float):
        self.gamma = gamma
        self.sum_f = np.zeros(n_edges)
        self.sum_entropy = 0.0
        self.weight = 0.0

    def add(self, a: float, psi_value: float, f: np.ndarray, t: np.ndarray) -> None:
        self.sum_f += a * f
        if self.gamma > 0:
            self.sum_entropy += a * (-(psi_value + float(f @ t)) / self.gamma)
        self.weight += a

    def flows(self) -> np.ndarray:
        return self.sum_f / self.weight

    def entropy(self) -> float:
        return self.sum_entropy / self.weight if self.gamma > 0 else 0.0


def primal_value_at(network: Network, f: np.ndarray, entropy: float, gamma: float, t_ref: np.ndarray):
    """Route-flow objective at loads f with a given entropy aggregate.

    Hard-capacity edges admit loads above capacity during the run; the exact
    pairing with the dual value at t_ref adds (f - cap)_+ * (t_ref - t_free)
    on those edges, which keeps primal + dual >= 0 and shrinks to zero with
    the gap.  Returns (value, penalty_term).
    """
    value = float(np.sum(edge_cost_integral(network.cost, f))) + gamma * entropy
    penalty = 0.0
    sd = np.asarray(network.cost.model) == STABLE_DYNAMICS
    if np.any(sd):
        cap = np.broadcast_to(np.asarray(network.cost.capacity, dtype=float), f.shape)
        t0 = network.t_free
        over = np.maximum(f[sd] - cap[sd], 0.0)
        penalty = float(np.sum(over * np.maximum(t_ref[sd] - t0[sd], 0.0)))
    return value + penalty, penalty


def dual_lipschitz_bound(network: Network, gamma: float) -> float:
    """Curvature bound of the smooth part: (1/gamma) * sum_w d_w * H_w.

    H_w is the maximum number of edges on an origin->sink route (longest-path
    level when the reaching subgraph is acyclic, |V|-1 otherwise).
    """
    if not (gamma > 0):
        raise ValueError("the smooth curvature bound needs gamma > 0")
    total = 0.0
    for w in range(network.n_ods):
        sink = int(network.od_dest[w])
        plan = sink_plan(network, sink)
        if plan.valid:
            hops = plan.longest_path(int(network.od_origin[w]))
        else:
            hops = network.n_vertices - 1
        total += float(network.od_demand[w]) * max(int(hops), 1)
    return total / gamma


def path_count_bounds(network: Network) -> np.ndarray:
    """Per-OD route-count (upper bound when the reaching subgraph is cyclic).

    Acyclic sinks get the exact simple-path count by dynamic programming;
    cyclic ones count walks of at most |V|-1 edges, which can only overshoot.
    Returned as float64 since counts grow combinatorially.
    """
    counts = np.zeros(network.n_ods)
    for sink in network.sinks():
        sink = int(sink)
        ods = network.ods_for_sink(sink)
        plan = sink_plan(network, sink)
        cnt = np.zeros(network.n_vertices)
        cnt[sink] = 1.0
        if plan.valid:
            for verts, ptr, edges in zip(plan.group_vertices, plan.group_ptr, plan.group_edges):
                heads = network.edge_head[edges]
                sums = np.add.reduceat(cnt[heads], ptr[:-1]) if edges.size else np.zeros(len(verts))
                cnt[verts] = np.where(np.diff(ptr) > 0, sums, 0.0)
        else:
            horizon = max(network.n_vertices - 1, 1)
            reach = np.zeros(network.n_vertices)
            reach[sink] = 1.0
            acc = np.zeros(network.n_vertices)
            acc[sink] = 1.0
            tail, head = network.edge_tail, network.edge_head
            for _ in range(horizon):
                nxt = np.zeros(network.n_vertices)
                np.add.at(nxt, tail, reach[head])
                reach = nxt
                acc += reach
            cnt = acc
        counts[ods] = cnt[network.od_origin[ods]]
    return counts


def gamma_for_accuracy(network: Network, epsilon: float, path_count_bounds_per_od=None) -> float:
    """Smoothing level whose maximum entropy contribution stays below epsilon/2.

    gamma = epsilon / (2 * sum_w d_w * ln|P_w|); ODs with at most one route
    contribute nothing.  Returns math.inf when every OD has a single route,
    meaning no smoothing is needed at all.
    """
    if not (epsilon > 0):
        raise ValueError("epsilon must be positive")
    if path_count_bounds_per_od is None:
        path_count_bounds_per_od = path_count_bounds(network)
    bounds = np.asarray(path_count_bounds_per_od, dtype=float)
    if bounds.shape != (network.n_ods,):
        raise ValueError("need one path-count bound per OD pair")
    if np.any(bounds < 1):
        raise ValueError("path counts must be at least 1 for connected OD pairs")
    denom = 2.0 * float(np.sum(network.od_demand * np.log(np.maximum(bounds, 1.0))))
    if denom <= 0:
        return math.inf
    return epsilon / denom


# ---------------------------------------------------------------------------
# accelerated composite scheme (fixed curvature bound and backtracking variant)
# ---------------------------------------------------------------------------


def _finish(network, config, method, avg, t_best, dual_best, trace, iterations, converged, stats):
    f_bar = avg.flows()
    entropy = avg.entropy()
    primal, penalty = primal_value_at(network, f_bar, entropy, config.gamma, t_best)
    cert = Certificate(
        method=method,
        gamma=config.gamma,
        epsilon=config.epsilon,
        iterations=iterations,
        primal_value=primal,
        dual_value=dual_best,
        gap=primal + dual_best,
        trace=trace,
        entropy_term=entropy,
        penalty_term=penalty,
        converged=converged,
    )
    return Equilibrium(
        t_star=DualPoint(t=t_best, gamma=config.gamma),
        f_star=EdgeFlow(f=f_bar),
        certificate=cert,
        stats=stats,
    )


def _capacity_violation(cost: CostParams, f: np.ndarray) -> float:
    """Worst overload (f - capacity)_+ across hard-capacity edges, 0.0 if none.

    On those edges the certificate pairs the overload against the time excess,
    which cancels the linearly-continued cost exactly; the gap can therefore
    sit at zero while the loads still exceed capacity (every overloaded edge
    cancels, every other edge can have zero slack).  Convergence checks must
    require this violation to be small as well, not just the gap.
    """
    model = np.asarray(np.broadcast_to(np.asarray(cost.model), f.shape))
    hard = model == STABLE_DYNAMICS
    if not np.any(hard):
        return 0.0
    cap = np.broadcast_to(np.asarray(cost.capacity, dtype=float), f.shape)
    return float(np.max(np.maximum(f - cap, 0.0)[hard]))


def _check_gap(network, config, avg, t_cand, trace, iteration, state):
    """Exact certificate evaluation; updates the best-dual state in place.

    Returns the gap and whether the averaged loads respect hard capacities to
    within epsilon, which is part of the convergence contract.
    """
    phi = dual_objective(network, DualPoint(t=t_cand, gamma=config.gamma), threads=config.threads)
    if phi < state["dual_best"]:
        state["dual_best"] = phi
        state["t_best"] = t_cand.copy()
    f_bar = avg.flows()
    primal, _ = primal_value_at(network, f_bar, avg.entropy(), config.gamma, state["t_best"])
    gap = primal + state["dual_best"]
    violation = _capacity_violation(network.cost, f_bar)
    trace.append(
        {
            "iteration": iteration,
            "gap": gap,
            "dual_value": state["dual_best"],
            "capacity_violation": violation,
        }
    )
    return gap, violation <= config.epsilon


def solve_dual_fgm(network: Network, config: SolverConfig) -> Equilibrium:
    """Accelerated composite scheme with the analytic curvature bound.

    Weights a_k = (k+1)/2 (so their running sum grows like k^2/4); the
    conjugate sum plus the t >= t_free constraint live entirely inside the
    componentwise prox, which is solved to machine accuracy.  Averaged loads
    over the gradient points reconstruct the primal solution.
    """
    if config.gamma <= 0:
        raise SolverError("solve_dual_fgm needs gamma > 0; use solve_dual_smd for gamma = 0")
    start = time.perf_counter()
    gamma = config.gamma
    t0 = network.t_free.copy()
    lips = dual_lipschitz_bound(network, gamma)
    m = network.n_edges
    y = t0.copy()
    v = t0.copy()
    big_a = 0.0
    grad_sum = np.zeros(m)
    avg = _PrimalAverage(m, gamma)
    trace: list = []
    state = {"dual_best": math.inf, "t_best": t0.copy()}
    stats = {"grad_evals": 0, "lipschitz": lips}
    converged = False
    k = 0
    for k in range(1, config.max_iters + 1):
        a = 0.5 * k
        big_a_next = big_a + a
        u = (big_a * y + a * v) / big_a_next
        psi_u, flow_u = psi_and_flow(network, DualPoint(t=u, gamma=gamma), threads=config.threads)
        stats["grad_evals"] += 1
        avg.add(a, psi_u, flow_u.f, u)
        grad_sum -= a * flow_u.f
        v = _prox_theta(network.cost, grad_sum, lips, big_a_next, t0)
        y = (big_a * y + a * v) / big_a_next
        big_a = big_a_next
        if k % config.check_every == 0 or k == config.max_iters:
            gap, feasible = _check_gap(network, config, avg, y, trace, k, state)
            if gap <= config.epsilon and feasible:
                converged = True
                break
    stats["wall_time"] = time.perf_counter() - start
    log.debug("dual_fgm finished after %d iterations, gap %.3g", k, trace[-1]["gap"])
    return _finish(
        network, config, DUAL_FGM, avg, state["t_best"], state["dual_best"], trace, k, converged, stats
    )


def solve_dual_universal(network: Network, config: SolverConfig) -> Equilibrium:
    """Backtracking variant: no curvature constant on input.

    Each step halves the running estimate and doubles it until the local
    upper-quadratic model holds with slack epsilon*a/(2*A), so the method
    adapts to the curvature actually met along the trajectory; the accepted
    estimate never has to reach the analytic worst-case bound.
    """
    if config.gamma <= 0:
        raise SolverError("solve_dual_universal needs gamma > 0; use solve_dual_smd for gamma = 0")
    start = time.perf_counter()
    gamma = config.gamma
    t0 = network.t_free.copy()
    lips = config.initial_lipschitz_guess if config.initial_lipschitz_guess is not None else 1.0
    m = network.n_edges
    y = t0.copy()
    v = t0.copy()
    big_a = 0.0
    grad_sum = np.zeros(m)
    avg = _PrimalAverage(m, gamma)
    trace: list = []
    state = {"dual_best": math.inf, "t_best": t0.copy()}
    stats = {"grad_evals": 0, "value_evals": 0, "max_accepted_lipschitz": 0.0, "iterations": 0}
    converged = False
    k = 0
    for k in range(1, config.max_iters + 1):
        while True:
            a = (1.0 + math.sqrt(1.0 + 4.0 * lips * big_a)) / (2.0 * lips)
            big_a_next = big_a + a
            u = (big_a * y + a * v) / big_a_next
            psi_u, flow_u = psi_and_flow(network, DualPoint(t=u, gamma=gamma), threads=config.threads)
            stats["grad_evals"] += 1
            v_try = _prox_theta(network.cost, grad_sum - a * flow_u.f, 1.0, big_a_next, t0)
            y_try = (big_a * y + a * v_try) / big_a_next
            psi_y = psi_total(network, DualPoint(t=y_try, gamma=gamma), threads=config.threads)
            stats["value_evals"] += 1
            diff = y_try - u
            model = psi_u - float(flow_u.f @ diff) + 0.5 * lips * float(diff @ diff)
            slack = 0.5 * config.epsilon * a / big_a_next
            if psi_y <= model + slack:
                break
            lips *= 2.0
            log.debug("iteration %d: curvature estimate doubled to %.3g", k, lips)
            if lips > 1e18:
                raise SolverError("backtracking diverged: curvature estimate exceeded 1e18")
        stats["max_accepted_lipschitz"] = max(stats["max_accepted_lipschitz"], lips)
        avg.add(a, psi_u, flow_u.f, u)
        grad_sum -= a * flow_u.f
        v, y, big_a = v_try, y_try, big_a_next
        lips = max(lips / 2.0, 1e-12)
        if k % config.check_every == 0 or k == config.max_iters:
            gap, feasible = _check_gap(network, config, avg, y, trace, k, state)
            if gap <= config.epsilon and feasible:
                converged = True
                break
    stats["iterations"] = k
    stats["wall_time"] = time.perf_counter() - start
    return _finish(
        network, config, DUAL_UNIVERSAL, avg, state["t_best"], state["dual_best"], trace, k, converged, stats
    )


# ---------------------------------------------------------------------------
# stochastic mirror descent
# ---------------------------------------------------------------------------


def _default_step_radius(network: Network) -> float:
    """Distance guess ||t* - t_free||: congested times at capacity loads.

    Hard-capacity edges have no finite time at capacity; their equilibrium
    times are bounded heuristically by one extra free-flow time each.
    """
    cost = network.cost
    t0 = network.t_free
    cap = np.broadcast_to(np.asarray(cost.capacity, dtype=float), t0.shape)
    bpr = np.asarray(np.broadcast_to(np.asarray(cost.model), t0.shape)) == BPR
    at_cap = np.where(bpr, edge_cost(cost, cap) - t0, t0)
    radius = float(np.linalg.norm(at_cap))
    return radius if radius > 0 else 1.0


def smd_gradient_norm_bound(network: Network) -> float:
    """sqrt(H) * sum_w d_w: every sampled load vector has 2-norm below this."""
    hops = 1
    for w in range(network.n_ods):
        plan = sink_plan(network, int(network.od_dest[w]))
        if plan.valid:
            hops = max(hops, int(plan.longest_path(int(network.od_origin[w]))))
        else:
            hops = max(hops, network.n_vertices - 1)
    return math.sqrt(hops) * float(np.sum(network.od_demand))


def solve_dual_smd(network: Network, config: SolverConfig) -> Equilibrium:
    """Stochastic mirror descent on Phi with single sampled route loads.

    Each iteration samples one OD by demand share and one route from the
    Gibbs distribution at the current t, loading the whole demand sum on it -
    an unbiased estimate of -grad of the smooth part costing one sink sweep
    instead of one per sink.  Steps are composite (the conjugate sum stays in
    the prox), sized radius/(M*sqrt(k)); certificates are exact evaluations at
    the step-weighted average point, done only at the check cadence.
    """
    start = time.perf_counter()
    gamma = config.gamma
    rng = np.random.default_rng(config.seed if config.seed is not None else 0)
    t0 = network.t_free.copy()
    t = t0.copy()
    m = network.n_edges
    radius = config.step_radius if config.step_radius is not None else _default_step_radius(network)
    grad_bound = smd_gradient_norm_bound(network)
    sum_t = np.zeros(m)
    sum_eta = 0.0
    avg = _PrimalAverage(m, gamma)
    trace: list = []
    state = {"dual_best": math.inf, "t_best": t0.copy()}
    stats = {"samples": 0, "step_radius": radius, "gradient_norm_bound": grad_bound}
    converged = False
    k = 0
    for k in range(1, config.max_iters + 1):
        eta = radius / (grad_bound * math.sqrt(k))
        load = sample_stochastic_gradient(network, DualPoint(t=t, gamma=gamma), rng)
        stats["samples"] += 1
        sum_t += eta * t
        sum_eta += eta
        t = _prox_theta(network.cost, -eta * load.f, 1.0, eta, t)
        if k % config.check_every == 0 or k == config.max_iters:
            t_rep = sum_t / sum_eta if config.averaging else t
            psi_rep, flow_rep = psi_and_flow(
                network, DualPoint(t=t_rep, gamma=gamma), threads=config.threads
            )
            phi = psi_rep + float(np.sum(conjugate_cost(network.cost, t_rep)))
            if phi < state["dual_best"]:
                state["dual_best"] = phi
                state["t_best"] = t_rep.copy()
            fresh = _PrimalAverage(m, gamma)
            fresh.add(1.0, psi_rep, flow_rep.f, t_rep)
            avg = fresh
            f_rep = avg.flows()
            primal, _ = primal_value_at(network, f_rep, avg.entropy(), gamma, state["t_best"])
            gap = primal + state["dual_best"]
            violation = _capacity_violation(network.cost, f_rep)
            trace.append(
                {
                    "iteration": k,
                    "gap": gap,
                    "dual_value": state["dual_best"],
                    "capacity_violation": violation,
                }
            )
            if gap <= config.epsilon and violation <= config.epsilon:
                converged = True
                break
    stats["wall_time"] = time.perf_counter() - start
    return _finish(
        network, config, DUAL_SMD, avg, state["t_best"], state["dual_best"], trace, k, converged, stats
    )


def solve(network: Network, config: SolverConfig) -> Equilibrium:
    """Dispatch on config.method."""
    if config.method == DUAL_FGM:
        return solve_dual_fgm(network, config)
    if config.method == DUAL_UNIVERSAL:
        return solve_dual_universal(network, config)
    return solve_dual_smd(network, config)


# ---------------------------------------------------------------------------
# output documents
# ---------------------------------------------------------------------------


def write_certificate_json(path, certificate: Certificate) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(certificate.to_dict(), fh, indent=2)
        fh.write("\n")


def write_flows_csv(path, network: Network, flow, times) -> None:
    """Edge table `edge_index,tail,head,flow,time`; 17 significant digits."""
    f = np.asarray(getattr(flow, "f", flow), dtype=float)
    t = np.asarray(getattr(times, "t", times), dtype=float)
    labels = network.vertex_labels
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("edge_index,tail,head,flow,time\n")
        for e in range(network.n_edges):
            fh.write(
                f"{e},{labels[network.edge_tail[e]]},{labels[network.edge_head[e]]},"
                f"{f[e]:.17g},{t[e]:.17g}\n"
            )


def read_flows_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of write_flows_csv: (flow, time) arrays in edge_index order."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append((int(row["edge_index"]), float(row["flow"]), float(row["time"])))
    rows.sort()
    flows = np.array([r[1] for r in rows], dtype=float)
    times = np.array([r[2] for r in rows], dtype=float)
    return flows, times
