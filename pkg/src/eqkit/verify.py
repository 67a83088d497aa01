"""Cross-checks of the solver stack against independent references.

Every check compares a production code path with a reference that shares no
code with it (explicit enumeration, finite differences, Monte-Carlo sampling,
scalar bisection, or closed forms) and returns OracleReport records.  The CLI
`verify` subcommand runs the registry on the built-in instances and emits the
reports as JSON lines.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from . import instances
from .dual_solver import (
    DUAL_FGM,
    SolverConfig,
    composite_prox_residual,
    gamma_for_accuracy,
    smd_gradient_norm_bound,
    solve,
    _prox_theta,
)
from .network import BPR, STABLE_DYNAMICS, CostParams, conjugate_cost, conjugate_cost_gradient, edge_cost, edge_cost_integral
from .oracles import (
    OracleReport,
    _simple_paths,
    logit_fixed_point_parallel,
    primal_minimize_tiny,
    psi_by_enumeration,
    wardrop_parallel,
)
from .path_solver import build_path_set, penalty_f_residual, penalty_f_step, solve_path_fgm
from .smoothing import (
    DualPoint,
    flow_from_dual,
    gumbel_check,
    psi_sink_ordered,
    psi_source_layered,
    psi_total,
    sample_stochastic_gradient,
)

_PSI_INSTANCES = ("parallel-2", "triangle", "grid-3x3")


def _random_dual(network, rng) -> DualPoint:
    t = network.cost.t_free * (1.0 + rng.uniform(0.0, 1.5, network.n_edges))
    return DualPoint(t=t, gamma=float(rng.uniform(0.4, 2.5)))


def _psi_sum_by_enumeration(network, dual) -> float:
    return sum(
        float(network.od_demand[w]) * psi_by_enumeration(network, w, dual.t, dual.gamma)
        for w in range(network.n_ods)
    )


def check_psi_enumeration(seed: int = 0) -> list[OracleReport]:
    rng = np.random.default_rng(seed)
    reports = []
    for name in _PSI_INSTANCES:
        net = instances.get(name)
        worst = -1.0
        value = expected = 0.0
        for _ in range(5):
            dual = _random_dual(net, rng)
            a = psi_total(net, dual)
            b = _psi_sum_by_enumeration(net, dual)
            dev = abs(a - b) / max(abs(b), 1e-300)
            if dev >= worst:
                worst, value, expected = dev, a, b
        reports.append(OracleReport.check(
            f"psi-enumeration/{name}", computed=value, expected=expected,
            tolerance=1e-10, relative=True, draws=5,
        ))
    return reports


def check_recursion(seed: int = 0) -> list[OracleReport]:
    """Ordered sink sweep vs layered walk recursion, per OD on the DAG instances."""
    rng = np.random.default_rng(seed + 1)
    reports = []
    for name in instances.BUILTIN:
        net = instances.get(name)
        worst = 0.0
        value = expected = 0.0
        for _ in range(3):
            dual = _random_dual(net, rng)
            for w in range(net.n_ods):
                sink = int(net.od_dest[w])
                origin = int(net.od_origin[w])
                a = psi_sink_ordered(net, sink, dual).values[origin]
                table = psi_source_layered(net, origin, dual)
                b = table.b[table.horizon - 1, sink]
                dev = abs(a - b) / max(abs(b), 1e-300)
                if dev >= worst:
                    worst, value, expected = dev, a, b
        reports.append(OracleReport.check(
            f"recursion/{name}", computed=value, expected=expected,
            tolerance=1e-10, relative=True, draws=3,
        ))
    return reports


def check_gradient(seed: int = 0) -> list[OracleReport]:
    """-d(psi_total)/dt against the closed-form expected loads, edge by edge."""
    rng = np.random.default_rng(seed + 2)
    reports = []
    for name in instances.BUILTIN:
        net = instances.get(name)
        dual = _random_dual(net, rng)
        flows = flow_from_dual(net, dual).f
        h = 1e-6
        worst = 0.0
        got = want = 0.0
        for e in range(net.n_edges):
            tp = dual.t.copy()
            tp[e] += h
            tm = dual.t.copy()
            tm[e] -= h
            fd = -(psi_total(net, DualPoint(t=tp, gamma=dual.gamma))
                   - psi_total(net, DualPoint(t=tm, gamma=dual.gamma))) / (2 * h)
            dev = abs(fd - flows[e]) / max(abs(flows[e]), 1e-12)
            if dev >= worst:
                worst, got, want = dev, fd, flows[e]
        reports.append(OracleReport.check(
            f"gradient-check/{name}", computed=got, expected=want,
            tolerance=1e-5, relative=True, gamma=dual.gamma,
        ))
    return reports


def check_sampler(seed: int = 0, n_draws: int = 20_000) -> list[OracleReport]:
    """Empirical mean of the sampled loads vs the exact loads on the grid instance."""
    rng = np.random.default_rng(seed + 3)
    net = instances.get("grid-3x3")
    dual = _random_dual(net, rng)
    exact = flow_from_dual(net, dual).f
    total = np.zeros(net.n_edges)
    total_sq = np.zeros(net.n_edges)
    tables: dict = {}
    bound_sq = smd_gradient_norm_bound(net) ** 2
    worst_norm = 0.0
    for _ in range(n_draws):
        g = sample_stochastic_gradient(net, dual, rng, potentials=tables).f
        total += g
        total_sq += g * g
        worst_norm = max(worst_norm, float(g @ g))
    mean = total / n_draws
    var = np.maximum(total_sq / n_draws - mean ** 2, 0.0)
    stderr = np.sqrt(var / n_draws)
    z = np.abs(mean - exact) / np.maximum(stderr, 1e-12)
    e_star = int(np.argmax(z))
    return [
        OracleReport.check(
            "sampler/mean", computed=mean[e_star], expected=exact[e_star],
            tolerance=3.0 * float(stderr[e_star]) + 1e-12, relative=False,
            n_draws=n_draws, worst_edge=e_star, max_z=float(z.max()),
        ),
        OracleReport.check(
            "sampler/norm-bound", computed=worst_norm, expected=min(worst_norm, bound_sq),
            tolerance=0.0, relative=False, bound=bound_sq,
        ),
    ]


def check_gumbel(seed: int = 0) -> list[OracleReport]:
    rng = np.random.default_rng(seed + 4)
    reports = []
    for name in ("parallel-2", "triangle"):
        net = instances.get(name)
        dual = _random_dual(net, rng)
        rep = gumbel_check(net, 0, dual, n_samples=20_000, rng=rng)
        reports.append(OracleReport(
            name=f"gumbel/{name}", passed=rep.passed, computed=rep.computed,
            expected=rep.expected, tolerance=rep.tolerance, details=rep.details,
        ))
    return reports


def check_fixed_point(seed: int = 0) -> list[OracleReport]:
    reports = []
    for name in ("parallel-2", "parallel-3"):
        net = instances.get(name)
        oracle = logit_fixed_point_parallel(net, gamma=1.0)
        eq = solve(net, SolverConfig(method=DUAL_FGM, gamma=1.0, epsilon=3e-7,
                                     max_iters=200_000, check_every=25))
        dev = float(np.abs(eq.f_star.f - oracle).max())
        e = int(np.argmax(np.abs(eq.f_star.f - oracle)))
        reports.append(OracleReport.check(
            f"fixed-point/{name}", computed=float(eq.f_star.f[e]), expected=float(oracle[e]),
            tolerance=1e-5, relative=False, max_abs_deviation=dev,
            iterations=eq.certificate.iterations,
        ))
    return reports


def check_wardrop(seed: int = 0) -> list[OracleReport]:
    """Small-entropy solve against the deterministic equilibrium."""
    net = instances.get("parallel-2")
    target = 0.05
    gamma = gamma_for_accuracy(net, target)
    oracle = wardrop_parallel(net)
    eq = solve(net, SolverConfig(method=DUAL_FGM, gamma=gamma, epsilon=target / 2,
                                 max_iters=400_000, check_every=100))
    d = float(net.od_demand.sum())
    dev = float(np.abs(eq.f_star.f - oracle).max())
    e = int(np.argmax(np.abs(eq.f_star.f - oracle)))
    return [OracleReport.check(
        "wardrop/parallel-2", computed=float(eq.f_star.f[e]), expected=float(oracle[e]),
        tolerance=0.02 * d, relative=False, gamma=gamma, max_abs_deviation=dev,
    )]


def _prox_draws(rng, n):
    model = np.array([BPR] * n, dtype=object)
    model[rng.random(n) < 0.2] = STABLE_DYNAMICS
    t_free = rng.uniform(0.5, 2.0, n)
    params = CostParams(
        model=model,
        t_free=t_free,
        capacity=rng.uniform(0.5, 3.0, n),
        rho=np.where(rng.random(n) < 0.1, 0.0, rng.uniform(0.5, 1.5, n)),
        mu_power=rng.choice([1.0, 0.5, 1.0 / 3.0, 0.25], n),
    )
    interior = rng.random(n) < 0.5
    y = np.where(interior, t_free + rng.uniform(1.0, 4.0, n), t_free - rng.uniform(0.1, 2.0, n))
    b = np.where(interior, -rng.uniform(0.0, 2.0, n), rng.uniform(0.0, 2.0, n))
    return params, b, y


def check_prox(seed: int = 0, n: int = 300) -> list[OracleReport]:
    rng = np.random.default_rng(seed + 5)
    params, b, y = _prox_draws(rng, n)
    q = 1.3
    theta = _prox_theta(params, b, q, 1.0, y, tol_scale=1e-16)
    res = composite_prox_residual(params, theta, b, q, 1.0, y)
    reports = [OracleReport.check(
        "prox/time-step-residual", computed=float(res.max()), expected=0.0,
        tolerance=1e-12, relative=False, draws=n,
    )]
    lam = 0.4
    yf = rng.uniform(0.0, 5.0, n)
    fstar = penalty_f_step(params, yf, lam)
    fres = penalty_f_residual(params, fstar, yf, lam)
    reports.append(OracleReport.check(
        "prox/flow-step-residual", computed=float(fres.max()), expected=0.0,
        tolerance=1e-12, relative=False, draws=n,
    ))
    return reports


def check_conjugate(seed: int = 0, n: int = 500) -> list[OracleReport]:
    """Fenchel identity sigma(f) + sigma*(tau(f)) = f * tau(f) on random loads."""
    rng = np.random.default_rng(seed + 6)
    params = CostParams(
        model=np.array([BPR] * n, dtype=object),
        t_free=rng.uniform(0.5, 2.0, n),
        capacity=rng.uniform(0.5, 3.0, n),
        rho=rng.uniform(0.1, 2.0, n),
        mu_power=rng.choice([1.0, 0.5, 0.25], n),
    )
    f = rng.uniform(0.01, 4.0, n)
    tau = edge_cost(params, f)
    lhs = edge_cost_integral(params, f) + conjugate_cost(params, tau)
    rhs = f * tau
    e = int(np.argmax(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-12)))
    back = conjugate_cost_gradient(params, tau)
    k = int(np.argmax(np.abs(back - f) / np.maximum(f, 1e-12)))
    return [
        OracleReport.check("conjugate/fenchel-identity", computed=float(lhs[e]),
                           expected=float(rhs[e]), tolerance=1e-12, relative=True, draws=n),
        OracleReport.check("conjugate/gradient-inverts-cost", computed=float(back[k]),
                           expected=float(f[k]), tolerance=1e-10, relative=True, draws=n),
    ]


def _oracle_path_table(net):
    """Dense route incidence built from the oracle-side enumeration only."""
    cols = []
    od_of_path = []
    for w in range(net.n_ods):
        routes = sorted(_simple_paths(net, int(net.od_origin[w]), int(net.od_dest[w])))
        for p in routes:
            col = np.zeros(net.n_edges)
            col[list(p)] = 1.0
            cols.append(col)
            od_of_path.append(w)
    return SimpleNamespace(theta=np.column_stack(cols), od_of_path=np.asarray(od_of_path))


def check_primal_descent(seed: int = 0) -> list[OracleReport]:
    """Plain projected-gradient reference objective vs the accelerated solver."""
    net = instances.get("parallel-2")
    paths = build_path_set(net)
    _, cert = solve_path_fgm(net, paths, gamma=1.0, epsilon=1e-10, strongly_convex=True)
    _, ref_val = primal_minimize_tiny(net, _oracle_path_table(net), gamma=1.0)
    return [OracleReport.check(
        "primal-descent/objective", computed=cert.primal_value, expected=ref_val,
        tolerance=1e-6, relative=False,
    )]


CHECKS = {
    "psi-enumeration": check_psi_enumeration,
    "recursion": check_recursion,
    "gradient-check": check_gradient,
    "sampler": check_sampler,
    "gumbel": check_gumbel,
    "fixed-point": check_fixed_point,
    "wardrop": check_wardrop,
    "prox": check_prox,
    "conjugate": check_conjugate,
    "primal-descent": check_primal_descent,
}


def run_checks(only: str | None = None, seed: int = 0) -> list[OracleReport]:
    if only is not None:
        if only not in CHECKS:
            raise KeyError(f"unknown check {only!r}; choices: {', '.join(CHECKS)}")
        return list(CHECKS[only](seed))
    out: list[OracleReport] = []
    for fn in CHECKS.values():
        out.extend(fn(seed))
    return out
