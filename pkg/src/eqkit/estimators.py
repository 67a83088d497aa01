"""Estimator-style wrapper around the functional solvers.

`EquilibriumSolver` follows the scikit-learn parameter/attribute conventions:
constructor arguments mirror the solver knobs verbatim (so `get_params` /
`set_params` and grid utilities work), `fit(network)` runs the selected method,
and the results land in trailing-underscore attributes.  The functional API in
`dual_solver` / `path_solver` stays the primary surface; this wrapper exists
for pipelines that expect the estimator protocol.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .dual_solver import (
    DUAL_FGM,
    DUAL_SMD,
    DUAL_UNIVERSAL,
    SolverConfig,
    solve,
)
from .network import Network, edge_cost
from .path_solver import (
    PATH_FGM,
    PATH_PENALTY,
    PenaltyConfig,
    build_path_set,
    solve_path_fgm,
    solve_penalty,
)

_METHODS = {
    "dual-fgm": DUAL_FGM,
    "dual-universal": DUAL_UNIVERSAL,
    "dual-smd": DUAL_SMD,
    "path-fgm": PATH_FGM,
    "path-penalty": PATH_PENALTY,
}


class EquilibriumSolver(BaseEstimator):
    """Equilibrium edge loads for a fixed network, scikit-learn style.

    Parameters
    ----------
    method : str, one of dual-fgm, dual-universal, dual-smd, path-fgm,
        path-penalty.
    gamma : float, entropy weight (0 allowed only for dual-smd).
    epsilon : float, target duality gap (coupling residual for path-penalty).
    max_iters : int.
    seed : int or None, draws seed for dual-smd.
    lam : float, penalty coefficient for path-penalty.
    strongly_convex : bool, restart schedule for path-fgm.
    max_routes : int, enumeration cap for the path-based methods.
    threads : int, per-sink fan-out for the smoothed sweeps.

    Attributes after fit
    --------------------
    flow_ : ndarray, equilibrium edge loads.
    time_ : ndarray, edge travel times at flow_ (dual methods report the dual
        point, which is the equilibrium time vector).
    gap_ : float, final certificate value.
    n_iter_ : int.
    converged_ : bool.
    certificate_ : Certificate for the certified methods, else None.
    result_ : the underlying solver result object.
    """

    def __init__(self, method: str = "dual-fgm", gamma: float = 1.0, epsilon: float = 1e-6,
                 max_iters: int = 200_000, seed: int | None = None, lam: float = 1e-4,
                 strongly_convex: bool = True, max_routes: int = 100_000, threads: int = 1):
        self.method = method
        self.gamma = gamma
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.seed = seed
        self.lam = lam
        self.strongly_convex = strongly_convex
        self.max_routes = max_routes
        self.threads = threads

    def fit(self, network: Network, y=None) -> "EquilibriumSolver":
        kind = _METHODS.get(str(self.method).replace("_", "-"))
        if kind is None:
            raise ValueError(f"unknown method {self.method!r}; choices: {', '.join(_METHODS)}")
        if kind in (DUAL_FGM, DUAL_UNIVERSAL, DUAL_SMD):
            config = SolverConfig(method=kind, gamma=self.gamma, epsilon=self.epsilon,
                                  max_iters=self.max_iters, seed=self.seed, threads=self.threads)
            eq = solve(network, config)
            self.result_ = eq
            self.certificate_ = eq.certificate
            self.flow_ = np.asarray(eq.f_star.f)
            self.time_ = np.asarray(eq.t_star.t)
            self.gap_ = float(eq.certificate.gap)
            self.n_iter_ = int(eq.certificate.iterations)
            self.converged_ = bool(eq.certificate.converged)
            return self
        paths = build_path_set(network, max_paths=self.max_routes)
        if kind == PATH_FGM:
            flow, cert = solve_path_fgm(network, paths, gamma=self.gamma, epsilon=self.epsilon,
                                        strongly_convex=self.strongly_convex,
                                        max_iters=self.max_iters)
            self.result_ = (flow, cert)
            self.certificate_ = cert
            self.flow_ = np.asarray(flow.edge_flows())
            self.gap_ = float(cert.gap)
            self.n_iter_ = int(cert.iterations)
            self.converged_ = bool(cert.converged)
        else:
            res = solve_penalty(network, paths, gamma=self.gamma,
                                config=PenaltyConfig(lam=self.lam, epsilon=self.epsilon,
                                                     max_iters=self.max_iters))
            self.result_ = res
            self.certificate_ = None
            self.flow_ = np.asarray(res.x.edge_flows())
            self.gap_ = float(res.residual)
            self.n_iter_ = int(res.iterations)
            self.converged_ = bool(res.converged)
        self.time_ = np.asarray(edge_cost(network.cost, self.flow_))
        return self
