"""Command-line front end: solve instances, verify oracles, inspect potentials.

Subcommands
-----------
solve          run a solver on an edge/trip CSV pair (or a built-in instance)
               and write flows CSV + certificate JSON + run manifest
verify         run the self-check suite, one JSON report line per check
psi            print the smoothed shortest-path aggregate, per-OD values and
               gradient norms at a given time vector
convert-tntp   translate a TNTP net/trips file pair into the CSV formats

Exit codes are the sole success signal: 0 success (gap <= epsilon for solve,
all checks green for verify), 1 input or usage error, 2 solver finished
without reaching the target (outputs still written), 3 verification failure.
The EQK_LOG environment variable ({error,info,debug}, default error) controls
log verbosity on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import instances, verify
from .dual_solver import (
    SolverConfig,
    dual_lipschitz_bound,
    gamma_for_accuracy,
    smd_gradient_norm_bound,
    solve,
    write_certificate_json,
    write_flows_csv,
)
from .dual_solver import _default_step_radius
from .network import convert_tntp, edge_cost, load_network
from .path_solver import (
    PenaltyConfig,
    build_path_set,
    solve_penalty,
    solve_path_fgm,
)
from .smoothing import (
    DualPoint,
    SolverError,
    flow_from_dual,
    psi_sink_ordered,
    psi_source_layered,
    psi_total,
)

log = logging.getLogger("eqkit")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_VERIFY_FAILED = 3

_VERSION = "0.1.0"

_DUAL_METHODS = {"dual-fgm": "dual_fgm", "dual-universal": "dual_universal",
                 "dual-smd": "dual_smd"}
_PATH_METHODS = ("path-fgm", "path-penalty")
_ALL_METHODS = tuple(_DUAL_METHODS) + _PATH_METHODS


@dataclass
class RunManifest:
    """What ran and where the outputs went; written next to the certificate."""

    inputs: dict
    config: dict
    version: str = _VERSION
    wall_time_s: float = 0.0
    outputs: dict = field(default_factory=dict)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, default=str)
            fh.write("\n")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; 2 means non-convergence
    here, so usage problems are rerouted through the input-error path."""

    def error(self, message):
        raise _UsageError(message)


def _setup_logging() -> None:
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("EQK_LOG", "error").strip().lower()
    if name not in levels:
        name = "error"
    logging.basicConfig(level=levels[name], format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("eqkit").setLevel(levels[name])


def _add_instance_flags(parser) -> None:
    parser.add_argument("--edges", help="edge table CSV")
    parser.add_argument("--trips", help="OD demand CSV")
    parser.add_argument("--instance", choices=sorted(instances.BUILTIN),
                        help="built-in instance instead of --edges/--trips")
    parser.add_argument("--model", choices=["bpr", "sd"], default=None,
                        help="override the per-edge cost model column")


def _load(args):
    if args.instance is not None:
        if args.edges or args.trips:
            raise _UsageError("--instance conflicts with --edges/--trips")
        network = instances.get(args.instance)
        if args.model is not None:
            raise _UsageError("--model only applies to CSV inputs")
        return network
    if not (args.edges and args.trips):
        raise _UsageError("need --edges and --trips (or --instance)")
    return load_network(args.edges, args.trips, model_override=args.model)


def _resolve_gamma(args, network) -> float:
    if args.gamma != "auto":
        try:
            return float(args.gamma)
        except ValueError:
            raise _UsageError(f"--gamma must be a number or 'auto', got {args.gamma!r}") from None
    if args.target_accuracy is None:
        raise _UsageError("--gamma auto needs --target-accuracy")
    bounds = None
    if args.path_count_bound_per_od is not None:
        bounds = np.full(network.n_ods, float(args.path_count_bound_per_od))
    gamma = gamma_for_accuracy(network, args.target_accuracy, bounds)
    if math.isinf(gamma):
        log.info("every OD has a single route; smoothing level is arbitrary, using 1")
        gamma = 1.0
    log.info("gamma auto -> %.6g", gamma)
    return gamma


def cmd_solve(args) -> int:
    network = _load(args)
    gamma = _resolve_gamma(args, network)
    if gamma == 0 and args.method != "dual-smd":
        raise _UsageError("gamma 0 removes the smooth part; only --method dual-smd handles it")

    if args.method in _DUAL_METHODS and gamma > 0 and log.isEnabledFor(logging.INFO):
        # iteration estimates for the two dual regimes (sqrt(L R^2/eps) full
        # sweeps vs (M R/eps)^2 single-sample steps); informative only, the
        # method choice stays with the caller
        radius = _default_step_radius(network)
        det = math.sqrt(dual_lipschitz_bound(network, gamma) * radius ** 2 / args.epsilon)
        sto = (smd_gradient_norm_bound(network) * radius / args.epsilon) ** 2
        log.info("iteration estimates: deterministic ~%.3g (one sweep per sink each), "
                 "stochastic ~%.3g (one sampled sink each)", det, sto)

    started = time.perf_counter()
    if args.method in _DUAL_METHODS:
        config = SolverConfig(method=_DUAL_METHODS[args.method], gamma=gamma,
                              epsilon=args.epsilon, max_iters=args.max_iters,
                              seed=args.seed, check_every=args.check_every,
                              threads=args.threads)
        result = solve(network, config)
        flows, times = result.f_star.f, result.t_star.t
        cert_doc = result.certificate.to_dict()
        converged = result.certificate.gap <= args.epsilon
        conf_doc = asdict(config)
    else:
        paths = build_path_set(network, max_paths=args.max_routes)
        if args.method == "path-fgm":
            flow, cert = solve_path_fgm(network, paths, gamma=gamma, epsilon=args.epsilon,
                                        strongly_convex=args.strongly_convex,
                                        max_iters=args.max_iters,
                                        check_every=args.check_every)
            flows = flow.edge_flows()
            cert_doc = cert.to_dict()
            converged = cert.gap <= args.epsilon
            conf_doc = {"method": args.method, "gamma": gamma, "epsilon": args.epsilon,
                        "max_iters": args.max_iters, "strongly_convex": args.strongly_convex,
                        "max_routes": args.max_routes, "check_every": args.check_every}
        else:
            config = PenaltyConfig(lam=args.lam, epsilon=args.epsilon,
                                   max_iters=args.max_iters, check_every=args.check_every)
            res = solve_penalty(network, paths, gamma=gamma, config=config)
            flows = res.x.edge_flows()
            cert_doc = {"method": "path_penalty", "gamma": gamma, "epsilon": args.epsilon,
                        "lam": res.lam, "residual": res.residual, "objective": res.objective,
                        "iterations": res.iterations, "converged": res.converged,
                        "trace": [dict(entry) for entry in res.trace]}
            converged = res.converged
            conf_doc = asdict(config)
        times = np.asarray(edge_cost(network.cost, flows))
    wall = time.perf_counter() - started

    write_flows_csv(args.out_flows, network, flows, times)
    with open(args.out_cert, "w", encoding="utf-8") as fh:
        json.dump(cert_doc, fh, indent=2)
        fh.write("\n")
    manifest_path = args.out_manifest or os.path.splitext(args.out_cert)[0] + ".manifest.json"
    manifest = RunManifest(
        inputs={"edges": args.edges, "trips": args.trips, "instance": args.instance,
                "model_override": args.model},
        config=conf_doc,
        wall_time_s=wall,
        outputs={"flows": args.out_flows, "certificate": args.out_cert,
                 "manifest": manifest_path},
    )
    manifest.write(manifest_path)
    gap = cert_doc.get("gap", cert_doc.get("residual"))
    print(f"method={args.method} iterations={cert_doc['iterations']} "
          f"gap={gap:.6g} wall_time_s={wall:.3f} converged={converged}")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_verify(args) -> int:
    reports = verify.run_checks(only=args.only, seed=args.seed)
    failures = 0
    for report in reports:
        print(json.dumps(report.to_dict()))
        failures += not report.passed
    if failures:
        print(f"{failures} of {len(reports)} checks failed", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def _psi_value(network, od, dual_point, table_cache):
    """Per-unit smoothed cost for one OD, via the ordered sweep when the
    reaching subgraph is acyclic and the layered recursion otherwise."""
    sink = int(network.od_dest[od])
    origin = int(network.od_origin[od])
    if sink not in table_cache:
        try:
            table_cache[sink] = psi_sink_ordered(network, sink, dual_point)
        except SolverError:
            table_cache[sink] = None
    table = table_cache[sink]
    if table is not None:
        return float(table.values[origin])
    layered = psi_source_layered(network, origin, dual_point)
    return float(layered.b[layered.horizon - 1, sink])


def cmd_psi(args) -> int:
    network = _load(args)
    if args.free_flow == (args.t is not None):
        raise _UsageError("need exactly one of --free-flow and --t")
    if args.free_flow:
        t = network.t_free.copy()
    else:
        t = np.loadtxt(args.t, dtype=float, ndmin=1)
        if t.shape != (network.n_edges,):
            raise _UsageError(f"--t holds {t.size} values, network has {network.n_edges} edges")
    dual_point = DualPoint(t=t, gamma=args.gamma)

    total = psi_total(network, dual_point, threads=args.threads)
    print(f"gamma_psi_total {total:.17g}")
    print("od_index,origin,destination,demand,value,weighted")
    cache: dict = {}
    values = np.empty(network.n_ods)
    for od in range(network.n_ods):
        values[od] = _psi_value(network, od, dual_point, cache)
        demand = float(network.od_demand[od])
        print(f"{od},{network.vertex_labels[network.od_origin[od]]},"
              f"{network.vertex_labels[network.od_dest[od]]},{demand:.17g},"
              f"{values[od]:.17g},{demand * values[od]:.17g}")
    grad = flow_from_dual(network, dual_point, threads=args.threads).f
    print(f"gradient_norms l1={np.sum(np.abs(grad)):.17g} "
          f"l2={np.linalg.norm(grad):.17g} linf={np.max(np.abs(grad)):.17g}")
    if args.compare_layered:
        worst = 0.0
        for od in range(network.n_ods):
            layered = psi_source_layered(network, int(network.od_origin[od]), dual_point)
            other = float(layered.b[layered.horizon - 1, int(network.od_dest[od])])
            worst = max(worst, abs(other - values[od]))
        print(f"max_layered_discrepancy {worst:.17g}")
    return EXIT_OK


def cmd_convert_tntp(args) -> int:
    convert_tntp(args.net, args.trips, args.out_edges, args.out_trips)
    print(f"wrote {args.out_edges} and {args.out_trips}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eqkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run a solver and write flows/certificate/manifest")
    _add_instance_flags(p)
    p.add_argument("--method", choices=_ALL_METHODS, default="dual-fgm")
    p.add_argument("--gamma", default="1.0", help="entropy weight, or 'auto'")
    p.add_argument("--target-accuracy", type=float, default=None,
                   help="accuracy the auto gamma should not spoil")
    p.add_argument("--path-count-bound-per-od", type=float, default=None,
                   help="route-count bound used by --gamma auto instead of enumeration")
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--check-every", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4,
                   help="penalty coefficient (path-penalty)")
    p.add_argument("--strongly-convex", action="store_true",
                   help="restarted schedule exploiting the entropy curvature (path-fgm)")
    p.add_argument("--max-routes", type=int, default=100_000,
                   help="route enumeration cap for the path methods")
    p.add_argument("--out-flows", default="flows.csv")
    p.add_argument("--out-cert", default="certificate.json")
    p.add_argument("--out-manifest", default=None,
                   help="default: certificate path with .manifest.json suffix")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the self-check suite")
    p.add_argument("--only", choices=sorted(verify.CHECKS), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("psi", help="print the smoothed aggregate at a time vector")
    _add_instance_flags(p)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--free-flow", action="store_true", help="evaluate at t_free")
    p.add_argument("--t", default=None, help="file with one time value per edge")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--compare-layered", action="store_true",
                   help="also print the worst ordered-vs-layered discrepancy")
    p.set_defaults(func=cmd_psi)

    p = sub.add_parser("convert-tntp", help="convert TNTP net/trips files to CSV")
    p.add_argument("net", help="TNTP network file")
    p.add_argument("trips", help="TNTP trips file")
    p.add_argument("--out-edges", required=True)
    p.add_argument("--out-trips", required=True)
    p.set_defaults(func=cmd_convert_tntp)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"eqkit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"eqkit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, ValueError, KeyError, OSError) as exc:
        log.debug("failed", exc_info=True)
        print(f"eqkit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
