"""Command-line front end: merge, solve, baseline, check.

Exit codes: 0 on success/convergence, 2 when a solver stops without
converging, 1 on any input or usage error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .caseio import CaseFormatError, ManifestError, load_manifest, parse_case_file, serialize_case
from .central import central_solve
from .comm import run_distributed
from .condense import FactorizationError, condense_region, recover_local
from .consensus import TOL_KKT, averaging_projector, consensus_pass, verify_kkt
from .driver import SolverConfig, solve
from .network import ModelError, build_network, flat_start
from .partition import PartitionError, consensus_dims, merge_cases, partition
from .residual import linearize
from .trace import read_state, write_state, write_trace

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hdpf",
        description="Distributed AC power flow over hypergraph-coupled regions.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p_merge = sub.add_parser("merge", help="materialize the merged case for a manifest")
    p_merge.add_argument("manifest")
    p_merge.add_argument("-o", "--output", required=True, help="merged case file to write")

    p_solve = sub.add_parser("solve", help="run the distributed solver on a manifest")
    p_solve.add_argument("manifest")
    p_solve.add_argument("--eps", type=float, default=1e-10)
    p_solve.add_argument("--tol-step", type=float, default=1e-8)
    p_solve.add_argument("--tol-res", type=float, default=1e-10)
    p_solve.add_argument("--max-iter", type=int, default=50)
    p_solve.add_argument("--diagnose", action="store_true",
                         help="record lm_error and condense_gap per iteration")
    p_solve.add_argument("--reference", help="state file for dist_to_ref records")
    p_solve.add_argument("--trace", help="write the iteration trace here (JSON lines)")
    p_solve.add_argument("--distributed", action="store_true",
                         help="run through the message-passing harness")
    p_solve.add_argument("--output", help="write the final merged state here")

    p_base = sub.add_parser("baseline", help="centralized Gauss-Newton on a merged case")
    p_base.add_argument("case")
    p_base.add_argument("--trace", help="write the iteration trace here")
    p_base.add_argument("--output", help="write the solved state here")
    p_base.add_argument("--max-iter", type=int, default=50)

    p_check = sub.add_parser("check", help="run the structural invariant suite on a manifest")
    p_check.add_argument("manifest")

    return ap


def _cmd_merge(args) -> int:
    manifest, raws = load_manifest(args.manifest)
    merged, _ = merge_cases(manifest, raws)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(serialize_case(merged))
    prob = partition(manifest, raws)
    n_state, n_cpl, n_z = consensus_dims(prob)
    print(f"merged {len(raws)} regions -> {merged.n_bus} buses, "
          f"{len(merged.branches)} branches ({args.output})")
    print(f"n_state={n_state} n_cpl={n_cpl} n_z={n_z}")
    for reg in prob.regions:
        n_copy = int(reg.is_copy.sum())
        print(f"  region {reg.index}: {reg.net.n_core} core + {n_copy} copy buses, "
              f"n_cpl={reg.n_cpl}")
    hist = prob.hypergraph.cardinality_histogram()
    print(f"hyperedge cardinality histogram: {hist}")
    return 0


def _cmd_solve(args) -> int:
    manifest, raws = load_manifest(args.manifest)
    prob = partition(manifest, raws)
    cfg = SolverConfig(eps=args.eps, tol_step=args.tol_step, tol_residual=args.tol_res,
                       max_iter=args.max_iter, diagnose=args.diagnose)
    ref = None
    if args.reference:
        merged_net = build_network(prob.merged_case)
        with open(args.reference, "rb") as fh:
            ref = read_state(fh, merged_net)
    if args.distributed:
        state, lams, trace, ledger = run_distributed(prob, cfg, ref)
        print(f"consensus traffic: {ledger.total} floats "
              f"({ledger.total_up} up, {ledger.total_down} down)")
    else:
        state, lams, trace = solve(prob, cfg, ref)
    last = trace.final()
    if last is not None:
        print(f"{trace.n_iter} iterations, status={trace.status}, "
              f"r_norm2={last.r_norm2:.3e}, primal_residual={last.primal_residual:.3e}")
    else:
        print(f"0 iterations, status={trace.status} (already at tolerance)")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            write_trace(trace, fh)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            write_state(state, fh)
    return 0 if trace.converged else 2


def _cmd_baseline(args) -> int:
    case = parse_case_file(args.case)
    net = build_network(case)
    cfg = SolverConfig(tol_residual=1e-12, max_iter=args.max_iter)
    state, trace = central_solve(net, cfg)
    last = trace.final()
    r = last.r_norm2 if last else 0.0
    print(f"{trace.n_iter} iterations, status={trace.status}, r_norm2={r:.3e}")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            write_trace(trace, fh)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            write_state(state, fh)
    return 0 if trace.converged else 2


def _cmd_check(args) -> int:
    manifest, raws = load_manifest(args.manifest)
    prob = partition(manifest, raws)
    n_state, n_cpl, n_z = consensus_dims(prob)
    print(f"regions={len(prob.regions)} n_state={n_state} n_cpl={n_cpl} n_z={n_z}")
    print(f"hyperedge cardinality histogram: {prob.hypergraph.cardinality_histogram()}")

    ok = True
    if n_z:
        e = prob.stacked_incidence().toarray()
        rank = np.linalg.matrix_rank(e)
        print(f"stacked incidence: {e.shape[0]} x {e.shape[1]}, rank {rank} "
              f"({'full column rank' if rank == n_z else 'RANK DEFICIENT'})")
        ok &= rank == n_z

        cfg = SolverConfig()
        states = [flat_start(r.net) for r in prob.regions]
        lins = [linearize(r.net, s, cfg.eps) for r, s in zip(prob.regions, states)]
        cqps = [condense_region(lin, r.coupling_free_cols, s.free())
                for lin, r, s in zip(lins, prob.regions, states)]
        m = averaging_projector(cqps, prob.regions, n_z)
        idem = float(np.max(np.abs(m @ m - m)))
        print(f"averaging projector idempotence |M^2-M|_inf = {idem:.3e}")
        ok &= idem <= 1e-8

        sol = consensus_pass(cqps, prob.regions, n_z)
        chi_next = [recover_local(c, sol.z_bar[r.z_cols], s.free())
                    for c, r, s in zip(cqps, prob.regions, states)]
        kkt = verify_kkt(cqps, prob.regions, sol, chi_next)
        scale = 1.0 + max(float(np.max(np.abs(c.g_bar))) if c.n_cpl else 0.0 for c in cqps)
        print(f"first-iteration KKT residuals: stationarity={kkt.stationarity:.3e} "
              f"dual={kkt.dual:.3e} primal={kkt.primal:.3e} (scale {scale:.3e})")
        ok &= kkt.max() <= TOL_KKT * scale
    else:
        print("single region: no consensus structure to check")

    print("check:", "ok" if ok else "FAILED")
    return 0 if ok else 2


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "merge":
            return _cmd_merge(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "baseline":
            return _cmd_baseline(args)
        if args.command == "check":
            return _cmd_check(args)
    except (CaseFormatError, ManifestError, PartitionError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FactorizationError as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
