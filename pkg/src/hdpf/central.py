"""Centralized references: whole-system Gauss-Newton and a dense KKT solver.

The centralized solver runs on the merged, unpartitioned case through the
same residual and Jacobian code as the regional models, so any disagreement
with the distributed path isolates the consensus machinery rather than the
physics.  The dense saddle-point solver is the independent oracle for the
condensed consensus QP.
"""

from __future__ import annotations

import math
import time

import numpy as np
import scipy.linalg as sla

from .condense import FactorizationError
from .driver import SolverConfig
from .network import ModelError, NetworkModel, StateVector, flat_start
from .residual import linearize
from .trace import (
    STATUS_BREAKDOWN,
    STATUS_CONVERGED,
    STATUS_MAX_ITER,
    IterationRecord,
    SolveTrace,
)

__all__ = ["central_solve", "dense_kkt_solve"]


def central_solve(net: NetworkModel, cfg: SolverConfig | None = None,
                  x0: StateVector | None = None) -> tuple[StateVector, SolveTrace]:
    """Regularized Gauss-Newton on the whole network from a flat start.

    Defaults push the residual to 1e-12 so the result can serve as the
    reference solution; non-convergence is reported through the trace
    status, not an exception.
    """
    if cfg is None:
        cfg = SolverConfig(tol_residual=1e-12)
    s = x0.copy() if x0 is not None else flat_start(net)
    records: list[IterationRecord] = []
    status = STATUS_MAX_ITER

    for k in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter_ns()
        try:
            lin = linearize(net, s, cfg.eps)
        except ModelError:
            status = STATUS_BREAKDOWN
            break
        rss = float(lin.r @ lin.r)
        r_norm2 = math.sqrt(rss)
        if r_norm2 <= cfg.tol_residual:
            status = STATUS_CONVERGED
            break
        chi = s.free()
        rhs = lin.hess @ chi - lin.g
        try:
            chol = sla.cho_factor(lin.hess, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            status = STATUS_BREAKDOWN
            break
        chi_next = sla.cho_solve(chol, rhs, check_finite=False)
        dchi = float(np.max(np.abs(chi_next - chi))) if len(chi) else 0.0
        s = s.with_free(chi_next)
        records.append(IterationRecord(
            iter=k, f=0.5 * rss, r_norm2=r_norm2, dchi_inf=dchi,
            primal_residual=0.0, comm_floats=0,
            wall_ns=time.perf_counter_ns() - t0,
        ))
        if dchi <= cfg.tol_step:
            status = STATUS_CONVERGED
            break

    return s, SolveTrace(records=records, status=status)


def dense_kkt_solve(b_bars: list[np.ndarray], g_bars: list[np.ndarray],
                    x_ks: list[np.ndarray], z_cols: list[np.ndarray],
                    n_z: int) -> tuple[list[np.ndarray], np.ndarray, list[np.ndarray]]:
    """Directly solve the condensed consensus QP's KKT system.

    Unknowns are the stacked coupling vector x, the consensus vector z, and
    one multiplier per coupling entry; the symmetric indefinite system

        [ Bbar  0  I ] [x]   [ Bbar x^k - gbar ]
        [ 0     0 -E'] [z] = [ 0 ]
        [ I    -E  0 ] [l]   [ 0 ]

    is factored densely.  With no consensus column the blocks are solved
    unconstrained and the multipliers vanish.
    """
    sizes = [len(g) for g in g_bars]
    n_x = sum(sizes)
    if n_z == 0:
        xs = []
        lams = []
        for b, g, xk in zip(b_bars, g_bars, x_ks):
            if len(g) == 0:
                xs.append(np.zeros(0))
            else:
                xs.append(xk - np.linalg.solve(b, g))
            lams.append(np.zeros(len(g)))
        return xs, np.zeros(0), lams

    dim = n_x + n_z + n_x
    kkt = np.zeros((dim, dim))
    rhs = np.zeros(dim)
    off = 0
    for b, g, xk, cols in zip(b_bars, g_bars, x_ks, z_cols):
        n = len(g)
        sl = slice(off, off + n)
        kkt[sl, sl] = b
        rows = np.arange(off, off + n)
        kkt[rows, n_x + n_z + rows] = 1.0            # +lam in stationarity
        kkt[n_x + n_z + rows, rows] = 1.0            # x in the constraint
        kkt[n_x + n_z + rows, n_x + np.asarray(cols)] = -1.0   # -E z
        kkt[n_x + np.asarray(cols), n_x + n_z + rows] = -1.0   # -E' lam
        rhs[sl] = b @ xk - g
        off += n
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"singular consensus KKT system: {exc}") from exc

    xs = []
    lams = []
    off = 0
    for n in sizes:
        xs.append(sol[off:off + n])
        lams.append(sol[n_x + n_z + off:n_x + n_z + off + n])
        off += n
    return xs, sol[n_x:n_x + n_z], lams
