"""Schur condensation of regional quadratic models onto coupling variables.

Each region's quadratic model over the free state splits into coupling
entries x and purely local entries y.  Eliminating y through the Schur
complement leaves a reduced SPD model (b_bar, g_bar) in x alone:

    b_bar = Bxx - Bxy Byy^-1 Byx
    g_bar = gx  - Bxy Byy^-1 gy

The Byy factorization is computed once per outer iteration and reused both
here and when the full step is recovered from the consensus multipliers;
it is the dominant per-region cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .residual import RegionLinearization

__all__ = ["FactorizationError", "Blocks", "CondensedQP", "split_blocks",
           "schur_condense", "condense_region", "recover_local"]


class FactorizationError(RuntimeError):
    """A symmetric factorization failed; signals a numerical breakdown."""


def _cho_factor(a: np.ndarray, what: str):
    if a.shape[0] == 0:
        return None
    try:
        return sla.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"{what} is not positive definite: {exc}") from exc


def _cho_solve(factor, b: np.ndarray) -> np.ndarray:
    if factor is None:
        return np.zeros_like(b)
    return sla.cho_solve(factor, b, check_finite=False)


@dataclass
class Blocks:
    """One region's (B, g) partitioned into coupling (x) and local (y) blocks."""

    bxx: np.ndarray
    bxy: np.ndarray
    byy: np.ndarray
    gx: np.ndarray
    gy: np.ndarray


@dataclass
class CondensedQP:
    """Reduced model of one region plus everything recovery needs."""

    b_bar: np.ndarray      # (n_cpl, n_cpl) SPD
    g_bar: np.ndarray      # (n_cpl,)
    x_k: np.ndarray        # current coupling values A chi^k
    chol_bbar: object      # factor of b_bar
    chol_yy: object        # factor of Byy, reused for recovery
    bxy: np.ndarray
    x_cols: np.ndarray     # free-vector columns of the coupling entries
    y_cols: np.ndarray
    lin: RegionLinearization

    @property
    def n_cpl(self) -> int:
        return len(self.x_cols)


def split_blocks(lin: RegionLinearization, x_cols: np.ndarray) -> tuple[Blocks, np.ndarray]:
    """Partition (B, g) by the coupling columns; returns blocks and y columns."""
    n = lin.hess.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[x_cols] = True
    y_cols = np.flatnonzero(~mask)
    b = lin.hess
    blocks = Blocks(
        bxx=b[np.ix_(x_cols, x_cols)],
        bxy=b[np.ix_(x_cols, y_cols)],
        byy=b[np.ix_(y_cols, y_cols)],
        gx=lin.g[x_cols],
        gy=lin.g[y_cols],
    )
    return blocks, y_cols


def schur_condense(blocks: Blocks):
    """Reduced (b_bar, g_bar) plus the retained Byy factorization."""
    chol_yy = _cho_factor(blocks.byy, "local (hidden-variable) block")
    if blocks.bxx.shape[0] == 0:
        return blocks.bxx.copy(), blocks.gx.copy(), chol_yy
    w = _cho_solve(chol_yy, blocks.bxy.T)           # Byy^-1 Byx
    b_bar = blocks.bxx - blocks.bxy @ w
    b_bar = 0.5 * (b_bar + b_bar.T)
    g_bar = blocks.gx - blocks.bxy @ _cho_solve(chol_yy, blocks.gy)
    return b_bar, g_bar, chol_yy


def condense_region(lin: RegionLinearization, x_cols: np.ndarray,
                    chi_free: np.ndarray) -> CondensedQP:
    """Condense one region's model at the current iterate."""
    blocks, y_cols = split_blocks(lin, x_cols)
    b_bar, g_bar, chol_yy = schur_condense(blocks)
    chol_bbar = _cho_factor(b_bar, "condensed coupling block")
    return CondensedQP(
        b_bar=b_bar, g_bar=g_bar, x_k=chi_free[x_cols], chol_bbar=chol_bbar,
        chol_yy=chol_yy, bxy=blocks.bxy, x_cols=np.asarray(x_cols, dtype=np.int64),
        y_cols=y_cols, lin=lin,
    )


def recover_local(cqp: CondensedQP, x_target: np.ndarray, chi_free: np.ndarray) -> np.ndarray:
    """Full-step recovery of chi+ = B^-1 (B chi - g - A^T lam) by blocks.

    The one-pass optimality identity makes the coupling block of that solve
    equal to the consensus values E zbar, so the coupling entries are set to
    ``x_target`` directly; routing them through the condensed block's
    factorization instead would amplify rounding by the reciprocal of the
    regularization (the region's own model is flat along copy-bus
    directions).  The hidden entries then solve their block of the same SPD
    system through the cached Byy factor.
    """
    b = cqp.lin.hess @ chi_free - cqp.lin.g
    by = b[cqp.y_cols]
    out = np.empty_like(chi_free)
    if cqp.n_cpl == 0:
        out[cqp.y_cols] = _cho_solve(cqp.chol_yy, by)
        return out
    out[cqp.x_cols] = x_target
    out[cqp.y_cols] = _cho_solve(cqp.chol_yy, by - cqp.bxy.T @ x_target)
    return out
