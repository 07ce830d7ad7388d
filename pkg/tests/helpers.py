"""Independent oracles and generators shared across the test suite.

Everything here deliberately recomputes quantities through a different
route than the library: dense complex admittance assembly by looping over
branches, complex-power residual evaluation, finite differences for
derivatives, and a throwaway Newton-Raphson solver in complex form.
"""

from __future__ import annotations

import cmath
import math
from types import SimpleNamespace

import numpy as np
import scipy.linalg as sla

from hdpf import BusType, RawCase
from hdpf.condense import CondensedQP
from hdpf.network import NetworkModel, StateVector
from hdpf.residual import jacobian, residual


def dense_admittance_pu(case: RawCase) -> np.ndarray:
    """Dense Y in per-unit including bus shunts."""
    ids = sorted(b.id for b in case.buses)
    pos = {b: i for i, b in enumerate(ids)}
    y = np.zeros((len(ids), len(ids)), dtype=complex)
    for br in case.branches:
        if not br.in_service:
            continue
        f, t = pos[br.from_bus], pos[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        bc = 1j * br.total_line_charging_b / 2.0
        tap = br.tap_ratio if br.tap_ratio != 0.0 else 1.0
        tcplx = tap * cmath.exp(1j * math.radians(br.phase_shift))
        y[f, f] += (ys + bc) / (tap * tap)
        y[f, t] += -ys / tcplx.conjugate()
        y[t, f] += -ys / tcplx
        y[t, t] += ys + bc
    for b in case.buses:
        y[pos[b.id], pos[b.id]] += complex(b.shunt_g, b.shunt_b) / case.base_mva
    return y


def complex_power_residual(net: NetworkModel, s: StateVector) -> np.ndarray:
    """Residual via S = diag(V) conj(Y V), interleaved (p, q) per core bus."""
    v = s.vm * np.exp(1j * s.theta)
    inj = v * np.conj(net.ybus @ v)
    out = np.empty(2 * net.n_core)
    out[0::2] = s.p[net.core_idx] - inj.real[net.core_idx]
    out[1::2] = s.q[net.core_idx] - inj.imag[net.core_idx]
    return out


def fd_jacobian(net: NetworkModel, s: StateVector, h: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian of the residual w.r.t. the free entries."""
    x0 = s.free()
    cols = []
    for i in range(len(x0)):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        rp = residual(net, s.with_free(xp))
        rm = residual(net, s.with_free(xm))
        cols.append((rp - rm) / (2 * h))
    return np.array(cols).T


def fd_hessian_of_f(net: NetworkModel, s: StateVector, h: float = 1e-6) -> np.ndarray:
    """Central differences of grad f = J^T r."""
    x0 = s.free()

    def grad(x):
        st = s.with_free(x)
        return jacobian(net, st).T @ residual(net, st)

    cols = []
    for i in range(len(x0)):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((grad(xp) - grad(xm)) / (2 * h))
    h_fd = np.array(cols).T
    return 0.5 * (h_fd + h_fd.T)


def newton_solve_complex(case: RawCase, tol: float = 1e-10, max_iter: int = 40):
    """Plain Newton power flow in complex form; returns (vm, theta) by bus.

    Solves the PV/PQ mismatch equations for angles and PQ magnitudes with
    numpy only; an entirely separate route from the least-squares solver.
    """
    buses = sorted(case.buses, key=lambda b: b.id)
    pos = {b.id: i for i, b in enumerate(buses)}
    n = len(buses)
    y = dense_admittance_pu(case)

    pg = np.zeros(n)
    qg = np.zeros(n)
    vset = {}
    for g in case.generators:
        if not g.in_service:
            continue
        pg[pos[g.bus_id]] += g.p_gen
        qg[pos[g.bus_id]] += g.q_gen
        vset.setdefault(pos[g.bus_id], g.v_setpoint)
    s_spec = (pg - np.array([b.p_demand for b in buses])) / case.base_mva \
        + 1j * (qg - np.array([b.q_demand for b in buses])) / case.base_mva

    types = np.array([int(b.type) for b in buses])
    slack = np.flatnonzero(types == BusType.SLACK)
    pv = np.flatnonzero(types == BusType.PV)
    pq = np.flatnonzero(types == BusType.PQ)
    assert len(slack) == 1

    vm = np.ones(n)
    va = np.zeros(n)
    for i, b in enumerate(buses):
        if types[i] in (BusType.PV, BusType.SLACK):
            vm[i] = vset.get(i, b.v_mag)
        if types[i] == BusType.SLACK:
            va[i] = math.radians(b.v_ang)

    pvpq = np.concatenate([pv, pq])
    for _ in range(max_iter):
        v = vm * np.exp(1j * va)
        mis = v * np.conj(y @ v) - s_spec
        f = np.concatenate([mis[pvpq].real, mis[pq].imag])
        if np.max(np.abs(f)) < tol:
            break
        diag_v = np.diag(v)
        diag_i = np.diag(y @ v)
        diag_vn = np.diag(v / np.abs(v))
        ds_dvm = diag_v @ np.conj(y @ diag_vn) + np.conj(diag_i) @ diag_vn
        ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
        j11 = ds_dva[np.ix_(pvpq, pvpq)].real
        j12 = ds_dvm[np.ix_(pvpq, pq)].real
        j21 = ds_dva[np.ix_(pq, pvpq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])
        dx = np.linalg.solve(jac, -f)
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
    return vm, va


def random_spd(rng: np.random.Generator, n: int, cond: float = 100.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues in [1, cond]."""
    if n == 0:
        return np.zeros((0, 0))
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), size=n))
    m = (q * eig) @ q.T
    return 0.5 * (m + m.T)


def random_consensus_qp(rng: np.random.Generator, n_regions: int | None = None,
                        max_nz: int = 30):
    """Random strongly convex consensus QP over a hypergraph structure.

    Returns (cqps, regions, n_z) where cqps are condensed models with the
    factorizations filled in and regions are stubs carrying z_cols, so the
    one-pass functions and the dense KKT oracle both run on the instance.
    Hyperedges have cardinality 2-4 across 2-10 regions.
    """
    if n_regions is None:
        n_regions = int(rng.integers(2, 11))
    n_edges = int(rng.integers(1, 6))
    # each hyperedge owns a z-block of 1-3 columns shared by 2-4 regions
    blocks = []
    col = 0
    for _ in range(n_edges):
        width = int(rng.integers(1, 4))
        if col + width > max_nz:
            break
        card = int(rng.integers(2, min(4, n_regions) + 1))
        members = rng.choice(n_regions, size=card, replace=False)
        blocks.append((np.arange(col, col + width), members))
        col += width
    if not blocks:
        blocks = [(np.arange(0, 1), np.array([0, 1]))]
        col = 1
    n_z = col

    region_cols: list[list[int]] = [[] for _ in range(n_regions)]
    for cols, members in blocks:
        for m in members:
            region_cols[m].extend(cols.tolist())

    cqps = []
    regions = []
    for reg in range(n_regions):
        cols = np.array(sorted(region_cols[reg]), dtype=np.int64)
        n = len(cols)
        b_bar = random_spd(rng, n)
        g_bar = rng.standard_normal(n)
        x_k = rng.standard_normal(n)
        chol = sla.cho_factor(b_bar, lower=True) if n else None
        cqps.append(CondensedQP(
            b_bar=b_bar, g_bar=g_bar, x_k=x_k, chol_bbar=chol, chol_yy=None,
            bxy=np.zeros((n, 0)), x_cols=np.arange(n), y_cols=np.zeros(0, dtype=np.int64),
            lin=None,
        ))
        regions.append(SimpleNamespace(index=reg, z_cols=cols, n_cpl=n))
    return cqps, regions, n_z
