"""Per-unit network model: admittance matrix, bus typing, state vectors.

A :class:`NetworkModel` fixes, per bus, which of the four steady-state
quantities (angle, magnitude, active power, reactive power) are specified
and which are free:

==========  =============  ==========
bus type    fixed          free
==========  =============  ==========
PQ          p, q           theta, v
PV          p, v           theta, q
slack       theta, v       p, q
copy        (none)         theta, v
==========  =============  ==========

Copy buses carry only (theta, v); they exist to make a region's power-flow
equations self-contained, and the balance equations of the physical bus
they mirror live in its home region.

The free entries of a state are flattened in quantity-major order
(all free angles by bus position, then magnitudes, then p, then q), which
keeps coupling selectors simple index arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .caseio import BusType, RawCase

__all__ = ["ModelError", "NetworkModel", "StateVector", "build_network", "flat_start"]


class ModelError(ValueError):
    """Raised when a case cannot be turned into a usable network model."""


@dataclass(frozen=True)
class BusSpec:
    """Normalized per-bus data, already in per-unit and radians."""

    bus_id: int
    type: BusType
    p_inj: float  # specified net injection, p.u.
    q_inj: float
    shunt_g: float  # p.u.
    shunt_b: float
    v_spec: float  # setpoint for fixed-v buses, p.u.
    theta_spec: float  # radians, slack only


@dataclass(frozen=True)
class BranchSpec:
    """Branch with endpoints as 0-based bus positions, shift in radians."""

    f: int
    t: int
    r: float
    x: float
    b: float
    tap: float
    shift: float


class NetworkModel:
    """Immutable per-unit network: Y = G + jB plus per-bus specifications."""

    def __init__(self, buses: list[BusSpec], branches: list[BranchSpec], base_mva: float,
                 require_slack: bool = True):
        n = len(buses)
        if n == 0:
            raise ModelError("network has no buses")
        self.n_bus = n
        self.base_mva = base_mva
        self.bus_ids = np.array([b.bus_id for b in buses], dtype=np.int64)
        self.bus_type = np.array([int(b.type) for b in buses], dtype=np.int8)

        n_slack = int(np.sum(self.bus_type == BusType.SLACK))
        if require_slack and n_slack != 1:
            raise ModelError(f"expected exactly one slack bus, found {n_slack}")
        if not require_slack and n_slack > 1:
            raise ModelError(f"expected at most one slack bus, found {n_slack}")

        self.p_spec = np.array([b.p_inj for b in buses])
        self.q_spec = np.array([b.q_inj for b in buses])
        self.v_spec = np.array([b.v_spec for b in buses])
        self.theta_spec = np.array([b.theta_spec for b in buses])

        self._assemble_admittance(buses, branches)
        self._index_free_entries()

    # -- admittance ---------------------------------------------------------

    def _assemble_admittance(self, buses, branches):
        n = self.n_bus
        rows: list[int] = []
        cols: list[int] = []
        vals: list[complex] = []

        touched = np.zeros(n, dtype=bool)
        for br in branches:
            if br.r == 0.0 and br.x == 0.0:
                fid, tid = self.bus_ids[br.f], self.bus_ids[br.t]
                raise ModelError(f"zero-impedance branch {fid}-{tid}")
            ys = 1.0 / complex(br.r, br.x)
            ysh = 0.5j * br.b
            t = br.tap * complex(math.cos(br.shift), math.sin(br.shift))
            rows += [br.f, br.f, br.t, br.t]
            cols += [br.f, br.t, br.f, br.t]
            vals += [
                (ys + ysh) / (br.tap * br.tap),
                -ys / t.conjugate(),
                -ys / t,
                ys + ysh,
            ]
            touched[br.f] = True
            touched[br.t] = True

        if n > 1 and not touched.all():
            lonely = self.bus_ids[~touched]
            raise ModelError(f"isolated bus(es) with no in-service branch: {lonely.tolist()}")

        # bus shunts, plus a structural zero so every diagonal entry exists
        for i, b in enumerate(buses):
            rows.append(i)
            cols.append(i)
            vals.append(complex(b.shunt_g, b.shunt_b))

        y = sp.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex).tocsr()
        y.sum_duplicates()
        self.ybus = y
        coo = y.tocoo()
        self.y_row = coo.row.astype(np.int64)
        self.y_col = coo.col.astype(np.int64)
        self.g_val = coo.data.real.copy()
        self.b_val = coo.data.imag.copy()
        self._diag_mask = self.y_row == self.y_col

    @property
    def G(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.g_val, (self.y_row, self.y_col)), shape=(self.n_bus,) * 2)

    @property
    def B(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.b_val, (self.y_row, self.y_col)), shape=(self.n_bus,) * 2)

    # -- free-variable layout -----------------------------------------------

    def _index_free_entries(self):
        t = self.bus_type
        is_pq = t == BusType.PQ
        is_pv = t == BusType.PV
        is_slack = t == BusType.SLACK
        is_copy = t == BusType.COPY

        self.is_copy = is_copy
        self.core_idx = np.flatnonzero(~is_copy)
        self.n_core = len(self.core_idx)

        self.free_theta = ~is_slack
        self.free_v = is_pq | is_copy
        self.free_p = is_slack
        self.free_q = is_slack | is_pv

        self.free_theta_idx = np.flatnonzero(self.free_theta)
        self.free_v_idx = np.flatnonzero(self.free_v)
        self.free_p_idx = np.flatnonzero(self.free_p)
        self.free_q_idx = np.flatnonzero(self.free_q)

        sizes = [len(self.free_theta_idx), len(self.free_v_idx),
                 len(self.free_p_idx), len(self.free_q_idx)]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        self.n_free = int(offs[-1])

        def positions(idx, off):
            pos = np.full(self.n_bus, -1, dtype=np.int64)
            pos[idx] = off + np.arange(len(idx))
            return pos

        # bus -> column of the free vector for each quantity (-1 if fixed)
        self.col_theta = positions(self.free_theta_idx, offs[0])
        self.col_v = positions(self.free_v_idx, offs[1])
        self.col_p = positions(self.free_p_idx, offs[2])
        self.col_q = positions(self.free_q_idx, offs[3])

        # every state entry that exists, free or fixed: 4 per core bus, 2 per copy
        self.n_state_entries = 4 * self.n_core + 2 * int(is_copy.sum())


class StateVector:
    """Per-bus (theta, v, p, q) arrays tied to a network's fixed-mask."""

    __slots__ = ("net", "theta", "vm", "p", "q")

    def __init__(self, net: NetworkModel, theta, vm, p, q):
        self.net = net
        self.theta = np.asarray(theta, dtype=float)
        self.vm = np.asarray(vm, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.q = np.asarray(q, dtype=float)

    def free(self) -> np.ndarray:
        """Free entries, quantity-major (theta, v, p, q blocks)."""
        n = self.net
        return np.concatenate([
            self.theta[n.free_theta_idx],
            self.vm[n.free_v_idx],
            self.p[n.free_p_idx],
            self.q[n.free_q_idx],
        ])

    def with_free(self, vec: np.ndarray) -> "StateVector":
        """New state with the free entries replaced; fixed entries untouched."""
        n = self.net
        if vec.shape != (n.n_free,):
            raise ValueError(f"free vector must have shape ({n.n_free},), got {vec.shape}")
        theta = self.theta.copy()
        vm = self.vm.copy()
        p = self.p.copy()
        q = self.q.copy()
        o = 0
        for idx, arr in ((n.free_theta_idx, theta), (n.free_v_idx, vm),
                         (n.free_p_idx, p), (n.free_q_idx, q)):
            arr[idx] = vec[o:o + len(idx)]
            o += len(idx)
        return StateVector(n, theta, vm, p, q)

    def copy(self) -> "StateVector":
        return StateVector(self.net, self.theta.copy(), self.vm.copy(),
                           self.p.copy(), self.q.copy())


def _bus_specs_from_case(case: RawCase) -> list[BusSpec]:
    base = case.base_mva
    gens_p = {b.id: 0.0 for b in case.buses}
    gens_q = {b.id: 0.0 for b in case.buses}
    vset: dict[int, float] = {}
    for g in case.generators:
        if not g.in_service:
            continue
        gens_p[g.bus_id] += g.p_gen
        gens_q[g.bus_id] += g.q_gen
        vset.setdefault(g.bus_id, g.v_setpoint)

    specs = []
    for b in case.buses:
        fixed_v = vset.get(b.id, b.v_mag) if b.type in (BusType.PV, BusType.SLACK) else b.v_mag
        specs.append(
            BusSpec(
                bus_id=b.id,
                type=b.type,
                p_inj=(gens_p[b.id] - b.p_demand) / base,
                q_inj=(gens_q[b.id] - b.q_demand) / base,
                shunt_g=b.shunt_g / base,
                shunt_b=b.shunt_b / base,
                v_spec=fixed_v,
                theta_spec=math.radians(b.v_ang),
            )
        )
    return specs


def _branch_specs_from_case(case: RawCase, pos: dict[int, int]) -> list[BranchSpec]:
    out = []
    for br in case.branches:
        if not br.in_service:
            continue
        out.append(
            BranchSpec(
                f=pos[br.from_bus],
                t=pos[br.to_bus],
                r=br.r,
                x=br.x,
                b=br.total_line_charging_b,
                tap=br.tap_ratio if br.tap_ratio != 0.0 else 1.0,
                shift=math.radians(br.phase_shift),
            )
        )
    return out


def build_network(case: RawCase) -> NetworkModel:
    """Build the per-unit model of a self-contained (merged) case.

    The admittance matrix uses the standard pi branch model: series
    admittance 1/(r+jx), half the line charging at each end, tap ratio and
    phase shift on the from side, bus shunts on the diagonal.  Out-of-service
    branches are skipped; zero-impedance branches and isolated buses are
    rejected.
    """
    order = sorted(range(len(case.buses)), key=lambda i: case.buses[i].id)
    buses = [case.buses[i] for i in order]
    pos = {b.id: i for i, b in enumerate(buses)}
    reordered = RawCase(case.base_mva, tuple(buses), case.generators, case.branches, case.name)
    specs = _bus_specs_from_case(reordered)
    branches = _branch_specs_from_case(reordered, pos)
    return NetworkModel(specs, branches, case.base_mva, require_slack=True)


def flat_start(net: NetworkModel) -> StateVector:
    """Initial state: zero angles and unit magnitudes on all free entries.

    Fixed entries take their specified values, and free injections start at
    the specified net injection (zero where nothing is specified, e.g. copy
    buses).
    """
    theta = np.where(net.free_theta, 0.0, net.theta_spec)
    vm = np.where(net.free_v, 1.0, net.v_spec)
    p = np.where(net.is_copy, 0.0, net.p_spec)
    q = np.where(net.is_copy, 0.0, net.q_spec)
    return StateVector(net, theta, vm, p, q)
