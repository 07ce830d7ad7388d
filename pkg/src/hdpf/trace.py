"""Solve traces: per-iteration convergence and communication metrics.

Traces serialize as newline-delimited JSON: one header object carrying the
terminal status, then one record per outer iteration with fields

    iter, f, r_norm2, dchi_inf, primal_residual, comm_floats, wall_ns

plus ``lm_error`` and ``condense_gap`` when diagnostics were enabled and
``dist_to_ref`` when a reference state was supplied.  JSON float rendering
round-trips at full double precision.

``wall_ns`` is measured wall time and therefore varies between runs; every
other field is deterministic, which is what :func:`trace_signature`
captures.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .network import NetworkModel, StateVector

__all__ = [
    "IterationRecord",
    "SolveTrace",
    "STATUS_CONVERGED",
    "STATUS_MAX_ITER",
    "STATUS_BREAKDOWN",
    "write_trace",
    "read_trace",
    "trace_signature",
    "write_state",
    "read_state",
]

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_BREAKDOWN = "numerical_breakdown"


@dataclass
class IterationRecord:
    iter: int
    f: float
    r_norm2: float
    dchi_inf: float
    primal_residual: float
    comm_floats: int
    wall_ns: int
    lm_error: float | None = None
    condense_gap: float | None = None
    dist_to_ref: float | None = None


@dataclass
class SolveTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = STATUS_MAX_ITER

    @property
    def n_iter(self) -> int:
        return len(self.records)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED

    def final(self) -> IterationRecord | None:
        return self.records[-1] if self.records else None


_FIELDS = ("iter", "f", "r_norm2", "dchi_inf", "primal_residual", "comm_floats", "wall_ns")
_OPTIONAL = ("lm_error", "condense_gap", "dist_to_ref")


def _record_dict(rec: IterationRecord) -> dict:
    d = {k: getattr(rec, k) for k in _FIELDS}
    for k in _OPTIONAL:
        v = getattr(rec, k)
        if v is not None:
            d[k] = v
    return d


def write_trace(trace: SolveTrace, sink: IO) -> None:
    """Write a trace as JSON lines; a header-only file means zero iterations."""
    lines = [json.dumps({"type": "header", "format": "hdpf-trace", "version": 1,
                         "status": trace.status})]
    lines += [json.dumps(_record_dict(r)) for r in trace.records]
    payload = "\n".join(lines) + "\n"
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(payload.encode("utf-8"))
    else:
        sink.write(payload)


def read_trace(source: IO) -> SolveTrace:
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [ln for ln in data.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty trace stream")
    header = json.loads(lines[0])
    if header.get("format") != "hdpf-trace":
        raise ValueError("not a trace stream (missing header)")
    records = []
    for ln in lines[1:]:
        d = json.loads(ln)
        records.append(IterationRecord(
            iter=int(d["iter"]),
            f=float(d["f"]),
            r_norm2=float(d["r_norm2"]),
            dchi_inf=float(d["dchi_inf"]),
            primal_residual=float(d["primal_residual"]),
            comm_floats=int(d["comm_floats"]),
            wall_ns=int(d["wall_ns"]),
            lm_error=d.get("lm_error"),
            condense_gap=d.get("condense_gap"),
            dist_to_ref=d.get("dist_to_ref"),
        ))
    return SolveTrace(records=records, status=header.get("status", STATUS_MAX_ITER))


def trace_signature(trace: SolveTrace) -> tuple:
    """Everything deterministic in a trace (wall time excluded)."""
    rows = tuple(
        (r.iter, r.f, r.r_norm2, r.dchi_inf, r.primal_residual, r.comm_floats,
         r.lm_error, r.condense_gap, r.dist_to_ref)
        for r in trace.records
    )
    return (trace.status, rows)


def write_state(state: StateVector, sink: IO) -> None:
    """Serialize a full state (theta, v, p, q per bus) as JSON."""
    payload = json.dumps({
        "bus_ids": state.net.bus_ids.tolist(),
        "theta": state.theta.tolist(),
        "vm": state.vm.tolist(),
        "p": state.p.tolist(),
        "q": state.q.tolist(),
    }) + "\n"
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(payload.encode("utf-8"))
    else:
        sink.write(payload)


def read_state(source: IO, net: NetworkModel) -> StateVector:
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    d = json.loads(data)
    ids = np.asarray(d["bus_ids"], dtype=np.int64)
    if len(ids) != net.n_bus or not np.array_equal(ids, net.bus_ids):
        raise ValueError("state file does not match the network's buses")
    return StateVector(net, np.asarray(d["theta"]), np.asarray(d["vm"]),
                       np.asarray(d["p"]), np.asarray(d["q"]))
