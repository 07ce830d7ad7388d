"""Reading a case file and assembling the bus admittance matrix.

The text format is the familiar one: a baseMVA scalar plus bus / gen /
branch tables, so published IEEE systems load as-is.
"""

from pathlib import Path

import numpy as np

from hdpf import build_network, parse_case, parse_case_file, serialize_case

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

case = parse_case_file(FIXTURES / "case14.m")
print(f"loaded {case.name}: {case.n_bus} buses, {len(case.branches)} branches, "
      f"{len(case.generators)} generators, base {case.base_mva} MVA")

net = build_network(case)
print(f"\nY = G + jB assembled: {net.ybus.shape[0]}x{net.ybus.shape[1]}, "
      f"{net.ybus.nnz} structural nonzeros")

# the 5-6 transformer carries an off-nominal tap; its series admittance is
# scaled by 1/tap^2 on the from diagonal and 1/tap on the off-diagonals
y = net.ybus.toarray()
i5, i6 = 4, 5
print(f"Y[5,5] = {y[i5, i5]:.4f},  Y[5,6] = {y[i5, i6]:.4f} (tap 0.932 on the from side)")

# Kirchhoff sanity: strip shunts, charging and taps, and every row sums to 0
bare = type(case)(
    case.base_mva,
    tuple(type(b)(b.id, b.type, b.p_demand, b.q_demand, 0.0, 0.0, b.v_mag, b.v_ang)
          for b in case.buses),
    case.generators,
    tuple(type(br)(br.from_bus, br.to_bus, br.r, br.x, 0.0, 1.0, 0.0, True)
          for br in case.branches),
    name="case14-bare",
)
row_sums = np.asarray(build_network(bare).ybus.sum(axis=1)).ravel()
print(f"\nwithout shunts/charging/taps, max |row sum of Y| = {np.max(np.abs(row_sums)):.2e}")

# serialization round-trips at full precision
again = parse_case(serialize_case(case), name=case.name)
print(f"serialize -> parse round trip identical: {again == case}")
