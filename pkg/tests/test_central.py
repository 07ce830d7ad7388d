import numpy as np

from hdpf import SolverConfig, build_network, central_solve, flat_start, parse_case
from hdpf.residual import residual
from hdpf.trace import STATUS_MAX_ITER

from helpers import newton_solve_complex


def test_ieee14_converges_fast_and_matches_newton_oracle(cases):
    case = cases["case14"]
    net = build_network(case)
    state, trace = central_solve(net)
    assert trace.converged
    assert trace.n_iter <= 10
    assert np.linalg.norm(residual(net, state)) <= 1e-12

    vm_ref, va_ref = newton_solve_complex(case)
    np.testing.assert_allclose(state.vm, vm_ref, atol=1e-8)
    np.testing.assert_allclose(state.theta, va_ref, atol=1e-8)
    # sanity against the published (rounded) voltage column
    stored = np.array([b.v_mag for b in sorted(case.buses, key=lambda b: b.id)])
    assert np.max(np.abs(state.vm - stored)) <= 2e-3


def test_newton_oracle_agreement_all_base_cases(cases):
    for name in ("case9", "case30", "case57"):
        net = build_network(cases[name])
        state, trace = central_solve(net)
        assert trace.converged, name
        vm_ref, va_ref = newton_solve_complex(cases[name])
        np.testing.assert_allclose(state.vm, vm_ref, atol=1e-8)
        np.testing.assert_allclose(state.theta, va_ref, atol=1e-8)


def test_lossless_zero_demand_converges_in_zero_iterations():
    text = """
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1.0 0 0 1 0 0;
  2 1 0 0 0 0 1 1.0 0 0 1 0 0;
];
mpc.gen = [
  1 0 0 0 0 1.0 100 1;
];
mpc.branch = [
  1 2 0 0.1 0 0 0 0 0 0 1;
];
"""
    net = build_network(parse_case(text))
    state, trace = central_solve(net)
    assert trace.converged
    assert trace.n_iter == 0
    s0 = flat_start(net)
    np.testing.assert_array_equal(state.free(), s0.free())


def test_infeasible_case_reports_max_iter():
    # 10 p.u. of demand over a line that can deliver about 1 p.u.
    text = """
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1.0 0 0 1 0 0;
  2 1 1000 300 0 0 1 1.0 0 0 1 0 0;
];
mpc.gen = [
  1 0 0 0 0 1.0 100 1;
];
mpc.branch = [
  1 2 0.05 1.0 0 0 0 0 0 0 1;
];
"""
    net = build_network(parse_case(text))
    state, trace = central_solve(net, SolverConfig(tol_residual=1e-12, max_iter=12))
    assert not trace.converged
    if trace.status == STATUS_MAX_ITER:
        assert trace.final().r_norm2 > 0.1


def test_central_reuses_residual_path(merged_nets, central_refs):
    # the reported trace residual is exactly the pf residual at the iterates
    state, trace = central_refs["twin14"]
    r = residual(merged_nets["twin14"], state)
    assert np.linalg.norm(r) <= 1e-12
