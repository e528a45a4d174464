import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phflow.mcf_lp import LpProblem, mcf_as_lp, solve_lp, solve_mcf, worst_case_flow, write_solution_csv
from phflow.network import Network, builtin_instance, check_feasible
from phflow.optimize import project_kkt_lp

from instances import random_network

FIXTURES = ["fig1", "ep1", "ep2", "ep3", "diamond"]
ORACLE = {"fig1": 10.0, "ep1": 210.0, "ep2": 200.0, "ep3": 365.0, "diamond": 800.0}
WORST = {"fig1": 26.0, "ep1": 400.0, "ep2": 270.0, "ep3": 625.0, "diamond": 1600.0}


def brute_force_fig1():
    net = builtin_instance("fig1")
    a = net.incidence_matrix
    best = np.inf
    for x in itertools.product(*[range(int(u) + 1) for u in net.upper]):
        x = np.array(x, dtype=float)
        if np.array_equal(a @ x, net.supply):
            best = min(best, float(net.cost @ x))
    return best


def test_fig1_oracle_matches_brute_force():
    sol = solve_mcf(builtin_instance("fig1"))
    assert sol.status == "optimal"
    assert sol.cost == brute_force_fig1() == 10.0
    assert sol.cost < 20
    np.testing.assert_array_equal(sol.x, [4, 0, 3, 0, 2, 1, 0])


def test_diamond_path_split():
    net = builtin_instance("diamond")
    splits = {s: 800 + 200 * s for s in range(5)}
    sol = solve_mcf(net)
    np.testing.assert_array_equal(sol.x, [4, 0, 4, 0])
    assert sol.cost == min(splits.values()) == 800
    worst = worst_case_flow(net)
    np.testing.assert_array_equal(worst.x, [0, 4, 0, 4])
    assert worst.cost == max(splits.values()) == 1600


@pytest.mark.parametrize("name", FIXTURES)
def test_frozen_oracle_values(name):
    net = builtin_instance(name)
    best, worst = solve_mcf(net), worst_case_flow(net)
    assert best.cost == ORACLE[name]
    assert worst.cost == WORST[name]
    assert check_feasible(net, worst.x).feasible


def test_ep2_worst_case_flow_is_fixed():
    sol = worst_case_flow(builtin_instance("ep2"))
    np.testing.assert_array_equal(sol.x, [20, 10, 20, 0, 20, 10, 0, 10, 0])


def test_zero_supply_gives_zero_flow():
    net = Network.from_edges(3, [(1, 2), (2, 3), (3, 1)], (0, 0, 0), [1, 2, 3], [5, 5, 5])
    sol = solve_mcf(net)
    np.testing.assert_array_equal(sol.x, 0)
    assert sol.cost == 0


def test_negative_cycle_is_saturated():
    net = Network.from_edges(3, [(1, 2), (2, 3), (3, 1)], (0, 0, 0), [-1, -1, -1], [2, 3, 4])
    sol = solve_mcf(net)
    np.testing.assert_array_equal(sol.x, [2, 2, 2])
    assert sol.cost == -6


def test_zero_cost_worst_case_is_deterministic():
    net = builtin_instance("ep1").replace(cost=np.zeros(15))
    a, b = worst_case_flow(net), worst_case_flow(net)
    np.testing.assert_array_equal(a.x, b.x)
    assert check_feasible(net, a.x).feasible


def test_infeasible_reports_cut():
    net = Network.from_edges(3, [(1, 2), (2, 3)], (5, 0, -5), [1, 1], [2, 9])
    sol = solve_mcf(net)
    assert sol.status == "infeasible"
    assert 1 in sol.cut and 3 not in sol.cut


def _check_optimality(net, sol):
    x, pi, r = sol.x, sol.potentials, sol.reduced_costs
    assert np.array_equal(x, np.round(x))
    assert np.array_equal(net.incidence_matrix @ x, net.supply)
    assert np.all(x >= net.lower) and np.all(x <= net.upper)
    np.testing.assert_allclose(r, net.cost - pi[net.tails] + pi[net.heads], atol=1e-9)
    # c.x = b.pi + sum_e r_e x_e, and r_e x_e only picks up terms at active bounds
    assert sol.cost == pytest.approx(net.supply @ pi + r @ x, abs=1e-7)
    tol = 1e-9
    assert np.all(x[r < -tol] == net.upper[r < -tol])
    assert np.all(x[r > tol] == net.lower[r > tol])


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_optimality_certificates(name):
    net = builtin_instance(name)
    sol = solve_mcf(net)
    _check_optimality(net, sol)
    lp = solve_lp(mcf_as_lp(net))
    assert lp.status == "optimal"
    assert lp.objective == pytest.approx(sol.cost, abs=1e-7)


def test_oracle_agrees_with_lp_on_random_instances():
    for seed in range(100):
        net = random_network(seed)
        sol = solve_mcf(net)
        assert sol.status == "optimal", seed
        _check_optimality(net, sol)
        lp = solve_lp(mcf_as_lp(net))
        assert lp.status == "optimal", seed
        assert abs(lp.objective - sol.cost) <= 1e-7, seed
        resid = np.abs(net.incidence_matrix @ lp.x - net.supply).max()
        assert resid <= 1e-9 * (1 + np.linalg.norm(net.supply))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(1000, 10**6))
def test_random_instances_property(seed):
    net = random_network(seed, max_nodes=8)
    sol = solve_mcf(net)
    _check_optimality(net, sol)
    worst = worst_case_flow(net)
    assert worst.cost >= sol.cost


def test_lp_toys():
    res = solve_lp(LpProblem([-1.0], np.zeros((0, 1)), np.zeros(0), [0.0], [1.0]))
    assert res.status == "optimal" and res.x[0] == 1.0
    res = solve_lp(LpProblem([1.0], [[1.0]], [1.0], [0.0], [0.5]))
    assert res.status == "infeasible"
    res = solve_lp(LpProblem([-1.0, 0.0], [[1.0, -1.0]], [0.0], [0.0, 0.0], [np.inf, np.inf]))
    assert res.status == "unbounded"
    # a free variable whose value is tied to a bounded one stays bounded
    res = solve_lp(LpProblem([1.0, 1.0], [[1.0, 1.0]], [2.0], [-np.inf, 0.0], [np.inf, 1.0]))
    assert res.status == "optimal" and res.objective == pytest.approx(2.0)


def test_lp_free_variables_and_degeneracy():
    # min x1 + 2 x2 with x1 + x2 = 3, x1 - x2 = 1 pins the solution
    res = solve_lp(LpProblem([1.0, 2.0], [[1.0, 1.0], [1.0, -1.0]], [3.0, 1.0], [-np.inf, -np.inf], [np.inf, np.inf]))
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, [2, 1], atol=1e-12)
    # redundant rows are tolerated
    res = solve_lp(LpProblem([1.0, 1.0], [[1.0, 1.0], [2.0, 2.0]], [1.0, 2.0], [0.0, 0.0], [1.0, 1.0]))
    assert res.status == "optimal" and res.objective == pytest.approx(1.0)


def test_lp_problem_validation():
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], [1.0, 2.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], [1.0], [2.0], [1.0])


def test_kkt_lp_on_fig1():
    net = builtin_instance("fig1")
    x_hat = np.array([4, 2, 3, 2, 0, 1, 0], dtype=float)
    d = project_kkt_lp(net, x_hat, net.cost)
    assert d.objective == pytest.approx(ORACLE["fig1"] - 20, abs=1e-9)
    assert check_feasible(net, x_hat + d.direction).feasible


def test_solution_csv(tmp_path):
    net = builtin_instance("fig1")
    path = tmp_path / "flow.csv"
    write_solution_csv(net, solve_mcf(net), path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["edge", "tail", "head", "flow", "reduced_cost"]
    assert [float(r[3]) for r in rows[1:]] == [4, 0, 3, 0, 2, 1, 0]
    assert rows[4][1:3] == ["3", "1"]
