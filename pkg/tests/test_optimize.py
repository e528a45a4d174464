import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phflow.integrate import TimeGrid
from phflow.mcf_lp import solve_mcf, worst_case_flow
from phflow.network import builtin_instance, check_feasible, incidence
from phflow.optimize import (
    STATIC_GRID,
    ArmijoParams,
    BarrierDomainError,
    BarrierParams,
    CirculationProjector,
    Controls,
    NotDescentError,
    RankDeficientError,
    armijo,
    barrier_grad,
    barrier_value,
    control_inner,
    dynamic_flow_cost,
    evaluate,
    fd_gradient_check,
    flow_cost,
    gradient,
    h1_inner,
    h1_operator,
    project_circulation,
    project_kkt_lp,
    reduced_cost,
    riesz_h1,
    run_dynamic,
    run_static_barrier,
    run_static_kkt,
    static_linear_cost,
    switching_reference_cost,
    tracking_cost,
)
from phflow.phs import flow_phs

FIG1_FLOW = np.array([4, 2, 3, 2, 0, 1, 0], dtype=float)


def static_setup(name, x_hat, grid=STATIC_GRID):
    net = builtin_instance(name)
    sys = flow_phs(net)
    u = np.zeros((grid.steps + 1, sys.dim_input))
    u[:, : net.n_nodes] = -net.supply
    return net, sys, Controls(u, np.r_[np.zeros(net.n_nodes), x_hat])


def dynamic_setup(kind="linear", steps=1000, lam=1e-3, barrier=None):
    net = builtin_instance("diamond", kind)
    grid = TimeGrid(1.0, steps)
    sys = flow_phs(net, dynamic=True)
    u = np.zeros((steps + 1, 8))
    u[:, :4] = -net.supply
    w = Controls(u, np.r_[np.zeros(4), 4, 0, 4, 0])
    return net, sys, grid, w, dynamic_flow_cost(net, lam, barrier=barrier)


def admissible(net):
    proj = CirculationProjector.for_network(net)
    nv = net.n_nodes

    def project(h):
        hu = np.zeros_like(h.u)
        hu[:, nv:] = proj(h.u[:, nv:])
        hu[0] = 0.0
        return Controls(hu, np.zeros_like(h.z0))

    return project


# barrier


def test_barrier_examples():
    b = (np.array([0.0]), np.array([4.0]))
    assert barrier_value([2.0], b, 1.0, 0.0) == pytest.approx(-2 * math.log(2), abs=1e-12)
    assert barrier_value([17.0], b, 0.0, 0.0) == 0.0
    assert barrier_grad([2.0], b, 1.0, 0.0)[0] == 0.0
    assert barrier_grad([3.99], b, 1.0, 0.0)[0] > 50
    vals = [barrier_value([4.0 + 0.5 - d], b, 1.0, 0.5) for d in (1e-2, 1e-4, 1e-8)]
    assert vals[0] < vals[1] < vals[2] and vals[2] > 15


def test_barrier_domain_violation_names_edge():
    b = (np.zeros(3), np.full(3, 4.0))
    with pytest.raises(BarrierDomainError) as info:
        barrier_value([1.0, 5.0, 1.0], b, 1.0, 0.5)
    assert info.value.edge == 1 and "edge 2" in str(info.value)
    with pytest.raises(BarrierDomainError):
        barrier_grad([-0.5, 1.0, 1.0], b, 1.0, 0.5)


@settings(max_examples=50, deadline=None)
@given(x=arrays(float, 5, elements=st.floats(0.05, 3.95)), alpha=st.floats(0.01, 2.0), eps=st.floats(0.0, 1.0))
def test_barrier_grad_matches_central_differences(x, alpha, eps):
    b = (np.zeros(5), np.full(5, 4.0))
    g = barrier_grad(x, b, alpha, eps)
    h = 1e-6
    for e in range(5):
        d = np.zeros(5)
        d[e] = h
        fd = (barrier_value(x + d, b, alpha, eps) - barrier_value(x - d, b, alpha, eps)) / (2 * h)
        assert fd == pytest.approx(g[e], rel=1e-6, abs=1e-6)


def test_barrier_schedule():
    p = BarrierParams(1.0, 1.0)
    for _ in range(100):
        p = p.advance()
    assert p.alpha == 0.01
    assert p.epsilon == pytest.approx(0.99**100)
    with pytest.raises(ValueError):
        BarrierParams(1.0, 1.0, alpha_factor=1.5)


def test_cost_self_tests():
    net = builtin_instance("diamond", "hat")
    n = 8
    assert dynamic_flow_cost(net, 1e-3).self_test(n, t=0.3) <= 1e-5
    barrier = BarrierParams(0.5, 10.0)
    assert dynamic_flow_cost(net, 1e-3, barrier=barrier).self_test(n, t=0.7, scale=1.0) <= 1e-5
    assert static_linear_cost(net, normalize=True).self_test(n) <= 1e-5
    track = tracking_cost(lambda t: np.outer(np.cos(t), np.ones(3)), terminal_weight=2.0)
    assert track.self_test(3) <= 1e-5


# Riesz map


def test_riesz_zero_data():
    grid = TimeGrid(1.0, 50)
    np.testing.assert_array_equal(riesz_h1(grid, 1e-3, np.zeros(51), np.zeros(51)), 0)


def test_riesz_small_lambda_limit():
    # the Dirichlet layer at t = 0 costs about lam / (dt^2 + lam) at the first node,
    # so the grid must satisfy dt^2 >> lam for the limit to show at every node
    grid = TimeGrid(1.0, 50)
    pi = np.array([1.5, -2.0, 0.25])
    p = np.tile(pi, (51, 1))
    g = riesz_h1(grid, 1e-8, np.zeros_like(p), p)
    assert g[0].tolist() == [0, 0, 0]
    assert np.max(np.abs(g[1:-1] - pi)) <= 1e-4


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), lam=st.sampled_from([1e-3, 0.1, 1.0]))
def test_riesz_weak_identity(seed, lam):
    rng = np.random.default_rng(seed)
    grid = TimeGrid(1.0, 64)
    u, p = rng.standard_normal((65, 2)), rng.standard_normal((65, 2))
    g = riesz_h1(grid, lam, u, p)
    w = np.full(65, grid.dt)
    w[0] = w[-1] = grid.dt / 2
    du = np.diff(u, axis=0) / grid.dt
    for _ in range(10):
        h = rng.standard_normal((65, 2))
        h[0] = 0.0
        rhs = lam * grid.dt * np.sum(du * np.diff(h, axis=0) / grid.dt) + np.sum(w[:, None] * p * h)
        assert abs(h1_inner(grid, lam, g, h) - rhs) <= 1e-8 * max(1.0, abs(rhs))


def test_riesz_operator_spd():
    m = h1_operator(TimeGrid(1.0, 16), 0.1)
    np.testing.assert_array_equal(m, m.T)
    assert np.linalg.eigvalsh(m).min() > 0


def test_riesz_shape_errors():
    grid = TimeGrid(1.0, 10)
    with pytest.raises(ValueError):
        riesz_h1(grid, 1e-3, np.zeros(11), np.zeros(12))
    with pytest.raises(ValueError):
        riesz_h1(grid, -1.0, np.zeros(11), np.zeros(11))


# projections


def test_circulation_projection_examples():
    a = incidence(builtin_instance("diamond")).reduced
    np.testing.assert_allclose(project_circulation(a, [1, -1, 1, -1]), [1, -1, 1, -1], atol=1e-14)
    np.testing.assert_allclose(project_circulation(a, [1, 0, 0, 0]), [0.25, -0.25, 0.25, -0.25], atol=1e-14)


@pytest.mark.parametrize("name", ["fig1", "ep1", "ep2", "ep3", "diamond"])
def test_circulation_projection_properties(name):
    net = builtin_instance(name)
    a = incidence(net).reduced
    proj = CirculationProjector(a)
    rng = np.random.default_rng(0)
    g = rng.standard_normal((6, net.n_edges))
    pg = proj(g)
    np.testing.assert_allclose(a @ pg.T, 0, atol=1e-12)
    np.testing.assert_allclose(proj(pg), pg, atol=1e-12)
    np.testing.assert_allclose(np.sum(pg * (g - pg), axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(proj(a.T @ rng.standard_normal(a.shape[0])), 0, atol=1e-12)


def test_projection_rejects_full_incidence():
    with pytest.raises(RankDeficientError):
        CirculationProjector(builtin_instance("fig1").incidence_matrix)


def test_kkt_direction_examples():
    net = builtin_instance("fig1")
    opt = solve_mcf(net).x
    d = project_kkt_lp(net, opt, net.cost)
    assert d.objective == pytest.approx(0.0, abs=1e-12)
    d = project_kkt_lp(net, FIG1_FLOW, net.cost)
    np.testing.assert_allclose(net.incidence_matrix @ d.direction, 0, atol=1e-9)
    assert net.cost @ (FIG1_FLOW + d.direction) == pytest.approx(solve_mcf(net).cost, abs=1e-9)
    with pytest.raises(ValueError, match="infeasible"):
        project_kkt_lp(net, np.zeros(7), net.cost)


# Armijo


def test_armijo_examples():
    res = armijo(lambda s: (s - 1) ** 2, 1.0, -2.0, ArmijoParams(1.0))
    assert res.accepted and res.sigma == 1.0 and res.backtracks == 0
    flat = armijo(lambda s: 5.0, 5.0, -1.0, ArmijoParams(1.0, max_backtracks=20))
    assert not flat.accepted and flat.backtracks == 20
    with pytest.raises(NotDescentError):
        armijo(lambda s: 0.0, 0.0, 0.0)


def test_armijo_backtracks_into_barrier_domain():
    # one edge with x = 3.9 near the upper bound 4, moving up along d = +1
    b = (np.array([0.0]), np.array([4.0]))

    def phi(s):
        try:
            return barrier_value([3.9 - s * -1.0], b, 1.0, 0.0) - 10.0 * s
        except BarrierDomainError:
            return math.inf

    base = phi(0.0)
    slope = float(barrier_grad([3.9], b, 1.0, 0.0)[0]) - 10.0
    res = armijo(phi, base, slope, ArmijoParams(1.0))
    assert res.accepted and res.backtracks >= 3
    assert 3.9 + res.sigma < 4.0


# reduced objective and gradients


def test_reduced_cost_examples():
    net, sys, w = static_setup("fig1", FIG1_FLOW)
    assert reduced_cost(sys, STATIC_GRID, w, static_linear_cost(net)) == pytest.approx(20.0, abs=1e-12)
    net, sys, grid, w, cost = dynamic_setup("linear")
    assert reduced_cost(sys, grid, w, cost) == pytest.approx(1200.0, rel=1e-3)
    zero = Controls(np.zeros_like(w.u), np.zeros(8))
    assert reduced_cost(sys, grid, zero, dynamic_flow_cost(net, 0.0)) == 0.0


def test_zero_cost_gives_zero_gradient():
    net, sys, grid, w, _ = dynamic_setup("linear", steps=100)
    cost = tracking_cost(lambda t: np.zeros((len(t), 8)), weight=0.0)
    g = gradient(sys, grid, w, cost)
    np.testing.assert_array_equal(g.u, 0)
    np.testing.assert_array_equal(g.z0, 0)
    assert fd_gradient_check(sys, grid, w, cost) == 0.0


@pytest.mark.parametrize("name", ["fig1", "ep1"])
def test_static_gradient_is_cost_on_circulations(name):
    net = builtin_instance(name)
    x = FIG1_FLOW if name == "fig1" else worst_case_flow(net).x
    net, sys, w = static_setup(name, x)
    g = gradient(sys, STATIC_GRID, w, static_linear_cost(net))
    proj = CirculationProjector.for_network(net)
    np.testing.assert_allclose(proj(g.z0[net.n_nodes :]), proj(net.cost), atol=1e-9)


def test_static_fd_check():
    net, sys, w = static_setup("fig1", FIG1_FLOW)
    assert fd_gradient_check(sys, STATIC_GRID, w, static_linear_cost(net), n_directions=5) <= 1e-8


@pytest.mark.parametrize("with_barrier", [False, True])
def test_dynamic_fd_check(with_barrier):
    barrier = BarrierParams(1.0, 1e-3) if with_barrier else None
    net, sys, grid, w, cost = dynamic_setup("linear", barrier=barrier)
    err = fd_gradient_check(sys, grid, w, cost, n_directions=3, step=1e-5, project=admissible(net))
    assert err <= 1e-6


def test_directional_derivative_identity():
    # linear cost, lam = 0 and no barrier make the objective affine in u
    net, sys, grid, w, _ = dynamic_setup("linear", steps=200)
    cost = dynamic_flow_cost(net, 0.0)
    ev = evaluate(sys, grid, w, cost)
    rng = np.random.default_rng(7)
    for _ in range(5):
        h = admissible(net)(Controls(rng.standard_normal(w.u.shape), np.zeros(8)))
        change = reduced_cost(sys, grid, w + h, cost) - ev.value
        assert change == pytest.approx(float(np.sum(ev.grad_u * h.u)), rel=1e-8, abs=1e-8)


def test_control_inner_matches_gradient_definition():
    net, sys, grid, w, cost = dynamic_setup("linear", steps=100, lam=0.01)
    u = w.u.copy()
    u[1:, 4:] = 0.1 * np.sin(np.linspace(0, 3, 100))[:, None] * np.array([1, -1, 1, -1])
    w = Controls(u, w.z0)
    g = gradient(sys, grid, w, cost)
    ev = evaluate(sys, grid, w, cost)
    h = admissible(net)(Controls(np.random.default_rng(2).standard_normal(u.shape), np.zeros(8)))
    assert control_inner(grid, cost, g, h) == pytest.approx(float(np.sum(ev.grad_u * h.u)), rel=1e-9)


# drivers


def test_static_kkt_fig1_one_step():
    run = run_static_kkt(builtin_instance("fig1"), FIG1_FLOW)
    assert run.costs[0] == 20.0
    assert run.costs[1] == pytest.approx(10.0, abs=1e-9)
    assert run.termination == "tolerance" and run.iterations == 1


@pytest.mark.parametrize("name", ["ep1", "ep2", "ep3"])
def test_static_kkt_from_worst_case(name):
    net = builtin_instance(name)
    run = run_static_kkt(net)
    assert run.iterations == 1
    assert abs(run.final_cost - solve_mcf(net).cost) / solve_mcf(net).cost == 0.0


def test_static_kkt_at_optimum_takes_no_step():
    net = builtin_instance("fig1")
    run = run_static_kkt(net, solve_mcf(net).x)
    assert run.iterations == 0 and run.termination == "tolerance"


def test_static_kkt_rejects_infeasible_start():
    with pytest.raises(ValueError, match="infeasible"):
        run_static_kkt(builtin_instance("fig1"), np.zeros(7))


@pytest.mark.parametrize("name, alpha0, eps0", [("ep1", 0.7, 1.3), ("ep3", 0.7, 1.1)])
def test_static_barrier_preserves_conservation(name, alpha0, eps0):
    net = builtin_instance(name)
    run = run_static_barrier(net, alpha0, eps0, max_iters=40)
    x = run.control
    np.testing.assert_allclose(net.incidence_matrix @ x, net.supply, atol=1e-8)
    assert check_feasible(net, np.clip(x, net.lower, net.upper), tol=1.0).conservation_residual < 1.0
    for rec in run.history[1:]:
        assert rec.objective <= rec.objective_before
    # the cost recorded in the history is the plain linear cost of the iterate
    assert run.final_cost == pytest.approx(net.cost @ x, rel=1e-12)


def test_dynamic_fixed_control_cost():
    net = builtin_instance("diamond", "linear")
    grid = TimeGrid(1.0, 1000)
    flows = np.tile([4.0, 0.0, 4.0, 0.0], (1001, 1))
    assert flow_cost(net, grid, flows) == pytest.approx(1200.0, rel=1e-3)


def test_dynamic_short_run_descends_and_stays_admissible():
    net = builtin_instance("diamond", "linear")
    run = run_dynamic(net, grid=TimeGrid(1.0, 200), max_iters=5)
    assert run.iterations >= 1
    objs = [r.objective for r in run.history]
    assert all(b <= a for a, b in zip(objs, objs[1:]))
    np.testing.assert_array_equal(run.control[0], 0)
    np.testing.assert_allclose(run.control @ net.incidence_matrix.T, 0, atol=1e-9)
    np.testing.assert_allclose(run.flows @ net.incidence_matrix.T, np.tile(net.supply, (201, 1)), atol=1e-8)


def test_dynamic_requires_cost_function():
    with pytest.raises(ValueError, match="EdgeCostFunction"):
        run_dynamic(builtin_instance("fig1"))


def test_switching_reference():
    # the linear kind switches at t = 1/2: 4 * (int_0^.5 (200 + 200 t) + int_.5^1 (400 - 200 t))
    assert switching_reference_cost(builtin_instance("diamond", "linear").cost_function) == pytest.approx(1000.0)
    assert switching_reference_cost(builtin_instance("diamond", "hat").cost_function) == pytest.approx(1000.0)
