import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import random_lp, random_milp
from oracles import enumerate_milp, tableau_simplex
from periodic_demand.milp import (
    BINARY, EQ, GAP_LIMIT, GE, INFEASIBLE, INTEGER, LE, OPTIMAL, UNBOUNDED, MilpModel,
    ModelError, read_mps, solve_lp, solve_milp, write_mps,
)


def close(a, b, tol=1e-6):
    return abs(a - b) <= tol * max(1.0, abs(b))


def knapsack():
    m = MilpModel("knapsack")
    items = [(6, 4), (5, 3), (5, 3)]
    xs = [m.add_var(f"take{i}", kind=BINARY, obj=-v) for i, (v, _) in enumerate(items)]
    m.add_constr({x: w for x, (_, w) in zip(xs, items)}, LE, 6, "weight")
    return m


def fixed_charge():
    m = MilpModel("fixed-charge")
    z = m.add_var("build", kind=BINARY, obj=10)
    x = m.add_var("flow", kind=INTEGER, obj=1)
    o = m.add_var("outsource", kind=INTEGER, obj=5)
    m.add_constr({x: 1, o: 1}, EQ, 5, "demand")
    m.add_constr({x: 1, z: -10}, LE, 0, "cap")
    return m


# --- LP ----------------------------------------------------------------------

def test_lp_single_bound():
    m = MilpModel()
    x = m.add_var("x", obj=1)
    m.add_constr({x: 1}, GE, 3)
    sol = solve_lp(m)
    assert sol.status == OPTIMAL and close(sol.objective, 3)


def test_lp_unit_simplex_vertex():
    m = MilpModel()
    x = m.add_var("x", obj=-1)
    y = m.add_var("y", obj=-1)
    m.add_constr({x: 1, y: 1}, LE, 1)
    sol = solve_lp(m)
    assert close(sol.objective, -1)
    vals = sorted([sol["x"], sol["y"]])
    assert close(vals[0], 0) and close(vals[1], 1)


def test_lp_infeasible_and_unbounded():
    m = MilpModel()
    x = m.add_var("x", ub=1)
    m.add_constr({x: 1}, GE, 2)
    assert solve_lp(m).status == INFEASIBLE
    m = MilpModel()
    x = m.add_var("x", obj=-1)
    y = m.add_var("y")
    m.add_constr({x: 1, y: -1}, LE, 0)
    assert solve_lp(m).status == UNBOUNDED


def test_lp_constant_objective_offset():
    m = MilpModel()
    x = m.add_var("x", lb=2, ub=5, obj=1)
    m.constant = 10
    sol = solve_lp(m)
    assert close(sol.objective, 12)


@pytest.mark.parametrize("seed", range(3))
def test_lp_matches_tableau_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    for _ in range(20):
        m, (c, A, sense, b, lb, ub) = random_lp(rng)
        sol = solve_lp(m)
        status, obj = tableau_simplex(c, A, sense, b, lb, ub)
        assert sol.status == status
        if status == OPTIMAL:
            assert close(sol.objective, obj)
            assert m.max_violation(sol.values) < 1e-6


# --- MILP --------------------------------------------------------------------

def test_knapsack_optimum_is_ten():
    sol = solve_milp(knapsack())
    assert sol.status == OPTIMAL
    assert close(-sol.objective, 10)
    assert sol["take0"] == 0 and sol["take1"] == 1 and sol["take2"] == 1


def test_fixed_charge_builds():
    sol = solve_milp(fixed_charge())
    assert close(sol.objective, 15)
    assert sol["build"] == 1 and sol["flow"] == 5


def test_integral_relaxation_stops_at_root():
    # transportation problem: totally unimodular
    m = MilpModel()
    supply, demand = [4, 6], [3, 3, 4]
    cost = [[2, 4, 5], [3, 1, 7]]
    x = {(i, j): m.add_var(f"x{i}{j}", kind=INTEGER, obj=cost[i][j])
         for i in range(2) for j in range(3)}
    for i in range(2):
        m.add_constr({x[i, j]: 1 for j in range(3)}, LE, supply[i])
    for j in range(3):
        m.add_constr({x[i, j]: 1 for i in range(2)}, EQ, demand[j])
    sol = solve_milp(m)
    assert sol.status == OPTIMAL and sol.nodes_explored == 1


def test_milp_infeasible():
    m = MilpModel()
    x = m.add_var("x", ub=3, kind=INTEGER)
    y = m.add_var("y", ub=3, kind=INTEGER)
    m.add_constr({x: 2, y: 2}, EQ, 3)
    assert solve_milp(m).status == INFEASIBLE


@pytest.mark.parametrize("seed", range(2))
def test_milp_matches_enumeration(seed):
    rng = np.random.default_rng(200 + seed)
    for _ in range(15):
        m, (c, A, sense, b, lb, ub, isint) = random_milp(rng, max_int=8)
        sol = solve_milp(m)
        status, obj = enumerate_milp(c, A, sense, b, lb, ub, isint)
        assert sol.status == status
        if status == OPTIMAL:
            assert close(sol.objective, obj)
            assert m.max_violation(sol.values) < 1e-6


def test_node_limit_reports_gap_and_bound():
    rng = np.random.default_rng(5)
    m = MilpModel()
    n = 25
    w = rng.integers(5, 40, n)
    v = w + rng.integers(-3, 4, n)
    xs = [m.add_var(f"x{i}", kind=BINARY, obj=-float(v[i])) for i in range(n)]
    m.add_constr({x: float(w[i]) for i, x in enumerate(xs)}, LE, float(w.sum() // 2))
    full = solve_milp(m)
    cut = solve_milp(m, node_limit=3)
    assert full.status == OPTIMAL
    assert cut.nodes_explored <= 3
    if cut.status == GAP_LIMIT:
        assert cut.bound <= full.objective + 1e-6
        if cut.has_solution:
            assert cut.objective >= full.objective - 1e-6
            assert cut.gap >= 0


def test_gap_limit_allows_early_stop():
    m = knapsack()
    sol = solve_milp(m, gap_limit=0.5)
    assert sol.has_solution
    assert sol.objective <= 0


def test_deterministic_results():
    rng = np.random.default_rng(11)
    m, _ = random_milp(rng)
    a, b = solve_milp(m), solve_milp(m)
    assert a.status == b.status and a.values == b.values and a.nodes_explored == b.nodes_explored


def test_incumbent_and_heuristic_hooks():
    m = fixed_charge()
    # a feasible but poor start point is accepted and then improved
    sol = solve_milp(m, incumbent={"build": 0, "flow": 0, "outsource": 5})
    assert close(sol.objective, 15)
    seen = []

    def heuristic(x):
        seen.append(x.copy())
        return np.array([1.0, 5.0, 0.0])

    sol = solve_milp(m, heuristic=heuristic)
    assert seen and close(sol.objective, 15)
    # an infeasible suggestion is ignored
    sol = solve_milp(m, heuristic=lambda x: np.array([0.0, 5.0, 0.0]))
    assert close(sol.objective, 15)


def test_priority_branches_on_top_class_first():
    m = fixed_charge()
    prio = np.zeros(m.num_vars)
    prio[m.var("build")] = 1
    sol = solve_milp(m, priority=prio)
    assert close(sol.objective, 15)


# --- model validation and MPS ------------------------------------------------

def test_model_errors():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("y", lb=3, ub=1)
    with pytest.raises(ModelError):
        m.add_constr({5: 1.0}, LE, 1)
    with pytest.raises(ModelError):
        m.add_constr({0: 0.0}, LE, 1)
    with pytest.raises(ModelError):
        m.add_constr({0: 1.0}, "<", 1)
    with pytest.raises(ModelError):
        m.var("nope")


def test_mps_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    m, _ = random_milp(rng)
    m.constant = 2.5
    path = tmp_path / "m.mps"
    write_mps(m, path)
    back = read_mps(path)
    assert back.var_names == m.var_names
    assert back.kind == m.kind and back.lb == m.lb and back.ub == m.ub and back.obj == m.obj
    assert [(c.coeffs, c.sense, c.rhs) for c in back.constraints] == \
        [(c.coeffs, c.sense, c.rhs) for c in m.constraints]
    s1, s2 = solve_milp(m), solve_milp(back)
    assert s1.status == s2.status
    if s1.has_solution:
        assert s1.objective == s2.objective


def test_relaxed_copy_drops_integrality():
    m = knapsack()
    r = m.relaxed()
    assert not r.integer_mask().any()
    assert solve_lp(r).objective <= solve_milp(m).objective + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=6),
       st.lists(st.integers(1, 20), min_size=1, max_size=6), st.integers(1, 60))
def test_knapsack_property_matches_enumeration(values, weights, cap):
    n = min(len(values), len(weights))
    m = MilpModel()
    xs = [m.add_var(f"x{i}", kind=BINARY, obj=-values[i]) for i in range(n)]
    m.add_constr({x: weights[i] for i, x in enumerate(xs)}, LE, cap)
    sol = solve_milp(m)
    best = 0
    for mask in range(1 << n):
        if sum(weights[i] for i in range(n) if mask >> i & 1) <= cap:
            best = max(best, sum(values[i] for i in range(n) if mask >> i & 1))
    assert close(-sol.objective, best)
    assert sol.bound <= sol.objective + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_lp_solution_is_feasible_and_no_worse_than_milp(seed):
    rng = np.random.default_rng(seed)
    m, _ = random_milp(rng, max_int=6)
    lp = solve_lp(m.relaxed())
    ip = solve_milp(m)
    if ip.status == OPTIMAL:
        assert lp.status == OPTIMAL
        assert lp.objective <= ip.objective + 1e-6
        assert m.relaxed().max_violation(lp.values) < 1e-6
    if lp.status == INFEASIBLE:
        assert ip.status == INFEASIBLE
    assert not math.isnan(ip.objective)
