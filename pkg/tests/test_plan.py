import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import brute_force_pde, min_flow_cost, parallel_instance, tiny_instance
from periodic_demand.core import C40, C53, DemandMatrix, ValidationError
from periodic_demand.milp import solve_milp
from periodic_demand.plan import (
    build_bp, build_mcnd, build_wbp, capacity_violations, cost_decomposition, flow_costs,
    minimal_platforms, platform_mismatches, plan_to_dict, save_plan, solve_bp, solve_bp_wbp,
    solve_wbp,
)
from periodic_demand.synthetic import generate_synthetic_instance


def fixed_charge_instance():
    # one path of capacity 10 (design 10, flow 1) against outsourcing at 5
    return parallel_instance([C40], [(10, {0: 1.0}, 0)], [5.0], [480.0], block_capacity=10.0)


# --- platform closed form ----------------------------------------------------

@pytest.mark.parametrize("n40,n53,expected", [
    (1, 3, (1, 1)), (2, 0, (1, 0)), (0, 0, (0, 0)), (0, 1, (0, 1)), (3, 0, (2, 0)),
    (0, 4, (0, 2)), (5, 2, (4, 0)), (2, 5, (2, 2)),
])
def test_minimal_platforms(n40, n53, expected):
    assert minimal_platforms(n40, n53) == expected


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 60), st.integers(0, 60))
def test_minimal_platforms_is_the_fewest_feet_pair(n40, n53):
    best = None
    for v53 in range(n40 + n53 + 1):
        for v40 in range(n40 + n53 + 1):
            # 53-ft boxes need 53-ft slots; each platform holds two boxes
            if 2 * v53 >= n53 - n40 and 2 * (v40 + v53) >= n40 + n53:
                feet = 48 * v40 + 60 * v53
                if best is None or feet < best[0]:
                    best = (feet, (v40, v53))
    assert minimal_platforms(n40, n53) == best[1]


def test_bp_mixed_block_platforms():
    inst = parallel_instance([C53, C40], [(1, {0: 1.0, 1: 1.0}, 0)], [50.0, 50.0], [480.0])
    bp = solve_bp(inst, [3, 1])
    assert bp.design[0] == 1
    assert bp.week.flows == {(0, 0): 3, (0, 1): 1}
    assert bp.week.platforms[0] == (1, 1)


def test_bp_c40_only_platforms():
    inst = parallel_instance([C40], [(1, {0: 1.0}, 0)], [50.0], [480.0])
    bp = solve_bp(inst, [2])
    assert bp.week.platforms[0] == (1, 0)


def test_slack_capacity_still_gives_minimal_platforms():
    # ample capacity: extra platforms cost nothing, yet none are reported
    inst = parallel_instance([C40, C53], [(1, {0: 1.0, 1: 1.0}, 0)], [50.0, 50.0], [5000.0])
    for y in ([5, 0], [0, 5], [3, 4], [7, 2]):
        bp = solve_bp(inst, y)
        assert not platform_mismatches(inst, bp.week)


# --- MCND --------------------------------------------------------------------

def test_mcnd_fixed_charge_toy():
    inst = fixed_charge_instance()
    sol = solve_milp(build_mcnd(inst, [5]))
    assert sol.objective == pytest.approx(15)
    assert sol["z[0]"] == 1 and sol["x[0,0]"] == pytest.approx(5)


def test_mcnd_zero_demand():
    sol = solve_milp(build_mcnd(fixed_charge_instance(), [0]))
    assert sol.objective == pytest.approx(0) and sol["z[0]"] == 0


def test_mcnd_excess_is_outsourced():
    inst = fixed_charge_instance()
    sol = solve_milp(build_mcnd(inst, [14], integer_flows=True))
    assert sol.objective == pytest.approx(10 + 10 * 1 + 5 * 4)
    assert sol["x[1,0]"] == pytest.approx(4)


# --- BP / wBP ----------------------------------------------------------------

def test_bp_model_shape():
    inst, Y = tiny_instance(3)
    m = build_bp(inst, Y.values[0])
    n_real = sum(not b.artificial for b in inst.blocks)
    assert sum(name.startswith("z[") for name in m.var_names) == n_real
    assert all(m.kind[j] == "binary" for j, name in enumerate(m.var_names) if name.startswith("z["))


def test_wbp_nothing_built_outsources_everything():
    inst, _ = tiny_instance(1)
    y = np.array([3, 2] + [1] * (inst.K - 2))
    week, stats = solve_wbp(inst, [0] * len(inst.blocks), y)
    expected = sum(inst.blocks[inst.artificial_blocks_for[k][0]].flow_cost[k] * y[k]
                   for k in range(inst.K))
    assert stats.proven
    assert all(inst.blocks[b].artificial for b, _ in week.flows)
    assert sum(inst.blocks[b].flow_cost[k] * v for (b, k), v in week.flows.items()) == expected
    assert len(build_wbp(inst, [0] * len(inst.blocks), y).var_names) == sum(y > 0)


def test_wbp_zero_demand():
    inst, _ = tiny_instance(2)
    week, stats = solve_wbp(inst, [1] * (len(inst.blocks) - inst.K) + [0] * inst.K,
                            np.zeros(inst.K, dtype=int))
    assert week.flows == {} and stats.objective == 0


def test_wbp_on_bp_demand_never_worse():
    for seed in range(6):
        inst, Y = tiny_instance(seed)
        y = Y.values.max(axis=0)
        bp = solve_bp(inst, y)
        week, _ = solve_wbp(inst, bp.design, y)
        f, o = flow_costs(inst, week)
        assert f + o <= bp.costs.flow + bp.costs.out + 1e-9


def test_bad_inputs():
    inst, _ = tiny_instance(0)
    with pytest.raises(ValidationError):
        solve_bp(inst, [1] * (inst.K + 1))
    with pytest.raises(ValidationError):
        solve_bp(inst, [-1] + [0] * (inst.K - 1))
    with pytest.raises(ValidationError):
        build_wbp(inst, [2] * len(inst.blocks), [0] * inst.K)
    with pytest.raises(ValidationError):
        solve_bp_wbp(inst, [0] * inst.K, DemandMatrix(np.zeros((2, inst.K + 1))))


# --- sequential planning -----------------------------------------------------

def test_repeated_periodic_demand_costs_t_times_bp():
    inst, Y = tiny_instance(5)
    y = Y.values[0]
    T = 3
    plan = solve_bp_wbp(inst, y, DemandMatrix(np.tile(y, (T, 1))))
    bp = solve_bp(inst, y)
    assert plan.costs.total == pytest.approx(T * bp.costs.total)


def test_two_commodity_two_week_toy_matches_brute_force():
    inst = parallel_instance(
        [C40, C53],
        [(12.5, {0: 2.0, 1: 3.0}, 0), (9.25, {0: 1.0}, 1), (15.75, {1: 1.0}, 1)],
        [9.0, 11.0], [144.0, 120.0], T=2)
    Y = DemandMatrix(np.array([[3, 2], [1, 4]]))
    for y in ([2, 3], [3, 4], [1, 2]):
        plan = solve_bp_wbp(inst, y, Y)
        want, ambiguous = brute_force_pde(inst, y, Y)
        assert not ambiguous
        assert plan.costs.total == pytest.approx(want, rel=1e-9)


def test_cost_identity_and_plan_checks():
    for seed in range(8):
        inst, Y = tiny_instance(seed)
        plan = solve_bp_wbp(inst, Y.values.max(axis=0), Y)
        d, f, o, total = cost_decomposition(plan)
        assert d + f + o == pytest.approx(total)
        assert plan.proven and plan.T == Y.periods
        for t, w in enumerate(plan.weekly):
            assert not capacity_violations(inst, w)
            assert not platform_mismatches(inst, w)
            for k in range(inst.K):
                assert sum(v for (b, kk), v in w.flows.items() if kk == k) == Y.values[t, k]
            # only built or artificial blocks carry flow
            assert all(inst.blocks[b].artificial or plan.design[b] for b, _ in w.flows)
        # weekly flows are optimal for the chosen design
        for t, w in enumerate(plan.weekly):
            f_t, o_t = flow_costs(inst, w)
            assert f_t + o_t == pytest.approx(min_flow_cost(inst, plan.design, Y.values[t]))


def test_empty_design_costs_are_outsourcing():
    inst = parallel_instance([C40], [(1000, {0: 1.0}, 0)], [3.0], [96.0])
    Y = DemandMatrix(np.array([[2], [5]]))
    plan = solve_bp_wbp(inst, [1], Y)
    assert sum(plan.design) == 0
    d, f, o, total = cost_decomposition(plan)
    assert d == 0 and f == 0 and total == o == 21


def test_node_limit_marks_plan_unproven():
    inst, Y = generate_synthetic_instance(1, 4, 2, 4, history_weeks=10)
    plan = solve_bp_wbp(inst, Y.values[0], Y.rows(0, 2), {"node_limit": 1})
    assert not plan.bp.status == "infeasible"
    assert plan.bp.nodes <= 1


def test_plan_file(tmp_path):
    inst, Y = tiny_instance(6)
    plan = solve_bp_wbp(inst, Y.values[0], Y)
    p = tmp_path / "plan.json"
    save_plan(plan, p)
    doc = json.loads(p.read_text())
    assert doc == json.loads(json.dumps(plan_to_dict(plan)))
    assert doc["costs"]["total"] == pytest.approx(plan.costs.total)
    assert len(doc["weeks"]) == Y.periods
    assert doc["solver"]["bp"]["status"] == "optimal"
