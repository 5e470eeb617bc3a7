import datetime as dt
import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import tiny_instance
from periodic_demand.core import (
    C40, DIN, OTHER, TRAIN, TRAIN_MOVING, WIN, WIN_SPLIT, Arc, Block, Commodity,
    DailyDemandRecord, DemandMatrix, DemandParseError, Instance, Node, SpaceTimeGraph,
    ValidationError, aggregate_to_periods, apply_win_transform, disaggregate_evenly,
    instance_from_dict, instance_to_dict, load_demand_csv, load_instance, round_half_up,
    save_instance, strip_win_nodes, write_demand_csv,
)

MONDAY = dt.date(2019, 5, 6)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- demand CSV --------------------------------------------------------------

def test_row_maps_to_record(tmp_path):
    recs = load_demand_csv(write(tmp_path, "date,commodity_id,count\n2019-05-06,17,42\n"))
    assert recs == [DailyDemandRecord(dt.date(2019, 5, 6), 17, 42)]


def test_negative_count_rejected(tmp_path):
    with pytest.raises(ValidationError):
        load_demand_csv(write(tmp_path, "date,commodity_id,count\n2019-05-06,1,-3\n"))


@pytest.mark.parametrize("body,line", [
    ("2019-05-06,1\n", 2),
    ("2019-05-06,1,2\n2019-13-01,1,2\n", 3),
    ("2019-05-06,x,2\n", 2),
])
def test_malformed_rows_report_line(tmp_path, body, line):
    with pytest.raises(DemandParseError) as err:
        load_demand_csv(write(tmp_path, "date,commodity_id,count\n" + body))
    assert err.value.line == line


def test_bad_header(tmp_path):
    with pytest.raises(DemandParseError):
        load_demand_csv(write(tmp_path, "day,id,n\n2019-05-06,1,2\n"))


def test_records_sorted_and_duplicates_summed(tmp_path):
    text = ("date,commodity_id,count\n2019-05-07,0,1\n2019-05-06,1,2\n"
            "2019-05-06,0,3\n2019-05-06,0,4\n")
    recs = load_demand_csv(write(tmp_path, text))
    assert [(r.date.day, r.commodity, r.count) for r in recs] == [(6, 0, 7), (6, 1, 2), (7, 0, 1)]


def test_container_types_normalized(tmp_path):
    text = ("date,commodity_id,count,container_type\n"
            "2019-05-06,0,3,20\n2019-05-07,0,2,40\n2019-05-08,0,1,20\n"
            "2019-05-06,1,2,45\n2019-05-07,1,1,53\n")
    days = "".join(f"{MONDAY + dt.timedelta(d)},0,0,40\n" for d in range(3, 7))
    recs = load_demand_csv(write(tmp_path, text + days))
    Y = aggregate_to_periods(recs, K=2)
    # four 20-ft boxes make two C40, plus two C40
    assert Y.values.tolist() == [[4, 3]]


def test_unknown_container_type(tmp_path):
    with pytest.raises(DemandParseError):
        load_demand_csv(write(tmp_path, "date,commodity_id,count,container_type\n2019-05-06,0,1,30\n"))


def test_write_and_reload(tmp_path):
    recs = [DailyDemandRecord(MONDAY + dt.timedelta(d), k, d + k) for d in range(7) for k in range(2)]
    p = tmp_path / "out.csv"
    write_demand_csv(p, recs)
    assert load_demand_csv(p) == recs
    assert p.read_bytes().count(b"\r") == 0


# --- aggregation -------------------------------------------------------------

def test_week_sum():
    recs = [DailyDemandRecord(MONDAY + dt.timedelta(d), 0, d + 1) for d in range(7)]
    Y = aggregate_to_periods(recs)
    assert Y.values.tolist() == [[28]]
    assert Y.period_starts == (MONDAY,)


def test_partial_weeks_dropped():
    # starts on a Wednesday, ends on a Tuesday
    first = MONDAY + dt.timedelta(2)
    recs = [DailyDemandRecord(first + dt.timedelta(d), 0, 1) for d in range(20)]
    Y = aggregate_to_periods(recs)
    assert Y.periods == 2
    assert Y.period_starts[0] == MONDAY + dt.timedelta(7)
    assert Y.values.tolist() == [[7], [7]]


def test_2226_days_give_318_weeks():
    recs = [DailyDemandRecord(MONDAY + dt.timedelta(d), 0, 1) for d in range(2226)]
    assert aggregate_to_periods(recs).periods == 318


def test_silent_commodity_is_zero_with_warning(caplog):
    recs = [DailyDemandRecord(MONDAY + dt.timedelta(d), 0, 2) for d in range(7)]
    with caplog.at_level(logging.WARNING):
        Y = aggregate_to_periods(recs, K=2)
    assert Y.values.tolist() == [[14, 0]]
    assert "without records" in caplog.text


def test_missing_days_warn(caplog):
    recs = [DailyDemandRecord(MONDAY, 0, 2), DailyDemandRecord(MONDAY + dt.timedelta(6), 0, 1)]
    with caplog.at_level(logging.WARNING):
        Y = aggregate_to_periods(recs)
    assert Y.values.tolist() == [[3]]
    assert "without any record" in caplog.text


def test_other_period_start():
    recs = [DailyDemandRecord(MONDAY + dt.timedelta(d), 0, 1) for d in range(14)]
    Y = aggregate_to_periods(recs, period_start=2)   # Wednesday
    assert Y.periods == 1 and Y.period_starts[0].weekday() == 2


def test_commodity_outside_k():
    with pytest.raises(ValidationError):
        aggregate_to_periods([DailyDemandRecord(MONDAY, 3, 1)] * 7, K=2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 500), min_size=3, max_size=3), min_size=1, max_size=6))
def test_disaggregate_then_aggregate_is_identity(rows):
    Y = DemandMatrix(np.array(rows), tuple(MONDAY + dt.timedelta(7 * t) for t in range(len(rows))))
    back = aggregate_to_periods(disaggregate_evenly(Y), K=3)
    assert back == Y


# --- demand matrix -----------------------------------------------------------

def test_demand_matrix_invariants():
    with pytest.raises(ValidationError):
        DemandMatrix(np.array([[1, -1]]))
    with pytest.raises(ValidationError):
        DemandMatrix(np.array([[1.5]]))
    with pytest.raises(ValidationError):
        DemandMatrix(np.array([1, 2]))
    Y = DemandMatrix(np.array([[1.0, 2.0]]))
    assert Y.values.dtype == np.int64
    with pytest.raises(ValueError):
        Y.values[0, 0] = 5


def test_round_half_up():
    assert round_half_up(np.array([0.5, 1.5, 2.5, 2.49999, 3.25])).tolist() == [1, 2, 3, 2, 3]


# --- graph -------------------------------------------------------------------

def two_din_graph(terminals=1, dins=2):
    nodes, arcs = [], []
    for theta in range(terminals):
        ids = []
        for d in range(dins):
            ids.append(len(nodes))
            nodes.append(Node(len(nodes), DIN, theta, d))
        y = len(nodes)
        nodes.append(Node(y, TRAIN, theta, dins))
        for i in ids:
            arcs.append(Arc(len(arcs), i, y, OTHER))
    return SpaceTimeGraph(tuple(nodes), tuple(arcs))


def test_win_transform_two_dins():
    g = two_din_graph()
    h = apply_win_transform(g, [0])
    assert len(h.nodes) == len(g.nodes) + 1
    assert len(h.arcs) == len(g.arcs) + 2
    win = h.win_node(0)
    split = [a for a in h.arcs if a.kind == WIN_SPLIT]
    assert all(a.tail == win.id and h.nodes[a.head].kind == DIN for a in split)
    assert h.demand_sources(0) == [win]


def test_win_transform_single_din():
    g = two_din_graph(dins=1)
    h = apply_win_transform(g, [0])
    assert (len(h.nodes), len(h.arcs)) == (len(g.nodes) + 1, len(g.arcs) + 1)


def test_win_transform_three_terminals_and_inverse():
    g = two_din_graph(terminals=3)
    h = apply_win_transform(g, [0, 1, 2])
    assert len(h.nodes) == len(g.nodes) + 3
    assert len(h.arcs) == len(g.arcs) + 6
    assert sum(n.kind == WIN for n in h.nodes) == 3
    assert strip_win_nodes(h) == g
    with pytest.raises(ValidationError):
        apply_win_transform(h, [0])


def test_graph_validation():
    with pytest.raises(ValidationError):   # train-moving arc without capacity
        SpaceTimeGraph((Node(0, TRAIN, 0, 0), Node(1, TRAIN, 1, 1)),
                       (Arc(0, 0, 1, TRAIN_MOVING, None),))
    with pytest.raises(ValidationError):   # backwards in time
        SpaceTimeGraph((Node(0, TRAIN, 0, 2), Node(1, TRAIN, 1, 1)),
                       (Arc(0, 0, 1, TRAIN_MOVING, 10.0),))
    with pytest.raises(ValidationError):   # split arc not WIN -> DIN
        SpaceTimeGraph((Node(0, TRAIN, 0, 0), Node(1, DIN, 0, 1)),
                       (Arc(0, 0, 1, WIN_SPLIT, None),))
    with pytest.raises(ValidationError):   # cycle
        SpaceTimeGraph((Node(0, OTHER, 0, None), Node(1, OTHER, 0, None)),
                       (Arc(0, 0, 1, OTHER), Arc(1, 1, 0, OTHER)))


# --- instance ----------------------------------------------------------------

def test_instance_validation():
    inst, _ = tiny_instance(0)
    with pytest.raises(ValidationError):
        Instance(inst.commodities, inst.graph, inst.blocks, 60.0, 48.0, 2)
    with pytest.raises(ValidationError):   # a commodity without an artificial block
        Instance(inst.commodities, inst.graph,
                 tuple(b for b in inst.blocks if not b.artificial), 48.0, 60.0, 2)
    with pytest.raises(ValidationError):
        Block(0, (0,), 5.0, {0: 1.0}, True, frozenset([0]))
    with pytest.raises(ValidationError):
        Block(0, (0,), 5.0, {0: 1.0}, False, frozenset())
    with pytest.raises(ValidationError):
        Commodity(0, 1, 1, C40)
    with pytest.raises(ValidationError):
        Commodity(0, 0, 1, "C20")


def test_block_path_must_be_connected():
    inst, _ = tiny_instance(0)
    blocks = list(inst.blocks)
    b = blocks[0]
    blocks[0] = Block(b.id, tuple(reversed(b.arcs)), b.design_cost, b.flow_cost, False,
                      b.admissible_commodities)
    with pytest.raises(ValidationError):
        Instance(inst.commodities, inst.graph, tuple(blocks), 48.0, 60.0, 2)


def test_instance_indexes():
    inst, _ = tiny_instance(4)
    for k in range(inst.K):
        assert inst.artificial_blocks_for[k]
        assert all(k in inst.blocks[b].admissible_commodities for b in inst.blocks_for[k])
    for a, bs in inst.blocks_on_arc.items():
        assert inst.graph.arcs[a].kind == TRAIN_MOVING
        assert all(a in inst.blocks[b].arcs and not inst.blocks[b].artificial for b in bs)
    assert inst.is_c53(1) and not inst.is_c53(0)


@pytest.mark.parametrize("seed", range(5))
def test_instance_file_round_trip(tmp_path, seed):
    inst, _ = tiny_instance(seed)
    p = tmp_path / "inst.json"
    save_instance(inst, p)
    back = load_instance(p)
    assert back == inst
    data = json.loads(p.read_text())
    assert {"commodities", "nodes", "arcs", "blocks", "params"} <= set(data)
    assert instance_to_dict(instance_from_dict(data)) == data


def test_instance_file_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        load_instance(p)
    p.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(ValidationError):
        load_instance(p)

