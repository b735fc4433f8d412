import json
from fractions import Fraction

import numpy as np
import pytest

from relayshed.netmodel import (
    Budget,
    Bus,
    CaseFormatError,
    Generator,
    Line,
    Network,
    NetworkDataError,
    aggregate_generators,
    budget_from_percentage,
    generate_relay_map,
    load_instance,
    network_from_dict,
    network_to_dict,
    parse_matpower,
    save_instance,
    total_demand,
)
from relayshed.instances import random_network, triad

TRIAD_CASE = """\
function mpc = triad
% three buses on a cycle, one generator
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0   0 0 0 1 1.0 0 138 1 1.06 0.94;
    2 1 100 0 0 0 1 1.0 0 138 1 1.06 0.94;
    3 1 100 0 0 0 1 1.0 0 138 1 1.06 0.94;
];
mpc.gen = [
    1 0 0 300 -300 1.0 100 1 250 0;
];
mpc.branch = [
    1 2 0.0 1.0 0 150 0 0 0 0 1 -360 360;
    2 3 0.0 1.0 0 150 0 0 0 0 1 -360 360;
    1 3 0.0 1.0 0 150 0 0 0 0 1 -360 360;
];
"""


def test_parse_triad_field_by_field():
    net = parse_matpower(TRIAD_CASE)
    assert net.base_mva == 100.0
    assert [b.id for b in net.buses] == [1, 2, 3]
    assert [b.demand for b in net.buses] == [0.0, 1.0, 1.0]
    assert len(net.lines) == 3
    assert [(ln.from_bus, ln.to_bus) for ln in net.lines] == [(1, 2), (2, 3), (1, 3)]
    assert all(ln.susceptance == 1.0 for ln in net.lines)
    assert all(ln.limit == 1.5 for ln in net.lines)
    assert len(net.generators) == 1
    assert net.generators[0].bus == 1 and net.generators[0].pmax == 2.5
    assert net.is_connected


def test_parse_minimal_case_no_lines():
    text = """mpc.baseMVA = 100;
mpc.bus = [ 1 3 50 0 0 0 1 1.0 0 138 1 1.06 0.94; ];
mpc.gen = [ 1 0 0 0 0 1.0 100 1 100 0; ];
mpc.branch = [ ];
"""
    net = parse_matpower(text)
    assert len(net.buses) == 1 and len(net.lines) == 0 and len(net.generators) == 1


def test_parse_drops_out_of_service():
    text = TRIAD_CASE.replace(
        "mpc.gen = [\n    1 0 0 300 -300 1.0 100 1 250 0;",
        "mpc.gen = [\n    1 0 0 300 -300 1.0 100 1 250 0;\n    2 0 0 300 -300 1.0 100 0 400 0;",
    ).replace(
        "    1 3 0.0 1.0 0 150 0 0 0 0 1 -360 360;",
        "    1 3 0.0 1.0 0 150 0 0 0 0 1 -360 360;\n    1 3 0.0 1.0 0 150 0 0 0 0 0 -360 360;",
    )
    net = parse_matpower(text)
    assert len(net.generators) == 1
    assert len(net.lines) == 3


def test_parse_zero_rate_a_becomes_total_demand():
    text = TRIAD_CASE.replace("1 2 0.0 1.0 0 150", "1 2 0.0 1.0 0 0")
    net = parse_matpower(text)
    assert net.lines[0].limit == pytest.approx(2.0)  # total demand in pu
    assert net.lines[1].limit == 1.5


def test_parse_errors_carry_line_numbers():
    bad = TRIAD_CASE.replace("2 3 0.0 1.0 0 150 0 0 0 0 1 -360 360;",
                             "2 3 0.0 oops 0 150 0 0 0 0 1 -360 360;")
    with pytest.raises(CaseFormatError) as err:
        parse_matpower(bad)
    assert "line 15" in str(err.value)


def test_parse_dangling_bus_reference():
    bad = TRIAD_CASE.replace("1 3 0.0 1.0", "1 9 0.0 1.0")
    with pytest.raises(CaseFormatError, match="unknown bus"):
        parse_matpower(bad)


def test_parse_nonpositive_reactance():
    bad = TRIAD_CASE.replace("1 2 0.0 1.0", "1 2 0.0 -0.5")
    with pytest.raises(CaseFormatError, match="reactance"):
        parse_matpower(bad)


def test_parse_missing_basemva():
    with pytest.raises(CaseFormatError, match="baseMVA"):
        parse_matpower("mpc.bus = [ 1 3 0 0 0 0 1 1 0 138 1 1.1 0.9; ];\n"
                       "mpc.gen = [ ];\nmpc.branch = [ ];")


def test_network_invariants_rejected():
    with pytest.raises(NetworkDataError, match="self-loop"):
        Network(100.0, (Bus(1, 0.0),), (Line("k", 1, 1, 1.0, 1.0),), ())
    with pytest.raises(NetworkDataError, match="susceptance"):
        Network(100.0, (Bus(1, 0.0), Bus(2, 0.0)), (Line("k", 1, 2, 0.0, 1.0),), ())
    with pytest.raises(NetworkDataError, match="unknown bus"):
        Network(100.0, (Bus(1, 0.0),), (), (Generator("g", 2, 1.0),))


def test_disconnected_is_flagged_not_rejected():
    net = Network(100.0, (Bus(1, 0.0), Bus(2, 1.0), Bus(3, 0.0)),
                  (Line("k", 1, 2, 1.0, 1.0),), ())
    assert not net.is_connected
    assert {len(c) for c in net.connected_components} == {1, 2}


# -- relay maps --------------------------------------------------------------


def test_relay_map_one_per_bus_triad():
    net, relays = triad()
    assert len(relays.relays) == 3
    assert relays.relays_of_line["l12"] == frozenset({1, 2})
    assert relays.relays_of_line["l23"] == frozenset({2, 3})
    assert relays.relays_of_gen["g1"] == frozenset({1})
    for b in (1, 2, 3):
        assert relays.relays_of_bus[b] == frozenset({b})


def test_relay_map_single_bus():
    net = Network(100.0, (Bus(1, 0.5),), (), (Generator("g", 1, 1.0),))
    relays = generate_relay_map(net)
    assert len(relays.relays) == 1
    assert relays.relays[0].gens == frozenset({"g"})
    assert relays.relays[0].lines == frozenset()


def test_relay_map_counts_on_random_networks():
    for seed in range(5):
        net = random_network(12, seed=seed)
        relays = generate_relay_map(net)
        assert len(relays.relays) == len(net.buses)
        for ln in net.lines:
            assert len(relays.relays_of_line[ln.id]) == 2
        for g in net.generators:
            assert len(relays.relays_of_gen[g.id]) == 1
        for b in net.buses:
            assert len(relays.relays_of_bus[b.id]) == 1
        relays.validate_against(net)


def test_relay_map_policy_unknown():
    net, _ = triad()
    with pytest.raises(ValueError):
        generate_relay_map(net, policy="per_line")


def test_relay_map_118_equivalent_has_one_relay_per_bus():
    from relayshed.instances import synthetic_case_text

    net = parse_matpower(synthetic_case_text("118blumsack"))
    assert len(generate_relay_map(net).relays) == 118


# -- budgets -----------------------------------------------------------------


@pytest.mark.parametrize("pct,n,expected", [
    (7, 118, 8),
    (25, 118, 30),    # 29.5 rounds to even 30
    (25, 1354, 338),  # 338.5 rounds to even 338; half-up would fail here
    (0, 118, 0),
    (100, 118, 118),
    (1, 118, 1),
])
def test_budget_from_percentage(pct, n, expected):
    budget = budget_from_percentage(pct, n)
    assert budget.count == expected
    assert budget.count <= n
    assert budget.percentage == Fraction(pct)


def test_budget_percentage_out_of_range():
    with pytest.raises(ValueError):
        budget_from_percentage(101, 10)
    with pytest.raises(ValueError):
        budget_from_percentage(-1, 10)
    with pytest.raises(ValueError):
        Budget(count=-1)


def test_budget_fractional_percentage_exact():
    assert budget_from_percentage("12.5", 4).count == 0  # 0.5 -> even 0
    assert budget_from_percentage("37.5", 4).count == 2  # 1.5 -> even 2


# -- totals and aggregation ---------------------------------------------------


def test_total_demand():
    net, _ = triad()
    assert total_demand(net) == pytest.approx(2.0)
    empty = Network(100.0, (Bus(1, 0.0),), (), ())
    assert total_demand(empty) == 0.0


def test_aggregate_generators_sums_capacity():
    net = Network(100.0, (Bus(1, 0.0), Bus(2, 1.0)), (Line("k", 1, 2, 1.0, 5.0),),
                  (Generator("a", 1, 0.5), Generator("b", 1, 0.7), Generator("c", 2, 0.3)))
    agg = aggregate_generators(net)
    assert len(agg.generators) == 2
    assert agg.gens_at_bus[1][0].pmax == pytest.approx(1.2)
    assert agg.gens_at_bus[2][0].pmax == pytest.approx(0.3)
    # idempotent once single per bus, and identical when already aggregated
    assert aggregate_generators(agg) == agg


def test_aggregate_preserves_totals():
    for seed in range(4):
        net = random_network(10, seed=seed, gen_ratio=0.8)
        agg = aggregate_generators(net)
        assert sum(g.pmax for g in agg.generators) == pytest.approx(
            sum(g.pmax for g in net.generators))
        assert agg.lines == net.lines
        assert total_demand(agg) == total_demand(net)
        assert all(len(agg.gens_at_bus[b.id]) <= 1 for b in agg.buses)


# -- native JSON ---------------------------------------------------------------


def test_json_round_trip(tmp_path):
    net, relays = triad()
    path = tmp_path / "triad.json"
    save_instance(path, net, relays)
    net2, relays2 = load_instance(path)
    assert network_to_dict(net2, relays2) == network_to_dict(net, relays)
    assert net2 == net


def test_parse_reparse_stable(tmp_path):
    net = parse_matpower(TRIAD_CASE)
    doc = network_to_dict(net)
    net2, _ = network_from_dict(json.loads(json.dumps(doc)))
    assert network_to_dict(net2) == doc
    assert total_demand(net2) == total_demand(net)


def test_load_matpower_path(tmp_path):
    path = tmp_path / "triad.m"
    path.write_text(TRIAD_CASE, encoding="utf-8")
    net, relays = load_instance(path)
    assert relays is None
    assert len(net.buses) == 3
