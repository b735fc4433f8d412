import numpy as np
import pytest

from relayshed.formulations import build_nflb_milp
from relayshed.instances import random_interdiction_fixture, triad
from relayshed.netmodel import (
    Budget,
    Bus,
    Generator,
    Line,
    Network,
    aggregate_generators,
    generate_relay_map,
    total_demand,
)
from relayshed.oracle import (
    CapExceededError,
    DEFAULT_ENUM_CAP,
    assemble_Gh,
    audit_vertex_duals,
    brute_force_interdiction,
    count_attacks,
    verify_total_unimodularity,
)
from relayshed.solvers import SolveOptions


def two_bus_net():
    return Network(100.0, (Bus(1, 0.0), Bus(2, 1.0)), (Line("k", 1, 2, 1.0, 2.0),),
                   (Generator("a", 1, 1.5), Generator("b", 2, 0.5)))


# -- enumeration ----------------------------------------------------------------


def test_enumeration_zero_budget():
    net, relays = triad()
    res = brute_force_interdiction(net, relays, 0, physics="dcopf")
    assert res.value == pytest.approx(0.0, abs=1e-9)
    assert res.n_evaluated == 1
    assert res.argmax == (frozenset(),)


def test_enumeration_full_budget_saturates():
    net, relays = triad()
    res = brute_force_interdiction(net, relays, 3, physics="netflow")
    assert res.value == pytest.approx(total_demand(net))
    assert res.n_evaluated == count_attacks(3, 3)


def test_enumeration_matches_milp(backend, quick_opts):
    net, relays = triad()
    milp = backend.solve(build_nflb_milp(net, relays, Budget(count=1)), quick_opts)
    res = brute_force_interdiction(net, relays, 1, physics="netflow")
    assert milp.objective == pytest.approx(res.value, rel=1e-6)
    assert res.table[frozenset({2})] == pytest.approx(1.0)
    assert res.table[frozenset({1})] == pytest.approx(2.0)


def test_enumeration_cap():
    net, relays = random_interdiction_fixture(seed=0, n_buses=8)
    with pytest.raises(CapExceededError, match="cap"):
        brute_force_interdiction(net, relays, 3, cap=10)
    assert count_attacks(8, 3) <= DEFAULT_ENUM_CAP


def test_enumeration_table_dump(tmp_path):
    import csv

    net, relays = triad()
    res = brute_force_interdiction(net, relays, 1, physics="netflow")
    out = tmp_path / "attacks.csv"
    res.dump_table(out)
    with out.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == res.n_evaluated
    by_attack = {r["attacked_relays"]: float(r["load_shed_pu"]) for r in rows}
    assert by_attack["1"] == pytest.approx(2.0)
    assert by_attack[""] == pytest.approx(0.0)


def test_enumeration_monotone_in_attack_size():
    """Superset attacks never reduce the defender optimum."""
    net, relays = triad()
    r1 = brute_force_interdiction(net, relays, 1, physics="dcopf")
    r2 = brute_force_interdiction(net, relays, 2, physics="dcopf")
    for pair, value in r2.table.items():
        for single, base in r1.table.items():
            if single <= pair:
                assert value >= base - 1e-9


# -- [G h] assembly ---------------------------------------------------------------


def test_assemble_gh_dimensions_two_bus():
    net = two_bus_net()
    tu = assemble_Gh(net)
    nk, nb, ng = 1, 2, 2
    assert tu.matrix.shape == (4 * nk + 2 * ng + 3 * nb, 2 * nk + 3 * nb + ng + 1)
    assert tu.col_labels[-1] == ("rhs",)
    # the rhs column carries 1 exactly on the shed-dual rows
    rhs = tu.matrix[:, -1]
    shed_rows = [i for i, lab in enumerate(tu.row_labels) if lab[0] == "dual_shed"]
    assert sorted(np.nonzero(rhs)[0].tolist()) == shed_rows


def test_assemble_gh_entries_and_column_formula(fixture_pool):
    for net, _ in fixture_pool[:4]:
        agg = aggregate_generators(net)
        tu = assemble_Gh(agg)
        assert np.all(np.isin(tu.matrix, (-1, 0, 1)))
        nk, nb, ng = len(agg.lines), len(agg.buses), len(agg.generators)
        assert tu.matrix.shape[1] == 2 * nk + 3 * nb + ng + 1


def test_assemble_gh_rejects_multiple_gens_per_bus():
    net = Network(100.0, (Bus(1, 0.0), Bus(2, 1.0)), (Line("k", 1, 2, 1.0, 2.0),),
                  (Generator("a", 1, 1.0), Generator("b", 1, 1.0)))
    with pytest.raises(ValueError, match="aggregate"):
        assemble_Gh(net)


# -- TU verification ----------------------------------------------------------------


def test_tu_two_bus_exhaustive_both_methods():
    tu = assemble_Gh(two_bus_net())
    gh = verify_total_unimodularity(tu, method="ghouila_houri")
    assert gh.ok and gh.exhaustive
    minors = verify_total_unimodularity(tu, method="minors", max_order=3)
    assert minors.ok and minors.exhaustive


def test_tu_triad_exhaustive():
    net, _ = triad()
    report = verify_total_unimodularity(assemble_Gh(net))
    assert report.ok and report.method == "ghouila_houri" and report.exhaustive


def test_tu_minor_sampling_up_to_order_six():
    net, _ = triad()
    report = verify_total_unimodularity(assemble_Gh(net), method="minors",
                                        max_order=6, budget=50_000)
    assert report.ok


def test_tu_corrupted_entry_detected():
    tu = assemble_Gh(two_bus_net())
    bad = tu.matrix.copy()
    bad[0, 0] = 2
    report = verify_total_unimodularity(bad)
    assert not report.ok
    assert report.counterexample == ((0,), (0,))


def test_tu_sign_corruption_detected():
    # [[1, 1], [1, -1]] has determinant -2: caught by the signing search
    report = verify_total_unimodularity(np.array([[1, 1], [1, -1]]))
    assert not report.ok
    assert report.counterexample == ((0, 1),)
    minors = verify_total_unimodularity(np.array([[1, 1], [1, -1]]), method="minors")
    assert not minors.ok


# -- vertex dual audit ------------------------------------------------------------------


def test_vertex_duals_triad_all_budgets(backend):
    net, relays = triad()
    for u in (1, 2, 3):
        report = audit_vertex_duals(net, relays, u, backend=backend)
        assert report.max_abs_dual <= 1.0 + 1e-6
        assert report.n_attacks == count_attacks(3, u)


def test_vertex_duals_attack_everything(backend):
    net, relays = triad()
    report = audit_vertex_duals(net, relays, 3, backend=backend)
    assert report.max_abs_dual <= 1.0 + 1e-6


def test_vertex_duals_random_fixtures(backend):
    for seed in range(10):
        net, relays = random_interdiction_fixture(seed=seed + 700, n_buses=6)
        report = audit_vertex_duals(net, relays, 1, backend=backend)
        assert report.max_abs_dual <= 1.0 + 1e-6


def test_vertex_duals_requires_basic_backend():
    class NoBasic:
        name = "stub"

        def capabilities(self):
            return frozenset()

    from relayshed.solvers import BackendCapabilityError

    net, relays = triad()
    with pytest.raises(BackendCapabilityError, match="basic"):
        audit_vertex_duals(net, relays, 1, backend=NoBasic())
