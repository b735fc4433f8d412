import math

import numpy as np
import pytest

from relayshed.formulations import AlgebraicModel, build_nflb_milp
from relayshed.instances import triad
from relayshed.netmodel import Budget
from relayshed.oracle import brute_force_interdiction
from relayshed.solvers import (
    CAP_BASIC,
    CAP_INDICATOR,
    BackendCapabilityError,
    GlpkCrosscheckBackend,
    ScipyHighsBackend,
    SolveOptions,
    SolveResult,
    SolverError,
    get_backend,
    relative_gap,
)


def box_lp(sense="min"):
    m = AlgebraicModel(sense=sense, name="box")
    m.add_variable(("x",), lb=0.0, ub=2.0)
    m.add_variable(("y",), lb=0.0, ub=3.0)
    m.set_objective({})
    return m


def test_zero_objective_box_lp(backend):
    res = backend.solve(box_lp(), SolveOptions(time_limit_s=10))
    assert res.status == "optimal"
    assert res.objective == pytest.approx(0.0)


def test_infeasible_lp(backend):
    m = AlgebraicModel()
    m.add_variable(("x",))
    m.add_constraint(("lo",), {("x",): 1.0}, ">=", 1.0)
    m.add_constraint(("hi",), {("x",): 1.0}, "<=", 0.0)
    m.set_objective({("x",): 1.0})
    assert backend.solve(m, SolveOptions(time_limit_s=10)).status == "infeasible"


def test_unbounded_lp(backend):
    m = AlgebraicModel(sense="max")
    m.add_variable(("x",), lb=0.0)
    m.set_objective({("x",): 1.0})
    assert backend.solve(m, SolveOptions(time_limit_s=10)).status == "unbounded"


def test_lp_duals_signs_and_values(backend):
    # min x subject to x >= 3: dual of the binding row is dobj/drhs = 1
    m = AlgebraicModel(sense="min")
    m.add_variable(("x",))
    m.add_constraint(("lo",), {("x",): 1.0}, ">=", 3.0)
    m.set_objective({("x",): 1.0})
    res = backend.solve(m, SolveOptions(time_limit_s=10))
    assert res.duals[("lo",)] == pytest.approx(1.0)

    # max 2y subject to y <= 5: dual is dobj/drhs = 2
    m2 = AlgebraicModel(sense="max")
    m2.add_variable(("y",), lb=0.0)
    m2.add_constraint(("cap",), {("y",): 1.0}, "<=", 5.0)
    m2.set_objective({("y",): 2.0})
    res2 = backend.solve(m2, SolveOptions(time_limit_s=10))
    assert res2.objective == pytest.approx(10.0)
    assert res2.duals[("cap",)] == pytest.approx(2.0)

    # equality row: min x + y, x + y == 4
    m3 = AlgebraicModel(sense="min")
    m3.add_variable(("x",), lb=0.0)
    m3.add_variable(("y",), lb=0.0)
    m3.add_constraint(("bal",), {("x",): 1.0, ("y",): 1.0}, "==", 4.0)
    m3.set_objective({("x",): 1.0, ("y",): 1.0})
    res3 = backend.solve(m3, SolveOptions(time_limit_s=10))
    assert res3.duals[("bal",)] == pytest.approx(1.0)


def test_milp_on_fixture_within_a_second(backend):
    net, relays = triad()
    res = backend.solve(build_nflb_milp(net, relays, Budget(count=1)),
                        SolveOptions(time_limit_s=60))
    assert res.status == "optimal"
    assert res.wall_time_s < 1.0
    oracle = brute_force_interdiction(net, relays, 1, physics="netflow", backend=backend)
    assert res.objective == pytest.approx(oracle.value, rel=1e-6)
    assert res.gap <= 1e-4
    assert res.best_bound == pytest.approx(res.objective, rel=1e-6)


def test_determinism_repeated_solves(backend):
    net, relays = triad()
    model = build_nflb_milp(net, relays, Budget(count=1))
    opts = SolveOptions(time_limit_s=60, thread_count=1, random_seed=7)
    a = backend.solve(model, opts)
    b = backend.solve(model, opts)
    assert a.status == b.status
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_capabilities_and_indicator_refusal(backend):
    caps = backend.capabilities()
    assert CAP_BASIC in caps
    assert CAP_INDICATOR not in caps
    m = AlgebraicModel()
    m.add_variable(("b",), kind="binary")
    m.add_variable(("x",), lb=0.0)
    m.add_indicator(("i",), ("b",), 1, {("x",): 1.0}, "<=", 0.0)
    m.set_objective({("x",): 1.0})
    with pytest.raises(BackendCapabilityError):
        backend.solve(m, SolveOptions(time_limit_s=10))


def test_warm_start_and_target_are_noted_not_fatal(backend):
    net, relays = triad()
    model = build_nflb_milp(net, relays, Budget(count=1))
    res = backend.solve(model, SolveOptions(time_limit_s=60, warm_start={("delta", 1): 1.0},
                                            target_objective=1.0))
    assert res.status == "optimal"
    assert "warm_start" in res.message and "target_objective" in res.message


def test_constant_model_paths(backend):
    m = AlgebraicModel()
    m.add_constraint(("ok",), {}, "==", 0.0)
    m.set_objective({}, offset=2.5)
    res = backend.solve(m, SolveOptions(time_limit_s=10))
    assert res.status == "optimal" and res.objective == pytest.approx(2.5)
    m2 = AlgebraicModel()
    m2.add_constraint(("bad",), {}, ">=", 1.0)
    m2.set_objective({})
    assert backend.solve(m2, SolveOptions(time_limit_s=10)).status == "infeasible"


def test_solve_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(time_limit_s=0)
    with pytest.raises(ValueError):
        SolveOptions(thread_count=0)


def test_relative_gap_definition():
    assert relative_gap(2.0, 2.0) == 0.0
    assert relative_gap(2.0, 3.0) == pytest.approx(0.5)
    assert math.isinf(relative_gap(float("nan"), 1.0))


def test_log_file_written(backend, tmp_path):
    log = tmp_path / "solve.log"
    res = backend.solve(box_lp(), SolveOptions(time_limit_s=10, log_path=str(log)))
    assert res.status == "optimal"
    text = log.read_text()
    assert "status: optimal" in text and "model: box" in text


def test_unknown_backend_rejected():
    with pytest.raises(SolverError, match="unknown solver backend"):
        get_backend("cplex")


def test_env_var_selects_backend(monkeypatch):
    monkeypatch.setenv("RELAYSHED_SOLVER", "highs")
    assert isinstance(get_backend(), ScipyHighsBackend)


def test_glpk_crosscheck_agrees_on_fixture():
    try:
        glpk = GlpkCrosscheckBackend()
    except BackendCapabilityError:
        pytest.skip("cvxopt GLPK not installed; cross-check backend unavailable")
    net, relays = triad()
    model = build_nflb_milp(net, relays, Budget(count=1))
    highs = get_backend("highs").solve(model, SolveOptions(time_limit_s=60))
    other = glpk.solve(model, SolveOptions(time_limit_s=60))
    assert other.status == "optimal"
    assert other.objective == pytest.approx(highs.objective, rel=1e-6)
