"""Solver-agnostic algebraic models for the relay-attack formulations.

Builders are pure functions from immutable network data to immutable-by-
convention model objects: the defender's DC-OPF and capacitated network
flow LPs, the network-flow dual LP for a fixed attack, the exact MILP for
the network-flow restriction (all linearization constants equal 1 thanks
to the unit dual bounds), and the two single-level baselines (logical
implications and scalar big-M).

Variable and constraint keys double as the extraction registry: every key
is a tuple whose first element names the role ("delta", "mu", "balance",
...) and whose remaining elements identify the component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping

from relayshed.netmodel import Budget, ComponentId, Network, RelayMap

Key = tuple
VarKind = Literal["continuous", "binary"]
RowSense = Literal["<=", "==", ">="]

INF = float("inf")


class ModelError(ValueError):
    """Raised for ill-formed models or inconsistent model inputs."""


@dataclass(frozen=True)
class Variable:
    key: Key
    kind: VarKind = "continuous"
    lb: float = -INF
    ub: float = INF


@dataclass(frozen=True)
class Row:
    key: Key
    coeffs: dict[Key, float]
    sense: RowSense
    rhs: float


@dataclass(frozen=True)
class IndicatorRow:
    """binary == active_value implies the linear row holds."""

    key: Key
    binary: Key
    active_value: int
    coeffs: dict[Key, float]
    sense: RowSense
    rhs: float


class AlgebraicModel:
    """Ordered registry of variables, rows, indicators, and an objective."""

    def __init__(self, sense: Literal["min", "max"] = "min", name: str = "model"):
        self.name = name
        self.sense = sense
        self.variables: dict[Key, Variable] = {}
        self.rows: dict[Key, Row] = {}
        self.indicators: dict[Key, IndicatorRow] = {}
        self.objective: dict[Key, float] = {}
        self.objective_offset: float = 0.0

    # -- construction -------------------------------------------------------

    def add_variable(self, key: Key, kind: VarKind = "continuous",
                     lb: float = -INF, ub: float = INF) -> Key:
        if key in self.variables:
            raise ModelError(f"duplicate variable {key}")
        if kind == "binary":
            lb, ub = 0.0, 1.0
        self.variables[key] = Variable(key=key, kind=kind, lb=lb, ub=ub)
        return key

    def _check_coeffs(self, coeffs: Mapping[Key, float], where: Key) -> dict[Key, float]:
        for v in coeffs:
            if v not in self.variables:
                raise ModelError(f"row {where} references undeclared variable {v}")
        return dict(coeffs)

    def add_constraint(self, key: Key, coeffs: Mapping[Key, float],
                       sense: RowSense, rhs: float) -> Key:
        if key in self.rows:
            raise ModelError(f"duplicate constraint {key}")
        self.rows[key] = Row(key=key, coeffs=self._check_coeffs(coeffs, key),
                             sense=sense, rhs=float(rhs))
        return key

    def add_indicator(self, key: Key, binary: Key, active_value: int,
                      coeffs: Mapping[Key, float], sense: RowSense, rhs: float) -> Key:
        if key in self.indicators:
            raise ModelError(f"duplicate indicator {key}")
        var = self.variables.get(binary)
        if var is None or var.kind != "binary":
            raise ModelError(f"indicator {key} must activate on a declared binary variable")
        if active_value not in (0, 1):
            raise ModelError("indicator activation value must be 0 or 1")
        self.indicators[key] = IndicatorRow(
            key=key, binary=binary, active_value=active_value,
            coeffs=self._check_coeffs(coeffs, key), sense=sense, rhs=float(rhs))
        return key

    def set_objective(self, coeffs: Mapping[Key, float], offset: float = 0.0) -> None:
        self.objective = self._check_coeffs(coeffs, ("objective",))
        self.objective_offset = float(offset)

    # -- queries ------------------------------------------------------------

    @property
    def is_mip(self) -> bool:
        return any(v.kind == "binary" for v in self.variables.values())

    @property
    def has_indicators(self) -> bool:
        return bool(self.indicators)

    def variables_by_role(self, role: str) -> list[Key]:
        return [k for k in self.variables if k[0] == role]

    def rows_by_role(self, role: str) -> list[Key]:
        return [k for k in self.rows if k[0] == role]

    def signature(self) -> tuple:
        """Structural identity used by the determinism tests."""
        return (
            self.sense,
            tuple((v.key, v.kind, v.lb, v.ub) for v in self.variables.values()),
            tuple((r.key, tuple(sorted(r.coeffs.items(), key=lambda kv: str(kv[0]))),
                   r.sense, r.rhs) for r in self.rows.values()),
            tuple((r.key, r.binary, r.active_value,
                   tuple(sorted(r.coeffs.items(), key=lambda kv: str(kv[0]))),
                   r.sense, r.rhs) for r in self.indicators.values()),
            tuple(sorted(self.objective.items(), key=lambda kv: str(kv[0]))),
            self.objective_offset,
        )

    # -- debugging export ---------------------------------------------------

    def to_lp_format(self) -> str:
        """CPLEX-LP-style text dump (objective, rows, bounds, binaries)."""

        def vname(key: Key) -> str:
            return "_".join(str(p) for p in key).replace(" ", "").replace(",", "_")

        def expr(coeffs: Mapping[Key, float]) -> str:
            parts = []
            for k, c in coeffs.items():
                sign = "+" if c >= 0 else "-"
                parts.append(f"{sign} {abs(c):.12g} {vname(k)}")
            return " ".join(parts) if parts else "0"

        sense_word = {"<=": "<=", "==": "=", ">=": ">="}
        out = ["Maximize" if self.sense == "max" else "Minimize"]
        out.append(" obj: " + expr(self.objective))
        out.append("Subject To")
        for r in self.rows.values():
            out.append(f" {vname(r.key)}: {expr(r.coeffs)} {sense_word[r.sense]} {r.rhs:.12g}")
        for ind in self.indicators.values():
            out.append(
                f" {vname(ind.key)}: {vname(ind.binary)} = {ind.active_value} -> "
                f"{expr(ind.coeffs)} {sense_word[ind.sense]} {ind.rhs:.12g}"
            )
        out.append("Bounds")
        for v in self.variables.values():
            if v.kind == "binary":
                continue
            lo = "-inf" if v.lb == -INF else f"{v.lb:.12g}"
            hi = "+inf" if v.ub == INF else f"{v.ub:.12g}"
            out.append(f" {lo} <= {vname(v.key)} <= {hi}")
        binaries = [v for v in self.variables.values() if v.kind == "binary"]
        if binaries:
            out.append("Binaries")
            out.append(" " + " ".join(vname(v.key) for v in binaries))
        out.append("End")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Attack vectors and defender solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackVector:
    """Attacked relays plus the induced component availabilities.

    A component is unavailable exactly when some relay controlling it is
    attacked; `from_relays` constructs the induced sets, and
    `validate_against` checks a hand-built vector for that consistency.
    """

    attacked: frozenset[ComponentId]
    down_lines: frozenset[ComponentId] = frozenset()
    down_gens: frozenset[ComponentId] = frozenset()
    down_buses: frozenset[ComponentId] = frozenset()

    @classmethod
    def none(cls) -> "AttackVector":
        return cls(attacked=frozenset())

    @classmethod
    def from_relays(cls, relays: RelayMap, attacked: Iterable[ComponentId]) -> "AttackVector":
        a = frozenset(attacked)
        unknown = a - set(relays.relay_index)
        if unknown:
            raise ModelError(f"attack names unknown relays: {sorted(map(str, unknown))}")
        down_lines = frozenset(k for k, rs in relays.relays_of_line.items() if rs & a)
        down_gens = frozenset(g for g, rs in relays.relays_of_gen.items() if rs & a)
        down_buses = frozenset(b for b, rs in relays.relays_of_bus.items() if rs & a)
        return cls(attacked=a, down_lines=down_lines, down_gens=down_gens, down_buses=down_buses)

    def validate_against(self, relays: RelayMap) -> None:
        induced = AttackVector.from_relays(relays, self.attacked)
        if (induced.down_lines != self.down_lines
                or induced.down_gens != self.down_gens
                or induced.down_buses != self.down_buses):
            raise ModelError("attack vector availabilities are inconsistent with the relay map")

    def line_on(self, k: ComponentId) -> bool:
        return k not in self.down_lines

    def gen_on(self, g: ComponentId) -> bool:
        return g not in self.down_gens

    def bus_on(self, b: ComponentId) -> bool:
        return b not in self.down_buses


@dataclass(frozen=True)
class DefenderSolution:
    """Flows, dispatch, shed, and (for DC-OPF) phase angles, in pu."""

    objective: float
    flows: dict[ComponentId, float]
    dispatch: dict[ComponentId, float]
    shed: dict[ComponentId, float]
    theta: dict[ComponentId, float] | None = None


@dataclass(frozen=True)
class DualSolution:
    """Named dual values, grouped by the primal rows they price.

    The Ohm and angle-bound groups are populated only for the full DC-OPF
    dual; the network-flow dual carries the first six groups.
    """

    lam_p: dict[ComponentId, float]
    lam_m: dict[ComponentId, float]
    mu: dict[ComponentId, float]
    alpha: dict[ComponentId, float]
    beta: dict[ComponentId, float]
    gamma: dict[ComponentId, float]
    xi_p: dict[ComponentId, float] | None = None
    xi_m: dict[ComponentId, float] | None = None
    kappa_p: dict[ComponentId, float] | None = None
    kappa_m: dict[ComponentId, float] | None = None

    @classmethod
    def from_variable_values(cls, values: Mapping[Key, float]) -> "DualSolution":
        """Group the variable values of a solved dual LP by role."""
        groups: dict[str, dict[ComponentId, float]] = {}
        for key, val in values.items():
            groups.setdefault(key[0], {})[key[1]] = float(val)
        has_ohm = "xi_p" in groups
        return cls(
            lam_p=groups.get("lam_p", {}), lam_m=groups.get("lam_m", {}),
            mu=groups.get("mu", {}), alpha=groups.get("alpha", {}),
            beta=groups.get("beta", {}), gamma=groups.get("gamma", {}),
            xi_p=groups.get("xi_p") if has_ohm else None,
            xi_m=groups.get("xi_m") if has_ohm else None,
            kappa_p=groups.get("kappa_p") if has_ohm else None,
            kappa_m=groups.get("kappa_m") if has_ohm else None,
        )

    def max_abs(self) -> float:
        worst = 0.0
        for group in (self.lam_p, self.lam_m, self.mu, self.alpha, self.beta,
                      self.gamma, self.xi_p, self.xi_m, self.kappa_p, self.kappa_m):
            if group:
                worst = max(worst, max(abs(v) for v in group.values()))
        return worst


@dataclass(frozen=True)
class HeuristicM:
    """Single scalar bound applied to every dual linearization."""

    value: float

    def __post_init__(self):
        if not self.value >= 1:
            raise ModelError(f"heuristic M must be >= 1, got {self.value}")


# ---------------------------------------------------------------------------
# Defender problems (attack fixed)
# ---------------------------------------------------------------------------


def _defender_model(net: Network, attack: AttackVector, ohms_law: bool,
                    name: str) -> AlgebraicModel:
    m = AlgebraicModel(sense="min", name=name)
    for ln in net.lines:
        m.add_variable(("f", ln.id))
    for g in net.generators:
        m.add_variable(("p", g.id), lb=0.0)
    for b in net.buses:
        m.add_variable(("l", b.id), lb=0.0)
    if ohms_law:
        for b in net.buses:
            m.add_variable(("theta", b.id))

    for ln in net.lines:
        v = 1.0 if attack.line_on(ln.id) else 0.0
        m.add_constraint(("flow_ub", ln.id), {("f", ln.id): 1.0}, "<=", ln.limit * v)
        m.add_constraint(("flow_lb", ln.id), {("f", ln.id): 1.0}, ">=", -ln.limit * v)
        if ohms_law and v == 1.0:
            bk = ln.susceptance
            coeffs = {("f", ln.id): 1.0, ("theta", ln.from_bus): -bk, ("theta", ln.to_bus): bk}
            m.add_constraint(("ohm_ub", ln.id), coeffs, "<=", 0.0)
            m.add_constraint(("ohm_lb", ln.id), coeffs, ">=", 0.0)
    for g in net.generators:
        u = 1.0 if attack.gen_on(g.id) else 0.0
        m.add_constraint(("disp_ub", g.id), {("p", g.id): 1.0}, "<=", g.pmax * u)
    obj: dict[Key, float] = {}
    for b in net.buses:
        coeffs: dict[Key, float] = {}
        for ln in net.lines_in[b.id]:
            coeffs[("f", ln.id)] = 1.0
        for ln in net.lines_out[b.id]:
            coeffs[("f", ln.id)] = -1.0
        for g in net.gens_at_bus[b.id]:
            coeffs[("p", g.id)] = 1.0
        coeffs[("l", b.id)] = 1.0
        m.add_constraint(("balance", b.id), coeffs, "==", b.demand)
        w = 1.0 if attack.bus_on(b.id) else 0.0
        m.add_constraint(("shed_lb", b.id), {("l", b.id): 1.0}, ">=", b.demand * (1.0 - w))
        m.add_constraint(("shed_ub", b.id), {("l", b.id): 1.0}, "<=", b.demand)
        if ohms_law:
            m.add_constraint(("ang_ub", b.id), {("theta", b.id): 1.0}, "<=", math.pi)
            m.add_constraint(("ang_lb", b.id), {("theta", b.id): 1.0}, ">=", -math.pi)
        obj[("l", b.id)] = 1.0
    m.set_objective(obj)
    return m


def build_defender_dcopf(net: Network, attack: AttackVector) -> AlgebraicModel:
    """Defender's DC-OPF LP with the attack substituted as constants.

    Attacked lines carry zero flow and their Ohm rows are dropped (they
    are trivially satisfiable at the full relaxation slack).
    """
    return _defender_model(net, attack, ohms_law=True, name="defender_dcopf")


def build_defender_netflow(net: Network, attack: AttackVector) -> AlgebraicModel:
    """Capacitated network-flow relaxation: DC-OPF minus Ohm's law."""
    return _defender_model(net, attack, ohms_law=False, name="defender_netflow")


def build_defender_pruned(net: Network, attack: AttackVector, ohms_law: bool) -> AlgebraicModel:
    """Defender LP with attacked components removed outright.

    Equivalent optimum to the substituted build: dead lines and
    generators vanish, and the load at a dead bus is shed as a constant
    objective offset.
    """
    m = AlgebraicModel(sense="min", name="defender_pruned")
    alive_lines = [ln for ln in net.lines if attack.line_on(ln.id)]
    alive_gens = [g for g in net.generators if attack.gen_on(g.id)]
    for ln in alive_lines:
        m.add_variable(("f", ln.id))
    for g in alive_gens:
        m.add_variable(("p", g.id), lb=0.0)
    offset = 0.0
    for b in net.buses:
        if attack.bus_on(b.id):
            m.add_variable(("l", b.id), lb=0.0)
        else:
            offset += b.demand
    if ohms_law:
        for b in net.buses:
            m.add_variable(("theta", b.id))

    for ln in alive_lines:
        m.add_constraint(("flow_ub", ln.id), {("f", ln.id): 1.0}, "<=", ln.limit)
        m.add_constraint(("flow_lb", ln.id), {("f", ln.id): 1.0}, ">=", -ln.limit)
        if ohms_law:
            bk = ln.susceptance
            coeffs = {("f", ln.id): 1.0, ("theta", ln.from_bus): -bk, ("theta", ln.to_bus): bk}
            m.add_constraint(("ohm_ub", ln.id), coeffs, "<=", 0.0)
            m.add_constraint(("ohm_lb", ln.id), coeffs, ">=", 0.0)
    for g in alive_gens:
        m.add_constraint(("disp_ub", g.id), {("p", g.id): 1.0}, "<=", g.pmax)
    obj: dict[Key, float] = {}
    for b in net.buses:
        alive = attack.bus_on(b.id)
        coeffs: dict[Key, float] = {}
        for ln in net.lines_in[b.id]:
            if attack.line_on(ln.id):
                coeffs[("f", ln.id)] = 1.0
        for ln in net.lines_out[b.id]:
            if attack.line_on(ln.id):
                coeffs[("f", ln.id)] = -1.0
        for g in net.gens_at_bus[b.id]:
            if attack.gen_on(g.id):
                coeffs[("p", g.id)] = 1.0
        if alive:
            coeffs[("l", b.id)] = 1.0
        m.add_constraint(("balance", b.id), coeffs, "==", b.demand if alive else 0.0)
        if alive:
            m.add_constraint(("shed_lb", b.id), {("l", b.id): 1.0}, ">=", 0.0)
            m.add_constraint(("shed_ub", b.id), {("l", b.id): 1.0}, "<=", b.demand)
            obj[("l", b.id)] = 1.0
        if ohms_law:
            m.add_constraint(("ang_ub", b.id), {("theta", b.id): 1.0}, "<=", math.pi)
            m.add_constraint(("ang_lb", b.id), {("theta", b.id): 1.0}, ">=", -math.pi)
    m.set_objective(obj, offset=offset)
    return m


def defender_solution_from_values(net: Network, attack: AttackVector,
                                  values: Mapping[Key, float],
                                  objective: float, ohms_law: bool) -> DefenderSolution:
    """Assemble a full DefenderSolution, filling removed components."""
    flows = {ln.id: float(values.get(("f", ln.id), 0.0)) for ln in net.lines}
    dispatch = {g.id: float(values.get(("p", g.id), 0.0)) for g in net.generators}
    shed = {}
    for b in net.buses:
        if attack.bus_on(b.id):
            shed[b.id] = float(values.get(("l", b.id), 0.0))
        else:
            shed[b.id] = b.demand
    theta = None
    if ohms_law:
        theta = {b.id: float(values.get(("theta", b.id), 0.0)) for b in net.buses}
    return DefenderSolution(objective=objective, flows=flows, dispatch=dispatch,
                            shed=shed, theta=theta)


# ---------------------------------------------------------------------------
# Network-flow dual LP (attack fixed)
# ---------------------------------------------------------------------------


def _add_nf_dual_rows(m: AlgebraicModel, net: Network) -> None:
    for ln in net.lines:
        m.add_constraint(
            ("dual_flow", ln.id),
            {("lam_p", ln.id): 1.0, ("lam_m", ln.id): -1.0,
             ("mu", ln.to_bus): 1.0, ("mu", ln.from_bus): -1.0},
            "==", 0.0)
    for g in net.generators:
        m.add_constraint(("dual_dispatch", g.id),
                         {("mu", g.bus): 1.0, ("gamma", g.id): -1.0}, "<=", 0.0)
    for b in net.buses:
        m.add_constraint(("dual_shed", b.id),
                         {("alpha", b.id): 1.0, ("mu", b.id): 1.0, ("beta", b.id): -1.0},
                         "<=", 1.0)


def build_nf_dual_lp(net: Network, attack: AttackVector) -> AlgebraicModel:
    """Dual of the network-flow defender LP at a fixed attack.

    By strong duality its optimum equals the network-flow defender
    optimum; vertex solutions have all components in [-1, 1].
    """
    m = AlgebraicModel(sense="max", name="nf_dual")
    for ln in net.lines:
        m.add_variable(("lam_p", ln.id), lb=0.0)
        m.add_variable(("lam_m", ln.id), lb=0.0)
    for b in net.buses:
        m.add_variable(("mu", b.id))
        m.add_variable(("alpha", b.id), lb=0.0)
        m.add_variable(("beta", b.id), lb=0.0)
    for g in net.generators:
        m.add_variable(("gamma", g.id), lb=0.0)
    _add_nf_dual_rows(m, net)
    obj: dict[Key, float] = {}
    for ln in net.lines:
        v = 1.0 if attack.line_on(ln.id) else 0.0
        obj[("lam_p", ln.id)] = -ln.limit * v
        obj[("lam_m", ln.id)] = -ln.limit * v
    for g in net.generators:
        u = 1.0 if attack.gen_on(g.id) else 0.0
        obj[("gamma", g.id)] = -g.pmax * u
    for b in net.buses:
        w = 1.0 if attack.bus_on(b.id) else 0.0
        obj[("alpha", b.id)] = b.demand * (1.0 - w)
        obj[("mu", b.id)] = b.demand
        obj[("beta", b.id)] = -b.demand
    m.set_objective(obj)
    return m


# ---------------------------------------------------------------------------
# Attack logic shared by all single-level MILPs
# ---------------------------------------------------------------------------


def _add_attack_variables_and_logic(m: AlgebraicModel, net: Network,
                                    relays: RelayMap, budget: Budget) -> None:
    if budget.count > len(relays.relays):
        raise ModelError(
            f"budget {budget.count} exceeds the number of relays {len(relays.relays)}")
    for r in relays.relays:
        m.add_variable(("delta", r.id), kind="binary")
    for ln in net.lines:
        m.add_variable(("v", ln.id), kind="binary")
    for g in net.generators:
        m.add_variable(("u", g.id), kind="binary")
    for b in net.buses:
        m.add_variable(("w", b.id), kind="binary")

    m.add_constraint(("budget",),
                     {("delta", r.id): 1.0 for r in relays.relays}, "<=", float(budget.count))
    # Unavailable component => some controlling relay attacked.
    for ln in net.lines:
        coeffs = {("delta", r): 1.0 for r in relays.relays_of_line.get(ln.id, frozenset())}
        coeffs[("v", ln.id)] = 1.0
        m.add_constraint(("line_avail", ln.id), coeffs, ">=", 1.0)
    for g in net.generators:
        coeffs = {("delta", r): 1.0 for r in relays.relays_of_gen.get(g.id, frozenset())}
        coeffs[("u", g.id)] = 1.0
        m.add_constraint(("gen_avail", g.id), coeffs, ">=", 1.0)
    for b in net.buses:
        coeffs = {("delta", r): 1.0 for r in relays.relays_of_bus.get(b.id, frozenset())}
        coeffs[("w", b.id)] = 1.0
        m.add_constraint(("bus_avail", b.id), coeffs, ">=", 1.0)
    # Attacked relay => every component it controls is unavailable.
    for ln in net.lines:
        for r in relays.relays_of_line.get(ln.id, frozenset()):
            m.add_constraint(("relay_line", r, ln.id),
                             {("delta", r): 1.0, ("v", ln.id): 1.0}, "<=", 1.0)
    for g in net.generators:
        for r in relays.relays_of_gen.get(g.id, frozenset()):
            m.add_constraint(("relay_gen", r, g.id),
                             {("delta", r): 1.0, ("u", g.id): 1.0}, "<=", 1.0)
    for b in net.buses:
        for r in relays.relays_of_bus.get(b.id, frozenset()):
            m.add_constraint(("relay_bus", r, b.id),
                             {("delta", r): 1.0, ("w", b.id): 1.0}, "<=", 1.0)


# ---------------------------------------------------------------------------
# Exact MILP for the network-flow restriction (unit dual boxes)
# ---------------------------------------------------------------------------


def build_nflb_milp(net: Network, relays: RelayMap, budget: Budget) -> AlgebraicModel:
    """Single-level MILP of the network-flow restriction.

    Total unimodularity of the dual system makes the unit boxes on the
    duals valid, so every bilinear binary-times-dual term linearizes with
    McCormick rows whose constants are all 1; the MILP is exact for the
    restricted bilevel problem.
    """
    m = AlgebraicModel(sense="max", name="nflb_milp")
    _add_attack_variables_and_logic(m, net, relays, budget)
    for ln in net.lines:
        m.add_variable(("lam_p", ln.id), lb=0.0, ub=1.0)
        m.add_variable(("lam_m", ln.id), lb=0.0, ub=1.0)
    for b in net.buses:
        m.add_variable(("mu", b.id), lb=-1.0, ub=1.0)
        m.add_variable(("alpha", b.id), lb=0.0, ub=1.0)
        m.add_variable(("beta", b.id), lb=0.0, ub=1.0)
    for g in net.generators:
        m.add_variable(("gamma", g.id), lb=0.0, ub=1.0)
    for ln in net.lines:
        m.add_variable(("lam_p_bar", ln.id), lb=0.0, ub=1.0)
        m.add_variable(("lam_m_bar", ln.id), lb=0.0, ub=1.0)
    for g in net.generators:
        m.add_variable(("gamma_bar", g.id), lb=0.0, ub=1.0)
    for b in net.buses:
        m.add_variable(("alpha_bar", b.id), lb=0.0, ub=1.0)

    _add_nf_dual_rows(m, net)

    # McCormick rows for bar = binary * dual, with constants 1.
    for ln in net.lines:
        for bar, lam in ((("lam_p_bar", ln.id), ("lam_p", ln.id)),
                         (("lam_m_bar", ln.id), ("lam_m", ln.id))):
            m.add_constraint(("mc_le_bin",) + bar, {bar: 1.0, ("v", ln.id): -1.0}, "<=", 0.0)
            m.add_constraint(("mc_le_dual",) + bar, {bar: 1.0, lam: -1.0}, "<=", 0.0)
            m.add_constraint(("mc_ge",) + bar,
                             {bar: 1.0, lam: -1.0, ("v", ln.id): -1.0}, ">=", -1.0)
    for g in net.generators:
        bar, gam = ("gamma_bar", g.id), ("gamma", g.id)
        m.add_constraint(("mc_le_bin",) + bar, {bar: 1.0, ("u", g.id): -1.0}, "<=", 0.0)
        m.add_constraint(("mc_le_dual",) + bar, {bar: 1.0, gam: -1.0}, "<=", 0.0)
        m.add_constraint(("mc_ge",) + bar, {bar: 1.0, gam: -1.0, ("u", g.id): -1.0}, ">=", -1.0)
    # alpha_bar stands for (1 - w) * alpha, per bus.
    for b in net.buses:
        bar, alpha = ("alpha_bar", b.id), ("alpha", b.id)
        m.add_constraint(("mc_le_bin",) + bar, {bar: 1.0, ("w", b.id): 1.0}, "<=", 1.0)
        m.add_constraint(("mc_le_dual",) + bar, {bar: 1.0, alpha: -1.0}, "<=", 0.0)
        m.add_constraint(("mc_ge",) + bar, {bar: 1.0, alpha: -1.0, ("w", b.id): 1.0}, ">=", 0.0)

    obj: dict[Key, float] = {}
    for ln in net.lines:
        obj[("lam_p_bar", ln.id)] = -ln.limit
        obj[("lam_m_bar", ln.id)] = -ln.limit
    for g in net.generators:
        obj[("gamma_bar", g.id)] = -g.pmax
    for b in net.buses:
        obj[("alpha_bar", b.id)] = b.demand
        obj[("mu", b.id)] = b.demand
        obj[("beta", b.id)] = -b.demand
    m.set_objective(obj)
    return m


# ---------------------------------------------------------------------------
# Single-level baselines with the full DC-OPF dual
# ---------------------------------------------------------------------------


def _add_dcopf_dual_core(m: AlgebraicModel, net: Network) -> None:
    """Dual variables and rows of the DC-OPF defender problem."""
    for ln in net.lines:
        m.add_variable(("lam_p", ln.id), lb=0.0)
        m.add_variable(("lam_m", ln.id), lb=0.0)
        m.add_variable(("xi_p", ln.id), lb=0.0)
        m.add_variable(("xi_m", ln.id), lb=0.0)
    for b in net.buses:
        m.add_variable(("mu", b.id))
        m.add_variable(("alpha", b.id), lb=0.0)
        m.add_variable(("beta", b.id), lb=0.0)
        m.add_variable(("kappa_p", b.id), lb=0.0)
        m.add_variable(("kappa_m", b.id), lb=0.0)
    for g in net.generators:
        m.add_variable(("gamma", g.id), lb=0.0)

    for ln in net.lines:
        m.add_constraint(
            ("dual_flow", ln.id),
            {("lam_p", ln.id): 1.0, ("lam_m", ln.id): -1.0,
             ("mu", ln.to_bus): 1.0, ("mu", ln.from_bus): -1.0,
             ("xi_p", ln.id): 1.0, ("xi_m", ln.id): -1.0},
            "==", 0.0)
    for g in net.generators:
        m.add_constraint(("dual_dispatch", g.id),
                         {("mu", g.bus): 1.0, ("gamma", g.id): -1.0}, "<=", 0.0)
    for b in net.buses:
        m.add_constraint(("dual_shed", b.id),
                         {("alpha", b.id): 1.0, ("mu", b.id): 1.0, ("beta", b.id): -1.0},
                         "<=", 1.0)
    # Stationarity in the phase angles; the susceptance weights apply to
    # both the incoming and the outgoing line sums.
    for b in net.buses:
        coeffs: dict[Key, float] = {("kappa_p", b.id): 1.0, ("kappa_m", b.id): -1.0}
        for ln in net.lines_in[b.id]:
            coeffs[("xi_p", ln.id)] = coeffs.get(("xi_p", ln.id), 0.0) + ln.susceptance
            coeffs[("xi_m", ln.id)] = coeffs.get(("xi_m", ln.id), 0.0) - ln.susceptance
        for ln in net.lines_out[b.id]:
            coeffs[("xi_p", ln.id)] = coeffs.get(("xi_p", ln.id), 0.0) - ln.susceptance
            coeffs[("xi_m", ln.id)] = coeffs.get(("xi_m", ln.id), 0.0) + ln.susceptance
        m.add_constraint(("dual_theta", b.id), coeffs, "==", 0.0)


def _add_dcopf_linearization_vars(m: AlgebraicModel, net: Network, ub: float = INF) -> None:
    for ln in net.lines:
        m.add_variable(("lam_p_bar", ln.id), lb=0.0, ub=ub)
        m.add_variable(("lam_m_bar", ln.id), lb=0.0, ub=ub)
        m.add_variable(("xi_p_bar", ln.id), lb=0.0, ub=ub)
        m.add_variable(("xi_m_bar", ln.id), lb=0.0, ub=ub)
    for g in net.generators:
        m.add_variable(("gamma_bar", g.id), lb=0.0, ub=ub)
    for b in net.buses:
        m.add_variable(("alpha_bar", b.id), lb=0.0, ub=ub)


def _dcopf_dual_objective(net: Network) -> dict[Key, float]:
    obj: dict[Key, float] = {}
    for ln in net.lines:
        obj[("lam_p_bar", ln.id)] = -ln.limit
        obj[("lam_m_bar", ln.id)] = -ln.limit
        obj[("xi_p_bar", ln.id)] = -2.0 * math.pi * ln.susceptance
        obj[("xi_m_bar", ln.id)] = -2.0 * math.pi * ln.susceptance
    for g in net.generators:
        obj[("gamma_bar", g.id)] = -g.pmax
    for b in net.buses:
        obj[("alpha_bar", b.id)] = b.demand
        obj[("mu", b.id)] = b.demand
        obj[("beta", b.id)] = -b.demand
        obj[("kappa_p", b.id)] = -math.pi
        obj[("kappa_m", b.id)] = -math.pi
    return obj


def build_logical_milp(net: Network, relays: RelayMap, budget: Budget) -> AlgebraicModel:
    """Exact single-level reformulation with indicator constraints.

    Dual variables carry no upper bounds; each product term is pinned by
    a pair of implications on the controlling binary.
    """
    m = AlgebraicModel(sense="max", name="logical_milp")
    _add_attack_variables_and_logic(m, net, relays, budget)
    _add_dcopf_dual_core(m, net)
    _add_dcopf_linearization_vars(m, net)

    for b in net.buses:
        bar, alpha, w = ("alpha_bar", b.id), ("alpha", b.id), ("w", b.id)
        m.add_indicator(("ind_on",) + bar, w, 0, {bar: 1.0, alpha: -1.0}, "==", 0.0)
        m.add_indicator(("ind_off",) + bar, w, 1, {bar: 1.0}, "==", 0.0)
    for ln in net.lines:
        v = ("v", ln.id)
        for bar, dual in ((("xi_p_bar", ln.id), ("xi_p", ln.id)),
                          (("xi_m_bar", ln.id), ("xi_m", ln.id))):
            m.add_indicator(("ind_on",) + bar, v, 0, {bar: 1.0, dual: -1.0}, "==", 0.0)
            m.add_indicator(("ind_off",) + bar, v, 1, {bar: 1.0}, "==", 0.0)
        for bar, dual in ((("lam_p_bar", ln.id), ("lam_p", ln.id)),
                          (("lam_m_bar", ln.id), ("lam_m", ln.id))):
            m.add_indicator(("ind_off",) + bar, v, 0, {bar: 1.0}, "==", 0.0)
            m.add_indicator(("ind_on",) + bar, v, 1, {bar: 1.0, dual: -1.0}, "==", 0.0)
    for g in net.generators:
        bar, dual, u = ("gamma_bar", g.id), ("gamma", g.id), ("u", g.id)
        m.add_indicator(("ind_off",) + bar, u, 0, {bar: 1.0}, "==", 0.0)
        m.add_indicator(("ind_on",) + bar, u, 1, {bar: 1.0, dual: -1.0}, "==", 0.0)

    m.set_objective(_dcopf_dual_objective(net))
    return m


def build_bigM_milp(net: Network, relays: RelayMap, budget: Budget,
                    M: HeuristicM | float) -> AlgebraicModel:
    """Single-level MILP with a scalar heuristic bound on all duals.

    The implications of the logical model become big-M rows; the result
    is a restriction whose optimum is nondecreasing in M and reaches the
    logical model's optimum once M dominates the true duals.
    """
    if not isinstance(M, HeuristicM):
        M = HeuristicM(float(M))
    big = M.value
    m = AlgebraicModel(sense="max", name="bigM_milp")
    _add_attack_variables_and_logic(m, net, relays, budget)
    _add_dcopf_dual_core(m, net)
    _add_dcopf_linearization_vars(m, net)

    def product_rows(bar: Key, dual: Key, binary: Key, on_value: int) -> None:
        # bar = dual when binary == on_value, else 0; dual implicitly <= M.
        m.add_constraint(("bm_le_dual",) + bar, {bar: 1.0, dual: -1.0}, "<=", 0.0)
        if on_value == 1:
            m.add_constraint(("bm_ge",) + bar,
                             {bar: 1.0, dual: -1.0, binary: -big}, ">=", -big)
            m.add_constraint(("bm_le_bin",) + bar, {bar: 1.0, binary: -big}, "<=", 0.0)
        else:
            m.add_constraint(("bm_ge",) + bar,
                             {bar: 1.0, dual: -1.0, binary: big}, ">=", 0.0)
            m.add_constraint(("bm_le_bin",) + bar, {bar: 1.0, binary: big}, "<=", big)

    for b in net.buses:
        product_rows(("alpha_bar", b.id), ("alpha", b.id), ("w", b.id), on_value=0)
    for ln in net.lines:
        product_rows(("xi_p_bar", ln.id), ("xi_p", ln.id), ("v", ln.id), on_value=0)
        product_rows(("xi_m_bar", ln.id), ("xi_m", ln.id), ("v", ln.id), on_value=0)
        product_rows(("lam_p_bar", ln.id), ("lam_p", ln.id), ("v", ln.id), on_value=1)
        product_rows(("lam_m_bar", ln.id), ("lam_m", ln.id), ("v", ln.id), on_value=1)
    for g in net.generators:
        product_rows(("gamma_bar", g.id), ("gamma", g.id), ("u", g.id), on_value=1)

    m.set_objective(_dcopf_dual_objective(net))
    return m
