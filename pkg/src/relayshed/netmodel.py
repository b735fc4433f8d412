"""Network data model, MATPOWER ingestion, relay maps, and budget arithmetic.

All power quantities are stored in per unit on the case's MVA base
(100 MVA for every stock case). Networks and relay maps are immutable
value objects; derived index structures are cached on first use.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

ComponentId = Union[int, str]


class CaseFormatError(ValueError):
    """Raised for malformed case files; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class NetworkDataError(ValueError):
    """Raised when network data violates a structural invariant."""


@dataclass(frozen=True)
class Bus:
    id: ComponentId
    demand: float  # pu


@dataclass(frozen=True)
class Line:
    id: ComponentId
    from_bus: ComponentId  # origin o(k)
    to_bus: ComponentId  # destination d(k)
    susceptance: float  # pu, > 0
    limit: float  # thermal limit, pu, >= 0


@dataclass(frozen=True)
class Generator:
    id: ComponentId
    bus: ComponentId
    pmax: float  # pu, >= 0; dispatch lower bound is always 0


@dataclass(frozen=True)
class Network:
    """Buses, lines, and generators of a transmission grid, in per unit."""

    base_mva: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    theta_bound: float | None = None  # optional phase-angle-difference bound

    def __post_init__(self):
        seen = set()
        for b in self.buses:
            if b.id in seen:
                raise NetworkDataError(f"duplicate bus id {b.id!r}")
            seen.add(b.id)
            if b.demand < 0:
                raise NetworkDataError(f"bus {b.id!r} has negative demand {b.demand}")
        bus_ids = seen
        line_ids = set()
        for ln in self.lines:
            if ln.id in line_ids:
                raise NetworkDataError(f"duplicate line id {ln.id!r}")
            line_ids.add(ln.id)
            if ln.from_bus == ln.to_bus:
                raise NetworkDataError(f"line {ln.id!r} is a self-loop at bus {ln.from_bus!r}")
            if ln.from_bus not in bus_ids or ln.to_bus not in bus_ids:
                raise NetworkDataError(f"line {ln.id!r} references an unknown bus")
            if not ln.susceptance > 0:
                raise NetworkDataError(f"line {ln.id!r} has nonpositive susceptance {ln.susceptance}")
            if ln.limit < 0:
                raise NetworkDataError(f"line {ln.id!r} has negative thermal limit {ln.limit}")
        gen_ids = set()
        for g in self.generators:
            if g.id in gen_ids:
                raise NetworkDataError(f"duplicate generator id {g.id!r}")
            gen_ids.add(g.id)
            if g.bus not in bus_ids:
                raise NetworkDataError(f"generator {g.id!r} references unknown bus {g.bus!r}")
            if g.pmax < 0:
                raise NetworkDataError(f"generator {g.id!r} has negative capacity {g.pmax}")

    @cached_property
    def bus_index(self) -> dict[ComponentId, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_index(self) -> dict[ComponentId, int]:
        return {ln.id: i for i, ln in enumerate(self.lines)}

    @cached_property
    def gen_index(self) -> dict[ComponentId, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    @cached_property
    def gens_at_bus(self) -> dict[ComponentId, tuple[Generator, ...]]:
        out: dict[ComponentId, list[Generator]] = {b.id: [] for b in self.buses}
        for g in self.generators:
            out[g.bus].append(g)
        return {b: tuple(gs) for b, gs in out.items()}

    @cached_property
    def lines_in(self) -> dict[ComponentId, tuple[Line, ...]]:
        """Lines into each bus, i.e. those with destination d(k) = b."""
        out: dict[ComponentId, list[Line]] = {b.id: [] for b in self.buses}
        for ln in self.lines:
            out[ln.to_bus].append(ln)
        return {b: tuple(ls) for b, ls in out.items()}

    @cached_property
    def lines_out(self) -> dict[ComponentId, tuple[Line, ...]]:
        """Lines originating at each bus, i.e. those with origin o(k) = b."""
        out: dict[ComponentId, list[Line]] = {b.id: [] for b in self.buses}
        for ln in self.lines:
            out[ln.from_bus].append(ln)
        return {b: tuple(ls) for b, ls in out.items()}

    @cached_property
    def lines_at_bus(self) -> dict[ComponentId, tuple[Line, ...]]:
        out: dict[ComponentId, list[Line]] = {b.id: [] for b in self.buses}
        for ln in self.lines:
            out[ln.from_bus].append(ln)
            out[ln.to_bus].append(ln)
        return {b: tuple(ls) for b, ls in out.items()}

    @cached_property
    def is_connected(self) -> bool:
        """Connectivity of the graph implied by the lines (flag, not error)."""
        return len(self.connected_components) <= 1

    @cached_property
    def connected_components(self) -> tuple[frozenset[ComponentId], ...]:
        if not self.buses:
            return ()
        adj: dict[ComponentId, list[ComponentId]] = {b.id: [] for b in self.buses}
        for ln in self.lines:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        unseen = {b.id for b in self.buses}
        comps = []
        while unseen:
            root = next(iter(unseen))
            stack, comp = [root], set()
            unseen.discard(root)
            while stack:
                v = stack.pop()
                comp.add(v)
                for w in adj[v]:
                    if w in unseen:
                        unseen.discard(w)
                        stack.append(w)
            comps.append(frozenset(comp))
        return tuple(sorted(comps, key=len, reverse=True))


@dataclass(frozen=True)
class Relay:
    id: ComponentId
    lines: frozenset[ComponentId] = field(default_factory=frozenset)
    gens: frozenset[ComponentId] = field(default_factory=frozenset)
    buses: frozenset[ComponentId] = field(default_factory=frozenset)


@dataclass(frozen=True)
class RelayMap:
    """Relays and the component sets each controls, plus inverse maps."""

    relays: tuple[Relay, ...]

    def __post_init__(self):
        seen = set()
        for r in self.relays:
            if r.id in seen:
                raise NetworkDataError(f"duplicate relay id {r.id!r}")
            seen.add(r.id)

    @cached_property
    def relay_index(self) -> dict[ComponentId, int]:
        return {r.id: i for i, r in enumerate(self.relays)}

    @cached_property
    def relays_of_line(self) -> dict[ComponentId, frozenset[ComponentId]]:
        return self._invert("lines")

    @cached_property
    def relays_of_gen(self) -> dict[ComponentId, frozenset[ComponentId]]:
        return self._invert("gens")

    @cached_property
    def relays_of_bus(self) -> dict[ComponentId, frozenset[ComponentId]]:
        return self._invert("buses")

    def _invert(self, attr: str) -> dict[ComponentId, frozenset[ComponentId]]:
        out: dict[ComponentId, set[ComponentId]] = {}
        for r in self.relays:
            for c in getattr(r, attr):
                out.setdefault(c, set()).add(r.id)
        return {c: frozenset(s) for c, s in out.items()}

    def validate_against(self, net: Network) -> None:
        """Check every controlled component exists in the network."""
        for r in self.relays:
            for k in r.lines:
                if k not in net.line_index:
                    raise NetworkDataError(f"relay {r.id!r} controls unknown line {k!r}")
            for g in r.gens:
                if g not in net.gen_index:
                    raise NetworkDataError(f"relay {r.id!r} controls unknown generator {g!r}")
            for b in r.buses:
                if b not in net.bus_index:
                    raise NetworkDataError(f"relay {r.id!r} controls unknown bus {b!r}")


@dataclass(frozen=True)
class Budget:
    """Attacker cardinality budget, optionally derived from a percentage."""

    count: int
    percentage: Fraction | None = None

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"budget count must be nonnegative, got {self.count}")


def _round_half_even(x: Fraction) -> int:
    floor = x.numerator // x.denominator
    rem = x - floor
    half = Fraction(1, 2)
    if rem > half:
        return floor + 1
    if rem < half:
        return floor
    return floor if floor % 2 == 0 else floor + 1


def budget_from_percentage(pct, n_relays: int) -> Budget:
    """Budget U = round(pct * n_relays / 100), ties to even.

    The rounding rule is an inference: it is the unique common rounding
    that reproduces every published per-instance relay count, including
    both half-integer cases (25% of 118 -> 30, 25% of 1354 -> 338, where
    plain half-up fails the second).
    """
    pct = Fraction(str(pct)) if not isinstance(pct, Fraction) else pct
    if not (0 <= pct <= 100):
        raise ValueError(f"budget percentage must lie in [0, 100], got {pct}")
    if n_relays < 0:
        raise ValueError("relay count must be nonnegative")
    count = _round_half_even(pct * n_relays / 100)
    return Budget(count=count, percentage=pct)


def generate_relay_map(net: Network, policy: str = "one_per_bus") -> RelayMap:
    """Build a relay map under the given placement policy.

    one_per_bus: a relay at each bus controls that bus, every generator
    at the bus, and every line adjacent to the bus; hence each line is
    controlled by its two endpoint relays and each generator and bus by
    exactly one relay.
    """
    if policy != "one_per_bus":
        raise ValueError(f"unknown relay policy {policy!r}")
    relays = []
    for b in net.buses:
        relays.append(
            Relay(
                id=b.id,
                lines=frozenset(ln.id for ln in net.lines_at_bus[b.id]),
                gens=frozenset(g.id for g in net.gens_at_bus[b.id]),
                buses=frozenset({b.id}),
            )
        )
    return RelayMap(relays=tuple(relays))


def total_demand(net: Network) -> float:
    return float(sum(b.demand for b in net.buses))


def aggregate_generators(net: Network) -> Network:
    """Merge generators sharing a bus into one with the summed capacity.

    Buses with a single generator keep it untouched, so the operation is
    idempotent. All other network data is unchanged.
    """
    new_gens: list[Generator] = []
    done: set[ComponentId] = set()
    for g in net.generators:
        if g.bus in done:
            continue
        done.add(g.bus)
        group = net.gens_at_bus[g.bus]
        if len(group) == 1:
            new_gens.append(g)
        else:
            new_gens.append(Generator(id=g.id, bus=g.bus, pmax=float(sum(x.pmax for x in group))))
    return Network(
        base_mva=net.base_mva,
        buses=net.buses,
        lines=net.lines,
        generators=tuple(new_gens),
        theta_bound=net.theta_bound,
    )


# ---------------------------------------------------------------------------
# MATPOWER case ingestion (import-only subset)
# ---------------------------------------------------------------------------

# Column positions in the standard MATPOWER matrices.
_BUS_I, _PD = 0, 2
_GEN_BUS, _GEN_STATUS, _PMAX = 0, 7, 8
_F_BUS, _T_BUS, _BR_X, _RATE_A, _BR_STATUS = 0, 1, 3, 5, 10

_MATRIX_RE = re.compile(r"mpc\.(bus|gen|branch)\s*=\s*\[")
_BASE_RE = re.compile(r"mpc\.baseMVA\s*=\s*([0-9eE+\-.]+)\s*;")


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_matrices(text: str) -> tuple[float, dict[str, list[tuple[int, list[float]]]]]:
    """Extract baseMVA and the bus/gen/branch matrices with line numbers."""
    base_mva = None
    matrices: dict[str, list[tuple[int, list[float]]]] = {}
    current: str | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if current is None:
            m = _BASE_RE.search(line)
            if m:
                base_mva = float(m.group(1))
                continue
            m = _MATRIX_RE.search(line)
            if m:
                current = m.group(1)
                matrices[current] = []
                line = line[m.end():].strip()
                if not line:
                    continue
        if current is not None:
            closed = False
            if "]" in line:
                line = line.split("]", 1)[0]
                closed = True
            for chunk in line.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                try:
                    row = [float(tok) for tok in chunk.replace(",", " ").split()]
                except ValueError:
                    raise CaseFormatError(f"malformed {current} matrix row: {chunk!r}", line_no)
                matrices[current].append((line_no, row))
            if closed:
                current = None
    if current is not None:
        raise CaseFormatError(f"unterminated mpc.{current} matrix")
    if base_mva is None:
        raise CaseFormatError("missing mpc.baseMVA")
    for name in ("bus", "gen", "branch"):
        if name not in matrices:
            raise CaseFormatError(f"missing mpc.{name} matrix")
    return base_mva, matrices


def parse_matpower(case_text: str) -> Network:
    """Parse a MATPOWER case into a per-unit Network.

    Out-of-service branches and generators are dropped, reactance is
    converted to susceptance B = 1/x, and a branch rateA of 0 (the
    "unlimited" convention) is replaced by the total system demand,
    which can never bind. Negative bus demands and generator capacities
    are clamped to 0: load shed is only defined against nonnegative
    demand, and dispatch lower bounds are 0 by assumption.
    """
    base_mva, matrices = _parse_matrices(case_text)

    buses: list[Bus] = []
    for line_no, row in matrices["bus"]:
        if len(row) <= _PD:
            raise CaseFormatError(f"bus row has {len(row)} columns, need > {_PD}", line_no)
        buses.append(Bus(id=int(row[_BUS_I]), demand=max(0.0, row[_PD]) / base_mva))
    bus_ids = {b.id for b in buses}

    gens: list[Generator] = []
    for idx, (line_no, row) in enumerate(matrices["gen"], start=1):
        if len(row) <= _PMAX:
            raise CaseFormatError(f"gen row has {len(row)} columns, need > {_PMAX}", line_no)
        if row[_GEN_STATUS] <= 0:
            continue
        bus = int(row[_GEN_BUS])
        if bus not in bus_ids:
            raise CaseFormatError(f"generator references unknown bus {bus}", line_no)
        gens.append(Generator(id=idx, bus=bus, pmax=max(0.0, row[_PMAX]) / base_mva))

    sum_demand = float(sum(b.demand for b in buses))
    lines: list[Line] = []
    for idx, (line_no, row) in enumerate(matrices["branch"], start=1):
        if len(row) <= _BR_STATUS:
            raise CaseFormatError(f"branch row has {len(row)} columns, need > {_BR_STATUS}", line_no)
        if row[_BR_STATUS] == 0:
            continue
        f_bus, t_bus = int(row[_F_BUS]), int(row[_T_BUS])
        if f_bus not in bus_ids or t_bus not in bus_ids:
            raise CaseFormatError(f"branch references unknown bus {f_bus} or {t_bus}", line_no)
        x = row[_BR_X]
        if x <= 0:
            raise CaseFormatError(f"branch has nonpositive reactance {x}", line_no)
        rate_a = row[_RATE_A] / base_mva
        lines.append(
            Line(
                id=idx,
                from_bus=f_bus,
                to_bus=t_bus,
                susceptance=1.0 / x,
                limit=rate_a if rate_a > 0 else sum_demand,
            )
        )

    return Network(base_mva=base_mva, buses=tuple(buses), lines=tuple(lines), generators=tuple(gens))


# ---------------------------------------------------------------------------
# Native JSON instance format
# ---------------------------------------------------------------------------


def network_to_dict(net: Network, relays: RelayMap | None = None) -> dict:
    doc: dict = {
        "base_mva": net.base_mva,
        "buses": [{"id": b.id, "demand": b.demand} for b in net.buses],
        "lines": [
            {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus,
             "susceptance": ln.susceptance, "limit": ln.limit}
            for ln in net.lines
        ],
        "generators": [{"id": g.id, "bus": g.bus, "pmax": g.pmax} for g in net.generators],
    }
    if net.theta_bound is not None:
        doc["theta_bound"] = net.theta_bound
    if relays is not None:
        doc["relays"] = [
            {"id": r.id, "lines": sorted(r.lines, key=str),
             "gens": sorted(r.gens, key=str), "buses": sorted(r.buses, key=str)}
            for r in relays.relays
        ]
    return doc


def network_from_dict(doc: Mapping) -> tuple[Network, RelayMap | None]:
    net = Network(
        base_mva=float(doc.get("base_mva", 100.0)),
        buses=tuple(Bus(id=b["id"], demand=float(b["demand"])) for b in doc["buses"]),
        lines=tuple(
            Line(id=ln["id"], from_bus=ln["from"], to_bus=ln["to"],
                 susceptance=float(ln["susceptance"]), limit=float(ln["limit"]))
            for ln in doc["lines"]
        ),
        generators=tuple(
            Generator(id=g["id"], bus=g["bus"], pmax=float(g["pmax"]))
            for g in doc["generators"]
        ),
        theta_bound=float(doc["theta_bound"]) if "theta_bound" in doc else None,
    )
    relays = None
    if "relays" in doc:
        relays = RelayMap(
            relays=tuple(
                Relay(id=r["id"], lines=frozenset(r.get("lines", ())),
                      gens=frozenset(r.get("gens", ())), buses=frozenset(r.get("buses", ())))
                for r in doc["relays"]
            )
        )
        relays.validate_against(net)
    return net, relays


def save_instance(path: str | Path, net: Network, relays: RelayMap | None = None) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net, relays), indent=1), encoding="utf-8")


def load_instance(path: str | Path) -> tuple[Network, RelayMap | None]:
    """Load a native-JSON or MATPOWER (.m) instance."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".m"):
        return parse_matpower(text), None
    return network_from_dict(json.loads(text))
