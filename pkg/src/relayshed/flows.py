"""Graph and linear-algebra machinery behind the load-shed bounds.

Covers node-edge incidence matrices, bridge/block decomposition of the
grid graph, injection-shift-factor (ISF) flows, the two notions of
injection feasibility (with and without Ohm's law), the uncongested
sufficiency thresholds, and the chained-triangle instance family showing
those thresholds are tight within a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from relayshed.netmodel import Bus, ComponentId, Generator, Line, Network

# Above this bus count the reduced Laplacian solve switches to a sparse
# factorization; below it a dense solve is faster and simpler.
DENSE_SOLVE_MAX_BUSES = 2000

BALANCE_RTOL = 1e-8


class DisconnectedNetworkError(ValueError):
    def __init__(self, components):
        sizes = [len(c) for c in components]
        super().__init__(
            f"network is disconnected: {len(components)} components with sizes {sizes}"
        )
        self.components = components


def _require_connected(net: Network) -> None:
    if not net.is_connected:
        raise DisconnectedNetworkError(net.connected_components)


def injections_from_dict(net: Network, values: dict[ComponentId, float]) -> np.ndarray:
    """Dense injection vector aligned to the bus order of `net`."""
    d = np.zeros(len(net.buses))
    for b, v in values.items():
        d[net.bus_index[b]] = v
    d.flags.writeable = False
    return d


def check_balanced(d: np.ndarray, rtol: float = BALANCE_RTOL) -> None:
    scale = max(1.0, float(np.abs(d).max(initial=0.0)))
    if abs(float(d.sum())) > rtol * scale * max(1, d.size):
        raise ValueError(f"injections do not balance: sum = {d.sum():.3e}")


def incidence_matrix(net: Network, sparse: bool = False):
    """|buses| x |lines| node-edge incidence matrix N.

    Column k has +1 at the origin bus o(k) and -1 at the destination
    bus d(k).
    """
    n_b, n_k = len(net.buses), len(net.lines)
    rows, cols, vals = [], [], []
    for j, ln in enumerate(net.lines):
        rows.append(net.bus_index[ln.from_bus])
        cols.append(j)
        vals.append(1.0)
        rows.append(net.bus_index[ln.to_bus])
        cols.append(j)
        vals.append(-1.0)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n_b, n_k))
    return mat.tocsr() if sparse else mat.toarray()


# ---------------------------------------------------------------------------
# Bridges and block decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockDecomposition:
    """2-edge-connected blocks, bridges between them, and r = max block size.

    Contracting each block yields a tree; the cross-block edges are
    exactly the bridges of the graph, and every non-bridge edge lies
    inside some block ("non-tree" edges).
    """

    blocks: tuple[frozenset[ComponentId], ...]
    bridges: tuple[ComponentId, ...]
    non_tree_edges: tuple[ComponentId, ...]
    r: int


def find_bridges(net: Network) -> set[ComponentId]:
    """Bridge edges via an iterative low-link pass.

    Parallel lines are tracked by line id, so a doubled edge is never a
    bridge.
    """
    adj: dict[ComponentId, list[tuple[ComponentId, ComponentId]]] = {
        b.id: [] for b in net.buses
    }
    for ln in net.lines:
        adj[ln.from_bus].append((ln.to_bus, ln.id))
        adj[ln.to_bus].append((ln.from_bus, ln.id))

    disc: dict[ComponentId, int] = {}
    low: dict[ComponentId, int] = {}
    bridges: set[ComponentId] = set()
    timer = 0
    for root in adj:
        if root in disc:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, None, iter(adj[root]))]
        while stack:
            v, in_edge, it = stack[-1]
            descended = False
            for w, eid in it:
                if eid == in_edge:
                    continue
                if w not in disc:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, eid, iter(adj[w])))
                    descended = True
                    break
                low[v] = min(low[v], disc[w])
            if not descended:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[v])
                    if low[v] > disc[parent]:
                        bridges.add(in_edge)
    return bridges


def block_decomposition(net: Network) -> BlockDecomposition:
    """Partition buses into 2-edge-connected blocks; r = largest block.

    The trivial choice r = |buses| is always valid, but computing the
    bridges exactly gives the strongest usable bound.
    """
    _require_connected(net)
    bridges = find_bridges(net)
    adj: dict[ComponentId, list[ComponentId]] = {b.id: [] for b in net.buses}
    for ln in net.lines:
        if ln.id in bridges:
            continue
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    unseen = {b.id for b in net.buses}
    blocks: list[frozenset[ComponentId]] = []
    while unseen:
        root = next(iter(unseen))
        unseen.discard(root)
        stack, comp = [root], {root}
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w in unseen:
                    unseen.discard(w)
                    comp.add(w)
                    stack.append(w)
        blocks.append(frozenset(comp))
    blocks.sort(key=lambda c: (-len(c), str(sorted(map(str, c))[0])))
    non_tree = tuple(ln.id for ln in net.lines if ln.id not in bridges)
    return BlockDecomposition(
        blocks=tuple(blocks),
        bridges=tuple(ln.id for ln in net.lines if ln.id in bridges),
        non_tree_edges=non_tree,
        r=max(len(c) for c in blocks),
    )


# ---------------------------------------------------------------------------
# ISF flows and injection feasibility
# ---------------------------------------------------------------------------


def isf_flow(net: Network, d: np.ndarray, ref_bus: ComponentId | None = None) -> np.ndarray:
    """The unique flow satisfying nodal balance and Ohm's law.

    f = B N0' (N0 B N0')^-1 d0, where N0 and d0 drop the reference-bus
    row. The result is independent of the reference-bus choice.
    """
    _require_connected(net)
    d = np.asarray(d, dtype=float)
    if d.shape != (len(net.buses),):
        raise ValueError(f"injection vector has shape {d.shape}, want ({len(net.buses)},)")
    check_balanced(d)
    if ref_bus is None:
        ref = 0
    else:
        ref = net.bus_index[ref_bus]
    n_b = len(net.buses)
    if len(net.lines) == 0:
        return np.zeros(0)
    b_diag = np.array([ln.susceptance for ln in net.lines])
    keep = [i for i in range(n_b) if i != ref]
    if n_b <= DENSE_SOLVE_MAX_BUSES:
        n_mat = incidence_matrix(net)
        n0 = n_mat[keep, :]
        lap = (n0 * b_diag) @ n0.T
        theta0 = np.linalg.solve(lap, d[keep])
        theta = np.zeros(n_b)
        theta[keep] = theta0
        f = b_diag * (n_mat.T @ theta)
    else:
        n_mat = incidence_matrix(net, sparse=True).tocsc()
        n0 = n_mat[keep, :]
        lap = (n0.multiply(b_diag)) @ n0.T
        theta0 = spla.splu(lap.tocsc()).solve(d[keep])
        theta = np.zeros(n_b)
        theta[keep] = theta0
        f = b_diag * np.asarray(n_mat.T @ theta).ravel()
    f.flags.writeable = False
    return f


def dcopf_feasible(
    net: Network, d: np.ndarray, tol: float = 1e-6
) -> tuple[bool, np.ndarray]:
    """Whether injections d admit a flow obeying both limits and Ohm's law.

    Because the Ohm-consistent flow is unique on a connected graph, this
    reduces to checking the ISF flow against the thermal limits. Phase
    angle box bounds are deliberately not part of this notion.
    """
    f = isf_flow(net, d)
    limits = np.array([ln.limit for ln in net.lines])
    ok = bool(np.all(np.abs(f) <= limits + tol))
    return ok, f


def flow_polytope_feasible(net: Network, d: np.ndarray) -> tuple[bool, np.ndarray | None]:
    """LP feasibility of {N f = d, |f_k| <= limit_k}; witness on success."""
    from relayshed.formulations import AlgebraicModel
    from relayshed.solvers import SolveOptions, get_backend

    d = np.asarray(d, dtype=float)
    check_balanced(d)
    model = AlgebraicModel(sense="min")
    for ln in net.lines:
        model.add_variable(("f", ln.id), lb=-ln.limit, ub=ln.limit)
    for b in net.buses:
        coeffs = {}
        for ln in net.lines_in[b.id]:
            coeffs[("f", ln.id)] = coeffs.get(("f", ln.id), 0.0) + 1.0
        for ln in net.lines_out[b.id]:
            coeffs[("f", ln.id)] = coeffs.get(("f", ln.id), 0.0) - 1.0
        model.add_constraint(("balance", b.id), coeffs, "==", -float(d[net.bus_index[b.id]]))
    # Balance above reads inflow - outflow = -d, i.e. outflow - inflow = d.
    result = get_backend().solve(model, SolveOptions(time_limit_s=60.0))
    if result.status == "infeasible":
        return False, None
    if result.status not in ("optimal", "feasible_time_limit"):
        raise RuntimeError(f"flow polytope feasibility solve failed: {result.status}")
    f = np.array([result.values[("f", ln.id)] for ln in net.lines])
    return True, f


def spanning_tree_flows(net: Network, d: np.ndarray) -> np.ndarray:
    """Route balanced injections d on a BFS spanning tree.

    Non-tree lines carry zero. Each tree line carries the injection sum
    of the subtree behind it, which is at most half the l1 norm of d.
    """
    _require_connected(net)
    d = np.asarray(d, dtype=float)
    check_balanced(d)
    adj: dict[ComponentId, list[tuple[ComponentId, int]]] = {b.id: [] for b in net.buses}
    for j, ln in enumerate(net.lines):
        adj[ln.from_bus].append((ln.to_bus, j))
        adj[ln.to_bus].append((ln.from_bus, j))
    root = net.buses[0].id
    order = [root]
    parent_edge: dict[ComponentId, int] = {}
    seen = {root}
    head = 0
    while head < len(order):
        v = order[head]
        head += 1
        for w, j in adj[v]:
            if w not in seen:
                seen.add(w)
                parent_edge[w] = j
                order.append(w)
    f = np.zeros(len(net.lines))
    subtree = {b.id: float(d[net.bus_index[b.id]]) for b in net.buses}
    for v in reversed(order[1:]):
        j = parent_edge[v]
        ln = net.lines[j]
        # N f = d makes injections the net outflow, so the subtree surplus
        # leaves along the cut edge's orientation when it starts at v.
        f[j] += subtree[v] if ln.from_bus == v else -subtree[v]
        parent = ln.to_bus if ln.from_bus == v else ln.from_bus
        subtree[parent] += subtree[v]
    return f


# ---------------------------------------------------------------------------
# Sufficiency thresholds for network flow == DCOPF in injection space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdReport:
    """Uncongested-network sufficiency thresholds.

    If injections d are flow-polytope feasible and every non-tree edge
    has limit >= `threshold`, then d is DCOPF feasible. If every line
    limit is >= `corollary_threshold` (demand-based, attack independent),
    the load-shed LP optima with and without Ohm's law coincide.
    """

    threshold: float
    corollary_threshold: float
    non_tree_edges: tuple[ComponentId, ...]
    r: int
    b_ratio: float  # B_max / B_min


def theorem2_threshold(net: Network, l1_of_d: float) -> ThresholdReport:
    dec = block_decomposition(net)
    if net.lines:
        sus = [ln.susceptance for ln in net.lines]
        ratio = max(sus) / min(sus)
    else:
        ratio = 1.0
    scale = math.sqrt(ratio) * math.sqrt(max(0, dec.r - 1))
    demand_l1 = float(sum(abs(b.demand) for b in net.buses))
    return ThresholdReport(
        threshold=scale / 2.0 * float(l1_of_d),
        corollary_threshold=scale * demand_l1,
        non_tree_edges=dec.non_tree_edges,
        r=dec.r,
        b_ratio=ratio,
    )


def angle_bound_limit_replacement(net: Network) -> Network:
    """Fold a phase-angle-difference bound into the thermal limits.

    For any line where 2 * B_k * theta_bound < limit_k, the angle bound
    is the tighter restriction, so the limit is replaced by 2 * B_k *
    theta_bound and angle bounds can be dropped.
    """
    if net.theta_bound is None:
        raise ValueError("network has no phase-angle-difference bound")
    new_lines = []
    for ln in net.lines:
        cap = 2.0 * ln.susceptance * net.theta_bound
        if cap < ln.limit:
            ln = Line(id=ln.id, from_bus=ln.from_bus, to_bus=ln.to_bus,
                      susceptance=ln.susceptance, limit=cap)
        new_lines.append(ln)
    return Network(
        base_mva=net.base_mva,
        buses=net.buses,
        lines=tuple(new_lines),
        generators=net.generators,
        theta_bound=net.theta_bound,
    )


# ---------------------------------------------------------------------------
# Chained-triangle family: flow-polytope feasible but not DCOPF feasible
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TriangleChainInstance:
    """Instance of the chained-triangle family with its canonical data.

    3n buses form n unit-susceptance triangles linked by bridges; one
    unit is injected at each bus = 1 mod 3 and n units withdrawn at bus
    3n. Triangle edges have limit n/2 and bridges have limit n. The
    carried witness flow is flow-polytope feasible, yet no Ohm-consistent
    flow exists inside the limits.
    """

    n: int
    net: Network
    injections: np.ndarray  # aligned with net.buses
    witness: np.ndarray  # flow-polytope feasible flows, aligned with net.lines

    @cached_property
    def direct_edge_id(self) -> ComponentId:
        """The chord (3n-2, 3n) of the last triangle."""
        return f"t{self.n - 1}c"

    def saturation_certificate(self) -> tuple[float, float]:
        """Ohm-implied chord flow when the two-edge path runs at capacity.

        Routing the full n units into the last triangle requires both
        the chord and the two-edge path at capacity n/2; the angle drop
        across the saturated two-edge path forces a chord flow of
        B * (n/2 + n/2) = n, twice the chord's limit. Returns that flow
        and the chord limit.
        """
        chord = self.net.lines[self.net.line_index[self.direct_edge_id]]
        a_edge = self.net.lines[self.net.line_index[f"t{self.n - 1}a"]]
        b_edge = self.net.lines[self.net.line_index[f"t{self.n - 1}b"]]
        angle_drop = a_edge.limit / a_edge.susceptance + b_edge.limit / b_edge.susceptance
        return chord.susceptance * angle_drop, chord.limit


def gen_proposition4(n: int) -> TriangleChainInstance:
    """Build the n-triangle chain with its injections and witness flows.

    The network encodes the injections as unit-capacity generators at
    the buses = 1 mod 3 and a demand of n at bus 3n, so serving all load
    forces exactly the canonical injection vector.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    buses = [Bus(id=i, demand=(float(n) if i == 3 * n else 0.0)) for i in range(1, 3 * n + 1)]
    lines: list[Line] = []
    for i in range(n):
        a, b, c = 3 * i + 1, 3 * i + 2, 3 * i + 3
        lines.append(Line(id=f"t{i}a", from_bus=a, to_bus=b, susceptance=1.0, limit=n / 2.0))
        lines.append(Line(id=f"t{i}b", from_bus=b, to_bus=c, susceptance=1.0, limit=n / 2.0))
        lines.append(Line(id=f"t{i}c", from_bus=a, to_bus=c, susceptance=1.0, limit=n / 2.0))
    for i in range(n - 1):
        lines.append(Line(id=f"br{i}", from_bus=3 * i + 3, to_bus=3 * i + 4,
                          susceptance=1.0, limit=float(n)))
    gens = tuple(
        Generator(id=f"g{i}", bus=3 * i + 1, pmax=1.0) for i in range(n)
    )
    net = Network(base_mva=100.0, buses=tuple(buses), lines=tuple(lines), generators=gens)

    d = np.zeros(3 * n)
    for i in range(n):
        d[net.bus_index[3 * i + 1]] = 1.0
    d[net.bus_index[3 * n]] -= float(n)
    d.flags.writeable = False

    witness = np.zeros(len(lines))
    for i in range(n):
        witness[net.line_index[f"t{i}a"]] = (i + 1) / 2.0
        witness[net.line_index[f"t{i}b"]] = (i + 1) / 2.0
        witness[net.line_index[f"t{i}c"]] = (i + 1) / 2.0
    for i in range(n - 1):
        witness[net.line_index[f"br{i}"]] = float(i + 1)
    witness.flags.writeable = False
    return TriangleChainInstance(n=n, net=net, injections=d, witness=witness)
