"""Independent ground-truth machinery for the interdiction formulations.

Brute-force attack enumeration gives exact bilevel optima on small
instances; the assembled dual constraint matrix is checked for total
unimodularity (minor enumeration or the Ghouila-Houri column signing
certificate); and vertex solutions of the dual LP are audited for the
predicted unit bound across every enumerable attack.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from relayshed.formulations import (
    AttackVector,
    build_defender_dcopf,
    build_defender_netflow,
    build_nf_dual_lp,
)
from relayshed.netmodel import Network, RelayMap, aggregate_generators
from relayshed.solvers import CAP_BASIC, BackendCapabilityError, SolveOptions, get_backend


class CapExceededError(RuntimeError):
    """Enumeration would exceed the configured cap."""


DEFAULT_ENUM_CAP = 20_000


# ---------------------------------------------------------------------------
# Exhaustive interdiction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnumerationResult:
    value: float
    argmax: tuple[frozenset, ...]
    n_evaluated: int
    table: dict[frozenset, float]

    def dump_table(self, path) -> None:
        """Per-attack value table as CSV, for debugging."""
        import csv
        from pathlib import Path

        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["attacked_relays", "load_shed_pu"])
            for attack in sorted(self.table, key=lambda s: (len(s), sorted(map(str, s)))):
                writer.writerow([" ".join(sorted(map(str, attack))), repr(self.table[attack])])


def _attack_subsets(relays: RelayMap, budget: int):
    """Size-U subsets plus the empty attack.

    Attacking more relays never helps the defender, so the maximum over
    subsets of size at most U is attained at size exactly U; the empty
    attack covers U = 0 and anchors the table.
    """
    ids = sorted((r.id for r in relays.relays), key=str)
    yield frozenset()
    if budget > 0:
        for combo in itertools.combinations(ids, budget):
            yield frozenset(combo)


def count_attacks(n_relays: int, budget: int) -> int:
    return 1 + (math.comb(n_relays, budget) if budget > 0 else 0)


def brute_force_interdiction(net: Network, relays: RelayMap, budget: int,
                             physics: str = "dcopf", cap: int = DEFAULT_ENUM_CAP,
                             backend=None) -> EnumerationResult:
    """Exact worst-case load shed by enumerating relay subsets."""
    if physics not in ("dcopf", "netflow"):
        raise ValueError(f"unknown physics {physics!r}")
    total = count_attacks(len(relays.relays), budget)
    if total > cap:
        raise CapExceededError(
            f"enumeration needs {total} defender solves, cap is {cap}; "
            "lower the budget or raise the cap")
    backend = backend or get_backend()
    build = build_defender_dcopf if physics == "dcopf" else build_defender_netflow
    opts = SolveOptions(time_limit_s=120.0)
    table: dict[frozenset, float] = {}
    for subset in _attack_subsets(relays, budget):
        attack = AttackVector.from_relays(relays, subset)
        result = backend.solve(build(net, attack), opts)
        if result.status != "optimal":
            raise RuntimeError(
                f"defender LP not solved to optimality for attack {sorted(map(str, subset))}: "
                f"{result.status}")
        table[subset] = result.objective
    best = max(table.values())
    argmax = tuple(sorted((a for a, v in table.items() if v >= best - 1e-9),
                          key=lambda s: sorted(map(str, s))))
    return EnumerationResult(value=best, argmax=argmax, n_evaluated=len(table), table=table)


# ---------------------------------------------------------------------------
# Total unimodularity of the dual constraint system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TUMatrix:
    """Dual constraint system [G h] with labeled rows and columns."""

    matrix: np.ndarray  # integer entries
    row_labels: tuple
    col_labels: tuple


def assemble_Gh(net: Network) -> TUMatrix:
    """Assemble the block matrix [G h] of the dual system as printed.

    Requires at most one generator per bus (aggregate first). Column
    blocks: lambda+, lambda-, mu, gamma, alpha, beta, and the rhs column;
    row blocks: the two signed copies of the flow-dual equality, the
    dispatch and shed dual rows, then the sign constraints.
    """
    for b in net.buses:
        if len(net.gens_at_bus[b.id]) > 1:
            raise ValueError(
                f"bus {b.id!r} has {len(net.gens_at_bus[b.id])} generators; "
                "apply aggregate_generators first")
    nk, nb, ng = len(net.lines), len(net.buses), len(net.generators)
    col_labels = (
        [("lam_p", ln.id) for ln in net.lines]
        + [("lam_m", ln.id) for ln in net.lines]
        + [("mu", b.id) for b in net.buses]
        + [("gamma", g.id) for g in net.generators]
        + [("alpha", b.id) for b in net.buses]
        + [("beta", b.id) for b in net.buses]
        + [("rhs",)]
    )
    col = {lab: j for j, lab in enumerate(col_labels)}
    rows: list[np.ndarray] = []
    row_labels: list = []

    def new_row(label):
        r = np.zeros(len(col_labels), dtype=np.int64)
        rows.append(r)
        row_labels.append(label)
        return r

    for sign, tag in ((1, "dual_flow_ub"), (-1, "dual_flow_lb")):
        for ln in net.lines:
            r = new_row((tag, ln.id))
            r[col[("lam_p", ln.id)]] = sign
            r[col[("lam_m", ln.id)]] = -sign
            r[col[("mu", ln.from_bus)]] = sign  # N^T row: +1 at origin, -1 at destination
            r[col[("mu", ln.to_bus)]] = -sign
    for g in net.generators:
        r = new_row(("dual_dispatch", g.id))
        r[col[("mu", g.bus)]] = 1
        r[col[("gamma", g.id)]] = -1
    for b in net.buses:
        r = new_row(("dual_shed", b.id))
        r[col[("mu", b.id)]] = 1
        r[col[("alpha", b.id)]] = 1
        r[col[("beta", b.id)]] = -1
        r[col[("rhs",)]] = 1
    for b in net.buses:
        new_row(("alpha_nonneg", b.id))[col[("alpha", b.id)]] = -1
    for b in net.buses:
        new_row(("beta_nonneg", b.id))[col[("beta", b.id)]] = -1
    for ln in net.lines:
        new_row(("lam_p_nonneg", ln.id))[col[("lam_p", ln.id)]] = -1
    for ln in net.lines:
        new_row(("lam_m_nonneg", ln.id))[col[("lam_m", ln.id)]] = -1
    for g in net.generators:
        new_row(("gamma_nonneg", g.id))[col[("gamma", g.id)]] = -1

    matrix = np.vstack(rows)
    assert matrix.shape == (4 * nk + 2 * ng + 3 * nb, 2 * nk + 3 * nb + ng + 1)
    return TUMatrix(matrix=matrix, row_labels=tuple(row_labels), col_labels=tuple(col_labels))


@dataclass(frozen=True)
class TUReport:
    ok: bool
    method: str
    exhaustive: bool
    checked: int
    counterexample: tuple | None = None  # (row indices, col indices) or (col indices,)


def _signing_exists(sub: np.ndarray, node_cap: int = 200_000) -> bool:
    """Backtracking search for signs e in {-1,+1} with |sub @ e| <= 1 rowwise.

    A subset of columns satisfies the Ghouila-Houri condition exactly
    when such a signing exists. Partial sums are pruned against the
    remaining per-row support.
    """
    n_rows, n_cols = sub.shape
    if n_cols == 0:
        return True
    remaining = np.abs(sub)[:, ::-1].cumsum(axis=1)[:, ::-1]
    zeros = np.zeros(n_rows)
    nodes = 0

    def descend(j: int, partial: np.ndarray) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > node_cap:
            raise CapExceededError("Ghouila-Houri signing search exceeded its node cap")
        if j == n_cols:
            return True
        rem = remaining[:, j + 1] if j + 1 < n_cols else zeros
        for sign in (1.0, -1.0):
            cand = partial + sign * sub[:, j]
            if np.all(np.abs(cand) <= 1 + rem):
                if descend(j + 1, cand):
                    return True
        return False

    return descend(0, zeros)


def verify_total_unimodularity(m: TUMatrix | np.ndarray, max_order: int | None = None,
                               budget: int = 300_000, method: str = "auto",
                               seed: int = 0) -> TUReport:
    """Check every square minor has determinant in {-1, 0, 1}.

    Small matrices are certified exhaustively through the Ghouila-Houri
    column-signing condition (equivalent to total unimodularity); when
    the column count makes that infeasible, subsets are enumerated up to
    the budget and the report is marked non-exhaustive. The "minors"
    method enumerates determinants directly up to `max_order`, sampling
    once the budget is hit.
    """
    a = m.matrix if isinstance(m, TUMatrix) else np.asarray(m)
    if a.size and not np.all(np.isin(a, (-1, 0, 1))):
        bad = np.argwhere(~np.isin(a, (-1, 0, 1)))[0]
        return TUReport(ok=False, method="entries", exhaustive=True, checked=1,
                        counterexample=((int(bad[0]),), (int(bad[1]),)))
    n_rows, n_cols = a.shape
    if method == "auto":
        method = "ghouila_houri" if 2 ** n_cols <= budget else "minors"

    if method == "ghouila_houri":
        checked = 0
        exhaustive = 2 ** n_cols <= budget
        if exhaustive:
            for size in range(2, n_cols + 1):
                for cols in itertools.combinations(range(n_cols), size):
                    checked += 1
                    if not _signing_exists(a[:, cols]):
                        return TUReport(ok=False, method=method, exhaustive=True,
                                        checked=checked, counterexample=(cols,))
        else:
            rng = np.random.default_rng(seed)
            while checked < budget:
                size = int(rng.integers(2, n_cols + 1))
                cols = tuple(sorted(rng.choice(n_cols, size=size, replace=False).tolist()))
                checked += 1
                if not _signing_exists(a[:, cols]):
                    return TUReport(ok=False, method=method, exhaustive=False,
                                    checked=checked, counterexample=(cols,))
        return TUReport(ok=True, method=method, exhaustive=exhaustive, checked=checked)

    if method == "minors":
        rng = np.random.default_rng(seed)
        top = max_order or min(n_rows, n_cols)
        checked = 0
        exhaustive = True
        for k in range(2, top + 1):
            count = math.comb(n_rows, k) * math.comb(n_cols, k)
            if checked + count <= budget:
                row_iter = itertools.combinations(range(n_rows), k)
                for rsel in row_iter:
                    sub_rows = a[list(rsel)]
                    for csel in itertools.combinations(range(n_cols), k):
                        checked += 1
                        det = round(float(np.linalg.det(sub_rows[:, csel])))
                        if det not in (-1, 0, 1):
                            return TUReport(ok=False, method=method, exhaustive=False,
                                            checked=checked,
                                            counterexample=(rsel, csel))
            else:
                exhaustive = False
                while checked < budget:
                    rsel = tuple(sorted(rng.choice(n_rows, size=k, replace=False).tolist()))
                    csel = tuple(sorted(rng.choice(n_cols, size=k, replace=False).tolist()))
                    checked += 1
                    det = round(float(np.linalg.det(a[list(rsel)][:, csel])))
                    if det not in (-1, 0, 1):
                        return TUReport(ok=False, method=method, exhaustive=False,
                                        checked=checked, counterexample=(rsel, csel))
                break
        return TUReport(ok=True, method=method, exhaustive=exhaustive, checked=checked)

    raise ValueError(f"unknown TU verification method {method!r}")


# ---------------------------------------------------------------------------
# Vertex dual audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualAuditReport:
    max_abs_dual: float
    n_attacks: int
    worst_attack: frozenset
    worst_variable: tuple


def audit_vertex_duals(net: Network, relays: RelayMap, budget: int,
                       cap: int = DEFAULT_ENUM_CAP, backend=None) -> DualAuditReport:
    """Max |dual| over vertex optima of the dual LP across all attacks.

    The dual system's total unimodularity predicts the result never
    exceeds 1; requires a backend returning basic (vertex) solutions.
    """
    backend = backend or get_backend()
    if CAP_BASIC not in backend.capabilities():
        raise BackendCapabilityError(
            f"backend '{backend.name}' does not guarantee basic solutions; "
            "the vertex dual audit is only meaningful at vertices")
    total = count_attacks(len(relays.relays), budget)
    if total > cap:
        raise CapExceededError(f"audit needs {total} LP solves, cap is {cap}")
    opts = SolveOptions(time_limit_s=120.0, require_basic_solution=True)
    worst = 0.0
    worst_attack: frozenset = frozenset()
    worst_var: tuple = ()
    n = 0
    for subset in _attack_subsets(relays, budget):
        attack = AttackVector.from_relays(relays, subset)
        result = backend.solve(build_nf_dual_lp(net, attack), opts)
        if result.status != "optimal":
            raise RuntimeError(f"dual LP not optimal for attack {sorted(map(str, subset))}")
        n += 1
        for key, val in result.values.items():
            if abs(val) > worst:
                worst = abs(val)
                worst_attack = subset
                worst_var = key
    return DualAuditReport(max_abs_dual=worst, n_attacks=n,
                           worst_attack=worst_attack, worst_variable=worst_var)
