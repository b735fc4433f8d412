"""Instance generators: hand fixtures, seeded random grids, case text.

The synthetic MATPOWER-format cases reproduce the published bus / line /
generator dimensions of the study's test systems so the parser and the
budget arithmetic can be exercised end to end when the original datasets
are not distributable. They are placeholders for, not copies of, those
cases.
"""

from __future__ import annotations

import numpy as np

from relayshed.flows import theorem2_threshold
from relayshed.netmodel import (
    Bus,
    Generator,
    Line,
    Network,
    RelayMap,
    generate_relay_map,
    total_demand,
)


def triad() -> tuple[Network, RelayMap]:
    """Three buses on a cycle, one generator, slack everywhere.

    Demands (0, 1, 1) pu against 2.5 pu of generation at bus 1 with
    limits 1.5 pu; the unattacked defender serves all load.
    """
    net = Network(
        base_mva=100.0,
        buses=(Bus(1, 0.0), Bus(2, 1.0), Bus(3, 1.0)),
        lines=(
            Line("l12", 1, 2, susceptance=1.0, limit=1.5),
            Line("l23", 2, 3, susceptance=1.0, limit=1.5),
            Line("l13", 1, 3, susceptance=1.0, limit=1.5),
        ),
        generators=(Generator("g1", 1, pmax=2.5),),
    )
    return net, generate_relay_map(net)


def random_network(n_buses: int, seed: int, *, demand_prob: float = 0.7,
                   extra_edge_ratio: float = 0.5, gen_ratio: float = 0.4,
                   capacity_factor: tuple[float, float] = (0.9, 1.4),
                   limit_factor: tuple[float, float] = (0.25, 1.0),
                   susceptance_range: tuple[float, float] = (0.5, 5.0)) -> Network:
    """Connected random grid: spanning tree plus chords, seeded."""
    if n_buses < 1:
        raise ValueError("need at least one bus")
    rng = np.random.default_rng(seed)
    buses = []
    for i in range(1, n_buses + 1):
        demand = float(rng.uniform(0.1, 1.0)) if rng.random() < demand_prob else 0.0
        buses.append(Bus(id=i, demand=demand))
    if all(b.demand == 0.0 for b in buses):
        buses[-1] = Bus(id=buses[-1].id, demand=float(rng.uniform(0.5, 1.0)))
    demand_total = sum(b.demand for b in buses)

    edges: list[tuple[int, int]] = []
    for i in range(2, n_buses + 1):
        parent = int(rng.integers(1, i))
        edges.append((parent, i) if rng.random() < 0.5 else (i, parent))
    n_extra = int(round(extra_edge_ratio * n_buses)) if n_buses > 2 else 0
    for _ in range(n_extra):
        u = int(rng.integers(1, n_buses + 1))
        v = int(rng.integers(1, n_buses + 1))
        if u != v:
            edges.append((u, v))
    lines = tuple(
        Line(id=f"k{j}", from_bus=u, to_bus=v,
             susceptance=float(rng.uniform(*susceptance_range)),
             limit=float(rng.uniform(*limit_factor)) * max(demand_total, 1e-6))
        for j, (u, v) in enumerate(edges, start=1)
    )

    n_gens = max(1, int(round(gen_ratio * n_buses)))
    gen_buses = rng.choice(np.arange(1, n_buses + 1), size=n_gens, replace=False)
    shares = rng.dirichlet(np.ones(n_gens))
    cap_total = demand_total * float(rng.uniform(*capacity_factor))
    gens = tuple(
        Generator(id=f"g{j}", bus=int(b), pmax=float(s * cap_total))
        for j, (b, s) in enumerate(zip(gen_buses, shares), start=1)
    )
    return Network(base_mva=100.0, buses=tuple(buses), lines=lines, generators=gens)


def random_interdiction_fixture(seed: int, n_buses: int | None = None
                                ) -> tuple[Network, RelayMap]:
    """Small fixture (4-8 buses) for enumeration-scale interdiction tests."""
    rng = np.random.default_rng(seed)
    n = n_buses or int(rng.integers(4, 9))
    net = random_network(n, seed=seed + 1)
    return net, generate_relay_map(net)


def uncongested_network(seed: int, n_buses: int) -> Network:
    """Random grid whose limits all clear the demand-based threshold.

    In this regime the load-shed optimum is the same with or without
    Ohm's law, for every attack.
    """
    base = random_network(n_buses, seed=seed)
    report = theorem2_threshold(base, l1_of_d=0.0)
    floor = max(report.corollary_threshold, total_demand(base)) * 1.01 + 1e-6
    lines = tuple(
        Line(id=ln.id, from_bus=ln.from_bus, to_bus=ln.to_bus,
             susceptance=ln.susceptance, limit=floor)
        for ln in base.lines
    )
    return Network(base_mva=base.base_mva, buses=base.buses, lines=lines,
                   generators=base.generators)


# ---------------------------------------------------------------------------
# Synthetic MATPOWER-format cases with the published dimensions
# ---------------------------------------------------------------------------

# instance name -> (buses, lines, generators), as published for the ten
# test systems of the computational study.
PUBLISHED_CASE_DIMENSIONS: dict[str, tuple[int, int, int]] = {
    "118blumsack": (118, 186, 19),
    "300kocuk": (300, 411, 61),
    "500tamu": (500, 597, 90),
    "1354pegase": (1354, 1991, 260),
    "1888rte": (1888, 2531, 297),
    "1951rte": (1951, 2596, 391),
    "2848rte": (2848, 3776, 547),
    "3012wp": (3012, 3572, 502),
    "3375wp": (3374, 4161, 596),
    "6468rte": (6468, 9000, 1295),
}

_CASE_SEEDS = {name: 1000 + i for i, name in enumerate(PUBLISHED_CASE_DIMENSIONS)}


def synthetic_case_text(name: str) -> str:
    """MATPOWER case text with the named instance's exact dimensions.

    Includes out-of-service branch and generator rows and a few rateA = 0
    branches so ingestion filtering and the unlimited-limit substitution
    are exercised. Deterministic per name.
    """
    try:
        n_buses, n_lines, n_gens = PUBLISHED_CASE_DIMENSIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown case {name!r}; known: {', '.join(PUBLISHED_CASE_DIMENSIONS)}") from None
    rng = np.random.default_rng(_CASE_SEEDS[name])
    out = [
        f"function mpc = case{name}_equiv",
        "% Synthetic stand-in matching the published instance dimensions.",
        "mpc.version = '2';",
        "mpc.baseMVA = 100;",
        "",
        "%% bus data",
        "mpc.bus = [",
    ]
    for i in range(1, n_buses + 1):
        pd = round(float(rng.uniform(5.0, 120.0)), 2) if rng.random() < 0.6 else 0.0
        out.append(f"\t{i}\t1\t{pd}\t0\t0\t0\t1\t1.0\t0\t138\t1\t1.06\t0.94;")
    out.append("];")
    out.append("")
    out.append("%% generator data")
    out.append("mpc.gen = [")
    gen_buses = rng.choice(np.arange(1, n_buses + 1), size=n_gens, replace=False)
    for b in gen_buses:
        pmax = round(float(rng.uniform(50.0, 600.0)), 1)
        out.append(f"\t{int(b)}\t0\t0\t300\t-300\t1.0\t100\t1\t{pmax}\t0;")
    for _ in range(2):  # retired units, dropped at ingestion
        b = int(rng.integers(1, n_buses + 1))
        out.append(f"\t{b}\t0\t0\t300\t-300\t1.0\t100\t0\t400\t0;")
    out.append("];")
    out.append("")
    out.append("%% branch data")
    out.append("mpc.branch = [")
    edges: list[tuple[int, int]] = []
    for i in range(2, n_buses + 1):
        edges.append((int(rng.integers(1, i)), i))
    for _ in range(n_lines - (n_buses - 1)):
        u = int(rng.integers(1, n_buses + 1))
        v = int(rng.integers(1, n_buses + 1))
        while v == u:
            v = int(rng.integers(1, n_buses + 1))
        edges.append((u, v))
    for u, v in edges:
        x = round(float(rng.uniform(0.01, 0.3)), 4)
        rate = 0 if rng.random() < 0.1 else round(float(rng.uniform(80.0, 500.0)), 1)
        out.append(f"\t{u}\t{v}\t0.01\t{x}\t0\t{rate}\t{rate}\t{rate}\t0\t0\t1\t-360\t360;")
    for _ in range(3):  # out-of-service circuits, dropped at ingestion
        u = int(rng.integers(1, n_buses + 1))
        v = 1 + (u % n_buses)
        out.append(f"\t{u}\t{v}\t0.01\t0.1\t0\t100\t100\t100\t0\t0\t0\t-360\t360;")
    out.append("];")
    out.append("")
    return "\n".join(out)
