"""Minimum-cost flow on dense graphs with real-valued supplies and capacities.

Solver: successive shortest augmenting paths with node potentials.  Arc
costs must be nonnegative, so every augmenting path search is a Dijkstra
run over reduced costs; potentials keep reduced costs nonnegative as
flow accumulates.  Tightly capacitated problems need one search per
saturating augmentation (thousands on the dense station graphs this
package builds), so the search itself is delegated to
``scipy.sparse.csgraph.dijkstra``: each iteration rebuilds only the CSR
data vector of reduced costs, with unusable residual arcs masked to inf
and parallel residual arcs between the same node pair collapsed to
their cheapest usable member.

Supplies and capacities are reals, not integers.  Augmentation stops
when undelivered supply drops below ``SUPPLY_TOL``; residual capacities
below ``RESIDUAL_TOL`` are treated as saturated, and flows are snapped
onto a bound whenever they land within ``RESIDUAL_TOL`` of it so that
float drift cannot manufacture usable capacity.

Unbounded capacity is written as ``INFINITE_CAPACITY`` (IEEE inf): it
survives ``capacity - flow`` and ``min`` unharmed because flows stay
finite, so no arithmetic ever mixes two infinities.

Feasibility of a problem is decided separately by a plain max-flow
(breadth-first augmenting paths from a super-source to a super-sink,
ignoring costs): the problem is feasible iff the max flow delivers the
whole supply.  ``brute_force_mcf`` is an independent oracle for tests:
it enumerates every vertex of the flow polytope (free arcs forming a
forest, every other arc pinned at 0 or at its capacity) and takes the
cheapest feasible one.  Exponential; refuses more than 6 nodes or 12
arcs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import SizeLimitError, ValidationError

INFINITE_CAPACITY = math.inf
SUPPLY_TOL = 1e-9
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    cost: float
    capacity: float


@dataclass(frozen=True, eq=False)
class FlowProblem:
    """A node set with real supplies and directed capacitated arcs.

    ``supply[i] > 0`` means node ``i`` must ship that much net flow out;
    negative entries are demands.  Supplies must balance to zero (an
    unbalanced problem is invalid input, which is different from a
    balanced problem that is infeasible for lack of capacity).
    """

    node_count: int
    supply: np.ndarray
    arcs: tuple[Arc, ...]

    def __post_init__(self):
        if not isinstance(self.node_count, (int, np.integer)) or self.node_count < 1:
            raise ValidationError(f"node_count must be a positive integer, got {self.node_count!r}")
        n = int(self.node_count)
        object.__setattr__(self, "node_count", n)
        sup = np.array(self.supply, dtype=float, copy=True)
        if sup.shape != (n,):
            raise ValidationError(f"supply must have length {n}, got shape {sup.shape}")
        if not np.all(np.isfinite(sup)):
            raise ValidationError("supply contains non-finite entries")
        if abs(float(sup.sum())) > SUPPLY_TOL:
            raise ValidationError(f"supplies must sum to zero, got {float(sup.sum()):.3g}")
        sup.setflags(write=False)
        object.__setattr__(self, "supply", sup)

        arcs = []
        for k, arc in enumerate(self.arcs):
            if not isinstance(arc, Arc):
                arc = Arc(*arc)
            if not (0 <= arc.tail < n and 0 <= arc.head < n):
                raise ValidationError(f"arc {k} endpoints ({arc.tail},{arc.head}) out of range")
            if arc.tail == arc.head:
                raise ValidationError(f"arc {k} is a self-loop at node {arc.tail}")
            if not (np.isfinite(arc.cost) and arc.cost >= 0):
                raise ValidationError(f"arc {k} cost {arc.cost!r} must be finite and >= 0")
            if math.isnan(arc.capacity) or arc.capacity < 0:
                raise ValidationError(f"arc {k} capacity {arc.capacity!r} must be >= 0")
            arcs.append(Arc(int(arc.tail), int(arc.head), float(arc.cost), float(arc.capacity)))
        object.__setattr__(self, "arcs", tuple(arcs))


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Per-arc flows, total cost, and a status flag.

    ``flow`` and ``objective`` are meaningful only when status is
    ``"optimal"``; an infeasible problem reports zero flow.
    """

    flow: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible"


class _ResidualGraph:
    """Static view of a residual graph: 2 entries per arc (forward, backward).

    Entries are lexsorted by (tail, head), so parallel residual arcs
    between the same node pair sit in one contiguous group.  The group
    structure doubles as a CSR template: Dijkstra sees one edge per
    group (its cheapest usable member), and a predecessor hop maps back
    to a group by binary search on ``pair_key``.
    """

    def __init__(self, node_count: int, tails: np.ndarray, heads: np.ndarray, costs: np.ndarray, caps: np.ndarray):
        m = tails.shape[0]
        r_tail = np.concatenate([tails, heads])
        r_head = np.concatenate([heads, tails])
        order = np.lexsort((r_head, r_tail))
        self.node_count = node_count
        self.tail = r_tail[order]
        self.head = r_head[order]
        self.cost = np.concatenate([costs, -costs])[order]
        self.arc = np.concatenate([np.arange(m), np.arange(m)])[order]
        self.forward = (np.concatenate([np.ones(m, bool), np.zeros(m, bool)]))[order]
        self.offsets = np.searchsorted(self.tail, np.arange(node_count + 1))

        key = self.tail * np.int64(node_count) + self.head
        first = np.ones(key.shape[0], dtype=bool)
        first[1:] = key[1:] != key[:-1]
        self.group_start = np.flatnonzero(first)
        self.group_end = np.append(self.group_start[1:], key.shape[0])
        self.pair_key = key[self.group_start]
        # groups wider than two entries fall back to a rectangular gather;
        # the common case (one forward plus one backward entry) reduces to
        # an elementwise minimum of two index vectors
        width = int(np.max(self.group_end - self.group_start))
        if width <= 2:
            self.group_gather = None
            self.group_a = self.group_start
            self.group_b = self.group_end - 1
        else:
            self.group_gather = np.minimum(
                self.group_start[:, None] + np.arange(width)[None, :],
                (self.group_end - 1)[:, None],
            )
        pair = np.argsort(self.arc, kind="stable").reshape(m, 2)
        first_is_fwd = self.forward[pair[:, 0]]
        self.fwd_entry = np.where(first_is_fwd, pair[:, 0], pair[:, 1])
        self.bwd_entry = np.where(first_is_fwd, pair[:, 1], pair[:, 0])

        self.entry_cap = caps[self.arc]
        # residual capacity per entry, kept current by _augment
        self.residual = np.where(self.forward, self.entry_cap, 0.0)
        self.unusable = ~(self.residual > RESIDUAL_TOL)
        self._rc = np.empty(2 * m)
        self._heads_pot = np.empty(2 * m)

        self.graph = csr_matrix(
            (
                np.zeros(self.group_start.shape[0]),
                self.head[self.group_start].astype(np.int32),
                np.searchsorted(self.tail[self.group_start], np.arange(node_count + 1)).astype(np.int32),
            ),
            shape=(node_count, node_count),
        )

    def refresh_entries(self, flows, arc_indices):
        """Recompute the residual capacities of both entries of each given arc."""
        for a in arc_indices:
            fwd, bwd = self.fwd_entry[a], self.bwd_entry[a]
            self.residual[fwd] = self.entry_cap[fwd] - flows[a]
            self.residual[bwd] = flows[a]
            self.unusable[fwd] = not self.residual[fwd] > RESIDUAL_TOL
            self.unusable[bwd] = not self.residual[bwd] > RESIDUAL_TOL

    def entry_weights(self, pot):
        """Reduced cost per residual entry, inf where no usable capacity remains.

        Reduced costs are clipped at zero so float dust cannot violate
        Dijkstra's nonnegativity requirement.  The returned array is a
        reused buffer, valid until the next call.
        """
        rc = self._rc
        np.take(pot, self.tail, out=rc)
        np.take(pot, self.head, out=self._heads_pot)
        np.subtract(rc, self._heads_pot, out=rc)
        np.add(rc, self.cost, out=rc)
        np.maximum(rc, 0.0, out=rc)
        rc[self.unusable] = np.inf
        return rc


def _shortest_paths(res: _ResidualGraph, weights, source):
    """Dijkstra distances and predecessors from source over usable entries.

    Parallel entries collapse to their group minimum; scipy treats the
    explicit inf data of unusable groups as absent edges.
    """
    if res.group_gather is None:
        np.minimum(weights[res.group_a], weights[res.group_b], out=res.graph.data)
    else:
        res.graph.data[:] = np.min(weights[res.group_gather], axis=1)
    return _csgraph_dijkstra(res.graph, directed=True, indices=source, return_predecessors=True)


def _path_entries(res: _ResidualGraph, weights, pred, source, target):
    """Residual entry indices along the predecessor path, cheapest per hop."""
    nodes = [target]
    v = target
    while v != source:
        v = int(pred[v])
        nodes.append(v)
    nodes.reverse()
    keys = np.int64(res.node_count) * np.asarray(nodes[:-1]) + np.asarray(nodes[1:])
    groups = np.searchsorted(res.pair_key, keys)
    entries = []
    for g in groups:
        lo, hi = res.group_start[g], res.group_end[g]
        entries.append(int(lo + np.argmin(weights[lo:hi])))
    return entries


def _with_super_nodes(problem: FlowProblem):
    """Arc arrays for the problem plus super-source/super-sink supply arcs."""
    n = problem.node_count
    m = len(problem.arcs)
    tails = [a.tail for a in problem.arcs]
    heads = [a.head for a in problem.arcs]
    costs = [a.cost for a in problem.arcs]
    caps = [a.capacity for a in problem.arcs]
    s, t = n, n + 1
    for i, b in enumerate(problem.supply):
        if b > 0:
            tails.append(s)
            heads.append(i)
            costs.append(0.0)
            caps.append(float(b))
        elif b < 0:
            tails.append(i)
            heads.append(t)
            costs.append(0.0)
            caps.append(float(-b))
    return (
        np.asarray(tails, dtype=np.int64),
        np.asarray(heads, dtype=np.int64),
        np.asarray(costs, dtype=float),
        np.asarray(caps, dtype=float),
        m,
        s,
        t,
    )


def _snap(flows, caps, arc):
    if flows[arc] < RESIDUAL_TOL:
        flows[arc] = 0.0
    elif np.isfinite(caps[arc]) and caps[arc] - flows[arc] < RESIDUAL_TOL:
        flows[arc] = caps[arc]


def _augment(res, caps, flows, entries):
    """Push the bottleneck along the residual entries into flows; return the amount."""
    delta = np.inf
    for k in entries:
        delta = min(delta, res.residual[k])
    arcs = []
    for k in entries:
        arc = res.arc[k]
        flows[arc] += delta if res.forward[k] else -delta
        _snap(flows, caps, arc)
        arcs.append(arc)
    res.refresh_entries(flows, arcs)
    return delta


def _parent_walk(res, parent, t):
    """Residual entry indices from a BFS parent array, sink back to source."""
    entries = []
    v = t
    while parent[v] >= 0:
        k = parent[v]
        entries.append(k)
        v = res.tail[k]
    return entries


def solve_mcf(problem: FlowProblem, max_iterations: Optional[int] = None) -> FlowSolution:
    """Minimum-cost flow via successive shortest paths with potentials."""
    tails, heads, costs, caps, m, s, t = _with_super_nodes(problem)
    node_count = problem.node_count + 2
    total = float(problem.supply[problem.supply > 0].sum())
    if total <= SUPPLY_TOL:
        return FlowSolution(flow=np.zeros(m), objective=0.0, status="optimal")

    res = _ResidualGraph(node_count, tails, heads, costs, caps)
    flows = np.zeros(tails.shape[0])
    pot = np.zeros(node_count)
    delivered = 0.0
    if max_iterations is None:
        max_iterations = 50 * (tails.shape[0] + node_count)

    for _ in range(max_iterations):
        if total - delivered <= SUPPLY_TOL:
            break
        weights = res.entry_weights(pot)
        dist, pred = _shortest_paths(res, weights, s)
        if not np.isfinite(dist[t]):
            return FlowSolution(flow=np.zeros(m), objective=0.0, status="infeasible")
        delivered += _augment(res, caps, flows, _path_entries(res, weights, pred, s, t))
        # min maps unreachable (inf) distances onto dist[t], keeping every
        # residual arc's reduced cost nonnegative
        pot += np.minimum(dist, dist[t])
    else:
        raise RuntimeError("min-cost flow did not converge within the iteration guard")

    flow = flows[:m].copy()
    objective = float(np.dot(costs[:m], flow))
    return FlowSolution(flow=flow, objective=objective, status="optimal")


def check_flow_feasibility(problem: FlowProblem) -> bool:
    """True iff some flow respects all capacities and meets all supplies.

    Runs a plain max-flow (breadth-first augmenting paths, costs ignored)
    from a super-source to a super-sink; feasible iff the whole supply is
    delivered within ``SUPPLY_TOL``.
    """
    tails, heads, _, caps, _, s, t = _with_super_nodes(problem)
    node_count = problem.node_count + 2
    total = float(problem.supply[problem.supply > 0].sum())
    if total <= SUPPLY_TOL:
        return True

    res = _ResidualGraph(node_count, tails, heads, np.zeros(tails.shape[0]), caps)
    flows = np.zeros(tails.shape[0])
    delivered = 0.0
    while total - delivered > SUPPLY_TOL:
        # BFS over usable residual arcs
        parent = np.full(node_count, -1, dtype=np.int64)
        seen = np.zeros(node_count, dtype=bool)
        seen[s] = True
        frontier = [s]
        while frontier and not seen[t]:
            nxt = []
            for u in frontier:
                lo, hi = res.offsets[u], res.offsets[u + 1]
                heads_u = res.head[lo:hi]
                usable = (res.residual[lo:hi] > RESIDUAL_TOL) & ~seen[heads_u]
                for k in np.flatnonzero(usable):
                    v = int(heads_u[k])
                    if seen[v]:
                        continue
                    seen[v] = True
                    parent[v] = lo + k
                    nxt.append(v)
            frontier = nxt
        if not seen[t]:
            return False
        delivered += _augment(res, caps, flows, _parent_walk(res, parent, t))
    return True


def residual_negative_cycle(problem: FlowProblem, solution: FlowSolution, tol: float = 1e-9) -> bool:
    """True if the residual graph of ``solution`` contains a negative-cost cycle.

    An optimal flow has none; this is the optimality certificate used by
    the tests (Bellman-Ford from an all-zero potential).
    """
    n = problem.node_count
    entries = []  # (tail, head, cost)
    for k, arc in enumerate(problem.arcs):
        flow = float(solution.flow[k])
        if arc.capacity - flow > RESIDUAL_TOL:
            entries.append((arc.tail, arc.head, arc.cost))
        if flow > RESIDUAL_TOL:
            entries.append((arc.head, arc.tail, -arc.cost))
    dist = np.zeros(n)
    for _ in range(n + 1):
        changed = False
        for tail, head, cost in entries:
            if dist[tail] + cost < dist[head] - tol:
                dist[head] = dist[tail] + cost
                changed = True
        if not changed:
            return False
    # still relaxing after n+1 full passes: some cycle keeps improving
    return True


def _forest_subsets(pairs: list[tuple[int, int]], node_count: int) -> Iterable[tuple[int, ...]]:
    """All arc-index subsets whose undirected support is acyclic.

    Parallel and antiparallel arcs between the same node pair count as a
    cycle (their incidence columns are linearly dependent).
    """
    m = len(pairs)
    max_size = min(m, node_count - 1)
    for size in range(max_size + 1):
        for subset in itertools.combinations(range(m), size):
            root = list(range(node_count))

            def find(x):
                while root[x] != x:
                    root[x] = root[root[x]]
                    x = root[x]
                return x

            ok = True
            for k in subset:
                a, b = (find(pairs[k][0]), find(pairs[k][1]))
                if a == b:
                    ok = False
                    break
                root[a] = b
            if ok:
                yield subset


def brute_force_mcf(problem: FlowProblem) -> FlowSolution:
    """Exhaustive oracle: cheapest vertex of the flow polytope.

    Every vertex has its free arcs forming a forest and every other arc
    pinned at 0 or at a finite capacity, so enumerating (forest, pinned
    bounds) pairs covers all vertices.  With nonnegative costs the
    optimum (when feasible) is attained at a vertex.  Independent of
    :func:`solve_mcf`.
    """
    n = problem.node_count
    m = len(problem.arcs)
    if n > 6:
        raise SizeLimitError(f"brute force limited to 6 nodes, got {n}")
    if m > 12:
        raise SizeLimitError(f"brute force limited to 12 arcs, got {m}")

    supply = problem.supply
    caps = np.array([a.capacity for a in problem.arcs])
    costs = np.array([a.cost for a in problem.arcs])
    incidence = np.zeros((n, m))
    for k, arc in enumerate(problem.arcs):
        incidence[arc.tail, k] += 1.0
        incidence[arc.head, k] -= 1.0
    pairs = [(a.tail, a.head) for a in problem.arcs]

    best_obj = np.inf
    best_flow = None
    consistency_tol = 1e-6
    bound_tol = 1e-9

    for forest in _forest_subsets(pairs, n):
        free = np.array(forest, dtype=int)
        pinned = np.setdiff1d(np.arange(m), free)
        finite = pinned[np.isfinite(caps[pinned]) & (caps[pinned] > bound_tol)]
        # arcs pinned at an infinite or zero capacity can only sit at 0
        k_fin = finite.shape[0]
        combos = (np.arange(1 << k_fin)[:, None] >> np.arange(k_fin)) & 1
        pinned_flow = combos * caps[finite]  # (2**k, k_fin)
        adjusted = supply[None, :] - pinned_flow @ incidence[:, finite].T

        if free.size:
            basis = incidence[:, free]
            free_flow = adjusted @ np.linalg.pinv(basis).T
            resid = adjusted - free_flow @ basis.T
            in_bounds = np.all(free_flow >= -bound_tol, axis=1) & np.all(
                free_flow <= caps[free] + bound_tol, axis=1
            )
        else:
            free_flow = np.zeros((adjusted.shape[0], 0))
            resid = adjusted
            in_bounds = np.ones(adjusted.shape[0], dtype=bool)
        feasible = in_bounds & (np.max(np.abs(resid), axis=1) <= consistency_tol)
        if not np.any(feasible):
            continue
        obj = free_flow @ costs[free] + pinned_flow @ costs[finite]
        obj = np.where(feasible, obj, np.inf)
        k = int(np.argmin(obj))
        if obj[k] < best_obj:
            best_obj = float(obj[k])
            flow = np.zeros(m)
            flow[finite] = pinned_flow[k]
            flow[free] = np.clip(free_flow[k], 0.0, caps[free])
            best_flow = flow

    if best_flow is None:
        return FlowSolution(flow=np.zeros(m), objective=0.0, status="infeasible")
    return FlowSolution(flow=best_flow, objective=best_obj, status="optimal")


def flow_debug_dict(problem: FlowProblem, solution: Optional[FlowSolution] = None) -> dict:
    """JSON-ready dump of a problem (and optionally its solution) for debugging.

    Unbounded capacities serialize as ``None``.
    """
    arcs = []
    for k, arc in enumerate(problem.arcs):
        entry = {
            "from": arc.tail,
            "to": arc.head,
            "cost": arc.cost,
            "capacity": None if math.isinf(arc.capacity) else arc.capacity,
        }
        if solution is not None:
            entry["flow"] = float(solution.flow[k])
        arcs.append(entry)
    out = {"node_count": problem.node_count, "supply": problem.supply.tolist(), "arcs": arcs}
    if solution is not None:
        out["objective"] = solution.objective
        out["status"] = solution.status
    return out
