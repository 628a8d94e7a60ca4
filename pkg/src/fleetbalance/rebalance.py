"""The two flow programs that keep a station network balanced.

Customer trips alone give each station a net vehicle flux (the
imbalance).  Two coupled assignments cancel it:

* empty-vehicle rebalancing trips, rate matrix ``alpha``: employed
  drivers take surplus vehicles to deficit stations.  Per-station net
  outflow must equal the surplus.  Uncapacitated.
* driver-return rides, rate matrix ``beta``: the drivers stranded by
  those trips ride back on customer trips.  Per-station net outflow
  must equal the negated surplus, and each leg is capped by
  ``taxi_fraction * lambda * dest_prob`` (drivers can only ride along
  on trips customers actually make).

Both programs minimize the in-transit mass they pin down, i.e. total
rate weighted by travel time.  They share no variables, so they are
solved as two independent minimum-cost flow problems; minimizing the
driver total (rebalancing trips plus return rides) and minimizing the
rebalancing-vehicle total pull in the same direction.

Solutions are post-processed by canceling opposing two-cycles
(``min(x[i,j], x[j,i])`` subtracted from both directions), which never
raises cost and makes at most one direction of each pair carry flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import RebalanceInfeasibleError
from .mincostflow import (
    INFINITE_CAPACITY,
    Arc,
    FlowProblem,
    FlowSolution,
    solve_mcf,
)
from .network import (
    CutCheck,
    ImbalanceVector,
    RebalanceAssignment,
    StationNetwork,
    check_feasibility_bruteforce,
    compute_imbalance,
    fleet_sizes,
)


def _offdiag_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def _matrix_from_flows(n: int, flows: np.ndarray) -> np.ndarray:
    out = np.zeros((n, n))
    for k, (i, j) in enumerate(_offdiag_pairs(n)):
        out[i, j] = flows[k]
    return out


def cancel_two_cycles(rates: np.ndarray) -> np.ndarray:
    """Remove opposing flow on every station pair (cost never increases)."""
    overlap = np.minimum(rates, rates.T)
    return rates - overlap


def vehicle_flow_problem(net: StationNetwork, imbalance: ImbalanceVector) -> FlowProblem:
    """Uncapacitated program moving surplus vehicles to deficit stations."""
    arcs = [
        Arc(i, j, float(net.travel_time[i, j]), INFINITE_CAPACITY)
        for i, j in _offdiag_pairs(net.n)
    ]
    return FlowProblem(node_count=net.n, supply=imbalance.surplus, arcs=tuple(arcs))


def driver_flow_problem(net: StationNetwork, imbalance: ImbalanceVector) -> FlowProblem:
    """Capacitated program riding stranded drivers back on customer trips."""
    cap = net.taxi_capacity()
    arcs = [
        Arc(i, j, float(net.travel_time[i, j]), float(cap[i, j]))
        for i, j in _offdiag_pairs(net.n)
    ]
    return FlowProblem(node_count=net.n, supply=-imbalance.surplus, arcs=tuple(arcs))


def _solved_matrix(net: StationNetwork, solution: FlowSolution) -> tuple[np.ndarray, float]:
    rates = cancel_two_cycles(_matrix_from_flows(net.n, solution.flow))
    objective = float(np.sum(net.travel_time * rates))
    return rates, objective


def solve_vehicle_rebalancing(
    net: StationNetwork, imbalance: Optional[ImbalanceVector] = None
) -> tuple[np.ndarray, float]:
    """Cheapest empty-vehicle rebalancing rates; always feasible."""
    d = imbalance or compute_imbalance(net)
    solution = solve_mcf(vehicle_flow_problem(net, d))
    if solution.status != "optimal":  # uncapacitated and balanced: cannot happen
        raise RuntimeError("uncapacitated rebalancing program reported infeasible")
    return _solved_matrix(net, solution)


def solve_driver_rebalancing(
    net: StationNetwork, imbalance: Optional[ImbalanceVector] = None
) -> tuple[np.ndarray, float]:
    """Cheapest driver-return rates within taxi capacity.

    Raises :class:`RebalanceInfeasibleError` when capacities cannot carry
    the required driver flow; for n <= 20 the error carries a witness
    station subset whose outgoing capacity is provably short.
    """
    d = imbalance or compute_imbalance(net)
    solution = solve_mcf(driver_flow_problem(net, d))
    if solution.status != "optimal":
        witness: Optional[CutCheck] = None
        if net.n <= 20:
            witness = check_feasibility_bruteforce(net, d)
        if witness is not None and not witness.feasible:
            raise RebalanceInfeasibleError(
                "driver-return program infeasible: stations "
                f"{set(witness.witness)} must emit {witness.demand:.6g} drivers "
                f"but only {witness.capacity:.6g} taxi capacity leaves them",
                witness=witness.witness,
                demand=witness.demand,
                capacity=witness.capacity,
            )
        raise RebalanceInfeasibleError(
            "driver-return program infeasible: taxi capacity cannot carry the required driver flow"
        )
    return _solved_matrix(net, solution)


@dataclass(frozen=True, eq=False)
class RebalanceSolution:
    """Joint result of the two programs.

    ``assignment`` and the objectives are populated only when ``status``
    is ``"optimal"``.  ``vehicle_objective`` is the in-transit mass of
    rebalancing vehicles (time-weighted alpha); ``driver_objective`` is
    the time-weighted beta mass; their sum equals
    ``assignment.min_drivers``.  When the driver program has no feasible
    point, ``status`` is ``"beta_infeasible"`` and ``infeasibility``
    carries the diagnosis.
    """

    status: str  # "optimal" | "beta_infeasible"
    assignment: Optional[RebalanceAssignment]
    vehicle_objective: Optional[float]
    driver_objective: Optional[float]
    infeasibility: Optional[RebalanceInfeasibleError] = None


def solve_rebalancing(net: StationNetwork) -> RebalanceSolution:
    """Solve both programs and size the minimum fleet they pin in transit."""
    d = compute_imbalance(net)
    alpha, alpha_obj = solve_vehicle_rebalancing(net, d)
    try:
        beta, beta_obj = solve_driver_rebalancing(net, d)
    except RebalanceInfeasibleError as err:
        return RebalanceSolution(
            status="beta_infeasible",
            assignment=None,
            vehicle_objective=alpha_obj,
            driver_objective=None,
            infeasibility=err,
        )
    min_vehicles, min_drivers = fleet_sizes(net, alpha, beta)
    assignment = RebalanceAssignment(
        vehicle_rates=alpha,
        driver_rates=beta,
        min_vehicles=min_vehicles,
        min_drivers=min_drivers,
    )
    return RebalanceSolution(
        status="optimal",
        assignment=assignment,
        vehicle_objective=alpha_obj,
        driver_objective=beta_obj,
    )
