"""Problem data for station-based vehicle and driver rebalancing.

A :class:`StationNetwork` describes one instance of the fleet-management
problem.  Stations are indexed ``0..n-1``.  All quantities are fluid
rates (nonnegative reals, not integer counts):

* customers arrive at station ``i`` at rate ``arrival_rate[i]``, each
  takes a vehicle and drives to station ``j`` with probability
  ``dest_prob[i, j]``, taking ``travel_time[i, j]`` time units;
* when customers are queued, they depart at rate ``service_rate[i]``
  (which must exceed the arrival rate, or queues never drain);
* ``taxi_fraction[i, j]`` caps the rate of employed drivers who can ride
  back on customer trips from ``i`` to ``j``, expressed as a multiple of
  the customer trip rate on that leg (values above 1 mean a single
  customer vehicle may carry several returning drivers).

Customer trips alone leave each station with a net vehicle flux: the
imbalance.  Stations with positive imbalance accumulate vehicles,
stations with negative imbalance run dry.  Two flow assignments cancel
it: empty-vehicle rebalancing trips (driven by employed drivers) and
driver-return rides on customer trips.  This module computes the
imbalance, the fleet sizes a given assignment pins in transit, and an
exhaustive feasibility check for the driver-return program.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SizeLimitError, ValidationError

# Tolerances used across the package.
PROB_TOL = 1e-9      # probability row sums
BALANCE_TOL = 1e-7   # flow-balance residuals on assignments
CAP_TOL = 1e-9       # allowed slack above driver-trip capacities


def _as_vector(name: str, value, n: int) -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    if arr.shape != (n,):
        raise ValidationError(f"{name} must be a length-{n} vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValidationError(f"{name}[{bad}] is not finite")
    arr.setflags(write=False)
    return arr


def _as_matrix(name: str, value, n: int) -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    if arr.shape != (n, n):
        raise ValidationError(f"{name} must be an {n}x{n} matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        i, j = (int(k[0]) for k in np.nonzero(~np.isfinite(arr)))
        raise ValidationError(f"{name}[{i},{j}] is not finite")
    arr.setflags(write=False)
    return arr


def _first_negative(name: str, arr: np.ndarray) -> None:
    if np.any(arr < 0):
        idx = np.argwhere(arr < 0)[0]
        pos = ",".join(str(int(k)) for k in idx)
        raise ValidationError(f"{name}[{pos}] is negative")


@dataclass(frozen=True, eq=False)
class StationNetwork:
    """Immutable description of one rebalancing problem instance.

    Error messages refer to fields by their file-schema names:
    ``lambda`` (arrival_rate), ``mu`` (service_rate), ``p`` (dest_prob),
    ``T`` (travel_time), ``f`` (taxi_fraction).
    """

    n: int
    arrival_rate: np.ndarray
    service_rate: np.ndarray
    dest_prob: np.ndarray
    travel_time: np.ndarray
    taxi_fraction: np.ndarray
    meta: Optional[dict] = None

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n!r}")
        n = int(self.n)
        object.__setattr__(self, "n", n)
        lam = _as_vector("lambda", self.arrival_rate, n)
        mu = _as_vector("mu", self.service_rate, n)
        p = _as_matrix("p", self.dest_prob, n)
        tt = _as_matrix("T", self.travel_time, n)
        f = _as_matrix("f", self.taxi_fraction, n)

        _first_negative("lambda", lam)
        if np.any(mu <= lam):
            i = int(np.flatnonzero(mu <= lam)[0])
            raise ValidationError(
                f"mu[{i}]={mu[i]:.6g} must exceed lambda[{i}]={lam[i]:.6g}"
            )
        _first_negative("p", p)
        if np.any(p > 1 + PROB_TOL):
            i, j = np.argwhere(p > 1 + PROB_TOL)[0]
            raise ValidationError(f"p[{i},{j}]={p[i, j]:.6g} exceeds 1")
        diag = np.abs(np.diagonal(p))
        if np.any(diag > PROB_TOL):
            i = int(np.flatnonzero(diag > PROB_TOL)[0])
            raise ValidationError(f"p[{i},{i}] must be 0 (no self-loop trips)")
        sums = p.sum(axis=1)
        for i in range(n):
            if lam[i] > 0 and abs(sums[i] - 1.0) > PROB_TOL:
                raise ValidationError(
                    f"p row {i} sums to {sums[i]:.6g}, expected 1 within {PROB_TOL:g}"
                )
        _first_negative("T", tt)
        tdiag = np.abs(np.diagonal(tt))
        if np.any(tdiag > 1e-12):
            i = int(np.flatnonzero(tdiag > 1e-12)[0])
            raise ValidationError(f"T[{i},{i}] must be 0")
        _first_negative("f", f)

        object.__setattr__(self, "arrival_rate", lam)
        object.__setattr__(self, "service_rate", mu)
        object.__setattr__(self, "dest_prob", p)
        object.__setattr__(self, "travel_time", tt)
        object.__setattr__(self, "taxi_fraction", f)

    def min_offdiag_travel_time(self) -> float:
        """Smallest strictly positive travel time between distinct stations."""
        if self.n < 2:
            return 0.0
        off = self.travel_time[~np.eye(self.n, dtype=bool)]
        pos = off[off > 0]
        return float(pos.min()) if pos.size else 0.0

    def max_travel_time(self) -> float:
        return float(self.travel_time.max()) if self.n else 0.0

    def taxi_capacity(self) -> np.ndarray:
        """Per-leg cap on driver-return rates: ``f[i,j] * lambda[i] * p[i,j]``."""
        return self.taxi_fraction * (self.arrival_rate[:, None] * self.dest_prob)


@dataclass(frozen=True, eq=False)
class ImbalanceVector:
    """Net customer-trip vehicle flux per station.

    ``surplus[i]`` is the rate at which customer trips deposit vehicles at
    station ``i`` minus the rate at which they remove them.  Positive
    entries accumulate vehicles, negative entries drain them.  The entries
    always sum to zero: every vehicle a customer removes somewhere shows
    up somewhere else.
    """

    surplus: np.ndarray

    def __post_init__(self):
        arr = np.array(self.surplus, dtype=float, copy=True)
        if arr.ndim != 1:
            raise ValidationError(f"surplus must be a vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("surplus contains non-finite entries")
        total = float(arr.sum())
        if abs(total) > 1e-9:
            raise ValidationError(f"surplus must sum to 0, got {total:.3g}")
        arr.setflags(write=False)
        object.__setattr__(self, "surplus", arr)

    @property
    def n(self) -> int:
        return self.surplus.shape[0]


def compute_imbalance(net: StationNetwork) -> ImbalanceVector:
    """Net vehicle flux from customer trips alone.

    Station ``i`` receives vehicles at rate ``sum_j lambda[j] * p[j, i]``
    and loses them at rate ``lambda[i]``.
    """
    inflow = net.dest_prob.T @ net.arrival_rate
    return ImbalanceVector(surplus=inflow - net.arrival_rate)


@dataclass(frozen=True, eq=False)
class RebalanceAssignment:
    """A pair of station-to-station rate matrices plus the fleet they pin in transit.

    ``vehicle_rates[i, j]`` is the rate of empty-vehicle rebalancing trips
    from ``i`` to ``j`` (each carries one employed driver).
    ``driver_rates[i, j]`` is the rate of drivers riding back on customer
    trips from ``i`` to ``j``.  ``min_vehicles`` / ``min_drivers`` are the
    time-averaged in-transit masses these rates imply; any workable fleet
    must strictly exceed them.
    """

    vehicle_rates: np.ndarray
    driver_rates: np.ndarray
    min_vehicles: float
    min_drivers: float

    def __post_init__(self):
        a = np.array(self.vehicle_rates, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"vehicle_rates must be square, got shape {a.shape}")
        n = a.shape[0]
        b = _as_matrix("beta", self.driver_rates, n)
        a.setflags(write=False)
        if not np.all(np.isfinite(a)):
            raise ValidationError("alpha contains non-finite entries")
        _first_negative("alpha", a)
        _first_negative("beta", b)
        if np.any(np.abs(np.diagonal(a)) > 0) or np.any(np.abs(np.diagonal(b)) > 0):
            raise ValidationError("alpha and beta must have zero diagonals")
        for name, val in (("v_alpha", self.min_vehicles), ("r_alpha_beta", self.min_drivers)):
            if not np.isfinite(val) or val < 0:
                raise ValidationError(f"{name} must be a nonnegative real, got {val!r}")
        object.__setattr__(self, "vehicle_rates", a)
        object.__setattr__(self, "driver_rates", b)
        object.__setattr__(self, "min_vehicles", float(self.min_vehicles))
        object.__setattr__(self, "min_drivers", float(self.min_drivers))

    @property
    def n(self) -> int:
        return self.vehicle_rates.shape[0]


def fleet_sizes(net: StationNetwork, vehicle_rates, driver_rates) -> tuple[float, float]:
    """In-transit masses pinned by an assignment.

    Returns ``(min_vehicles, min_drivers)``: the time-averaged number of
    vehicles on the road (customer trips plus rebalancing trips) and of
    employed drivers on the road (rebalancing trips plus return rides).
    A fleet can hold every queue positive only if it strictly exceeds
    these numbers.
    """
    n = net.n
    alpha = _as_matrix("alpha", vehicle_rates, n)
    beta = _as_matrix("beta", driver_rates, n)
    _first_negative("alpha", alpha)
    _first_negative("beta", beta)
    trips = net.dest_prob * net.arrival_rate[:, None]
    min_vehicles = float(np.sum(net.travel_time * (trips + alpha)))
    min_drivers = float(np.sum(net.travel_time * (alpha + beta)))
    return min_vehicles, min_drivers


def validate_assignment(
    net: StationNetwork,
    assignment: RebalanceAssignment,
    imbalance: Optional[ImbalanceVector] = None,
    balance_tol: float = BALANCE_TOL,
    cap_tol: float = CAP_TOL,
) -> None:
    """Raise :class:`ValidationError` unless the assignment cancels the imbalance.

    Checks, per station, that vehicle_rates net outflow equals the surplus
    and driver_rates net outflow equals its negative (both within
    ``balance_tol``), and that driver rates respect the per-leg taxi
    capacity within ``cap_tol``.
    """
    if assignment.n != net.n:
        raise ValidationError(
            f"assignment is {assignment.n}x{assignment.n}, network has n={net.n}"
        )
    d = (imbalance or compute_imbalance(net)).surplus
    alpha, beta = assignment.vehicle_rates, assignment.driver_rates
    a_res = alpha.sum(axis=1) - alpha.sum(axis=0) - d
    if np.max(np.abs(a_res)) > balance_tol:
        i = int(np.argmax(np.abs(a_res)))
        raise ValidationError(
            f"alpha balance residual {a_res[i]:.3g} at station {i} exceeds {balance_tol:g}"
        )
    b_res = beta.sum(axis=1) - beta.sum(axis=0) + d
    if np.max(np.abs(b_res)) > balance_tol:
        i = int(np.argmax(np.abs(b_res)))
        raise ValidationError(
            f"beta balance residual {b_res[i]:.3g} at station {i} exceeds {balance_tol:g}"
        )
    excess = beta - net.taxi_capacity()
    if np.max(excess) > cap_tol:
        i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
        raise ValidationError(
            f"beta[{i},{j}] exceeds taxi capacity by {excess[i, j]:.3g} (> {cap_tol:g})"
        )


@dataclass(frozen=True)
class CutCheck:
    """Result of the exhaustive driver-return feasibility check.

    When infeasible, ``witness`` is the first station subset (by
    ascending bitmask, bit ``i`` = station ``i``) whose required driver
    outflow ``demand`` exceeds the taxi ``capacity`` leaving the subset.
    """

    feasible: bool
    witness: Optional[tuple[int, ...]]
    demand: float
    capacity: float


def check_feasibility_bruteforce(
    net: StationNetwork,
    imbalance: Optional[ImbalanceVector] = None,
    tol: float = CAP_TOL,
) -> CutCheck:
    """Enumerate every station subset to decide driver-return feasibility.

    A feasible driver-return assignment exists iff, for every subset S,
    the driver flow S must emit (the total vehicle deficit inside S) does
    not exceed the taxi capacity on legs leaving S.  Exponential in n;
    refuses n > 20.
    """
    n = net.n
    if n > 20:
        raise SizeLimitError(f"exhaustive subset check limited to n <= 20, got n={n}")
    d = (imbalance or compute_imbalance(net)).surplus
    cap = net.taxi_capacity()

    total = 1 << n
    chunk = 1 << 16
    bits = np.arange(n, dtype=np.int64)
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        member = ((masks[:, None] >> bits) & 1).astype(float)  # (chunk, n)
        demand = -(member @ d)
        # capacity leaving S: sum over i in S, j not in S
        outcap = ((member @ cap) * (1.0 - member)).sum(axis=1)
        viol = demand - outcap > tol
        if np.any(viol):
            k = int(np.flatnonzero(viol)[0])
            mask = int(masks[k])
            witness = tuple(i for i in range(n) if (mask >> i) & 1)
            return CutCheck(
                feasible=False,
                witness=witness,
                demand=float(demand[k]),
                capacity=float(outcap[k]),
            )
    return CutCheck(feasible=True, witness=None, demand=0.0, capacity=0.0)
