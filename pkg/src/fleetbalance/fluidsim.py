"""Fluid simulation of queue levels under a fixed rebalancing assignment.

State per station: waiting customers ``c``, idle vehicles ``v``, idle
employed drivers ``r``.  Everything in transit lives in per-leg delay
lines.  The dynamics are threshold-gated rate equations:

* customers depart station ``i`` at rate ``mu[i]`` while a queue is
  present and a vehicle is idle, at rate ``lambda[i]`` when vehicles are
  idle but no queue has formed, and not at all without vehicles;
* empty-vehicle rebalancing trips leave at rate ``alpha[i, j]`` while
  both an idle vehicle and an idle driver are present;
* driver-return rides leave at rate ``beta[i, j]`` under the same
  gating, additionally capped by ``taxi_fraction`` times the customer
  departure flow actually happening on that leg this step.

Gates read "present" as strictly positive: a level exactly 0 emits
nothing.

Integration: explicit Euler with a fixed step ``h``.  Each leg ``(i, j)``
owns a ring buffer of ``round(T[i, j] / h)`` slots holding departure
rates; what left ``i`` at step ``k`` arrives at ``j`` at step
``k + round(T/h)``.  Travel times are thereby rounded to the nearest
multiple of ``h``; the construction requires ``h <= min positive T / 4``
so every leg has at least a few slots.  Two buffers per leg: vehicles in
motion (customer trips plus rebalancing trips) and drivers in motion
(rebalancing trips plus return rides).

Clamping: when a step would drive a queue negative, all outbound flows
from that queue are scaled down so the queue lands at zero, and the
scaled rates (not the nominal ones) are written into the delay buffers.
A rebalancing trip draws on both the vehicle and the driver queue, so it
is scaled by the smaller of the two factors, which can leave a queue
slightly above zero but never below.  Because buffer writes always equal
queue withdrawals, total vehicle and driver mass is conserved to float
rounding; there is no scheme-level drift term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientFleetError, InvalidStateError, ValidationError
from .network import StationNetwork, compute_imbalance
from .rebalance import RebalanceSolution

ZERO_EVENT_CAP = 100_000


def _check_rates(name: str, value, n: int) -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    if arr.shape != (n, n):
        raise ValidationError(f"{name} must be an {n}x{n} matrix")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValidationError(f"{name} must be finite and nonnegative")
    if np.any(np.abs(np.diagonal(arr)) > 0):
        raise ValidationError(f"{name} must have a zero diagonal")
    return arr


@dataclass(frozen=True, eq=False)
class _Legs:
    """Delay-line geometry shared by all states of one run."""

    tail: np.ndarray    # leg tails, length n*(n-1)
    head: np.ndarray
    steps: np.ndarray   # slots per leg, >= 1
    offsets: np.ndarray  # start of each leg's slots in the flat buffers
    total_slots: int

    @staticmethod
    def build(net: StationNetwork, h: float) -> "_Legs":
        n = net.n
        tt = net.travel_time
        if n > 1:
            off = tt[~np.eye(n, dtype=bool)]
            if np.any(off <= 0):
                raise ValidationError(
                    "simulation requires positive travel times between distinct stations"
                )
            min_tt = float(off.min())
            if not (0 < h <= min_tt / 4):
                raise ValidationError(
                    f"step h={h:g} must satisfy 0 < h <= min travel time / 4 = {min_tt / 4:g}"
                )
        elif h <= 0:
            raise ValidationError(f"step h={h:g} must be positive")
        tails, heads = np.nonzero(~np.eye(n, dtype=bool))
        steps = np.rint(tt[tails, heads] / h).astype(np.int64)
        offsets = np.concatenate([[0], np.cumsum(steps)]).astype(np.int64)
        return _Legs(
            tail=tails.astype(np.int64),
            head=heads.astype(np.int64),
            steps=steps,
            offsets=offsets[:-1],
            total_slots=int(offsets[-1]),
        )


@dataclass(frozen=True, eq=False)
class FluidState:
    """One snapshot of a run: idle levels plus both delay lines.

    The buffer arrays hold departure rates, one slot per ``h`` of travel;
    the in-transit mass of a slot is ``h`` times its rate.
    """

    customers: np.ndarray
    vehicles: np.ndarray
    drivers: np.ndarray
    vehicle_buffer: np.ndarray
    driver_buffer: np.ndarray
    step_index: int
    h: float
    legs: _Legs

    @property
    def n(self) -> int:
        return self.customers.shape[0]

    @property
    def time(self) -> float:
        return self.step_index * self.h

    def in_transit_vehicles(self) -> float:
        return float(self.vehicle_buffer.sum()) * self.h

    def in_transit_drivers(self) -> float:
        return float(self.driver_buffer.sum()) * self.h

    def total_vehicles(self) -> float:
        return float(self.vehicles.sum()) + self.in_transit_vehicles()

    def total_drivers(self) -> float:
        return float(self.drivers.sum()) + self.in_transit_drivers()


def _state_vector(name: str, value, n: int) -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    if arr.shape != (n,):
        raise InvalidStateError(f"{name} must be a length-{n} vector")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidStateError(f"{name} must be finite and nonnegative")
    return arr


def initial_state(net: StationNetwork, customers, vehicles, drivers, h: float) -> FluidState:
    """State at time zero with empty roads (nothing was in transit before)."""
    legs = _Legs.build(net, float(h))
    n = net.n
    return FluidState(
        customers=_state_vector("customers", customers, n),
        vehicles=_state_vector("vehicles", vehicles, n),
        drivers=_state_vector("drivers", drivers, n),
        vehicle_buffer=np.zeros(legs.total_slots),
        driver_buffer=np.zeros(legs.total_slots),
        step_index=0,
        h=float(h),
        legs=legs,
    )


def equilibrium_state(
    net: StationNetwork,
    vehicle_rates,
    driver_rates,
    customers,
    vehicles,
    drivers,
    h: float,
) -> FluidState:
    """State whose delay lines carry the steady departure rates.

    Matches a history in which every leg has been running at its
    assignment rate (customer trips at ``lambda * p`` plus rebalancing at
    ``alpha``; drivers at ``alpha + beta``) for at least one full travel
    time.
    """
    n = net.n
    alpha = _check_rates("alpha", vehicle_rates, n)
    beta = _check_rates("beta", driver_rates, n)
    legs = _Legs.build(net, float(h))
    veh_rate = net.arrival_rate[legs.tail] * net.dest_prob[legs.tail, legs.head] + alpha[
        legs.tail, legs.head
    ]
    drv_rate = alpha[legs.tail, legs.head] + beta[legs.tail, legs.head]
    return FluidState(
        customers=_state_vector("customers", customers, n),
        vehicles=_state_vector("vehicles", vehicles, n),
        drivers=_state_vector("drivers", drivers, n),
        vehicle_buffer=np.repeat(veh_rate, legs.steps),
        driver_buffer=np.repeat(drv_rate, legs.steps),
        step_index=0,
        h=float(h),
        legs=legs,
    )


@dataclass
class SimTrace:
    """Sampled trajectory of a run plus zero-crossing events.

    ``events`` holds ``(time, quantity, station, direction)`` tuples
    where direction is "hit_zero" or "left_zero"; at most
    ``ZERO_EVENT_CAP`` are kept (``events_dropped`` counts the rest).
    """

    times: np.ndarray
    customers: np.ndarray
    vehicles: np.ndarray
    drivers: np.ndarray
    vehicles_total: np.ndarray
    drivers_total: np.ndarray
    h: float
    events: list = field(default_factory=list)
    events_dropped: int = 0

    @property
    def n(self) -> int:
        return self.customers.shape[1]


class _Engine:
    """Mutable working copy of a state; advances it step by step."""

    def __init__(self, net: StationNetwork, vehicle_rates, driver_rates, state: FluidState):
        n = net.n
        if state.n != n:
            raise InvalidStateError(f"state has {state.n} stations, network has {n}")
        alpha = _check_rates("alpha", vehicle_rates, n)
        beta = _check_rates("beta", driver_rates, n)
        legs = state.legs
        if state.vehicle_buffer.shape != (legs.total_slots,) or state.driver_buffer.shape != (
            legs.total_slots,
        ):
            raise InvalidStateError("state buffers do not match leg geometry")
        for name, arr in (
            ("customers", state.customers),
            ("vehicles", state.vehicles),
            ("drivers", state.drivers),
            ("vehicle_buffer", state.vehicle_buffer),
            ("driver_buffer", state.driver_buffer),
        ):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise InvalidStateError(f"state field {name} must be finite and nonnegative")
        # queued customers depart along dest_prob rows; an unnormalized row
        # would leak vehicle mass out of the conservation ledger
        queued = state.customers > 0
        if np.any(queued):
            sums = net.dest_prob[queued].sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-9):
                i = int(np.flatnonzero(queued)[np.argmax(np.abs(sums - 1.0))])
                raise InvalidStateError(
                    f"station {i} has queued customers but p row {i} does not sum to 1"
                )

        self.net = net
        self.n = n
        self.h = state.h
        self.legs = legs
        self.c = state.customers.copy()
        self.v = state.vehicles.copy()
        self.r = state.drivers.copy()
        self.veh_buf = state.vehicle_buffer.copy()
        self.drv_buf = state.driver_buffer.copy()
        self.step_index = state.step_index

        self.lam = net.arrival_rate
        self.mu = net.service_rate
        self.alpha_leg = alpha[legs.tail, legs.head]
        self.beta_leg = beta[legs.tail, legs.head]
        self.p_leg = net.dest_prob[legs.tail, legs.head]
        self.taxi_leg = net.taxi_fraction[legs.tail, legs.head]
        self.events: list = []
        self.events_dropped = 0

    def _log_events(self, before: dict, after: dict, time: float) -> None:
        for name in ("customers", "vehicles", "drivers"):
            was_zero = before[name]
            is_zero = after[name]
            for i in np.flatnonzero(was_zero != is_zero):
                if len(self.events) >= ZERO_EVENT_CAP:
                    self.events_dropped += 1
                    continue
                direction = "hit_zero" if is_zero[i] else "left_zero"
                self.events.append((time, name, int(i), direction))

    def advance(self) -> None:
        h, n, legs = self.h, self.n, self.legs
        c, v, r = self.c, self.v, self.r
        before = {"customers": c <= 0, "vehicles": v <= 0, "drivers": r <= 0}

        slots = legs.offsets + self.step_index % legs.steps
        arrive_v_leg = self.veh_buf[slots]
        arrive_r_leg = self.drv_buf[slots]
        arrive_v = np.bincount(legs.head, weights=arrive_v_leg, minlength=n)
        arrive_r = np.bincount(legs.head, weights=arrive_r_leg, minlength=n)

        vpos, rpos, cpos = v > 0, r > 0, c > 0
        # customer departures: mu while a queue drains (capped so c lands
        # exactly at 0), lambda when the queue is empty, 0 without vehicles
        cust_dep = np.where(
            vpos, np.where(cpos, np.minimum(self.mu, self.lam + c / h), self.lam), 0.0
        )
        gate = (vpos & rpos)[legs.tail]
        reb = np.where(gate, self.alpha_leg, 0.0)
        ret = np.where(gate, self.beta_leg, 0.0)

        out_v = cust_dep + np.bincount(legs.tail, weights=reb, minlength=n)
        out_r = np.bincount(legs.tail, weights=reb + ret, minlength=n)

        # pro-rata scale-down of queues that would go negative
        with np.errstate(divide="ignore", invalid="ignore"):
            sv = np.where(
                v + h * (arrive_v - out_v) < 0, (v / h + arrive_v) / out_v, 1.0
            )
            sr = np.where(
                r + h * (arrive_r - out_r) < 0, (r / h + arrive_r) / out_r, 1.0
            )
        sv = np.nan_to_num(sv, nan=1.0, posinf=1.0)
        sr = np.nan_to_num(sr, nan=1.0, posinf=1.0)

        cust_f = cust_dep * sv
        reb_f = reb * np.minimum(sv, sr)[legs.tail]
        # return rides can only use customer trips that actually depart
        ret_f = np.minimum(ret * sr[legs.tail], self.taxi_leg * (cust_f[legs.tail] * self.p_leg))

        self.c = np.maximum(c + h * (self.lam - cust_f), 0.0)
        out_v_f = cust_f + np.bincount(legs.tail, weights=reb_f, minlength=n)
        self.v = np.maximum(v + h * (arrive_v - out_v_f), 0.0)
        out_r_f = np.bincount(legs.tail, weights=reb_f + ret_f, minlength=n)
        self.r = np.maximum(r + h * (arrive_r - out_r_f), 0.0)

        self.veh_buf[slots] = cust_f[legs.tail] * self.p_leg + reb_f
        self.drv_buf[slots] = reb_f + ret_f
        self.step_index += 1

        after = {"customers": self.c <= 0, "vehicles": self.v <= 0, "drivers": self.r <= 0}
        self._log_events(before, after, self.step_index * h)

    def snapshot(self) -> FluidState:
        return FluidState(
            customers=self.c.copy(),
            vehicles=self.v.copy(),
            drivers=self.r.copy(),
            vehicle_buffer=self.veh_buf.copy(),
            driver_buffer=self.drv_buf.copy(),
            step_index=self.step_index,
            h=self.h,
            legs=self.legs,
        )

    def totals(self) -> tuple[float, float]:
        return (
            float(self.v.sum()) + float(self.veh_buf.sum()) * self.h,
            float(self.r.sum()) + float(self.drv_buf.sum()) * self.h,
        )


def step(state: FluidState, net: StationNetwork, vehicle_rates, driver_rates, h: float) -> FluidState:
    """Advance one Euler step; returns a new state, the input is untouched."""
    if abs(float(h) - state.h) > 0:
        raise InvalidStateError(f"step size {h!r} does not match the state's h={state.h!r}")
    engine = _Engine(net, vehicle_rates, driver_rates, state)
    engine.advance()
    return engine.snapshot()


def simulate(
    net: StationNetwork,
    vehicle_rates,
    driver_rates,
    init: FluidState,
    horizon: float,
    h: float,
    sample_every: int = 1,
) -> SimTrace:
    """Run until ``horizon`` (rounded to whole steps), sampling the trajectory."""
    if abs(float(h) - init.h) > 0:
        raise InvalidStateError(f"step size {h!r} does not match the state's h={init.h!r}")
    if horizon <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon!r}")
    if sample_every < 1:
        raise ValidationError("sample_every must be >= 1")
    engine = _Engine(net, vehicle_rates, driver_rates, init)
    steps = max(1, int(round(horizon / h)))

    sample_steps = list(range(0, steps + 1, sample_every))
    if sample_steps[-1] != steps:
        sample_steps.append(steps)
    times = np.empty(len(sample_steps))
    c_out = np.empty((len(sample_steps), net.n))
    v_out = np.empty_like(c_out)
    r_out = np.empty_like(c_out)
    v_tot = np.empty(len(sample_steps))
    r_tot = np.empty(len(sample_steps))

    cursor = 0
    for k in range(steps + 1):
        if k == sample_steps[cursor]:
            times[cursor] = init.time + k * h
            c_out[cursor] = engine.c
            v_out[cursor] = engine.v
            r_out[cursor] = engine.r
            v_tot[cursor], r_tot[cursor] = engine.totals()
            cursor += 1
        if k < steps:
            engine.advance()

    return SimTrace(
        times=times,
        customers=c_out,
        vehicles=v_out,
        drivers=r_out,
        vehicles_total=v_tot,
        drivers_total=r_tot,
        h=h,
        events=engine.events,
        events_dropped=engine.events_dropped,
    )


@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Outcome of a perturbed-equilibrium run.

    ``passed`` requires: customers cleared (every station at or below
    ``tol_customers`` from ``drain_time`` through the horizon), idle
    vehicles and idle drivers staying at or above ``tol_positive`` after
    the customer drain (driver levels at perfectly balanced stations only
    need to stay nonnegative), and both totals conserved within
    ``10 * h * total rate``.
    """

    passed: bool
    customers_cleared: bool
    vehicles_positive: bool
    drivers_positive: bool
    conserved: bool
    drain_time: Optional[float]
    drain_bound: float
    min_idle_vehicles: float
    min_idle_drivers: float
    vehicle_drift: float
    driver_drift: float
    vehicle_drift_bound: float
    driver_drift_bound: float
    total_vehicles: float
    total_drivers: float
    horizon: float
    h: float
    seed: int
    trace: SimTrace


def stability_probe(
    net: StationNetwork,
    solution: RebalanceSolution,
    slack_vehicles: float,
    slack_drivers: float,
    perturbation: float,
    h: float,
    seed: int = 0,
    horizon: Optional[float] = None,
    tol_customers: float = 1e-4,
    tol_positive: float = 1e-6,
) -> StabilityReport:
    """Perturb an equilibrium and check the run settles back onto it.

    Fleet totals are ``(1 + slack) * minimum``; the idle stock (the slack
    portion) is spread evenly over stations, then jittered station-wise
    by ``perturbation`` (relative, sum preserved).  Initial customer
    queues are ``perturbation`` times the idle vehicles.  Scenarios
    without strictly positive slack are rejected before any simulation
    work, since no equilibrium exists there.
    """
    if solution.status != "optimal" or solution.assignment is None:
        raise ValidationError("stability probe needs an optimal rebalancing solution")
    if slack_vehicles <= 0:
        raise InsufficientFleetError(
            f"vehicle fleet must exceed the in-transit minimum (slack {slack_vehicles:g} <= 0)"
        )
    if slack_drivers <= 0:
        raise InsufficientFleetError(
            f"driver pool must exceed the in-transit minimum (slack {slack_drivers:g} <= 0)"
        )
    if not (0 <= perturbation < 1):
        raise ValidationError(f"perturbation must be in [0, 1), got {perturbation!r}")

    assignment = solution.assignment
    n = net.n
    idle_v = slack_vehicles * assignment.min_vehicles
    idle_r = slack_drivers * assignment.min_drivers
    if idle_v <= 0 or idle_r <= 0:
        raise InsufficientFleetError("assignment pins no mass in transit; nothing to probe")

    rng = np.random.default_rng(int(seed) % 2**64)
    v0 = (idle_v / n) * (1.0 + perturbation * rng.uniform(-1.0, 1.0, size=n))
    v0 *= idle_v / v0.sum()
    r0 = (idle_r / n) * (1.0 + perturbation * rng.uniform(-1.0, 1.0, size=n))
    r0 *= idle_r / r0.sum()
    c0 = perturbation * v0

    drain_bound = float(np.max(c0 / (net.service_rate - net.arrival_rate))) if n else 0.0
    max_tt = net.max_travel_time()
    if horizon is None:
        horizon = drain_bound + 2.0 * max_tt + 10.0 * h

    init = equilibrium_state(
        net, assignment.vehicle_rates, assignment.driver_rates, c0, v0, r0, h
    )
    trace = simulate(
        net, assignment.vehicle_rates, assignment.driver_rates, init, horizon, h
    )

    below = np.max(trace.customers, axis=1) <= tol_customers
    drained = np.flatnonzero(below)
    if drained.size:
        k0 = int(drained[0])
        drain_time = float(trace.times[k0])
        customers_cleared = bool(np.all(below[k0:]))
    else:
        drain_time = None
        customers_cleared = False

    post = trace.times >= (drain_time if drain_time is not None else trace.times[-1])
    min_v = float(np.min(trace.vehicles[post])) if np.any(post) else float("nan")
    balanced = np.abs(compute_imbalance(net).surplus) <= 1e-12
    drivers_mat = trace.drivers[post]
    if np.any(balanced):
        need_pos = drivers_mat[:, ~balanced]
        min_r = float(np.min(need_pos)) if need_pos.size else float("inf")
        drivers_ok = min_r >= tol_positive and bool(np.all(drivers_mat[:, balanced] >= 0))
    else:
        min_r = float(np.min(drivers_mat)) if drivers_mat.size else float("nan")
        drivers_ok = min_r >= tol_positive

    total_v0 = float(trace.vehicles_total[0])
    total_r0 = float(trace.drivers_total[0])
    vehicle_drift = float(np.max(np.abs(trace.vehicles_total - total_v0)))
    driver_drift = float(np.max(np.abs(trace.drivers_total - total_r0)))
    v_bound = 10.0 * h * float(net.arrival_rate.sum())
    r_bound = 10.0 * h * float(assignment.vehicle_rates.sum() + assignment.driver_rates.sum())
    conserved = vehicle_drift <= v_bound and driver_drift <= r_bound

    vehicles_ok = min_v >= tol_positive if np.any(post) else False
    passed = customers_cleared and vehicles_ok and drivers_ok and conserved
    return StabilityReport(
        passed=passed,
        customers_cleared=customers_cleared,
        vehicles_positive=vehicles_ok,
        drivers_positive=drivers_ok,
        conserved=conserved,
        drain_time=drain_time,
        drain_bound=drain_bound,
        min_idle_vehicles=min_v,
        min_idle_drivers=min_r,
        vehicle_drift=vehicle_drift,
        driver_drift=driver_drift,
        vehicle_drift_bound=v_bound,
        driver_drift_bound=r_bound,
        total_vehicles=total_v0,
        total_drivers=total_r0,
        horizon=float(horizon),
        h=float(h),
        seed=int(seed),
        trace=trace,
    )


def write_trace_csv(trace: SimTrace, path) -> None:
    """Write the sampled trajectory: t, c_1.., v_1.., r_1.., V_total, R_total."""
    n = trace.n
    header = (
        ["t"]
        + [f"c_{i + 1}" for i in range(n)]
        + [f"v_{i + 1}" for i in range(n)]
        + [f"r_{i + 1}" for i in range(n)]
        + ["V_total", "R_total"]
    )
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(trace.times.shape[0]):
            row = (
                [trace.times[k]]
                + list(trace.customers[k])
                + list(trace.vehicles[k])
                + list(trace.drivers[k])
                + [trace.vehicles_total[k], trace.drivers_total[k]]
            )
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
