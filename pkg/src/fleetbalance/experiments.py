"""Randomized fleet-sizing experiments.

Two sweeps, both over generator-sampled instances:

* station sweep: fixed number of trials at each network size, taxi
  fraction pinned to 1; reports how the driver pool compares with the
  vehicle fleet as networks grow.
* taxi-fraction sweep: one network size, the same instances re-solved at
  several taxi fractions; reports how sharing customer trips shrinks the
  driver pool.

Each trial derives its seed as ``base_seed * 10000 + size * 100 +
trial``, so any row can be regenerated in isolation.  Trials are
independent; with ``workers > 1`` they run in a process pool and are
re-assembled in deterministic order.  Identical configs produce
byte-identical CSV files.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError
from .generate import GeneratorConfig, generate_instance
from .network import RebalanceAssignment, StationNetwork, compute_imbalance, fleet_sizes
from .rebalance import (
    RebalanceSolution,
    solve_driver_rebalancing,
    solve_rebalancing,
    solve_vehicle_rebalancing,
)

ROW_FIELDS = ("group_key", "trial", "seed", "n", "f", "v_alpha", "r_alpha_beta", "ratio", "reb_fraction")
SUMMARY_METRICS = ("v_alpha", "r_alpha_beta", "ratio", "reb_fraction")

InstanceProvider = Callable[[int, int, GeneratorConfig], StationNetwork]


@dataclass(frozen=True)
class SweepConfig:
    sizes: tuple[int, ...] = (10, 25, 50, 100, 200)
    trials_per_size: int = 20
    base_seed: int = 0
    f_values: tuple[float, ...] = (1.0,)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    workers: int = 1

    def __post_init__(self):
        if not self.sizes or any(s < 2 for s in self.sizes):
            raise ValidationError(f"sizes must be >= 2, got {self.sizes!r}")
        if self.trials_per_size < 1:
            raise ValidationError("trials_per_size must be >= 1")
        if not self.f_values or any(f < 0 for f in self.f_values):
            raise ValidationError(f"f_values must be nonnegative, got {self.f_values!r}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


def trial_seed(base_seed: int, size: int, trial: int) -> int:
    return base_seed * 10000 + size * 100 + trial


@dataclass(frozen=True)
class TrialRow:
    """One solved trial.  The residual fields are in-memory diagnostics only."""

    group_key: str
    trial: int
    seed: int
    n: int
    f: float
    v_alpha: float
    r_alpha_beta: float
    ratio: float
    reb_fraction: float
    alpha_residual: float
    beta_residual: float
    beta_cap_excess: float


@dataclass(frozen=True)
class SummaryRow:
    group_key: str
    metric: str
    mean: float
    min: float
    max: float


@dataclass
class SweepReport:
    config: SweepConfig
    rows: list[TrialRow]

    def group_keys(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.group_key not in seen:
                seen.append(row.group_key)
        return seen

    def group_values(self, group_key: str, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.rows if r.group_key == group_key])

    def summary(self) -> list[SummaryRow]:
        out = []
        for key in self.group_keys():
            for metric in SUMMARY_METRICS:
                vals = self.group_values(key, metric)
                out.append(
                    SummaryRow(
                        group_key=key,
                        metric=metric,
                        mean=float(vals.mean()),
                        min=float(vals.min()),
                        max=float(vals.max()),
                    )
                )
        return out


def _row_from_solution(
    net: StationNetwork,
    solution: RebalanceSolution,
    group_key: str,
    trial: int,
    seed: int,
    f_value: float,
) -> TrialRow:
    if solution.status != "optimal" or solution.assignment is None:
        raise RuntimeError(
            f"trial {trial} (seed {seed}, n={net.n}, f={f_value:g}) "
            f"has no feasible driver-return assignment: {solution.infeasibility}"
        )
    a = solution.assignment
    d = compute_imbalance(net).surplus
    alpha, beta = a.vehicle_rates, a.driver_rates
    alpha_res = float(np.max(np.abs(alpha.sum(axis=1) - alpha.sum(axis=0) - d)))
    beta_res = float(np.max(np.abs(beta.sum(axis=1) - beta.sum(axis=0) + d)))
    cap_excess = float(np.max(beta - net.taxi_capacity()))
    ratio = a.min_drivers / a.min_vehicles if a.min_vehicles > 0 else float("nan")
    frac = solution.vehicle_objective / a.min_drivers if a.min_drivers > 0 else float("nan")
    return TrialRow(
        group_key=group_key,
        trial=trial,
        seed=seed,
        n=net.n,
        f=f_value,
        v_alpha=a.min_vehicles,
        r_alpha_beta=a.min_drivers,
        ratio=ratio,
        reb_fraction=frac,
        alpha_residual=alpha_res,
        beta_residual=beta_res,
        beta_cap_excess=cap_excess,
    )


def _station_trial(args) -> TrialRow:
    config, size, trial = args
    seed = trial_seed(config.base_seed, size, trial)
    net = generate_instance(size, seed, config.generator)
    solution = solve_rebalancing(net)
    return _row_from_solution(net, solution, f"n={size}", trial, seed, config.generator.taxi_fraction)


def run_station_sweep(
    config: SweepConfig, instance_provider: Optional[InstanceProvider] = None
) -> SweepReport:
    """Solve every (size, trial) cell; taxi fraction must be pinned to 1."""
    if config.generator.taxi_fraction != 1.0:
        raise ValidationError(
            f"station sweep requires taxi_fraction=1, got {config.generator.taxi_fraction:g}"
        )
    specs = [(config, size, trial) for size in config.sizes for trial in range(config.trials_per_size)]
    if instance_provider is not None:
        if config.workers != 1:
            raise ValidationError("a custom instance provider requires workers=1")
        rows = []
        for _, size, trial in specs:
            seed = trial_seed(config.base_seed, size, trial)
            net = instance_provider(size, seed, config.generator)
            solution = solve_rebalancing(net)
            rows.append(
                _row_from_solution(net, solution, f"n={size}", trial, seed, config.generator.taxi_fraction)
            )
    elif config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_station_trial, specs))
    else:
        rows = [_station_trial(s) for s in specs]
    return SweepReport(config=config, rows=rows)


def _f_trial(args) -> list[TrialRow]:
    config, size, trial = args
    seed = trial_seed(config.base_seed, size, trial)
    net = generate_instance(size, seed, config.generator)
    d = compute_imbalance(net)
    # alpha does not see the taxi fraction; solve it once per instance
    alpha, alpha_obj = solve_vehicle_rebalancing(net, d)
    rows = []
    for f_value in config.f_values:
        taxi = np.full((size, size), float(f_value))
        np.fill_diagonal(taxi, 0.0)
        net_f = replace(net, taxi_fraction=taxi)
        beta, beta_obj = solve_driver_rebalancing(net_f, d)
        min_v, min_r = fleet_sizes(net_f, alpha, beta)
        solution = RebalanceSolution(
            status="optimal",
            assignment=RebalanceAssignment(
                vehicle_rates=alpha, driver_rates=beta, min_vehicles=min_v, min_drivers=min_r
            ),
            vehicle_objective=alpha_obj,
            driver_objective=beta_obj,
        )
        rows.append(_row_from_solution(net_f, solution, f"f={f_value:g}", trial, seed, f_value))
    return rows


def run_f_sweep(config: SweepConfig) -> SweepReport:
    """Re-solve the same instances at each taxi fraction (one network size)."""
    if len(config.sizes) != 1:
        raise ValidationError(f"taxi-fraction sweep needs exactly one size, got {config.sizes!r}")
    if any(not (1.0 <= f <= 4.0) for f in config.f_values):
        raise ValidationError(f"f_values must lie in [1, 4], got {config.f_values!r}")
    size = config.sizes[0]
    specs = [(config, size, trial) for trial in range(config.trials_per_size)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            nested = list(pool.map(_f_trial, specs))
    else:
        nested = [_f_trial(s) for s in specs]
    # group rows by f value (column-major over trials) for readable CSVs
    rows: list[TrialRow] = []
    for k, f_value in enumerate(config.f_values):
        for per_trial in nested:
            rows.append(per_trial[k])
    return SweepReport(config=config, rows=rows)


def write_report_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROW_FIELDS)
        for row in report.rows:
            writer.writerow([_fmt(getattr(row, name)) for name in ROW_FIELDS])


def write_summary_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("group_key", "metric", "mean", "min", "max"))
        for row in report.summary():
            writer.writerow(
                (row.group_key, row.metric, _fmt(row.mean), _fmt(row.min), _fmt(row.max))
            )


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value
