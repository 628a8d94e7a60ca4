"""Vehicle and driver rebalancing for station-based mobility-on-demand fleets."""

from .errors import (
    InsufficientFleetError,
    InvalidStateError,
    RebalanceInfeasibleError,
    SizeLimitError,
    ValidationError,
)
from .experiments import (
    SweepConfig,
    SweepReport,
    TrialRow,
    run_f_sweep,
    run_station_sweep,
    trial_seed,
    write_report_csv,
    write_summary_csv,
)
from .fluidsim import (
    FluidState,
    SimTrace,
    StabilityReport,
    equilibrium_state,
    initial_state,
    simulate,
    stability_probe,
    step,
    write_trace_csv,
)
from .generate import GeneratorConfig, generate_instance
from .mincostflow import (
    INFINITE_CAPACITY,
    Arc,
    FlowProblem,
    FlowSolution,
    brute_force_mcf,
    check_flow_feasibility,
    flow_debug_dict,
    residual_negative_cycle,
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
    validate_assignment,
)
from .rebalance import (
    RebalanceSolution,
    cancel_two_cycles,
    driver_flow_problem,
    solve_driver_rebalancing,
    solve_rebalancing,
    solve_vehicle_rebalancing,
    vehicle_flow_problem,
)
from .storage import load_assignment, load_instance, save_assignment, save_instance

__version__ = "0.1.0"
