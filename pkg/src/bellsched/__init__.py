"""School bus scheduling: time-indexed LP models, randomized rounding, greedy and exact baselines."""

from .instance import (
    Family,
    GeneratorSpec,
    Instance,
    InstanceError,
    School,
    apply_transition_time,
    derived_stats,
    generate_instance,
    load_instance,
    save_instance,
    tiny_instance,
)
from .schedule import HorizonMode, StartSchedule, assign_buses, bus_count, check_feasible, load_profile

from .greedy import SearchResult, greedy_schedule, greedy_search
from .lp import FractionalSchedule, LpModel, build_lp3s, build_lp3x, build_ssp_lp, extract_fractional
from .simplex import LpSolution, Status, solve, solve_revised
from .rounding import best_of_k, chernoff_tail, error_bound, round_sbsp, round_ssp
from .exact import ExactResult, enumerate_school_points, exact_opt
from .mps import export_mps, import_mps

__version__ = "0.1.0"
