"""Scenario execution, trace output and comparison."""
from .compare import ChannelError, compare_arrays, compare_traces, envelope, load_mapping
from .outputs import plot_svg, read_trace_csv, stats_report, write_stats_json, write_trace_csv
from .runner import (Initialized, RunReport, Trace, apply_overrides, initialize, make_problem,
                     run_scenario, simulate_network)
from .scenario import Scenario, ScenarioError, data_dir, load_scenario, scenario_from_dict

__all__ = [
    "ChannelError", "Initialized", "RunReport", "Scenario", "ScenarioError", "Trace",
    "apply_overrides", "compare_arrays", "compare_traces", "data_dir", "envelope", "initialize",
    "load_mapping", "load_scenario", "make_problem", "plot_svg", "read_trace_csv", "run_scenario",
    "scenario_from_dict", "simulate_network", "stats_report", "write_stats_json", "write_trace_csv",
]
