"""Experiment harness: configuration, episode execution, sweeps, persistence."""

from .config import (  # noqa: F401
    FORMAT_VERSION,
    DriftSchedule,
    OodSchedule,
    RunConfig,
    load_preset,
    load_run_config,
    preset_names,
    run_config_from_dict,
)
from .episode import Episode, run_episode  # noqa: F401
from .sweep import ExperimentSpec, SweepResult, assert_ordering, sweep  # noqa: F401
from .traceio import read_trace, replay, write_report, write_trace  # noqa: F401
