"""Cellular automaton reservoir computing toolkit.

Binary cellular automata (elementary 1D rules and 2D Life) used as fixed
reservoirs for sequence memory tasks, with a linear readout trained by
ridge regression, a concept algebra over additive-rule encodings, and
operation-count accounting for comparing against recurrent-network
baselines.
"""

from carc.ca import rule_table, step_1d, step_life, evolve, format_volume
from carc.encoding import Mapping, make_mappings, inject
from carc.reservoir import ReservoirConfig, init_state, process_step, process_sequence
from carc.readout import ReadoutModel, fit, predict
from carc.memtasks import TaskSpec, five_bit, twenty_bit, b_bit, gen_sequence, run_trial
from carc.opcount import count_ops, speedup

__version__ = "0.1.0"

__all__ = [
    "rule_table",
    "step_1d",
    "step_life",
    "evolve",
    "format_volume",
    "Mapping",
    "make_mappings",
    "inject",
    "ReservoirConfig",
    "init_state",
    "process_step",
    "process_sequence",
    "ReadoutModel",
    "fit",
    "predict",
    "TaskSpec",
    "five_bit",
    "twenty_bit",
    "b_bit",
    "gen_sequence",
    "run_trial",
    "count_ops",
    "speedup",
    "__version__",
]
