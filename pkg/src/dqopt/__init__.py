"""Two-spin MAS spin dynamics and pulse-sequence optimisation toolkit."""

from .experiment import DQFResult, SimConfig, buildup_curve, dqf_efficiency, offset_profile
from .harness import (RunConfig, ScanGrid, make_gene_specs, make_objective,
                      parse_run_config, reference_spin_system, scan_1d, scan_2d,
                      spinning_speed_study, study_runner)
from .optim import (GAConfig, GeneSpec, RunRecord, decode, encode,
                    flip_mutate, ga_run, nelder_mead, one_point_crossover,
                    quasi_newton_fd, random_search, roulette_select, success_rate)
from .powder import PowderScheme, default_scheme, single_orientation, zcw_gamma_scheme
from .sequence import (C7Defaults, PulseEvent, PulseSequence, SequenceParams,
                       asynchrony, build_c7opt, c7_defaults, default_params,
                       excitation_time, flip_angle)
from .spincore import (Orientation, SpinSystem, coherence_filter, expectation,
                       hamiltonian, interaction_frequencies, propagate_sequence,
                       step_propagator)

__version__ = "0.1.0"
