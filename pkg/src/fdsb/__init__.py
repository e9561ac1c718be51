"""Joint access and backhaul beamforming for full-duplex self-backhauled
small-cell networks: rate model, concave lower-bound solvers (two
surrogate families), user-centric clustering, partial-CSI variants and a
reproducible experiment harness."""

from .backend import backend_name, get_kernels
from .network import (ChannelSet, LargeScale, NetworkConfig, Topology,
                      compute_large_scale, generate_topology,
                      sample_channels)
from .rates import (BeamformerSet, Clustering, DecodingOrder, PowerBudgets,
                    RateReport, access_rate, backhaul_rate_per_sbs,
                    decoding_order, end_to_end_rates,
                    expected_decoding_order, interference_access,
                    interference_backhaul, is_feasible, project_feasible,
                    random_feasible)
from .surrogates import (JensenMatrix, SinrcAux, StochAux, WmmseAux,
                         build_aux, composite_bound, jensen_aux,
                         jensen_composite, jensen_matrix, jensen_rate,
                         known_channels, make_eval, make_eval_jensen,
                         make_eval_saa, make_eval_stoch, make_omega_sampler,
                         mmse_aux_sinrc, saa_access_aux,
                         sinrc_bound_access, sinrc_bound_backhaul,
                         stoch_aux_update, stoch_composite_bound,
                         wmmse_aux, wmmse_bound)
from .subsolver import (STEP_UNDERFLOW, StepUnderflowError, SubsolverConfig,
                        gradient_mapping_norm, solve_subproblem,
                        subgradient_step)
from .algorithms import (ClusteringConfig, RunTrace, SlbmConfig, StochConfig,
                         default_gamma, dlb_slbm, heuristic_clustering,
                         saa_slbm, sample_mean_report, slbm,
                         static_clustering, stochastic_slbm)
from .harness import (ALGORITHMS, ExperimentSpec, ResultTable, SweepPoint,
                      compare_partial_csi, preset, run_experiment)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "BeamformerSet", "ChannelSet", "Clustering",
    "ClusteringConfig", "DecodingOrder", "ExperimentSpec", "JensenMatrix",
    "LargeScale", "NetworkConfig", "PowerBudgets", "RateReport",
    "ResultTable", "RunTrace", "STEP_UNDERFLOW", "SinrcAux", "SlbmConfig",
    "StepUnderflowError", "StochAux", "StochConfig", "SubsolverConfig",
    "SweepPoint", "Topology", "WmmseAux", "access_rate",
    "backend_name", "backhaul_rate_per_sbs", "build_aux",
    "compare_partial_csi", "composite_bound", "compute_large_scale",
    "decoding_order", "default_gamma", "dlb_slbm", "end_to_end_rates",
    "expected_decoding_order", "generate_topology", "get_kernels",
    "gradient_mapping_norm", "heuristic_clustering", "interference_access",
    "interference_backhaul", "is_feasible", "jensen_aux",
    "jensen_composite", "jensen_matrix", "jensen_rate", "known_channels",
    "make_eval", "make_eval_jensen", "make_eval_saa", "make_eval_stoch",
    "make_omega_sampler", "mmse_aux_sinrc", "preset", "project_feasible",
    "random_feasible", "run_experiment", "saa_access_aux", "saa_slbm",
    "sample_channels", "sample_mean_report", "sinrc_bound_access",
    "sinrc_bound_backhaul", "slbm", "solve_subproblem", "static_clustering",
    "stoch_aux_update", "stoch_composite_bound", "stochastic_slbm",
    "subgradient_step", "wmmse_aux", "wmmse_bound",
]
