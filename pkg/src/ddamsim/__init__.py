"""Link-level simulator for dual-timescale integrated sensing and
communication with delay-Doppler aligned transmission."""

__version__ = "0.1.0"

from .channel import (CirBlock, PulseShape, apply_channel, build_cir_block,
                      correlation_ratio, dirichlet, make_pulse, steering_vector,
                      vec_angular_delay, virtual_channel)
from .ddam import (BeamformerSet, DelayGroupMap, FrameConfig, ddam_transmit,
                   delay_group_map, make_beamformers, min_sinr, mmse_beamformers,
                   mrt_beamformers, phase1_dam_sinr, spectral_efficiency,
                   zf_beamformers)
from .doppler import (DopplerConfig, SensedPsi, assemble_psi, doppler_correlate,
                      doppler_error, estimate_doppler, estimate_path_dopplers)
from .geometry import (PathStateInfo, Scatterer, Scene, TimescaleReport,
                       coherence_time, derive_path_parameters, path_invariant_time,
                       propagate_scene, timescale_report, variation_bounds)
from .harness import (ExperimentConfig, ResultRecord, load_config, papr_study,
                      run_scenario, sweep, validate)
from .numerics import dft_matrix, kron_identity_apply, pseudo_inverse
from .ofdm import (OfdmConfig, ofdm_modulate, ofdm_rate, papr, papr_at_ccdf,
                   papr_ccdf, qam_symbols, subcarrier_channels, waterfill)
from .sensing import (PilotBlock, RecoveryConfig, RecoveryResult, SensingProblem,
                      asomp_sr, build_observation, build_sensing_matrix,
                      generate_pilots, l0_oracle, make_sensing_problem, nmse, omp,
                      somp_joint, support_refine)
