from .config import ConfigError, ExperimentConfig
from .runners import (
    reconstruct_image,
    run_line_sampling_comparison,
    run_phase_transition,
    emit_mask,
    snr_db,
    stripe_pair,
)
