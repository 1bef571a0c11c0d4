"""Frame-interleaved sparse inference for a toy video diffusion transformer."""

from .errors import ConfigError, ContractViolation, DiagnosticError, DivisionGuardError
from .latent import FrameIndexSet, LatentSequence, frame_l2_distance, gather, load_lsq, reconstruct, save_lsq
from .scheduler import AnchorSchedule, SparsityConfig, anchor_offset, anchor_set, build_schedule, gate
from .model import (
    BlockWeights,
    FlopsLedger,
    ToyDiTConfig,
    analytic_flops,
    block_forward,
    denoise,
    gated_block_apply,
    initial_noise,
)
from .diagnostics import (
    DiagnosticsReport,
    MagnitudeMap,
    adjacent_changes,
    cv_stats,
    magnitude_map,
    per_frame_error,
    synthetic_probe,
)

__version__ = "0.1.0"
