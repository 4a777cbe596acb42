"""Static and dynamic drape networks."""

from .checkpoint import load_checkpoint, save_checkpoint, state_hash
from .deform import apply_deformation, cell_index, deform_positions, taper, tapered_lookup
from .dynamic import DynamicNet, DynamicNetConfig, func_reg_loss
from .motion import DESCRIPTOR_DIM, WindowError, motion_descriptors
from .static import PredictionHead, StaticNet, StaticNetConfig, as_grid, desk_config

__all__ = [
    "load_checkpoint", "save_checkpoint", "state_hash",
    "apply_deformation", "cell_index", "deform_positions", "taper", "tapered_lookup",
    "DynamicNet", "DynamicNetConfig", "func_reg_loss",
    "DESCRIPTOR_DIM", "WindowError", "motion_descriptors",
    "PredictionHead", "StaticNet", "StaticNetConfig", "as_grid", "desk_config",
]
