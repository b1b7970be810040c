"""Panorama leveling, canonical ERP geometry and a shift-equivariant toy diffusion model."""

from .errors import ConfigError, DegenerateInputError, DomainError, SamplingError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    erp_pixel_to_ray,
    intrinsics_from_fov,
    pose_to_rotation,
    project_perspective_to_erp,
    ray_to_erp_pixel,
    render_perspective_from_erp,
    roll_erp,
    rotate_erp,
    rotation_to_pose,
)
from .io import load_checkpoint, read_flow, read_png, save_checkpoint, write_flow, write_png
from .leveling import (
    CandidateGrid,
    DenseFlowField,
    RigidEstimate,
    SoftArgminConfig,
    gt_leveling_flow,
    soft_argmin_gradient,
    soft_argmin_solve,
    warp_to_canonical,
)
from .metrics import equivariance_residual, flow_epe, psnr, rotation_error_deg, seam_score
from .sampler import (
    MixtureSpec,
    PoseSamplerConfig,
    canonicalize_panorama,
    make_toy_dataset,
    make_training_sample,
    sample_pose,
    write_dataset,
)
from .topo import (
    ToyDenoiser,
    TrainConfig,
    ddpm_schedule,
    roll_latent,
    sample_with_rolling,
    shifted_pos_encoding,
    train_toy,
)

__version__ = "0.1.0"
