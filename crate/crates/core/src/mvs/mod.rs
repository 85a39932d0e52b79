//! Coarse-to-fine depth estimation: plane-sweep hypotheses, differentiable
//! warping, group correlation, weighted view fusion, 3-D regularization,
//! winner-take-all readout and the training losses.

mod camera;
mod cascade;
mod cost;
mod hypotheses;
mod loss;
mod warp;

pub use camera::{Camera, CameraView};
pub use cascade::{
    cascade_forward, cascade_forward_scales, cascade_from_features, cascade_loss, upsample_depth, CascadeConfig, CascadeState, ModelConfig,
    MvsModel, ScaleState,
};
pub use cost::{
    fuse_weighted, fusion_head, group_correlation, regularize, view_weight, view_weight_fusion, wta_depth, Unet3d,
    FUSION_MIN_WEIGHT,
};
pub use hypotheses::{base_step, local_hypotheses, uniform_inverse};
pub use loss::{ce_loss, downsample_nearest, l1_loss, loss_targets, scale_loss, LossKind, ScaleLoss, LOG_FLOOR};
pub use warp::{homography_warp, warp_coords};
