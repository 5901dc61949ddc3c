//! Multiplane-image engine for monocular-to-stereo conversion.
//!
//! Builds plane stacks from an image and a depth map, renders horizontally
//! displaced views by warping and over-compositing the planes, and provides
//! a forward-warping baseline plus image metrics and losses.

pub mod builder;
pub mod dibr;
pub mod error;
pub mod fastmath;
pub mod geometry;
pub mod metrics;
pub mod render;
pub mod resample;
pub mod simd;
pub mod types;

#[cfg(any(test, feature = "reference"))]
pub mod reference;

pub use builder::{
    assign_masks_from_depth, blend_colors, blend_weights, blend_weights_from_alphas,
    blend_weights_with, build_mpi_classical, context_masks, AssignMode, BlendOrder, BlendWeights,
    ClassicalOptions,
};
pub use dibr::{dibr_render, forward_warp, inpaint_holes, DibrWarp, HoleMask};
pub use error::{MpiError, Result};
pub use fastmath::{exp_f32, ln_1p_unit_f32, logistic_f32, softplus_f32};
pub use geometry::{
    apply_homography, homography_matrix, make_plane_spec, make_shift_table, ShiftTable,
};
pub use metrics::{
    depth_loss, l1, mask_loss, mpi_loss, mpi_loss_with, psnr, psnr_with, ssim, ssim_with,
    total_loss, MetricOptions, MpiLoss,
};
pub use render::{
    alpha_from_sigma, composite, composite_depth, composite_with, plane_alphas, render_blended,
    render_depth_view, render_lowres_pipeline, render_lowres_pipeline_timed, render_view,
    render_view_with, warp_plane, AlphaConvention, RenderOptions, StageTimes,
};
pub use resample::{resample_bilinear, resample_depth, resample_map, RowCache, RowMagnifier};
pub use types::{
    AssignMasks, CameraRig, DensityMode, DepthMap, Direction, ImageBuffer, Matrix3, Plane,
    PlaneSpec, PlaneStack, ScalarMap, Validate,
};
