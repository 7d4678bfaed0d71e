//! Synthetic aperture sonar simulation and coherent volumetric reconstruction.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod deconv;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod render;
pub mod scene;
pub mod signal;
pub mod simulator;

/// Runs the book's snippets as doc-tests so the two cannot drift apart.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/shape_mdbook_docs/index.md")]
    struct CrateMap;
    #[doc = include_str!("../../../book/src/hilbert_transform_analytic_signal_matched_filter/index.md")]
    struct AnalyticSignals;
    #[doc = include_str!("../../../book/src/ray_tracing_bvh_triangle_mesh_intersection_trans/index.md")]
    struct RayTracing;
    #[doc = include_str!("../../../book/src/delay_and_sum_imaging_reconstruction_voxel_grid/index.md")]
    struct DelayAndSum;
    #[doc = include_str!("../../../book/src/ray_ellipsoid_intersection_non_line_of_sight_tim/index.md")]
    struct Ellipsoids;
    #[doc = include_str!("../../../book/src/neural_radiance_field_volume_rendering_implicit_/index.md")]
    struct VolumeRendering;
    #[doc = include_str!("../../../book/src/multiresolution_hash_grid_encoding_coordinate_ne/index.md")]
    struct HashGrids;
    #[doc = include_str!("../../../book/src/reverse_mode_automatic_differentiation_adam_opti/index.md")]
    struct Gradients;
    #[doc = include_str!("../../../book/src/sparse_view_tomographic_reconstruction_total_var/index.md")]
    struct SparseViews;
    #[doc = include_str!("../../../book/src/marching_cubes_isosurface_extraction_chamfer_dis/index.md")]
    struct Isosurfaces;
}
