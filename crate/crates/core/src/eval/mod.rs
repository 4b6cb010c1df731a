//! Mesh extraction, mesh and distance-field metrics, slices and the
//! prior study.

mod field;
mod grid;
pub mod mc;
mod mesh;
mod metrics;
mod oracle;
mod report;
mod slice;
mod study;

pub use field::{eval_sdf_field, SdfMetrics, GRAD_NORM_BAND, KEEP_MIN, NEAR_MAX};
pub use grid::SdfGridSpec;
pub use mc::{extract_from_values, extract_mesh};
pub use mesh::{TriMesh, MIN_TRIANGLE_AREA};
pub use metrics::{mesh_metrics, metrics_from_samples, nearest_distances, MeshMetrics, DEFAULT_SAMPLES, DEFAULT_THRESHOLD};
pub use oracle::OraclePredictor;
pub use report::{parse_report, EvalReport};
pub use slice::{Slice, SLICE_MAGIC, SLICE_VERSION};
pub use study::{
    ga_error_bound, octant_errors, prior_study, tl_error_bound, BoundAudit, OctantErrors, StudyReport, StudyRow,
    BOUND_SLACK,
};
