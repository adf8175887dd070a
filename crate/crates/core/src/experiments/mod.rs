//! Plant generators, design metrics and the studies built on them.

mod floor;
mod generators;
mod metrics;
mod perturb;
mod sweep;

pub use floor::{gamma_floor, DEFAULT_GAMMA_CAP, DEFAULT_GAMMA_FACTOR};
pub use generators::{
    gen_dense_gaussian, gen_spatial_decay, DenseGaussianConfig, SpatialDecayConfig, SpatialSystem,
};
pub use metrics::{closed_loop_hinf, compute_metrics, sigma_d, sigma_p, DesignMetrics, REPORT_HINF_TOL};
pub use perturb::{perturbation_study, PerturbationStudy, PerturbationStudyConfig};
pub use sweep::{sparsify, summarize, theta_sweep, Method, SweepCase, SweepConfig, SweepRow, SweepSummary};
