//! Ellipsoidal region of gains certified at a fixed attenuation level.

mod region;
mod synthesis;

pub use region::{
    completed_square_radius, derive_ellipsoid, ellipsoid_factors, literal_radius, membership,
    sample_boundary, schur_constraint, EllipsoidFactors, EllipsoidRegion, SdpSolution,
};
pub use synthesis::{
    assemble_theorem1, hinf_block, synthesize_region, Stage1Objective, Synthesis,
    SynthesisOptions, Theorem1Program, HINF_LMI,
};
