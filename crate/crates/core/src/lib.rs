//! Sparse state-feedback design with a certified H-infinity level.
//!
//! Stage one solves a set of LMIs for a matrix ellipsoid of gains that all
//! keep the closed-loop H-infinity norm below `gamma`
//! ([`ellipsoid::synthesize_region`]). Stage two searches a shrunk copy of
//! that ellipsoid for sparse gains, either by re-weighted l1 minimization
//! ([`l1::reweighted_l1`]) or by greedy entry elimination
//! ([`greedy::run`]). Every reported gain is re-checked with an independent
//! H-infinity computation ([`lti::hinf_norm`]).
//!
//! The geometry, verification and greedy code is generic over [`Real`]
//! (`f32`, `f64`); anything that calls the SDP solver works in `f64`.

pub mod ellipsoid;
pub mod error;
pub mod experiments;
pub mod greedy;
pub mod io;
pub mod l1;
pub mod linalg;
pub mod lti;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use scalar::Real;

pub type System = lti::StateSpaceSystem<f64>;
pub type SystemF32 = lti::StateSpaceSystem<f32>;
pub type Gain = lti::FeedbackGain<f64>;
pub type GainF32 = lti::FeedbackGain<f32>;
pub type ClosedLoop = lti::ClosedLoopSystem<f64>;
pub type ClosedLoopF32 = lti::ClosedLoopSystem<f32>;
pub type Region = ellipsoid::EllipsoidRegion<f64>;
pub type RegionF32 = ellipsoid::EllipsoidRegion<f32>;
pub type GreedyConfig = greedy::GreedyConfig<f64>;
pub type GreedyConfigF32 = greedy::GreedyConfig<f32>;
