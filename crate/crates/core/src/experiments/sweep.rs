use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, DesignMetrics};
use crate::ellipsoid::{synthesize_region, EllipsoidRegion, SynthesisOptions};
use crate::error::{Error, Result};
use crate::greedy::{self, GreedyConfig};
use crate::l1::{reweighted_l1, ReweightConfig};
use crate::lti::{FeedbackGain, StateSpaceSystem};
use crate::sdp::SdpBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    L1,
    Greedy,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::L1 => "l1",
            Method::Greedy => "greedy",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Method::L1),
            "greedy" => Ok(Method::Greedy),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

/// Runs one sparsifier at level `theta` inside `region`.
pub fn sparsify(
    method: Method,
    region: &EllipsoidRegion<f64>,
    theta: f64,
    l1: &ReweightConfig,
    greedy_cfg: &GreedyConfig<f64>,
    backend: &dyn SdpBackend,
) -> Result<FeedbackGain<f64>> {
    match method {
        Method::L1 => {
            let cfg = ReweightConfig { theta, ..l1.clone() };
            Ok(reweighted_l1(region, &cfg, backend)?.0)
        }
        Method::Greedy => {
            let cfg = GreedyConfig { theta, ..greedy_cfg.clone() };
            Ok(greedy::run(region, &cfg)?.0)
        }
    }
}

/// One plant of a sweep: `seed` labels the rows it produces.
#[derive(Debug, Clone)]
pub struct SweepCase {
    pub seed: u64,
    pub system: StateSpaceSystem<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
    pub methods: Vec<Method>,
    pub synthesis: SynthesisOptions,
    pub l1: ReweightConfig,
    pub greedy: GreedyConfig<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            thetas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            methods: vec![Method::L1, Method::Greedy],
            synthesis: SynthesisOptions::default(),
            l1: ReweightConfig::default(),
            greedy: GreedyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub method: Method,
    pub seed: u64,
    pub gamma: f64,
    /// Absent when the sparsifier failed; see `error`.
    pub metrics: Option<DesignMetrics>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn sigma_d(&self) -> f64 {
        self.metrics.map_or(f64::NAN, |m| m.sigma_d)
    }
    pub fn sigma_p(&self) -> f64 {
        self.metrics.map_or(f64::NAN, |m| m.sigma_p)
    }
    pub fn hinf(&self) -> f64 {
        self.metrics.map_or(f64::NAN, |m| m.hinf_sparse)
    }
    pub fn verified(&self) -> bool {
        self.metrics.is_some_and(|m| m.verified)
    }
}

/// Metrics for every `(case, theta, method)` cell. Regions are synthesized
/// once per case before any sparsification, so an infeasible level fails the
/// whole sweep up front. Rows come back in case, theta, method order.
pub fn theta_sweep(cases: &[SweepCase], cfg: &SweepConfig, backend: &dyn SdpBackend) -> Result<Vec<SweepRow>> {
    for &t in &cfg.thetas {
        if !(t >= 0.0) || (t > 1.0 && !cfg.synthesis.allow_theta_above_one) {
            return Err(Error::InvalidArgument(format!("theta {t} outside [0, 1]")));
        }
    }
    let regions = cases
        .iter()
        .map(|c| synthesize_region(&c.system, c.gamma, &cfg.synthesis, backend).map(|s| s.region))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, f64, Method)> = (0..cases.len())
        .flat_map(|k| cfg.thetas.iter().flat_map(move |&t| cfg.methods.iter().map(move |&m| (k, t, m))))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(k, theta, method)| {
            let case = &cases[k];
            let region = &regions[k];
            let outcome = sparsify(method, region, theta, &cfg.l1, &cfg.greedy, backend)
                .and_then(|f| compute_metrics(&f, region, &case.system));
            let (metrics, error) = match outcome {
                Ok(m) if m.verified => (Some(m), None),
                Ok(m) => (Some(m), Some(format!("H-infinity check failed: {} > {}", m.hinf_sparse, case.gamma))),
                Err(e) => (None, Some(e.to_string())),
            };
            SweepRow { theta, method, seed: case.seed, gamma: case.gamma, metrics, error }
        })
        .collect();
    Ok(rows)
}

/// Mean metrics over seeds for one `(theta, method)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub theta: f64,
    pub method: Method,
    pub mean_sigma_d: f64,
    pub mean_sigma_p: f64,
    pub count: usize,
}

/// Averages successful rows per `(theta, method)` in first-seen order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut keys: Vec<(f64, Method)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(t, m)| t == r.theta && m == r.method) {
            keys.push((r.theta, r.method));
        }
    }
    keys.into_iter()
        .map(|(theta, method)| {
            let ms: Vec<DesignMetrics> = rows
                .iter()
                .filter(|r| r.theta == theta && r.method == method)
                .filter_map(|r| r.metrics)
                .collect();
            let count = ms.len();
            let mean = |g: fn(&DesignMetrics) -> f64| ms.iter().map(g).sum::<f64>() / count as f64;
            SweepSummary {
                theta,
                method,
                mean_sigma_d: mean(|m| m.sigma_d),
                mean_sigma_p: mean(|m| m.sigma_p),
                count,
            }
        })
        .collect()
}
