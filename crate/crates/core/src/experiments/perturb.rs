use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{closed_loop_hinf, sigma_p};
use crate::error::{Error, Result};
use crate::lti::{FeedbackGain, StateSpaceSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStudyConfig {
    pub magnitude: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PerturbationStudyConfig {
    fn default() -> Self {
        Self { magnitude: 0.5, samples: 5000, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationStudy {
    /// H-infinity norm of the unperturbed design, the baseline of `sigma_p`.
    pub baseline_hinf: f64,
    /// `sigma_p` per sample in draw order; `+inf` marks an unstable loop.
    pub sigma_p: Vec<f64>,
    pub unstable: usize,
}

impl PerturbationStudy {
    /// Sorted `(sigma_p, cumulative fraction)` pairs; unstable samples sort
    /// last and so the finite part never reaches 1 when any occurred.
    pub fn empirical_cdf(&self) -> Vec<(f64, f64)> {
        let mut v = self.sigma_p.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.into_iter().enumerate().map(|(k, x)| (x, (k + 1) as f64 / n)).collect()
    }

    pub fn median(&self) -> f64 {
        let mut v = self.sigma_p.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            v[n / 2]
        } else {
            let (a, b) = (v[n / 2 - 1], v[n / 2]);
            if a.is_infinite() || b.is_infinite() { b } else { 0.5 * (a + b) }
        }
    }
}

/// Adds `magnitude * N(0, 1)` to every nonzero entry of `fs` for each sample
/// and records the relative change of the H-infinity norm.
pub fn perturbation_study(
    sys: &StateSpaceSystem<f64>,
    fs: &FeedbackGain<f64>,
    cfg: &PerturbationStudyConfig,
) -> Result<PerturbationStudy> {
    if !(cfg.magnitude >= 0.0) || cfg.samples == 0 {
        return Err(Error::InvalidArgument("magnitude must be >= 0 and samples >= 1".into()));
    }
    let baseline = closed_loop_hinf(sys, fs)?;
    if !baseline.is_finite() {
        return Err(Error::InvalidArgument("the design to perturb is not stabilizing".into()));
    }
    let support: Vec<(usize, usize)> = (0..fs.0.nrows())
        .flat_map(|i| (0..fs.0.ncols()).map(move |j| (i, j)))
        .filter(|&ij| fs.0[ij] != 0.0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<Vec<f64>> = (0..cfg.samples)
        .map(|_| support.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let sigma = draws
        .par_iter()
        .map(|eta| {
            if cfg.magnitude == 0.0 {
                return Ok(0.0);
            }
            let mut f = fs.clone();
            for (&ij, &e) in support.iter().zip(eta) {
                f.0[ij] += cfg.magnitude * e;
            }
            Ok(sigma_p(closed_loop_hinf(sys, &f)?, baseline))
        })
        .collect::<Result<Vec<f64>>>()?;
    let unstable = sigma.iter().filter(|s| s.is_infinite()).count();
    Ok(PerturbationStudy { baseline_hinf: baseline, sigma_p: sigma, unstable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{gen_spatial_decay, SpatialDecayConfig};
    use nalgebra::DMatrix;

    fn setup() -> (StateSpaceSystem<f64>, FeedbackGain<f64>) {
        let sys = gen_spatial_decay(&SpatialDecayConfig { n: 4, seed: 2, ..Default::default() }).unwrap().system;
        let f = FeedbackGain(DMatrix::identity(4, 4) * -3.0 - sys.a());
        (sys, f)
    }

    #[test]
    fn zero_magnitude_is_flat() {
        let (sys, f) = setup();
        let cfg = PerturbationStudyConfig { magnitude: 0.0, samples: 50, seed: 1 };
        let st = perturbation_study(&sys, &f, &cfg).unwrap();
        assert_eq!(st.sigma_p.len(), 50);
        assert!(st.sigma_p.iter().all(|&s| s == 0.0));
        assert_eq!(st.median(), 0.0);
    }

    #[test]
    fn deterministic_and_counted() {
        let (sys, f) = setup();
        let cfg = PerturbationStudyConfig { magnitude: 2.0, samples: 200, seed: 7 };
        let a = perturbation_study(&sys, &f, &cfg).unwrap();
        let b = perturbation_study(&sys, &f, &cfg).unwrap();
        assert_eq!(a.sigma_p, b.sigma_p);
        assert_eq!(a.empirical_cdf().len(), 200);
        assert_eq!(a.unstable, a.sigma_p.iter().filter(|s| s.is_infinite()).count());
        let cdf = a.empirical_cdf();
        assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn unstable_design_rejected() {
        let (sys, _) = setup();
        let f = FeedbackGain(DMatrix::identity(4, 4) * 5.0);
        assert!(perturbation_study(&sys, &f, &PerturbationStudyConfig::default()).is_err());
    }
}
