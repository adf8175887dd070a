use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::StateSpaceSystem;

/// Random plant with i.i.d. standard normal `A` and `B`; `C`, `Dgu`, `Dgv` are
/// (rectangular) identities and `Bv = B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseGaussianConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

pub fn gen_dense_gaussian(cfg: &DenseGaussianConfig) -> Result<StateSpaceSystem<f64>> {
    if cfg.n == 0 || cfg.m == 0 {
        return Err(Error::InvalidArgument("n and m must be >= 1".into()));
    }
    let (n, m) = (cfg.n, cfg.m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let a = DMatrix::from_row_iterator(n, n, (0..n * n).map(|_| normal()));
    let b = DMatrix::from_row_iterator(n, m, (0..n * m).map(|_| normal()));
    StateSpaceSystem::new(
        a,
        b.clone(),
        b,
        DMatrix::identity(n, n),
        DMatrix::identity(n, m),
        DMatrix::identity(n, m),
    )
}

/// Agents scattered in the unit square with couplings
/// `A_ij = c_ij exp(-alpha d_ij^beta)` for `d_ij <= r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialDecayConfig {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub bv_scale: f64,
    pub seed: u64,
}

impl Default for SpatialDecayConfig {
    fn default() -> Self {
        Self {
            n: 30,
            alpha: 1.0,
            beta: 1.0,
            r: 0.25,
            bv_scale: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpatialSystem {
    pub system: StateSpaceSystem<f64>,
    pub positions: Vec<[f64; 2]>,
}

impl SpatialSystem {
    /// Directed coupling edges `(i, j)` with `A_ij != 0`, `i != j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let a = self.system.a();
        let n = a.nrows();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && a[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn gen_spatial_decay(cfg: &SpatialDecayConfig) -> Result<SpatialSystem> {
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.beta > 0.0) || !(0.0..=2f64.sqrt()).contains(&cfg.r) {
        return Err(Error::InvalidArgument(
            "alpha, beta must be > 0 and r in [0, sqrt(2)]".into(),
        ));
    }
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    // every c_ij is drawn so the stream does not depend on the radius
    let c: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let (pi, pj) = (positions[i], positions[j]);
        let d = ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2)).sqrt();
        if d <= cfg.r {
            c[i * n + j] * (-cfg.alpha * d.powf(cfg.beta)).exp()
        } else {
            0.0
        }
    });
    let eye = DMatrix::<f64>::identity(n, n);
    let system = StateSpaceSystem::new(
        a,
        eye.clone(),
        &eye * cfg.bv_scale,
        eye.clone(),
        eye.clone(),
        eye,
    )?;
    Ok(SpatialSystem { system, positions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_deterministic_and_shaped() {
        let cfg = DenseGaussianConfig { n: 30, m: 30, seed: 5 };
        let s1 = gen_dense_gaussian(&cfg).unwrap();
        let s2 = gen_dense_gaussian(&cfg).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.a().shape(), (30, 30));
        assert_eq!(s1.b().shape(), (30, 30));
        assert_eq!(s1.c(), &DMatrix::identity(30, 30));
        assert_eq!(s1.bv(), s1.b());
        let other = gen_dense_gaussian(&DenseGaussianConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(s1.a(), other.a());
    }

    #[test]
    fn gaussian_entries_are_standard_normal() {
        let s = gen_dense_gaussian(&DenseGaussianConfig { n: 200, m: 1, seed: 1 }).unwrap();
        let mean = s.a().mean();
        let var = s.a().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 40_000.0;
        assert!(mean.abs() < 3.0 / 200.0, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn zero_radius_keeps_only_diagonal() {
        let s = gen_spatial_decay(&SpatialDecayConfig { r: 0.0, n: 12, ..Default::default() })
            .unwrap();
        let a = s.system.a();
        for i in 0..12 {
            for j in 0..12 {
                if i != j {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
        assert!(s.edges().is_empty());
        assert_eq!(s.system.bv(), &(DMatrix::identity(12, 12) * 4.0));
    }

    #[test]
    fn coupling_follows_distance_decay() {
        let cfg = SpatialDecayConfig { n: 8, r: 2f64.sqrt(), seed: 3, ..Default::default() };
        let s = gen_spatial_decay(&cfg).unwrap();
        let same_stream = gen_spatial_decay(&SpatialDecayConfig { r: 0.0, ..cfg }).unwrap();
        let a = s.system.a();
        for i in 0..8 {
            assert_eq!(a[(i, i)], same_stream.system.a()[(i, i)]);
            for j in 0..8 {
                let (p, q) = (s.positions[i], s.positions[j]);
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                // |A_ij| / exp(-d) recovers |c_ij|, so the ratio below never exceeds |c|
                assert!(a[(i, j)].abs() <= a[(i, j)].abs() / (-d).exp() + 1e-15);
            }
        }
    }

    #[test]
    fn sparsity_matches_disk_coverage() {
        // expected fraction of off-diagonal pairs within r, by Monte Carlo over positions
        let r = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 200_000;
        let hits = (0..trials)
            .filter(|_| {
                let (x1, y1, x2, y2): (f64, f64, f64, f64) =
                    (rng.gen(), rng.gen(), rng.gen(), rng.gen());
                ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt() <= r
            })
            .count() as f64
            / trials as f64;
        let mut frac = 0.0;
        let seeds = 40;
        for seed in 0..seeds {
            let s = gen_spatial_decay(&SpatialDecayConfig { n: 30, seed, ..Default::default() })
                .unwrap();
            frac += s.edges().len() as f64 / (30.0 * 29.0);
        }
        frac /= seeds as f64;
        assert!((frac - hits).abs() < 0.02, "edges {frac} vs coverage {hits}");
    }
}
