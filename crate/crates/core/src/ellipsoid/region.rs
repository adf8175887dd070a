use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{lambda_min, pd_inv_sqrt, psd_sqrt, spd_inverse, spectral_norm, symmetrize};
use crate::lti::FeedbackGain;
use crate::scalar::Real;

/// Certificates returned by the stage-one LMIs.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution<T: Real = f64> {
    /// Lyapunov matrix, n x n.
    pub p: DMatrix<T>,
    /// m x m, negative semidefinite.
    pub xhat: DMatrix<T>,
    /// m x n.
    pub yhat: DMatrix<T>,
    /// n x n, positive definite.
    pub zhat: DMatrix<T>,
    /// Smallest slack over the strict inequalities.
    pub margin: T,
}

/// Matrix ellipsoid `{F : (F - F_o) Z (F - F_o)^T <= R}` of gains that all
/// inherit the closed-loop guarantee at level `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidRegion<T: Real = f64> {
    f_o: DMatrix<T>,
    z: DMatrix<T>,
    r: DMatrix<T>,
    zinv: DMatrix<T>,
    gamma: T,
    allow_theta_above_one: bool,
}

impl<T: Real> EllipsoidRegion<T> {
    /// Validates shapes and definiteness, caching `Z^{-1}`.
    pub fn new(f_o: DMatrix<T>, z: DMatrix<T>, r: DMatrix<T>, gamma: T) -> Result<Self> {
        let (m, n) = f_o.shape();
        if z.shape() != (n, n) || r.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "region with F_o {m}x{n} needs Z {n}x{n} and R {m}x{m}"
            )));
        }
        if !(gamma > T::zero()) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        let z = symmetrize(&z);
        let r = symmetrize(&r);
        let tol = T::lit(1e-9) * (T::one() + spectral_norm(&r));
        if lambda_min(&r) < -tol {
            return Err(Error::NotPositiveDefinite("R"));
        }
        let zinv = spd_inverse(&z, "Z")?;
        Ok(Self {
            f_o,
            z,
            r,
            zinv,
            gamma,
            allow_theta_above_one: false,
        })
    }

    /// Permits shrink factors above one in membership tests and sparsifiers.
    pub fn allowing_theta_above_one(mut self, allow: bool) -> Self {
        self.allow_theta_above_one = allow;
        self
    }

    pub fn f_o(&self) -> &DMatrix<T> {
        &self.f_o
    }
    pub fn center(&self) -> FeedbackGain<T> {
        FeedbackGain(self.f_o.clone())
    }
    pub fn z(&self) -> &DMatrix<T> {
        &self.z
    }
    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }
    pub fn zinv(&self) -> &DMatrix<T> {
        &self.zinv
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }
    pub fn allows_theta_above_one(&self) -> bool {
        self.allow_theta_above_one
    }
    /// Inputs (rows of F).
    pub fn m(&self) -> usize {
        self.f_o.nrows()
    }
    /// States (columns of F).
    pub fn n(&self) -> usize {
        self.f_o.ncols()
    }

    pub fn check_theta(&self, theta: T) -> Result<()> {
        if !(theta >= T::zero()) || !theta.finite() {
            return Err(Error::InvalidArgument(format!("theta = {theta} must be >= 0")));
        }
        if theta > T::one() && !self.allow_theta_above_one {
            return Err(Error::InvalidArgument(format!(
                "theta = {theta} > 1 requires allow_theta_above_one"
            )));
        }
        Ok(())
    }

    fn check_gain(&self, f: &FeedbackGain<T>) -> Result<()> {
        if f.shape() != self.f_o.shape() {
            return Err(Error::Dimension(format!(
                "gain is {:?}, region expects {:?}",
                f.shape(),
                self.f_o.shape()
            )));
        }
        Ok(())
    }

    /// `theta R - (F - F_o) Z (F - F_o)^T`.
    pub fn slack(&self, f: &FeedbackGain<T>, theta: T) -> Result<DMatrix<T>> {
        self.check_gain(f)?;
        let d = &f.0 - &self.f_o;
        Ok(symmetrize(&(&self.r * theta - &d * &self.z * d.transpose())))
    }

    /// Smallest eigenvalue of [`slack`](Self::slack).
    pub fn slack_min_eig(&self, f: &FeedbackGain<T>, theta: T) -> Result<T> {
        Ok(lambda_min(&self.slack(f, theta)?))
    }

    pub fn cast<U: Real>(&self) -> EllipsoidRegion<U> {
        let cv = |m: &DMatrix<T>| m.map(|x| U::lit(x.as_f64()));
        EllipsoidRegion {
            f_o: cv(&self.f_o),
            z: cv(&self.z),
            r: cv(&self.r),
            zinv: cv(&self.zinv),
            gamma: U::lit(self.gamma.as_f64()),
            allow_theta_above_one: self.allow_theta_above_one,
        }
    }
}

/// Intermediate quantities `X`, `Y`, `Z` obtained from the certificates.
#[derive(Debug, Clone)]
pub struct EllipsoidFactors<T: Real = f64> {
    pub x: DMatrix<T>,
    pub y: DMatrix<T>,
    pub z: DMatrix<T>,
    pub zinv: DMatrix<T>,
}

pub fn ellipsoid_factors<T: Real>(sol: &SdpSolution<T>) -> Result<EllipsoidFactors<T>> {
    let zhat_inv = spd_inverse(&sol.zhat, "Zhat")?;
    let p_inv = spd_inverse(&sol.p, "P")?;
    let x = symmetrize(&(&sol.xhat + &sol.yhat * &zhat_inv * sol.yhat.transpose()));
    let y = &sol.yhat * &zhat_inv * &sol.p;
    let z = symmetrize(&(&sol.p * &zhat_inv * &sol.p));
    let zinv = symmetrize(&(&p_inv * &sol.zhat * &p_inv));
    Ok(EllipsoidFactors { x, y, z, zinv })
}

/// Radius obtained by completing the square around `F_o = -Y Z^{-1}`:
/// `R = Y Z^{-1} Y^T - X`, which equals `-Xhat`.
pub fn completed_square_radius<T: Real>(f: &EllipsoidFactors<T>) -> DMatrix<T> {
    symmetrize(&(&f.y * &f.zinv * f.y.transpose() - &f.x))
}

/// The alternative radius `Y Z Y^T - X`. Kept only so tests can show it does
/// not certify the region.
pub fn literal_radius<T: Real>(f: &EllipsoidFactors<T>) -> DMatrix<T> {
    symmetrize(&(&f.y * &f.z * f.y.transpose() - &f.x))
}

/// Region center, shape and radius from the certificates.
pub fn derive_ellipsoid<T: Real>(sol: &SdpSolution<T>, gamma: T) -> Result<EllipsoidRegion<T>> {
    let p_inv = spd_inverse(&sol.p, "P")?;
    let factors = ellipsoid_factors(sol)?;
    let f_o = -(&sol.yhat * &p_inv);
    let r = completed_square_radius(&factors);
    EllipsoidRegion::new(f_o, factors.z, r, gamma)
}

/// `lambda_min(theta R - (F - F_o) Z (F - F_o)^T) >= -tol`.
pub fn membership<T: Real>(
    region: &EllipsoidRegion<T>,
    f: &FeedbackGain<T>,
    theta: T,
    tol: T,
) -> Result<bool> {
    region.check_theta(theta)?;
    Ok(region.slack_min_eig(f, theta)? >= -tol)
}

/// `[[theta R, F - F_o], [(F - F_o)^T, Z^{-1}]]`.
pub fn schur_constraint<T: Real>(
    region: &EllipsoidRegion<T>,
    f: &FeedbackGain<T>,
    theta: T,
) -> Result<DMatrix<T>> {
    region.check_gain(f)?;
    if !(theta >= T::zero()) {
        return Err(Error::InvalidArgument("theta must be >= 0".into()));
    }
    let (m, n) = (region.m(), region.n());
    let d = &f.0 - &region.f_o;
    let mut e = DMatrix::zeros(m + n, m + n);
    e.view_mut((0, 0), (m, m)).copy_from(&(&region.r * theta));
    e.view_mut((0, m), (m, n)).copy_from(&d);
    e.view_mut((m, 0), (n, m)).copy_from(&d.transpose());
    e.view_mut((m, m), (n, n)).copy_from(&region.zinv);
    Ok(e)
}

/// `F_o + sqrt(theta) R^{1/2} U Z^{-1/2}`; on the boundary iff `sigma_max(U) = 1`.
pub fn sample_boundary<T: Real>(
    region: &EllipsoidRegion<T>,
    theta: T,
    u: &DMatrix<T>,
) -> Result<FeedbackGain<T>> {
    region.check_theta(theta)?;
    if u.shape() != region.f_o.shape() {
        return Err(Error::Dimension("U must have the shape of F".into()));
    }
    if spectral_norm(u) > T::one() + T::lit(1e-12) {
        return Err(Error::InvalidArgument("sigma_max(U) must be <= 1".into()));
    }
    let tol = T::lit(1e-9) * (T::one() + spectral_norm(&region.r));
    let r_half = psd_sqrt(&region.r, tol, "R")?;
    let z_inv_half = pd_inv_sqrt(&region.z, "Z")?;
    Ok(FeedbackGain(
        &region.f_o + r_half * u * z_inv_half * theta.sqrt(),
    ))
}
