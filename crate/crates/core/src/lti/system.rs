use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::scalar::Real;

/// Continuous-time plant
/// `dx = A x + B u + Bv v`, `y = C x + Dgu u + Dgv v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem<T: Real = f64> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    bv: DMatrix<T>,
    c: DMatrix<T>,
    dgu: DMatrix<T>,
    dgv: DMatrix<T>,
}

fn check_shape<T: Real>(
    name: &'static str,
    m: &DMatrix<T>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(Error::NonFinite(name));
    }
    Ok(())
}

impl<T: Real> StateSpaceSystem<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        bv: DMatrix<T>,
        c: DMatrix<T>,
        dgu: DMatrix<T>,
        dgv: DMatrix<T>,
    ) -> Result<Self> {
        let n = a.nrows();
        let (m, mv, p) = (b.ncols(), bv.ncols(), c.nrows());
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, m)?;
        check_shape("Bv", &bv, n, mv)?;
        check_shape("C", &c, p, n)?;
        check_shape("Dgu", &dgu, p, m)?;
        check_shape("Dgv", &dgv, p, mv)?;
        Ok(Self { a, b, bv, c, dgu, dgv })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }
    pub fn bv(&self) -> &DMatrix<T> {
        &self.bv
    }
    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }
    pub fn dgu(&self) -> &DMatrix<T> {
        &self.dgu
    }
    pub fn dgv(&self) -> &DMatrix<T> {
        &self.dgv
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Control inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Disturbance inputs.
    pub fn mv(&self) -> usize {
        self.bv.ncols()
    }
    /// Performance outputs.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// Same plant with the disturbance map `Bv` scaled by `factor`.
    pub fn with_scaled_bv(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.bv *= factor;
        out
    }

    pub fn cast<U: Real>(&self) -> StateSpaceSystem<U> {
        let cv = |m: &DMatrix<T>| m.map(|x| U::lit(x.as_f64()));
        StateSpaceSystem {
            a: cv(&self.a),
            b: cv(&self.b),
            bv: cv(&self.bv),
            c: cv(&self.c),
            dgu: cv(&self.dgu),
            dgv: cv(&self.dgv),
        }
    }
}

/// Static state feedback `u = F x`, `F` is m x n.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain<T: Real = f64>(pub DMatrix<T>);

impl<T: Real> FeedbackGain<T> {
    pub fn new(f: DMatrix<T>) -> Result<Self> {
        if !all_finite(&f) {
            return Err(Error::NonFinite("F"));
        }
        Ok(Self(f))
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self(DMatrix::zeros(m, n))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    /// Number of exactly nonzero entries.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != T::zero()).count()
    }
}

/// Closed-loop realization of the disturbance-to-output map under `u = F x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopSystem<T: Real = f64> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl<T: Real> ClosedLoopSystem<T> {
    /// Builds a realization directly, checking only dimensions.
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        check_shape("Acl", &a, n, n)?;
        check_shape("Bcl", &b, n, b.ncols())?;
        check_shape("Ccl", &c, c.nrows(), n)?;
        check_shape("Dcl", &d, c.nrows(), b.ncols())?;
        Ok(Self { a, b, c, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `T^{-1} A T`, `T^{-1} B`, `C T`, `D`.
    pub fn similarity(&self, t: &DMatrix<T>) -> Result<Self> {
        let ti = t.clone().try_inverse().ok_or(Error::Singular("T"))?;
        Ok(Self {
            a: &ti * &self.a * t,
            b: &ti * &self.b,
            c: &self.c * t,
            d: self.d.clone(),
        })
    }
}

pub fn close_loop<T: Real>(
    sys: &StateSpaceSystem<T>,
    f: &FeedbackGain<T>,
) -> Result<ClosedLoopSystem<T>> {
    if f.shape() != (sys.m(), sys.n()) {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, plant needs {}x{}",
            f.shape().0,
            f.shape().1,
            sys.m(),
            sys.n()
        )));
    }
    Ok(ClosedLoopSystem {
        a: &sys.a + &sys.b * &f.0,
        b: sys.bv.clone(),
        c: &sys.c + &sys.dgu * &f.0,
        d: sys.dgv.clone(),
    })
}

/// Eigenvalues of a general real square matrix as (re, im) pairs.
pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<(T, T)>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("eigenvalues need a square matrix".into()));
    }
    if !all_finite(m) {
        return Err(Error::NonFinite("matrix"));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let n = m.nrows();
    let mut a: Vec<f64> = m.iter().map(|x| x.as_f64()).collect();
    let (mut wr, mut wi) = (vec![0.0; n], vec![0.0; n]);
    let (mut vl, mut vr) = ([0.0], [0.0]);
    let mut work = vec![0.0; 4 * n.max(1)];
    let mut info = 0;
    let dim = n as i32;
    // SAFETY: buffer sizes match the LAPACK contract for jobvl = jobvr = 'N'.
    unsafe {
        lapack::dgeev(
            b'N', b'N', dim, &mut a, dim, &mut wr, &mut wi, &mut vl, 1, &mut vr, 1, &mut work, 4 * dim.max(1),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Eigen(format!("dgeev failed with info = {info}")));
    }
    Ok(wr.into_iter().zip(wi).map(|(re, im)| (T::lit(re), T::lit(im))).collect())
}

/// Largest real part over the spectrum of `m`.
pub fn spectral_abscissa<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(eigenvalues(m)?
        .into_iter()
        .fold(-T::infinity(), |a, (re, _)| if re > a { re } else { a }))
}

/// True iff every eigenvalue of `m` has real part below `-margin`.
pub fn is_hurwitz<T: Real>(m: &DMatrix<T>, margin: T) -> Result<bool> {
    if margin < T::zero() {
        return Err(Error::InvalidArgument("Hurwitz margin must be >= 0".into()));
    }
    Ok(spectral_abscissa(m)? < -margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_gain_is_open_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = StateSpaceSystem::new(
            random(&mut rng, 3, 3),
            random(&mut rng, 3, 2),
            random(&mut rng, 3, 1),
            random(&mut rng, 2, 3),
            random(&mut rng, 2, 2),
            random(&mut rng, 2, 1),
        )
        .unwrap();
        let cl = close_loop(&sys, &FeedbackGain::zeros(2, 3)).unwrap();
        assert_eq!(&cl.a, sys.a());
        assert_eq!(&cl.c, sys.c());
        assert_eq!(&cl.b, sys.bv());
        assert_eq!(&cl.d, sys.dgv());
    }

    #[test]
    fn scalar_closed_loop() {
        let sys = StateSpaceSystem::new(
            scalar(-1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(0.0),
            scalar(0.0),
        )
        .unwrap();
        let cl = close_loop(&sys, &FeedbackGain(scalar(-2.0))).unwrap();
        assert_eq!(cl.a[(0, 0)], -3.0);
    }

    #[test]
    fn closed_loop_matches_entrywise_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, m, p) = (4, 3, 2);
        let a = random(&mut rng, n, n);
        let b = random(&mut rng, n, m);
        let c = random(&mut rng, p, n);
        let dgu = random(&mut rng, p, m);
        let f = random(&mut rng, m, n);
        let sys = StateSpaceSystem::new(
            a.clone(),
            b.clone(),
            random(&mut rng, n, 1),
            c.clone(),
            dgu.clone(),
            random(&mut rng, p, 1),
        )
        .unwrap();
        let cl = close_loop(&sys, &FeedbackGain(f.clone())).unwrap();
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..m).map(|k| b[(i, k)] * f[(k, j)]).sum();
                assert!((cl.a[(i, j)] - (a[(i, j)] + s)).abs() < 1e-14);
            }
        }
        for i in 0..p {
            for j in 0..n {
                let s: f64 = (0..m).map(|k| dgu[(i, k)] * f[(k, j)]).sum();
                assert!((cl.c[(i, j)] - (c[(i, j)] + s)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let bad = StateSpaceSystem::new(
            DMatrix::<f64>::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(bad, Err(Error::Dimension(_))));
        let sys = StateSpaceSystem::new(
            scalar(-1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(0.0),
            scalar(0.0),
        )
        .unwrap();
        assert!(close_loop(&sys, &FeedbackGain::zeros(2, 1)).is_err());
        assert!(FeedbackGain::new(scalar(f64::NAN)).is_err());
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&(-DMatrix::<f64>::identity(3, 3)), 0.0).unwrap());
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(!is_hurwitz(&rot, 0.0).unwrap());
        let tri = DMatrix::from_row_slice(2, 2, &[-1.0, 10.0, 0.0, -0.1]);
        assert!(is_hurwitz(&tri, 0.0).unwrap());
        assert!(!is_hurwitz(&tri, 0.5).unwrap());
        assert!(is_hurwitz(&(-DMatrix::<f32>::identity(2, 2)), 0.0).unwrap());
    }
}
