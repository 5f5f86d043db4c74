//! Multivariate Gaussian beliefs kept in information form.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Cholesky factorisation with one bounded retry: on failure a jitter of
/// `1e-10 * trace / d` is added to the diagonal, then failure is final.
pub(crate) fn cholesky_jittered(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let d = m.nrows().max(1) as f64;
    let jitter = 1e-10 * m.trace().abs() / d;
    let mut j = m.clone();
    for k in 0..m.nrows() {
        j[(k, k)] += jitter;
    }
    Cholesky::new(j).ok_or(Error::NotPositiveDefinite { context })
}

pub(crate) fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cov_factor: DMatrix<f64>,
    precision_logdet: f64,
}

/// Gaussian belief stored as precision matrix and information vector
/// (`precision * mean`). Moments are materialised lazily on first use.
#[derive(Debug, Clone)]
pub struct GaussianBelief {
    precision: DMatrix<f64>,
    info: DVector<f64>,
    moments: OnceLock<Moments>,
}

impl GaussianBelief {
    pub fn from_information(precision: DMatrix<f64>, info: DVector<f64>) -> Result<Self> {
        if !precision.is_square() || precision.nrows() != info.len() || info.is_empty() {
            return Err(invalid("precision must be square and match the information vector"));
        }
        let mut precision = precision;
        symmetrize(&mut precision);
        Ok(Self {
            precision,
            info,
            moments: OnceLock::new(),
        })
    }

    pub fn from_moments(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() != mean.len() {
            return Err(invalid("covariance must be square and match the mean"));
        }
        let chol = cholesky_jittered(&covariance, "belief covariance")?;
        let precision = chol.inverse();
        let info = &precision * &mean;
        Self::from_information(precision, info)
    }

    /// Isotropic `N(0, variance * I)`.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(invalid("variance must be positive"));
        }
        Self::from_information(DMatrix::identity(dim, dim) / variance, DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.info.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn information(&self) -> &DVector<f64> {
        &self.info
    }

    fn moments(&self) -> Result<&Moments> {
        if let Some(m) = self.moments.get() {
            return Ok(m);
        }
        let pchol = cholesky_jittered(&self.precision, "belief precision")?;
        let mean = pchol.solve(&self.info);
        let mut covariance = pchol.inverse();
        symmetrize(&mut covariance);
        let cov_factor = cholesky_jittered(&covariance, "belief covariance")?.unpack();
        let m = Moments {
            mean,
            covariance,
            cov_factor,
            precision_logdet: chol_logdet(&pchol),
        };
        Ok(self.moments.get_or_init(|| m))
    }

    pub fn mean(&self) -> Result<&DVector<f64>> {
        Ok(&self.moments()?.mean)
    }

    pub fn covariance(&self) -> Result<&DMatrix<f64>> {
        Ok(&self.moments()?.covariance)
    }

    /// `log det(precision)`.
    pub fn precision_logdet(&self) -> Result<f64> {
        Ok(self.moments()?.precision_logdet)
    }

    /// Draw `mean + L z` with `L L^T = covariance`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let m = self.moments()?;
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(&m.mean + &m.cov_factor * z)
    }

    /// Log density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let m = self.moments()?;
        let diff = DVector::from_column_slice(x) - &m.mean;
        let quad = (&self.precision * &diff).dot(&diff);
        let d = self.dim() as f64;
        Ok(-0.5 * (quad + d * (2.0 * std::f64::consts::PI).ln() - m.precision_logdet))
    }
}
