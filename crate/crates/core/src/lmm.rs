//! Exact posterior machinery for the linear mixed model
//!
//! ```text
//! gamma   ~ N(mu_gamma, Sigma_gamma)
//! theta_i ~ N(x_i^T gamma, sigma1^2)
//! Y_it    ~ N(theta_i, sigma2^2)
//! ```
//!
//! Everything here works from the collapsed per-item statistics
//! `(n(i), S(i))`; the response vector is never materialised. With
//! `w_i = n(i) / (sigma2^2 + sigma1^2 n(i))` the posterior of gamma is
//!
//! ```text
//! precision = Sigma_gamma^{-1} + sum_i w_i x_i x_i^T
//! info      = Sigma_gamma^{-1} mu_gamma + sum_i S(i) / (sigma2^2 + sigma1^2 n(i)) x_i
//! ```
//!
//! The information vector follows from `Phi^T V^{-1} Y` with
//! `V = sigma1^2 Z^T Z + sigma2^2 I` block diagonal per item: each block
//! `sigma2^2 I + sigma1^2 11^T` maps a vector of sum `S` to total
//! `S / (sigma2^2 + sigma1^2 n)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::belief::{chol_logdet, cholesky_jittered, GaussianBelief};
use crate::catalog::ItemCatalog;
use crate::error::{invalid, Error, Result};
use crate::history::{ProblemKind, SufficientStats};

/// Largest catalog accepted by the dense N x N marginal.
pub const DENSE_ITEM_LIMIT: usize = 200;

/// Hyperparameters of the linear mixed model.
///
/// `sigma1 = 0` is allowed and gives the feature-determined model
/// `theta_i = x_i^T gamma`. `sigma2 = 0` (noise-free rewards) is accepted for
/// simulation, but the gamma posterior routines then refuse to run.
#[derive(Debug, Clone)]
pub struct LmmSpec {
    mu_gamma: DVector<f64>,
    sigma_gamma: DMatrix<f64>,
    prior: GaussianBelief,
    sigma_gamma_logdet: f64,
    sigma_gamma_lambda_max: f64,
    sigma1: f64,
    sigma2: f64,
}

impl LmmSpec {
    pub fn new(mu_gamma: Vec<f64>, sigma_gamma: DMatrix<f64>, sigma1: f64, sigma2: f64) -> Result<Self> {
        let d = mu_gamma.len();
        if d == 0 || sigma_gamma.shape() != (d, d) {
            return Err(invalid("prior covariance must be d x d with d = len(mu_gamma)"));
        }
        let scale = sigma_gamma.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (sigma_gamma[(i, j)] - sigma_gamma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(invalid("prior covariance is not symmetric"));
                }
            }
        }
        let eig = SymmetricEigen::new(sigma_gamma.clone());
        let lambda_min = eig.eigenvalues.min();
        if !(lambda_min > 0.0) {
            return Err(invalid("prior covariance is not positive definite"));
        }
        if !(sigma1 >= 0.0 && sigma1.is_finite()) {
            return Err(invalid("sigma1 must be finite and non-negative"));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(invalid("sigma2 must be finite and non-negative"));
        }
        let mu = DVector::from_vec(mu_gamma);
        let prior = GaussianBelief::from_moments(mu.clone(), sigma_gamma.clone())?;
        let sigma_gamma_logdet = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        Ok(Self {
            mu_gamma: mu,
            sigma_gamma,
            prior,
            sigma_gamma_logdet,
            sigma_gamma_lambda_max: eig.eigenvalues.max(),
            sigma1,
            sigma2,
        })
    }

    /// `Q(gamma) = N(0, I / d)`.
    pub fn isotropic(dim: usize, sigma1: f64, sigma2: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], DMatrix::identity(dim, dim) / dim as f64, sigma1, sigma2)
    }

    pub fn with_sigma1(&self, sigma1: f64) -> Result<Self> {
        if !(sigma1 >= 0.0 && sigma1.is_finite()) {
            return Err(invalid("sigma1 must be finite and non-negative"));
        }
        Ok(Self { sigma1, ..self.clone() })
    }

    pub fn dim(&self) -> usize {
        self.mu_gamma.len()
    }

    pub fn mu_gamma(&self) -> &DVector<f64> {
        &self.mu_gamma
    }

    pub fn sigma_gamma(&self) -> &DMatrix<f64> {
        &self.sigma_gamma
    }

    pub fn prior(&self) -> &GaussianBelief {
        &self.prior
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Largest eigenvalue of the prior covariance.
    pub fn lambda_max(&self) -> f64 {
        self.sigma_gamma_lambda_max
    }

    /// `lambda_max(Sigma_gamma) + sigma1^2`, the ceiling on any per-item
    /// marginal variance when features have norm at most one.
    pub fn item_variance_bound(&self) -> f64 {
        self.sigma_gamma_lambda_max + self.sigma1 * self.sigma1
    }

    /// `(d/2) log(1 + N lambda_max / (sigma1^2 + sigma2^2 / T))`.
    pub fn gamma_information_bound(&self, n_items: usize, horizon: u64) -> f64 {
        let denom = self.sigma1.powi(2) + self.sigma2.powi(2) / horizon.max(1) as f64;
        0.5 * self.dim() as f64 * (n_items as f64 * self.sigma_gamma_lambda_max / denom).ln_1p()
    }

    /// `(1/2) log(1 + (sigma1^2 / sigma2^2) T)`.
    pub fn theta_information_bound(&self, horizon: u64) -> f64 {
        theta_information_gain(self, horizon)
    }
}

/// Per-item Gaussian summaries (means and variances).
#[derive(Debug, Clone, PartialEq)]
pub struct PerItemGaussian {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

fn check_inputs(spec: &LmmSpec, stats: &SufficientStats, catalog: &ItemCatalog) -> Result<()> {
    if stats.kind() != ProblemKind::SemiBandit {
        return Err(invalid("LMM posteriors need Gaussian (semi-bandit) statistics"));
    }
    if stats.n_items() != catalog.n_items() {
        return Err(invalid("statistics and catalog disagree on item count"));
    }
    if catalog.dim() != spec.dim() {
        return Err(invalid("feature dimension differs from prior dimension"));
    }
    if spec.sigma2 == 0.0 {
        return Err(invalid("posterior over gamma needs sigma2 > 0"));
    }
    Ok(())
}

/// Posterior of gamma given the history, in information form.
pub fn posterior_gamma(spec: &LmmSpec, stats: &SufficientStats, catalog: &ItemCatalog) -> Result<GaussianBelief> {
    check_inputs(spec, stats, catalog)?;
    let d = spec.dim();
    let mut precision = spec.prior.precision().clone();
    let mut info = spec.prior.information().clone();
    let (s1sq, s2sq) = (spec.sigma1 * spec.sigma1, spec.sigma2 * spec.sigma2);
    for i in stats.observed_items() {
        let n = stats.pulls(i) as f64;
        let denom = s2sq + s1sq * n;
        let w = n / denom;
        let v = stats.reward_sum(i) / denom;
        let x = catalog.features(i);
        for a in 0..d {
            info[a] += v * x[a];
            for b in 0..=a {
                precision[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            precision[(b, a)] = precision[(a, b)];
        }
    }
    GaussianBelief::from_information(precision, info)
}

/// Conditional posterior of one item given gamma, from `(n, S, x^T gamma)`.
#[inline]
pub fn item_posterior_given_gamma(spec: &LmmSpec, pulls: u64, reward_sum: f64, score: f64) -> (f64, f64) {
    if spec.sigma1 == 0.0 {
        return (score, 0.0);
    }
    if spec.sigma2 == 0.0 && pulls > 0 {
        return (reward_sum / pulls as f64, 0.0);
    }
    let p1 = 1.0 / (spec.sigma1 * spec.sigma1);
    let p2 = 1.0 / (spec.sigma2 * spec.sigma2);
    let var = 1.0 / (p1 + p2 * pulls as f64);
    (var * (p1 * score + p2 * reward_sum), var)
}

/// Posterior of every theta_i given gamma; items are independent.
pub fn posterior_theta_given_gamma(
    spec: &LmmSpec,
    stats: &SufficientStats,
    catalog: &ItemCatalog,
    gamma: &[f64],
) -> Result<PerItemGaussian> {
    check_inputs(spec, stats, catalog)?;
    if gamma.len() != spec.dim() {
        return Err(invalid("gamma has the wrong dimension"));
    }
    let (mean, variance) = (0..catalog.n_items())
        .map(|i| {
            item_posterior_given_gamma(
                spec,
                stats.pulls(i),
                stats.reward_sum(i),
                catalog.linear_score(i, gamma),
            )
        })
        .unzip();
    Ok(PerItemGaussian { mean, variance })
}

/// Marginal posterior moments of each theta_i with gamma integrated out.
///
/// Given gamma the conditional mean is `c_i x_i^T gamma + var_i S(i) / sigma2^2`
/// with `c_i = var_i / sigma1^2`, so the marginal variance is
/// `var_i + c_i^2 x_i^T Sigma_post x_i`.
pub fn marginal_item_posterior(
    spec: &LmmSpec,
    stats: &SufficientStats,
    catalog: &ItemCatalog,
) -> Result<PerItemGaussian> {
    let belief = posterior_gamma(spec, stats, catalog)?;
    let mu = belief.mean()?;
    let cov = belief.covariance()?;
    let p2 = 1.0 / (spec.sigma2 * spec.sigma2);
    let mut out = PerItemGaussian {
        mean: vec![],
        variance: vec![],
    };
    for i in 0..catalog.n_items() {
        let x = DVector::from_column_slice(catalog.features(i));
        let spread = (cov * &x).dot(&x);
        let (mean, var) = if spec.sigma1 == 0.0 {
            (x.dot(mu), spread)
        } else {
            let (_, var) = item_posterior_given_gamma(spec, stats.pulls(i), 0.0, 0.0);
            let c = var / (spec.sigma1 * spec.sigma1);
            (c * x.dot(mu) + var * p2 * stats.reward_sum(i), var + c * c * spread)
        };
        out.mean.push(mean);
        out.variance.push(var);
    }
    Ok(out)
}

/// Dense joint posterior of theta (N-dimensional).
#[derive(Debug, Clone)]
pub struct ThetaMarginal {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Diagonal of the posterior precision; grows by `1 / sigma2^2` per pull.
    pub precision_diagonal: Vec<f64>,
}

/// Joint posterior of theta via the N x N information form
/// `(Phi Sigma_gamma Phi^T + sigma1^2 I)^{-1} + diag(n) / sigma2^2`.
pub fn posterior_theta_marginal(
    spec: &LmmSpec,
    stats: &SufficientStats,
    catalog: &ItemCatalog,
) -> Result<ThetaMarginal> {
    check_inputs(spec, stats, catalog)?;
    let n = catalog.n_items();
    if n > DENSE_ITEM_LIMIT {
        return Err(Error::DenseLimit {
            limit: DENSE_ITEM_LIMIT,
            requested: n,
        });
    }
    if spec.sigma1 == 0.0 {
        return Err(invalid("dense marginal needs sigma1 > 0"));
    }
    let phi = DMatrix::from_fn(n, spec.dim(), |i, k| catalog.features(i)[k]);
    let mut prior_cov = &phi * &spec.sigma_gamma * phi.transpose();
    for i in 0..n {
        prior_cov[(i, i)] += spec.sigma1 * spec.sigma1;
    }
    let prior_mean = &phi * &spec.mu_gamma;
    let prior_prec = cholesky_jittered(&prior_cov, "theta prior covariance")?.inverse();
    let p2 = 1.0 / (spec.sigma2 * spec.sigma2);
    let mut precision = prior_prec.clone();
    let mut info = &prior_prec * &prior_mean;
    for i in 0..n {
        precision[(i, i)] += p2 * stats.pulls(i) as f64;
        info[i] += p2 * stats.reward_sum(i);
    }
    let precision_diagonal = precision.diagonal().iter().copied().collect();
    let chol = cholesky_jittered(&precision, "theta posterior precision")?;
    let mean = chol.solve(&info);
    let mut covariance = chol.inverse();
    crate::belief::symmetrize(&mut covariance);
    Ok(ThetaMarginal {
        mean,
        covariance,
        precision_diagonal,
    })
}

/// `(1/2) log det(Sigma_gamma * posterior precision)`: information the
/// history carries about gamma.
pub fn gamma_information_gain(spec: &LmmSpec, stats: &SufficientStats, catalog: &ItemCatalog) -> Result<f64> {
    let post = posterior_gamma(spec, stats, catalog)?;
    Ok((0.5 * (post.precision_logdet()? + spec.sigma_gamma_logdet)).max(0.0))
}

/// `(1/2) log(1 + (sigma1^2 / sigma2^2) n)`.
pub fn theta_information_gain(spec: &LmmSpec, pulls: u64) -> f64 {
    0.5 * (spec.sigma1 * spec.sigma1 / (spec.sigma2 * spec.sigma2) * pulls as f64).ln_1p()
}

/// Log marginal likelihood of the observed rewards with theta and gamma
/// integrated out, up to terms that do not involve `sigma1`.
///
/// Only the per-item means carry information about `sigma1`:
/// `ybar ~ N(Phi mu, Phi Sigma Phi^T + D)`, `D = diag(sigma1^2 + sigma2^2 / n)`,
/// evaluated in d-space through the determinant lemma and Woodbury.
pub fn log_marginal_likelihood(spec: &LmmSpec, stats: &SufficientStats, catalog: &ItemCatalog) -> Result<f64> {
    check_inputs(spec, stats, catalog)?;
    let post = posterior_gamma(spec, stats, catalog)?;
    let d = spec.dim();
    let mut logdet_d = 0.0;
    let mut quad = 0.0;
    let mut proj = DVector::<f64>::zeros(d);
    let mut m = 0usize;
    let s1sq = spec.sigma1 * spec.sigma1;
    let s2sq = spec.sigma2 * spec.sigma2;
    for i in stats.observed_items() {
        let n = stats.pulls(i) as f64;
        let di = s1sq + s2sq / n;
        let r = stats.reward_sum(i) / n - catalog.linear_score(i, spec.mu_gamma.as_slice());
        logdet_d += di.ln();
        quad += r * r / di;
        for (k, x) in catalog.features(i).iter().enumerate() {
            proj[k] += x * r / di;
        }
        m += 1;
    }
    let chol = cholesky_jittered(post.precision(), "marginal likelihood")?;
    let correction = proj.dot(&chol.solve(&proj));
    let logdet = logdet_d + spec.sigma_gamma_logdet + chol_logdet(&chol);
    Ok(-0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad - correction))
}
