//! Greedy-action oracles: top-K selection and MNL assortment optimization.
//!
//! Ties are broken toward the smaller item index everywhere.

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{invalid, Error, Result};

/// Indices of the `k` largest values, ordered by value descending then index ascending.
fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.truncate(k);
    idx.sort_unstable_by(cmp);
    idx
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k > n {
        return Err(invalid(format!("K = {k} exceeds N = {n}")));
    }
    if k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    Ok(())
}

/// The `k` items with the largest `theta`, as an unordered subset (sorted by index).
pub fn top_k(theta: &[f64], k: usize) -> Result<Action> {
    check_k(theta.len(), k)?;
    let mut items = top_indices(theta, k);
    items.sort_unstable();
    Action::subset(items, theta.len(), k)
}

/// The `k` items with the largest `theta`, ranked by `theta` descending.
pub fn rank_top_k(theta: &[f64], k: usize) -> Result<Action> {
    check_k(theta.len(), k)?;
    Action::ranked(top_indices(theta, k), theta.len(), k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssortmentSolverConfig {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for AssortmentSolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 200,
        }
    }
}

/// Expected MNL revenue `sum_A eta v / (1 + sum_A v)`.
pub fn assortment_revenue(items: &[usize], v: &[f64], eta: &[f64]) -> f64 {
    let num: f64 = items.iter().map(|&i| eta[i] * v[i]).sum();
    let den: f64 = 1.0 + items.iter().map(|&i| v[i]).sum::<f64>();
    num / den
}

/// Best assortment at candidate revenue `lambda`: the top-K strictly positive
/// `v_i (eta_i - lambda)`, plus its objective value.
fn best_at(lambda: f64, v: &[f64], eta: &[f64], k: usize) -> (Vec<usize>, f64) {
    let w: Vec<f64> = v.iter().zip(eta).map(|(v, e)| v * (e - lambda)).collect();
    let mut set: Vec<usize> = top_indices(&w, k).into_iter().filter(|&i| w[i] > 0.0).collect();
    let total = set.iter().map(|&i| w[i]).sum();
    set.sort_unstable();
    (set, total)
}

/// Revenue-maximizing assortment of size at most `k`.
///
/// Bisection on the revenue level `lambda` brackets the fixed point
/// `lambda = max_A sum_A v_i (eta_i - lambda)`; a few Dinkelbach steps from
/// the bracket then land on the optimal set exactly.
pub fn optimal_assortment(v: &[f64], eta: &[f64], k: usize, config: &AssortmentSolverConfig) -> Result<Action> {
    let n = v.len();
    if eta.len() != n {
        return Err(invalid("v and eta lengths differ"));
    }
    check_k(n, k)?;
    if v.iter().chain(eta).any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid("utilities and revenues must be finite and positive"));
    }
    if !(config.tolerance > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let (mut lo, mut hi) = (0.0, eta.iter().copied().fold(0.0, f64::max));
    let mut iter = 0;
    while hi - lo > config.tolerance {
        if iter == config.max_iter {
            return Err(Error::SearchExhausted {
                iterations: iter,
                lo,
                hi,
            });
        }
        let mid = 0.5 * (lo + hi);
        if best_at(mid, v, eta, k).1 >= mid {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
    }
    let (mut set, _) = best_at(lo, v, eta, k);
    let mut value = assortment_revenue(&set, v, eta);
    loop {
        if iter == config.max_iter {
            return Err(Error::SearchExhausted {
                iterations: iter,
                lo,
                hi,
            });
        }
        iter += 1;
        let (next, _) = best_at(value, v, eta, k);
        let next_value = assortment_revenue(&next, v, eta);
        if next_value > value {
            set = next;
            value = next_value;
        } else {
            break;
        }
    }
    Action::subset(set, n, k)
}
