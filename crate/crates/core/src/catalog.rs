//! Item catalogs and their CSV form.

use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};

/// N items with d-dimensional features and, in simulation, ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemCatalog {
    ids: Vec<u64>,
    dim: usize,
    /// Row-major, `n_items * dim`.
    features: Vec<f64>,
    true_theta: Option<Vec<f64>>,
    revenues: Option<Vec<f64>>,
}

impl ItemCatalog {
    /// Build a catalog from feature rows. Item ids default to `0..N`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("catalog needs at least one item"));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(invalid("feature dimension must be positive"));
        }
        let mut features = Vec::with_capacity(n * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(invalid(format!("row {i} has {} features, expected {dim}", row.len())));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("row {i} has a non-finite feature")));
            }
            features.extend(row);
        }
        Ok(Self {
            ids: (0..n as u64).collect(),
            dim,
            features,
            true_theta: None,
            revenues: None,
        })
    }

    pub fn with_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.n_items() {
            return Err(invalid("id count differs from item count"));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.n_items() {
            return Err(invalid(format!(
                "theta has {} entries for {} items",
                theta.len(),
                self.n_items()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(invalid("theta must be finite"));
        }
        self.true_theta = Some(theta);
        Ok(self)
    }

    pub fn with_revenues(mut self, revenues: Vec<f64>) -> Result<Self> {
        if revenues.len() != self.n_items() {
            return Err(invalid("revenue count differs from item count"));
        }
        if revenues.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(invalid("revenues must be finite and positive"));
        }
        self.revenues = Some(revenues);
        Ok(self)
    }

    pub fn n_items(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn true_theta(&self) -> Option<&[f64]> {
        self.true_theta.as_deref()
    }

    pub fn revenues(&self) -> Option<&[f64]> {
        self.revenues.as_deref()
    }

    /// `x_i^T gamma`.
    pub fn linear_score(&self, i: usize, gamma: &[f64]) -> f64 {
        dot(self.features(i), gamma)
    }

    pub fn linear_scores(&self, gamma: &[f64]) -> Vec<f64> {
        (0..self.n_items()).map(|i| self.linear_score(i, gamma)).collect()
    }

    /// True when every feature row has Euclidean norm at most one.
    pub fn has_unit_bounded_features(&self) -> bool {
        (0..self.n_items()).all(|i| dot(self.features(i), self.features(i)) <= 1.0 + 1e-12)
    }

    /// Check that theta lies in `(lo, hi)`.
    pub fn check_theta_range(&self, lo: f64, hi: f64) -> Result<()> {
        let theta = self
            .true_theta
            .as_ref()
            .ok_or_else(|| invalid("catalog has no ground-truth theta"))?;
        match theta.iter().position(|t| !(*t > lo && *t < hi)) {
            Some(i) => Err(invalid(format!("theta[{i}] = {} outside ({lo}, {hi})", theta[i]))),
            None => Ok(()),
        }
    }

    /// Replace item `i` in place (cold-start rotation).
    pub(crate) fn replace_item(&mut self, i: usize, id: u64, features: &[f64], theta: Option<f64>) {
        self.ids[i] = id;
        self.features[i * self.dim..(i + 1) * self.dim].copy_from_slice(features);
        if let (Some(all), Some(t)) = (self.true_theta.as_mut(), theta) {
            all[i] = t;
        }
    }

    /// Reorder items so that new item `j` is old item `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_items();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("not a permutation"));
        }
        let rows = perm.iter().map(|&p| self.features(p).to_vec()).collect();
        let mut out = Self::new(rows)?.with_ids(perm.iter().map(|&p| self.ids[p]).collect())?;
        if let Some(t) = &self.true_theta {
            out = out.with_theta(perm.iter().map(|&p| t[p]).collect())?;
        }
        if let Some(r) = &self.revenues {
            out = out.with_revenues(perm.iter().map(|&p| r[p]).collect())?;
        }
        Ok(out)
    }

    /// Read `item_id,x0,...,x{d-1}[,theta][,revenue]`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        if cols.first() != Some(&"item_id") {
            return Err(Error::Config("first column must be item_id".into()));
        }
        let mut dim = 0;
        while cols.get(1 + dim) == Some(&format!("x{dim}").as_str()) {
            dim += 1;
        }
        if dim == 0 {
            return Err(Error::Config("no feature columns x0.. found".into()));
        }
        let mut next = 1 + dim;
        let has_theta = cols.get(next) == Some(&"theta");
        if has_theta {
            next += 1;
        }
        let has_revenue = cols.get(next) == Some(&"revenue");
        if has_revenue {
            next += 1;
        }
        if next != cols.len() {
            return Err(Error::Config(format!("unexpected column {:?}", cols[next])));
        }

        let (mut ids, mut rows, mut theta, mut revenue) = (vec![], vec![], vec![], vec![]);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Config(format!("row {line}: missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("row {line}, column {k}: {e}")))
            };
            ids.push(
                rec.get(0)
                    .unwrap_or_default()
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Config(format!("row {line}: bad item_id: {e}")))?,
            );
            rows.push((1..=dim).map(num).collect::<Result<Vec<_>>>()?);
            if has_theta {
                theta.push(num(1 + dim)?);
            }
            if has_revenue {
                revenue.push(num(1 + dim + usize::from(has_theta))?);
            }
        }
        let mut cat = Self::new(rows)?.with_ids(ids)?;
        if has_theta {
            cat = cat.with_theta(theta)?;
        }
        if has_revenue {
            cat = cat.with_revenues(revenue)?;
        }
        Ok(cat)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec!["item_id".to_string()];
        header.extend((0..self.dim).map(|k| format!("x{k}")));
        if self.true_theta.is_some() {
            header.push("theta".into());
        }
        if self.revenues.is_some() {
            header.push("revenue".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n_items() {
            let mut rec = vec![self.ids[i].to_string()];
            rec.extend(self.features(i).iter().map(|x| x.to_string()));
            if let Some(t) = &self.true_theta {
                rec.push(t[i].to_string());
            }
            if let Some(r) = &self.revenues {
                rec.push(r[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
