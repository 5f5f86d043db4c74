use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A slate offered to the environment. Indices are 0-based item positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    /// Unordered subset (semi-bandit, MNL assortment).
    Subset(Vec<usize>),
    /// Ranked list, top position first (cascade).
    Ranked(Vec<usize>),
}

fn check(items: &[usize], n_items: usize, max_len: usize) -> Result<()> {
    if items.len() > max_len {
        return Err(invalid(format!("action has {} items, limit is {max_len}", items.len())));
    }
    let mut seen = vec![false; n_items];
    for &i in items {
        if i >= n_items {
            return Err(invalid(format!("item {i} out of range for {n_items} items")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(invalid(format!("item {i} repeated")));
        }
    }
    Ok(())
}

impl Action {
    pub fn subset(items: Vec<usize>, n_items: usize, max_len: usize) -> Result<Self> {
        check(&items, n_items, max_len)?;
        Ok(Self::Subset(items))
    }

    pub fn ranked(items: Vec<usize>, n_items: usize, max_len: usize) -> Result<Self> {
        check(&items, n_items, max_len)?;
        Ok(Self::Ranked(items))
    }

    pub fn items(&self) -> &[usize] {
        match self {
            Self::Subset(v) | Self::Ranked(v) => v,
        }
    }

    pub fn len(&self) -> usize {
        self.items().len()
    }

    pub fn is_empty(&self) -> bool {
        self.items().is_empty()
    }
}

/// Feedback returned for one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    /// One real reward per chosen item, in action order.
    SemiBandit(Vec<f64>),
    /// 0-based position of the click in the ranked list; `None` means no click
    /// (every position was examined).
    Cascade { click: Option<usize> },
    /// Purchases per offered item over one epoch, in action order, and the
    /// number of rounds the epoch lasted (purchases plus the final no-purchase).
    MnlEpoch { purchases: Vec<u64>, length: u64 },
}
