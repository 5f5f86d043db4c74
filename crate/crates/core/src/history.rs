//! Interaction histories: incremental sufficient statistics plus the raw
//! event log they are derived from.

use serde::{Deserialize, Serialize};

use crate::action::{Action, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    SemiBandit,
    Cascade,
    Mnl,
}

/// Per-item sufficient statistics.
///
/// `pulls[i]` counts observed values for item `i`. `sums[i]` is the reward
/// sum (semi-bandit), the success count (cascade) or the purchase total
/// (MNL); for MNL `pulls[i]` is the number of completed epochs offering `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    kind: ProblemKind,
    pulls: Vec<u64>,
    sums: Vec<f64>,
}

impl SufficientStats {
    pub fn new(kind: ProblemKind, n_items: usize) -> Self {
        Self {
            kind,
            pulls: vec![0; n_items],
            sums: vec![0.0; n_items],
        }
    }

    /// Build from explicit per-item values.
    pub fn from_parts(kind: ProblemKind, pulls: Vec<u64>, sums: Vec<f64>) -> Result<Self> {
        if pulls.len() != sums.len() {
            return Err(crate::error::invalid("pulls and sums differ in length"));
        }
        for (i, (&n, &s)) in pulls.iter().zip(&sums).enumerate() {
            let ok = match kind {
                ProblemKind::SemiBandit => s.is_finite() && (n > 0 || s == 0.0),
                ProblemKind::Cascade => s >= 0.0 && s <= n as f64 && s.fract() == 0.0,
                ProblemKind::Mnl => s >= 0.0 && s.fract() == 0.0 && (n > 0 || s == 0.0),
            };
            if !ok {
                return Err(crate::error::invalid(format!("inconsistent statistics for item {i}")));
            }
        }
        Ok(Self { kind, pulls, sums })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n_items(&self) -> usize {
        self.pulls.len()
    }

    pub fn pulls(&self, i: usize) -> u64 {
        self.pulls[i]
    }

    pub fn all_pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn total_pulls(&self) -> u64 {
        self.pulls.iter().sum()
    }

    /// Reward sum S(i) (semi-bandit).
    pub fn reward_sum(&self, i: usize) -> f64 {
        self.sums[i]
    }

    pub fn successes(&self, i: usize) -> u64 {
        self.sums[i] as u64
    }

    pub fn failures(&self, i: usize) -> u64 {
        self.pulls[i] - self.successes(i)
    }

    /// Completed epochs L(i) (MNL).
    pub fn epochs(&self, i: usize) -> u64 {
        self.pulls[i]
    }

    /// Purchase total P(i) (MNL).
    pub fn purchases(&self, i: usize) -> u64 {
        self.sums[i] as u64
    }

    /// Items with at least one observation.
    pub fn observed_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.pulls.iter().enumerate().filter(|(_, &n)| n > 0).map(|(i, _)| i)
    }

    pub(crate) fn reset_item(&mut self, i: usize) {
        self.pulls[i] = 0;
        self.sums[i] = 0.0;
    }

    /// Validate an event without mutating anything.
    fn validate(&self, action: &Action, obs: &Observation, position: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::MalformedEvent { position, reason });
        let n = self.n_items();
        if let Some(&i) = action.items().iter().find(|&&i| i >= n) {
            return bad(format!("item {i} out of range for {n} items"));
        }
        match (self.kind, action, obs) {
            (ProblemKind::SemiBandit, Action::Subset(items), Observation::SemiBandit(r)) => {
                if r.len() != items.len() {
                    return bad(format!("{} rewards for {} items", r.len(), items.len()));
                }
                if r.iter().any(|x| !x.is_finite()) {
                    return bad("non-finite reward".into());
                }
            }
            (ProblemKind::Cascade, Action::Ranked(items), Observation::Cascade { click }) => {
                if let Some(c) = click {
                    if *c >= items.len() {
                        return bad(format!("click position {c} beyond list of {}", items.len()));
                    }
                }
            }
            (ProblemKind::Mnl, Action::Subset(items), Observation::MnlEpoch { purchases, length }) => {
                if purchases.len() != items.len() {
                    return bad(format!("{} counts for {} items", purchases.len(), items.len()));
                }
                if *length != 1 + purchases.iter().sum::<u64>() {
                    return bad("epoch length must be 1 + total purchases".into());
                }
            }
            _ => return bad(format!("event does not match problem kind {:?}", self.kind)),
        }
        Ok(())
    }

    /// Fold one event in. `alive(i)` filters which item slots take credit.
    fn apply_filtered(
        &mut self,
        action: &Action,
        obs: &Observation,
        position: usize,
        alive: impl Fn(usize) -> bool,
    ) -> Result<()> {
        self.validate(action, obs, position)?;
        let items = action.items();
        match obs {
            Observation::SemiBandit(rewards) => {
                for (&i, &r) in items.iter().zip(rewards) {
                    if alive(i) {
                        self.pulls[i] += 1;
                        self.sums[i] += r;
                    }
                }
            }
            Observation::Cascade { click } => {
                // Positions after the click were never examined.
                let examined = click.map_or(items.len(), |c| c + 1);
                for (k, &i) in items.iter().take(examined).enumerate() {
                    if alive(i) {
                        self.pulls[i] += 1;
                        if Some(k) == *click {
                            self.sums[i] += 1.0;
                        }
                    }
                }
            }
            Observation::MnlEpoch { purchases, .. } => {
                for (&i, &p) in items.iter().zip(purchases) {
                    if alive(i) {
                        self.pulls[i] += 1;
                        self.sums[i] += p as f64;
                    }
                }
            }
        }
        Ok(())
    }
}

/// One logged interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub action: Action,
    pub observation: Observation,
}

/// Rebuild statistics from an event log.
pub fn replay_statistics(log: &[Event], kind: ProblemKind, n_items: usize) -> Result<SufficientStats> {
    let mut stats = SufficientStats::new(kind, n_items);
    for (pos, ev) in log.iter().enumerate() {
        stats.apply_filtered(&ev.action, &ev.observation, pos, |_| true)?;
    }
    Ok(stats)
}

/// The history H_t: statistics, the log, and the number of elapsed rounds.
#[derive(Debug, Clone)]
pub struct InteractionHistory {
    stats: SufficientStats,
    log: Vec<Event>,
    /// `births[i]` is the log length when slot `i` was last (re)filled.
    births: Vec<usize>,
    rounds: u64,
}

impl InteractionHistory {
    pub fn new(kind: ProblemKind, n_items: usize) -> Self {
        Self {
            stats: SufficientStats::new(kind, n_items),
            log: Vec::new(),
            births: vec![0; n_items],
            rounds: 0,
        }
    }

    pub fn kind(&self) -> ProblemKind {
        self.stats.kind
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    /// Environment rounds elapsed (an MNL epoch counts its full length).
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn n_items(&self) -> usize {
        self.stats.n_items()
    }

    pub fn record(&mut self, action: Action, observation: Observation) -> Result<()> {
        let pos = self.log.len();
        self.stats.apply_filtered(&action, &observation, pos, |_| true)?;
        self.rounds += match &observation {
            Observation::MnlEpoch { length, .. } => *length,
            _ => 1,
        };
        self.log.push(Event { action, observation });
        Ok(())
    }

    /// Account for rounds that produced no usable observation (a truncated
    /// final MNL epoch).
    pub fn advance_rounds(&mut self, rounds: u64) {
        self.rounds += rounds;
    }

    /// Forget everything observed about the listed item slots; they now hold
    /// new items.
    pub fn reset_items(&mut self, slots: &[usize]) {
        for &i in slots {
            self.stats.reset_item(i);
            self.births[i] = self.log.len();
        }
    }

    /// Recompute statistics from the log, honouring slot resets.
    pub fn replay(&self) -> Result<SufficientStats> {
        let mut stats = SufficientStats::new(self.kind(), self.n_items());
        for (pos, ev) in self.log.iter().enumerate() {
            stats.apply_filtered(&ev.action, &ev.observation, pos, |i| pos >= self.births[i])?;
        }
        Ok(stats)
    }

    /// Same history with items reordered: new slot `j` holds old slot `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_items();
        let mut inverse = vec![usize::MAX; n];
        for (j, &p) in perm.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(crate::error::invalid("not a permutation"));
            }
            inverse[p] = j;
        }
        let remap = |a: &Action| -> Action {
            let items = a.items().iter().map(|&i| inverse[i]).collect();
            match a {
                Action::Subset(_) => Action::Subset(items),
                Action::Ranked(_) => Action::Ranked(items),
            }
        };
        let mut out = Self::new(self.kind(), n);
        for ev in &self.log {
            out.record(remap(&ev.action), ev.observation.clone())?;
        }
        out.births = perm.iter().map(|&p| self.births[p]).collect();
        out.stats = out.replay()?;
        out.rounds = self.rounds;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn semi(items: Vec<usize>, r: Vec<f64>) -> Event {
        Event {
            action: Action::Subset(items),
            observation: Observation::SemiBandit(r),
        }
    }

    #[test]
    fn empty_log_gives_zero_counts() {
        let s = replay_statistics(&[], ProblemKind::SemiBandit, 4).unwrap();
        assert_eq!(s.all_pulls(), &[0, 0, 0, 0]);
        assert_eq!(s.total_pulls(), 0);
    }

    #[test]
    fn semi_bandit_sums() {
        let log = vec![semi(vec![0, 1], vec![2.0, 3.0]), semi(vec![0], vec![1.0])];
        let s = replay_statistics(&log, ProblemKind::SemiBandit, 2).unwrap();
        assert_eq!((s.pulls(0), s.pulls(1)), (2, 1));
        assert_eq!((s.reward_sum(0), s.reward_sum(1)), (3.0, 3.0));
    }

    #[test]
    fn cascade_counts_only_examined_positions() {
        // Ranked (4, 7), click on the first position: the second is unexamined.
        let log = vec![Event {
            action: Action::Ranked(vec![4, 7]),
            observation: Observation::Cascade { click: Some(0) },
        }];
        let s = replay_statistics(&log, ProblemKind::Cascade, 8).unwrap();
        assert_eq!((s.pulls(4), s.successes(4)), (1, 1));
        assert_eq!(s.pulls(7), 0);

        let log = vec![Event {
            action: Action::Ranked(vec![4, 7]),
            observation: Observation::Cascade { click: None },
        }];
        let s = replay_statistics(&log, ProblemKind::Cascade, 8).unwrap();
        assert_eq!((s.failures(4), s.failures(7)), (1, 1));
    }

    #[test]
    fn malformed_events_report_position() {
        let log = vec![semi(vec![0], vec![1.0]), semi(vec![5], vec![1.0])];
        match replay_statistics(&log, ProblemKind::SemiBandit, 2) {
            Err(Error::MalformedEvent { position, .. }) => assert_eq!(position, 1),
            other => panic!("unexpected {other:?}"),
        }
        let log = vec![Event {
            action: Action::Subset(vec![0]),
            observation: Observation::MnlEpoch {
                purchases: vec![2],
                length: 2,
            },
        }];
        assert!(matches!(
            replay_statistics(&log, ProblemKind::Mnl, 1),
            Err(Error::MalformedEvent { position: 0, .. })
        ));
        let log = vec![Event {
            action: Action::Ranked(vec![0]),
            observation: Observation::Cascade { click: Some(1) },
        }];
        assert!(replay_statistics(&log, ProblemKind::Cascade, 1).is_err());
    }

    #[test]
    fn mnl_epochs_accumulate() {
        let mut h = InteractionHistory::new(ProblemKind::Mnl, 3);
        h.record(
            Action::Subset(vec![0, 2]),
            Observation::MnlEpoch {
                purchases: vec![2, 1],
                length: 4,
            },
        )
        .unwrap();
        h.record(
            Action::Subset(vec![2]),
            Observation::MnlEpoch {
                purchases: vec![0],
                length: 1,
            },
        )
        .unwrap();
        assert_eq!(h.rounds(), 5);
        assert_eq!((h.stats().epochs(2), h.stats().purchases(2)), (2, 1));
        assert_eq!((h.stats().epochs(0), h.stats().purchases(0)), (1, 2));
    }

    #[test]
    fn reset_items_survives_replay() {
        let mut h = InteractionHistory::new(ProblemKind::SemiBandit, 3);
        h.record(Action::Subset(vec![0, 1]), Observation::SemiBandit(vec![1.0, 2.0]))
            .unwrap();
        h.reset_items(&[1]);
        h.record(Action::Subset(vec![1, 2]), Observation::SemiBandit(vec![5.0, 7.0]))
            .unwrap();
        assert_eq!(h.stats().pulls(1), 1);
        assert_eq!(h.stats().reward_sum(1), 5.0);
        assert_eq!(&h.replay().unwrap(), h.stats());
    }

    proptest! {
        #[test]
        fn incremental_matches_replay(
            events in proptest::collection::vec(
                (proptest::sample::subsequence((0..6usize).collect::<Vec<_>>(), 0..=3), -5.0f64..5.0),
                0..40)
        ) {
            let mut h = InteractionHistory::new(ProblemKind::SemiBandit, 6);
            for (items, r) in events {
                let rewards = vec![r; items.len()];
                h.record(Action::Subset(items), Observation::SemiBandit(rewards)).unwrap();
            }
            let replayed = replay_statistics(h.log(), ProblemKind::SemiBandit, 6).unwrap();
            prop_assert_eq!(&replayed, h.stats());
            prop_assert_eq!(&h.replay().unwrap(), h.stats());
        }

        #[test]
        fn cascade_replay_deterministic(
            events in proptest::collection::vec(
                (proptest::sample::subsequence((0..8usize).collect::<Vec<_>>(), 1..=4), proptest::option::of(0usize..4)),
                0..40)
        ) {
            let mut h = InteractionHistory::new(ProblemKind::Cascade, 8);
            for (items, click) in events {
                let click = click.filter(|&c| c < items.len());
                h.record(Action::Ranked(items), Observation::Cascade { click }).unwrap();
            }
            let a = replay_statistics(h.log(), ProblemKind::Cascade, 8).unwrap();
            let b = replay_statistics(h.log(), ProblemKind::Cascade, 8).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a, h.stats());
        }
    }
}
