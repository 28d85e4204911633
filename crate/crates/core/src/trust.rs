//! Intruder detection: a replicated report ledger, the exponential intruder
//! determination factor, and majority-suspect blacklisting.
//!
//! Every node holds its own [`TrustLedger`] replica. Replicas converge by
//! [`merge_ledgers`], which is a join on a semilattice: reporter sets and the
//! blacklist only grow, and neighbor-count observations keep the latest one.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::TrustError;
use crate::model::{NodeId, Timestamp};

/// Intruder determination factor, `e^RN`, or infinite once blacklisted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IfValue {
    Finite(f64),
    Infinite,
}

impl IfValue {
    pub const ONE: IfValue = IfValue::Finite(1.0);

    pub fn from_report_count(rn: usize) -> Self {
        IfValue::Finite((rn as f64).exp())
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, IfValue::Infinite)
    }

    pub fn as_f64(self) -> f64 {
        match self {
            IfValue::Finite(v) => v,
            IfValue::Infinite => f64::INFINITY,
        }
    }

    /// The larger (less trusted) of two values.
    pub fn worst(self, other: IfValue) -> IfValue {
        match (self, other) {
            (IfValue::Infinite, _) | (_, IfValue::Infinite) => IfValue::Infinite,
            (IfValue::Finite(a), IfValue::Finite(b)) => IfValue::Finite(a.max(b)),
        }
    }
}

impl PartialOrd for IfValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

/// Latest known 1-hop neighborhood size of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborCount {
    pub at: Timestamp,
    pub count: u32,
}

impl NeighborCount {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.at.total_cmp(&other.at).then(self.count.cmp(&other.count))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Trusted,
    Malicious,
}

/// What a caller must do after [`TrustLedger::record_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportOutcome {
    /// Reporter is blacklisted; the ledger did not change.
    Ignored,
    /// The report was already on record.
    Duplicate { verdict: Verdict },
    /// New report: propagate it to the neighborhood. `warn` is set when this
    /// report tipped the subject into the blacklist.
    Recorded { verdict: Verdict, warn: bool },
}

impl ReportOutcome {
    pub fn should_broadcast(self) -> bool {
        matches!(self, ReportOutcome::Recorded { .. })
    }
}

/// Reporter ids as a bitmap. Trailing zero words are trimmed so equal sets
/// compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct ReporterSet {
    words: Vec<u64>,
    len: usize,
}

impl ReporterSet {
    fn from_nodes<'a>(nodes: impl IntoIterator<Item = &'a NodeId>) -> Self {
        let mut set = ReporterSet::default();
        for n in nodes {
            set.insert(*n);
        }
        set
    }

    fn insert(&mut self, node: NodeId) -> bool {
        let (w, bit) = (node.index() / 64, 1u64 << (node.index() % 64));
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & bit == 0;
        if fresh {
            self.words[w] |= bit;
            self.len += 1;
        }
        fresh
    }

    fn len(&self) -> usize {
        self.len
    }

    fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                (rest != 0).then(|| {
                    let b = rest.trailing_zeros();
                    rest &= rest - 1;
                    NodeId((w * 64) as u32 + b)
                })
            })
        })
    }

    fn has_outside(&self, mask: &ReporterSet) -> bool {
        self.words
            .iter()
            .enumerate()
            .any(|(i, w)| w & !mask.words.get(i).copied().unwrap_or(0) != 0)
    }

    /// `self |= other & !mask`.
    fn union_outside(&mut self, other: &ReporterSet, mask: &ReporterSet) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (i, w) in other.words.iter().enumerate() {
            self.words[i] |= w & !mask.words.get(i).copied().unwrap_or(0);
        }
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
        self.len = self.words.iter().map(|w| w.count_ones() as usize).sum();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustLedger {
    reports: BTreeMap<NodeId, ReporterSet>,
    blacklist: BTreeSet<NodeId>,
    neighbor_counts: BTreeMap<NodeId, NeighborCount>,
}

impl TrustLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Distinct reporters against `subject`.
    pub fn report_count(&self, subject: NodeId) -> usize {
        self.reports.get(&subject).map_or(0, ReporterSet::len)
    }

    pub fn reporters(&self, subject: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.reports.get(&subject).into_iter().flat_map(ReporterSet::iter)
    }

    pub fn subjects(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.reports.keys().copied()
    }

    pub fn is_blacklisted(&self, node: NodeId) -> bool {
        self.blacklist.contains(&node)
    }

    pub fn blacklist(&self) -> &BTreeSet<NodeId> {
        &self.blacklist
    }

    pub fn neighbor_count(&self, subject: NodeId) -> Option<NeighborCount> {
        self.neighbor_counts.get(&subject).copied()
    }

    /// Records the subject's current neighborhood size. Older observations
    /// never overwrite newer ones.
    pub fn observe_neighbor_count(&mut self, subject: NodeId, at: Timestamp, count: u32) {
        let obs = NeighborCount { at, count };
        self.neighbor_counts
            .entry(subject)
            .and_modify(|cur| {
                if obs.key_cmp(cur) == Ordering::Greater {
                    *cur = obs;
                }
            })
            .or_insert(obs);
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty() && self.blacklist.is_empty() && self.neighbor_counts.is_empty()
    }

    /// Number of report entries, used to size piggybacked copies.
    pub fn entry_count(&self) -> usize {
        self.reports.values().map(ReporterSet::len).sum::<usize>() + self.blacklist.len()
    }

    /// Encoded size when piggybacked: per subject an id plus a reporter
    /// bitmap over `node_count` nodes, 4 bytes per blacklist entry and 12 per
    /// neighbor-count observation.
    pub fn wire_bytes(&self, node_count: usize) -> usize {
        self.reports.len() * (4 + node_count.div_ceil(8))
            + 4 * self.blacklist.len()
            + 12 * self.neighbor_counts.len()
    }

    /// Records that `reporter` suspects `subject`, then re-evaluates the subject.
    pub fn record_report(
        &mut self,
        subject: NodeId,
        reporter: NodeId,
        _now: Timestamp,
    ) -> Result<ReportOutcome, TrustError> {
        if subject == reporter {
            return Err(TrustError::SelfReport(subject));
        }
        if self.is_blacklisted(reporter) {
            return Ok(ReportOutcome::Ignored);
        }
        let was_blacklisted = self.is_blacklisted(subject);
        let inserted = self.reports.entry(subject).or_default().insert(reporter);
        let verdict = self.evaluate_malicious(subject);
        if inserted {
            Ok(ReportOutcome::Recorded {
                verdict,
                warn: !was_blacklisted && verdict == Verdict::Malicious,
            })
        } else {
            Ok(ReportOutcome::Duplicate { verdict })
        }
    }

    /// Majority-suspect rule: malicious iff distinct reporters are strictly
    /// more than half of the subject's current neighbor count. A malicious
    /// verdict blacklists the subject permanently.
    pub fn evaluate_malicious(&mut self, subject: NodeId) -> Verdict {
        if self.is_blacklisted(subject) {
            return Verdict::Malicious;
        }
        let Some(neighbors) = self.neighbor_counts.get(&subject) else {
            return Verdict::Trusted;
        };
        if neighbors.count == 0 {
            return Verdict::Trusted;
        }
        let reporters = self.report_count(subject);
        if 2 * reporters > neighbors.count as usize {
            self.blacklist.insert(subject);
            Verdict::Malicious
        } else {
            Verdict::Trusted
        }
    }

    /// Copy without reports filed by nodes this replica has blacklisted.
    pub fn without_reports_from_blacklisted(&self, blacklist: &BTreeSet<NodeId>) -> TrustLedger {
        let mut out = TrustLedger::new();
        out.merge_from_excluding(self, blacklist);
        out
    }

    pub fn merge_from(&mut self, other: &TrustLedger) {
        self.merge_from_excluding(other, &BTreeSet::new());
    }

    /// Merges `other` minus the reports filed by `excluded` nodes. A
    /// blacklist entry only carries over while a report still backs it.
    pub fn merge_from_excluding(&mut self, other: &TrustLedger, excluded: &BTreeSet<NodeId>) {
        let mask = ReporterSet::from_nodes(excluded);
        for (subject, reporters) in &other.reports {
            if !reporters.has_outside(&mask) {
                continue;
            }
            self.reports.entry(*subject).or_default().union_outside(reporters, &mask);
            if other.blacklist.contains(subject) {
                self.blacklist.insert(*subject);
            }
        }
        self.merge_observations_from(other);
    }

    /// Whether a report against `subject` was filed by a node outside
    /// `excluded`.
    pub fn has_report_outside(&self, subject: NodeId, excluded: &BTreeSet<NodeId>) -> bool {
        self.reports
            .get(&subject)
            .is_some_and(|r| r.has_outside(&ReporterSet::from_nodes(excluded)))
    }

    /// Merges only the neighbor-count observations of `other`.
    pub fn merge_observations_from(&mut self, other: &TrustLedger) {
        for (subject, obs) in &other.neighbor_counts {
            self.observe_neighbor_count(*subject, obs.at, obs.count);
        }
    }
}

/// Intruder determination factor of `subject` as seen by `ledger`.
pub fn if_value(ledger: &TrustLedger, subject: NodeId) -> IfValue {
    if ledger.is_blacklisted(subject) {
        IfValue::Infinite
    } else {
        IfValue::from_report_count(ledger.report_count(subject))
    }
}

/// Join of two replicas: union of reporter sets and blacklists, latest
/// neighbor-count observation per subject.
pub fn merge_ledgers(a: &TrustLedger, b: &TrustLedger) -> TrustLedger {
    let mut out = a.clone();
    out.merge_from(b);
    out
}
