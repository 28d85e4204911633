//! Primary-user activity, spectrum sensing, available-channel-list exchange
//! among 1-hop neighbors, and common-channel cluster formation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::model::{ChannelId, ChannelSet, ClusterId, NodeId, NodeState, Position, Timestamp};

/// A licensed transmitter with an on/off activity timeline on one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryUser {
    pub id: u32,
    pub pos: Position,
    pub channel: ChannelId,
    /// Radius within which secondary users sense the transmission.
    pub range: f64,
    /// Sorted, disjoint half-open `[start, end)` on-periods.
    pub on_periods: Vec<(f64, f64)>,
}

impl PrimaryUser {
    /// Draws an alternating renewal on/off timeline over `[0, horizon)` with
    /// exponential period lengths. The initial state is on with probability
    /// `mean_on / (mean_on + mean_off)`.
    pub fn with_renewal_schedule<R: Rng + ?Sized>(
        id: u32,
        pos: Position,
        channel: ChannelId,
        range: f64,
        mean_on: f64,
        mean_off: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Self {
        let on = Exp::new(1.0 / mean_on).expect("positive mean");
        let off = Exp::new(1.0 / mean_off).expect("positive mean");
        let mut active = rng.random::<f64>() < mean_on / (mean_on + mean_off);
        let mut t = 0.0;
        let mut on_periods = Vec::new();
        while t < horizon {
            let len: f64 = if active { on.sample(rng) } else { off.sample(rng) };
            if active {
                on_periods.push((t, (t + len).min(horizon)));
            }
            t += len;
            active = !active;
        }
        PrimaryUser {
            id,
            pos,
            channel,
            range,
            on_periods,
        }
    }

    pub fn always_on(id: u32, pos: Position, channel: ChannelId, range: f64) -> Self {
        PrimaryUser {
            id,
            pos,
            channel,
            range,
            on_periods: vec![(0.0, f64::INFINITY)],
        }
    }

    pub fn is_active(&self, now: Timestamp) -> bool {
        let t = now.secs();
        let idx = self.on_periods.partition_point(|&(start, _)| start <= t);
        idx > 0 && t < self.on_periods[idx - 1].1
    }

    /// Every on/off transition inside `(0, horizon)`, as `(time, now_on)`.
    pub fn transitions(&self, horizon: f64) -> Vec<(f64, bool)> {
        let mut out = Vec::new();
        for &(start, end) in &self.on_periods {
            if start > 0.0 && start < horizon {
                out.push((start, true));
            }
            if end < horizon {
                out.push((end, false));
            }
        }
        out
    }
}

/// Channel availability: the primary users and their timelines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub channel_count: usize,
    pub primary_users: Vec<PrimaryUser>,
}

impl SpectrumModel {
    pub fn new(channel_count: usize, primary_users: Vec<PrimaryUser>) -> Self {
        SpectrumModel {
            channel_count,
            primary_users,
        }
    }

    /// Channels occupied by an active primary user within range of `pos`.
    pub fn occupied_at(&self, pos: Position, now: Timestamp) -> ChannelSet {
        self.primary_users
            .iter()
            .filter(|pu| pu.is_active(now) && pu.pos.distance(pos) <= pu.range)
            .map(|pu| pu.channel)
            .collect()
    }

    /// Free channels for a secondary user: its supported channels minus any
    /// occupied by an in-range active primary user.
    pub fn sense_spectrum(&self, node: &NodeState, now: Timestamp) -> ChannelSet {
        self.sense_at(node.channels, node.pos, now)
    }

    pub fn sense_at(&self, supported: ChannelSet, pos: Position, now: Timestamp) -> ChannelSet {
        supported
            .intersection(ChannelSet::full(self.channel_count))
            .difference(self.occupied_at(pos, now))
    }
}

/// What a node learned about one neighbor from its channel-list broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AclEntry {
    pub free: ChannelSet,
    pub neighbors: Arc<[NodeId]>,
    pub pos: Position,
    pub at: Timestamp,
    /// Position reported in the previous exchange, for motion estimates.
    pub prev: Option<(Position, Timestamp)>,
}

/// A node's knowledge of its 1-hop neighborhood.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborView {
    pub entries: BTreeMap<NodeId, AclEntry>,
}

impl NeighborView {
    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn get(&self, node: NodeId) -> Option<&AclEntry> {
        self.entries.get(&node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    /// Common free channels with `neighbor`, given this node's free set.
    pub fn common_with(&self, own_free: ChannelSet, neighbor: NodeId) -> ChannelSet {
        self.entries
            .get(&neighbor)
            .map_or(ChannelSet::EMPTY, |e| own_free.intersection(e.free))
    }
}

/// One node's broadcast: free channels, neighbor list and position.
#[derive(Debug, Clone, PartialEq)]
pub struct AclBroadcast {
    pub node: NodeId,
    pub free: ChannelSet,
    pub neighbors: Arc<[NodeId]>,
    pub pos: Position,
}

/// Rebuilds `node`'s neighbor view from the broadcasts of its 1-hop
/// neighbors, ignoring blacklisted ones. Previous positions are carried over
/// from `previous` so motion can be estimated.
pub fn exchange_acl(
    node: NodeId,
    broadcasts: &[AclBroadcast],
    blacklist: &BTreeSet<NodeId>,
    previous: Option<&NeighborView>,
    now: Timestamp,
) -> NeighborView {
    let sorted = broadcasts.windows(2).all(|w| w[0].node < w[1].node);
    let find = |id: NodeId| {
        if sorted {
            broadcasts
                .binary_search_by_key(&id, |b| b.node)
                .ok()
                .map(|i| &broadcasts[i])
        } else {
            broadcasts.iter().find(|b| b.node == id)
        }
    };
    let Some(own) = find(node) else {
        return NeighborView::default();
    };
    let entries = own
        .neighbors
        .iter()
        .filter(|n| !blacklist.contains(n))
        .filter_map(|n| find(*n))
        .map(|b| {
            let prev = previous
                .and_then(|v| v.get(b.node))
                .map(|e| (e.pos, e.at));
            (
                b.node,
                AclEntry {
                    free: b.free,
                    neighbors: Arc::clone(&b.neighbors),
                    pos: b.pos,
                    at: now,
                    prev,
                },
            )
        })
        .collect();
    NeighborView { entries }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    pub head: NodeId,
    pub members: BTreeSet<NodeId>,
    pub common_channels: ChannelSet,
}

/// Input to cluster formation for one secondary user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterCandidate {
    pub id: NodeId,
    pub free: ChannelSet,
    /// 1-hop neighbors (symmetric range relation).
    pub neighbors: BTreeSet<NodeId>,
}

/// Greedy common-channel clustering.
///
/// Nodes are visited in ascending id. Each unassigned node seeds a cluster and
/// repeatedly absorbs the unassigned node that is in range of every current
/// member and keeps the channel intersection largest (ties: lowest id), as
/// long as the intersection stays non-empty. The head is the member whose
/// free set overlaps most with the other members' (ties: lowest id).
pub fn form_clusters(candidates: &[ClusterCandidate]) -> Vec<Cluster> {
    let mut sorted: Vec<&ClusterCandidate> = candidates.iter().collect();
    sorted.sort_by_key(|c| c.id);
    let index: BTreeMap<NodeId, usize> = sorted.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let n = sorted.len();
    let adjacency: Vec<Vec<bool>> = sorted
        .iter()
        .map(|c| {
            let mut row = vec![false; n];
            for nb in &c.neighbors {
                if let Some(&j) = index.get(nb) {
                    row[j] = true;
                }
            }
            row
        })
        .collect();

    let mut assigned = vec![false; n];
    let mut clusters = Vec::new();
    for seed in 0..n {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut members = vec![seed];
        let mut common = sorted[seed].free;
        // In range of every member so far.
        let mut eligible = adjacency[seed].clone();
        while !common.is_empty() {
            let best = (0..n)
                .filter(|&j| eligible[j] && !assigned[j])
                .map(|j| (j, common.intersection(sorted[j].free).len()))
                .filter(|&(_, overlap)| overlap > 0)
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((j, _)) = best else { break };
            assigned[j] = true;
            members.push(j);
            common = common.intersection(sorted[j].free);
            for (e, adj) in eligible.iter_mut().zip(&adjacency[j]) {
                *e &= *adj;
            }
        }
        let head = members
            .iter()
            .map(|&h| {
                let affinity: usize = members
                    .iter()
                    .filter(|&&m| m != h)
                    .map(|&m| sorted[h].free.intersection(sorted[m].free).len())
                    .sum();
                (h, affinity)
            })
            .max_by(|a, b| a.1.cmp(&b.1).then(sorted[b.0].id.cmp(&sorted[a.0].id)))
            .map(|(h, _)| sorted[h].id)
            .expect("cluster has a member");
        clusters.push(Cluster {
            id: head.0,
            head,
            members: members.iter().map(|&m| sorted[m].id).collect(),
            common_channels: common,
        });
    }
    clusters
}

/// Round-robin pre-assignment into `groups` groups, each then clustered
/// greedily so every resulting cluster keeps a non-empty common set.
pub fn form_fixed_clusters(candidates: &[ClusterCandidate], groups: usize) -> Vec<Cluster> {
    let groups = groups.max(1);
    let mut buckets: Vec<Vec<ClusterCandidate>> = vec![Vec::new(); groups];
    for c in candidates {
        buckets[c.id.index() % groups].push(c.clone());
    }
    let mut out: Vec<Cluster> = buckets.iter().flat_map(|b| form_clusters(b)).collect();
    out.sort_by_key(|c| c.members.first().copied());
    out
}

/// Channels shared by every member, recomputed from the members' free sets.
pub fn recompute_common(cluster: &Cluster, free: impl Fn(NodeId) -> ChannelSet) -> ChannelSet {
    cluster
        .members
        .iter()
        .map(|&m| free(m))
        .fold(ChannelSet::full(crate::model::MAX_CHANNELS), ChannelSet::intersection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(chs: &[u16]) -> ChannelSet {
        chs.iter().copied().map(ChannelId).collect()
    }

    fn cand(id: u32, free: &[u16], neighbors: &[u32]) -> ClusterCandidate {
        ClusterCandidate {
            id: NodeId(id),
            free: set(free),
            neighbors: neighbors.iter().copied().map(NodeId).collect(),
        }
    }

    fn su(pos: Position, chs: &[u16]) -> NodeState {
        NodeState::new(NodeId(0), pos, set(chs))
    }

    #[test]
    fn sensing_without_primary_users_is_full() {
        let model = SpectrumModel::new(4, vec![]);
        let node = su(Position::new(0.0, 0.0), &[0, 1, 2, 3]);
        assert_eq!(model.sense_spectrum(&node, Timestamp(3.0)), set(&[0, 1, 2, 3]));
    }

    #[test]
    fn sensing_excludes_only_in_range_active_channels() {
        let pu = PrimaryUser {
            id: 0,
            pos: Position::new(0.0, 0.0),
            channel: ChannelId(3),
            range: 10.0,
            on_periods: vec![(5.0, 8.0)],
        };
        let model = SpectrumModel::new(5, vec![pu]);
        let near = su(Position::new(3.0, 4.0), &[1, 3, 4]);
        let far = su(Position::new(30.0, 0.0), &[1, 3, 4]);
        assert_eq!(model.sense_spectrum(&near, Timestamp(6.0)), set(&[1, 4]));
        assert_eq!(model.sense_spectrum(&far, Timestamp(6.0)), set(&[1, 3, 4]));
        assert_eq!(model.sense_spectrum(&near, Timestamp(8.0)), set(&[1, 3, 4]));
        assert_eq!(model.sense_spectrum(&near, Timestamp(4.99)), set(&[1, 3, 4]));
    }

    #[test]
    fn renewal_schedule_is_sorted_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pu = PrimaryUser::with_renewal_schedule(0, Position::default(), ChannelId(1), 5.0, 3.0, 2.0, 100.0, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let again = PrimaryUser::with_renewal_schedule(0, Position::default(), ChannelId(1), 5.0, 3.0, 2.0, 100.0, &mut rng);
        assert_eq!(pu, again);
        for w in pu.on_periods.windows(2) {
            assert!(w[0].1 < w[1].0);
        }
        for (t, on) in pu.transitions(100.0) {
            // Just after a transition the state matches it.
            assert_eq!(pu.is_active(Timestamp(t + 1e-9)), on);
        }
    }

    fn broadcasts() -> Vec<AclBroadcast> {
        vec![
            AclBroadcast { node: NodeId(0), free: set(&[1, 2]), neighbors: vec![NodeId(1), NodeId(2)].into(), pos: Position::new(0.0, 0.0) },
            AclBroadcast { node: NodeId(1), free: set(&[2, 3]), neighbors: vec![NodeId(0)].into(), pos: Position::new(1.0, 0.0) },
            AclBroadcast { node: NodeId(2), free: set(&[1]), neighbors: vec![NodeId(0)].into(), pos: Position::new(0.0, 1.0) },
            AclBroadcast { node: NodeId(3), free: set(&[1]), neighbors: vec![].into(), pos: Position::new(50.0, 50.0) },
        ]
    }

    #[test]
    fn acl_exchange_isolated_node() {
        let view = exchange_acl(NodeId(3), &broadcasts(), &BTreeSet::new(), None, Timestamp(0.0));
        assert!(view.is_empty());
    }

    #[test]
    fn acl_exchange_learns_neighbor_sets() {
        let b = broadcasts();
        let v0 = exchange_acl(NodeId(0), &b, &BTreeSet::new(), None, Timestamp(0.0));
        let v1 = exchange_acl(NodeId(1), &b, &BTreeSet::new(), None, Timestamp(0.0));
        assert_eq!(v0.get(NodeId(1)).unwrap().free, set(&[2, 3]));
        assert_eq!(v1.get(NodeId(0)).unwrap().free, set(&[1, 2]));
        assert_eq!(v0.common_with(set(&[1, 2]), NodeId(1)), set(&[2]));
        assert_eq!(&*v1.get(NodeId(0)).unwrap().neighbors, &[NodeId(1), NodeId(2)]);

        let v0b = exchange_acl(NodeId(0), &b, &BTreeSet::new(), Some(&v0), Timestamp(1.0));
        assert_eq!(v0b.get(NodeId(1)).unwrap().prev, Some((Position::new(1.0, 0.0), Timestamp(0.0))));
    }

    #[test]
    fn acl_exchange_ignores_blacklisted() {
        let banned: BTreeSet<NodeId> = [NodeId(2)].into();
        let v0 = exchange_acl(NodeId(0), &broadcasts(), &banned, None, Timestamp(0.0));
        assert!(v0.contains(NodeId(1)));
        assert!(!v0.contains(NodeId(2)));
    }

    #[test]
    fn identical_clique_forms_one_cluster() {
        let c = form_clusters(&[
            cand(0, &[1, 2], &[1, 2]),
            cand(1, &[1, 2], &[0, 2]),
            cand(2, &[1, 2], &[0, 1]),
        ]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members.len(), 3);
        assert_eq!(c[0].head, NodeId(0));
        assert_eq!(c[0].common_channels, set(&[1, 2]));
    }

    #[test]
    fn disjoint_sets_give_singletons() {
        let c = form_clusters(&[cand(0, &[1], &[1]), cand(1, &[2], &[0])]);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn chain_respects_range() {
        // A-B-C chain: greedy from A absorbs B; C is out of A's range.
        let c = form_clusters(&[
            cand(0, &[1], &[1]),
            cand(1, &[1], &[0, 2]),
            cand(2, &[1], &[1]),
        ]);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].members, [NodeId(0), NodeId(1)].into());
        assert_eq!(c[0].head, NodeId(0));
        assert_eq!(c[1].members, [NodeId(2)].into());
        assert_eq!(c[1].head, NodeId(2));
    }

    #[test]
    fn prefers_neighbor_keeping_intersection_largest() {
        let c = form_clusters(&[
            cand(0, &[1, 2, 3], &[1, 2]),
            cand(1, &[1], &[0, 2]),
            cand(2, &[1, 2, 3], &[0, 1]),
        ]);
        // 2 joins first (keeps {1,2,3}), then 1 narrows to {1}.
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].common_channels, set(&[1]));
        // Nodes 0 and 2 tie on affinity; lowest id heads.
        assert_eq!(c[0].head, NodeId(0));
    }

    #[test]
    fn head_maximizes_channel_affinity() {
        let c = form_clusters(&[
            cand(0, &[1], &[1, 2]),
            cand(1, &[1, 2, 3], &[0, 2]),
            cand(2, &[1, 2, 3], &[0, 1]),
        ]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].head, NodeId(1));
        assert_eq!(c[0].id, 1);
    }

    #[test]
    fn fixed_mode_partitions() {
        let all: Vec<u32> = (0..12).collect();
        let cands: Vec<_> = all
            .iter()
            .map(|&i| {
                let nb: Vec<u32> = all.iter().copied().filter(|&j| j != i).collect();
                cand(i, &[0, 1], &nb)
            })
            .collect();
        let c = form_fixed_clusters(&cands, 3);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].members, [0, 3, 6, 9].map(NodeId).into());
        let covered: BTreeSet<NodeId> = c.iter().flat_map(|c| c.members.iter().copied()).collect();
        assert_eq!(covered.len(), 12);
    }
}
