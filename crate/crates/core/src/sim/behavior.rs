//! Malicious forwarding behavior and the neighbors that witness it.

use rand::Rng;

use crate::model::{NodeId, NodeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forwarding {
    Forward,
    Drop,
}

/// Decides whether `node` forwards a data packet. Honest nodes always
/// forward; malicious nodes drop with `drop_probability`.
pub fn inject_malicious_behavior<R: Rng + ?Sized>(
    node: &NodeState,
    drop_probability: f64,
    rng: &mut R,
) -> Forwarding {
    if !node.is_malicious {
        return Forwarding::Forward;
    }
    if rng.random::<f64>() < drop_probability {
        Forwarding::Drop
    } else {
        Forwarding::Forward
    }
}

/// Honest nodes that overheard `sender -> dropper` and expect the forward:
/// every honest node in range of both, the sender included, the dropper
/// excluded. Sorted by id.
pub fn drop_observers(
    nodes: &[NodeState],
    dropper: NodeId,
    sender: NodeId,
    tx_range: f64,
) -> Vec<NodeId> {
    let d = &nodes[dropper.index()];
    let s = &nodes[sender.index()];
    nodes
        .iter()
        .filter(|n| n.id != dropper && !n.is_malicious && !n.is_primary_user)
        .filter(|n| {
            n.id == sender
                || (n.pos.distance(d.pos) <= tx_range && n.pos.distance(s.pos) <= tx_range)
        })
        .map(|n| n.id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelSet, Position, Timestamp};
    use crate::trust::TrustLedger;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(id: u32, x: f64, malicious: bool) -> NodeState {
        let mut n = NodeState::new(NodeId(id), Position::new(x, 0.0), ChannelSet::full(2));
        n.is_malicious = malicious;
        n
    }

    #[test]
    fn certain_dropper_always_drops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bad = node(0, 0.0, true);
        assert!((0..1000).all(|_| inject_malicious_behavior(&bad, 1.0, &mut rng) == Forwarding::Drop));
    }

    #[test]
    fn honest_node_always_forwards() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let good = node(0, 0.0, false);
        assert!((0..1000).all(|_| inject_malicious_behavior(&good, 1.0, &mut rng) == Forwarding::Forward));
    }

    #[test]
    fn three_witnesses_file_three_reports() {
        // Sender 1 -> dropper 0; nodes 2 and 3 overhear, 4 is out of range.
        let nodes = vec![
            node(0, 0.0, true),
            node(1, 5.0, false),
            node(2, -5.0, false),
            node(3, 2.0, false),
            node(4, 100.0, false),
        ];
        let observers = drop_observers(&nodes, NodeId(0), NodeId(1), 20.0);
        assert_eq!(observers, vec![NodeId(1), NodeId(2), NodeId(3)]);
        let mut ledger = TrustLedger::new();
        for o in observers {
            ledger.record_report(NodeId(0), o, Timestamp(1.0)).unwrap();
        }
        assert_eq!(ledger.report_count(NodeId(0)), 3);
    }
}
