//! Worked-example suite for the closed-form formulas and the trust and
//! routing rules. Each check pairs a frozen expected value with the value the
//! library computes; the CLI `verify` command prints the table.

use std::collections::BTreeSet;
use std::f64::consts::{E, PI};

use crate::delay::{
    backoff_delay, link_delay, queuing_delay, switching_delay, BackoffInputs, QueueInputs,
    SwitchInputs,
};
use crate::kinematics::{
    direction_angle, displacement, distance_from_rssi, speed, transmit_weight, MobilitySample,
    RadioParams, TransmitWeightInputs,
};
use crate::error::RoutingError;
use crate::model::{ChannelId, NodeId, Position, Timestamp};
use crate::routing::{
    nhdf, path_score, select_route, LinkMetrics, RouteContext, RouteEntry, Router, RoutingTable,
    Rrep, RrepAction, RreqAction, SenderSample,
};
use crate::sim::{advance, Area};
use crate::trust::{if_value, merge_ledgers, IfValue, Verdict, TrustLedger};

pub const RELATIVE_TOLERANCE: f64 = 1e-9;

/// Constants the suite evaluates with. Perturbing one makes the rows that
/// depend on it fail against their frozen expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteParams {
    /// Channel switching delay per 10 MHz step, seconds.
    pub switch_step_delay: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            switch_step_delay: 0.010,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Numeric { expected: f64, actual: f64 },
    Exact { expected: String, actual: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub formula: &'static str,
    pub case: String,
    pub outcome: Outcome,
}

impl Check {
    pub fn passed(&self) -> bool {
        match &self.outcome {
            Outcome::Numeric { expected, actual } => close(*expected, *actual),
            Outcome::Exact { expected, actual } => expected == actual,
        }
    }

    pub fn expected(&self) -> String {
        match &self.outcome {
            Outcome::Numeric { expected, .. } => expected.to_string(),
            Outcome::Exact { expected, .. } => expected.clone(),
        }
    }

    pub fn actual(&self) -> String {
        match &self.outcome {
            Outcome::Numeric { actual, .. } => actual.to_string(),
            Outcome::Exact { actual, .. } => actual.clone(),
        }
    }
}

fn close(expected: f64, actual: f64) -> bool {
    if expected == actual {
        return true;
    }
    let scale = expected.abs().max(f64::MIN_POSITIVE);
    (expected - actual).abs() <= RELATIVE_TOLERANCE * scale
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn num(&mut self, formula: &'static str, case: &str, expected: f64, actual: Result<f64, impl ToString>) {
        let outcome = match actual {
            Ok(actual) => Outcome::Numeric { expected, actual },
            Err(e) => Outcome::Exact {
                expected: expected.to_string(),
                actual: format!("error: {}", e.to_string()),
            },
        };
        self.checks.push(Check {
            formula,
            case: case.to_string(),
            outcome,
        });
    }

    fn val(&mut self, formula: &'static str, case: &str, expected: f64, actual: f64) {
        self.num(formula, case, expected, Ok::<f64, String>(actual));
    }

    fn exact(&mut self, formula: &'static str, case: &str, expected: impl ToString, actual: impl ToString) {
        self.checks.push(Check {
            formula,
            case: case.to_string(),
            outcome: Outcome::Exact {
                expected: expected.to_string(),
                actual: actual.to_string(),
            },
        });
    }
}

fn motion(recv: (f64, f64), send: (f64, f64), dest_recv: (f64, f64), dest_send: (f64, f64), interval: f64) -> MobilitySample {
    MobilitySample {
        recv_pos: Position::new(recv.0, recv.1),
        send_pos: Position::new(send.0, send.1),
        dest_recv_pos: Position::new(dest_recv.0, dest_recv.1),
        dest_send_pos: Position::new(dest_send.0, dest_send.1),
        t_recv: Timestamp(0.0),
        t_send: Timestamp(interval),
        tx_time: 0.0,
    }
}

fn kinematics(s: &mut Suite) {
    let radio = RadioParams {
        path_loss_db: 0.0,
        loss_exponent: 2.0,
        wavelength: 0.125,
        ref_distance: 1.0,
    };
    let base = radio.reference_loss_db();
    s.num("rssi_distance", "loss at reference baseline -> l0", 1.0, distance_from_rssi(&radio.with_path_loss(base)));
    s.num(
        "rssi_distance",
        "baseline + 10*omega dB -> 10 l0",
        10.0,
        distance_from_rssi(&radio.with_path_loss(base + 20.0)),
    );
    s.num(
        "rssi_distance",
        "kappa 60 dB, lambda 0.125 m, l0 1 m, omega 2",
        9.947183943243454,
        distance_from_rssi(&radio.with_path_loss(60.0)),
    );

    s.num("direction_angle", "parallel", 0.0, direction_angle(&motion((0., 0.), (1., 0.), (5., 5.), (6., 5.), 1.0)));
    s.num("direction_angle", "orthogonal", PI / 2.0, direction_angle(&motion((0., 0.), (1., 0.), (0., 0.), (0., 1.), 1.0)));
    s.num("direction_angle", "antiparallel", PI, direction_angle(&motion((0., 0.), (1., 0.), (0., 0.), (-1., 0.), 1.0)));

    s.val("displacement", "theta 0", 0.0, displacement(37.5, 0.0));
    s.val("displacement", "d 10, theta 1", 10.0, displacement(10.0, 1.0));
    s.val("displacement", "d 2, theta pi", 6.283185307179586, displacement(2.0, PI));

    s.num("speed", "no movement", 0.0, speed(&motion((4., 4.), (4., 4.), (0., 0.), (0., 0.), 1.0)));
    s.num("speed", "(0,0) -> (3,4) in 1 s", 5.0, speed(&motion((0., 0.), (3., 4.), (0., 0.), (0., 0.), 1.0)));
    let area = Area {
        width: 1000.0,
        height: 1000.0,
    };
    let start = Position::new(500.0, 500.0);
    let (end, _) = advance(start, 0.7, 5.0, 3.25, area);
    let sampled = MobilitySample {
        recv_pos: start,
        send_pos: end,
        dest_recv_pos: start,
        dest_send_pos: start,
        t_recv: Timestamp(2.0),
        t_send: Timestamp(5.0),
        tx_time: 0.25,
    };
    s.num("speed", "node cruising at 5 m/s", 5.0, speed(&sampled));

    let tw = |range, d, p, v| {
        transmit_weight(&TransmitWeightInputs {
            tx_range: range,
            displacement: d,
            probe_link_delay: p,
            speed: v,
        })
    };
    s.num("transmit_weight", "range 500, unit factors", 500.0, tw(500.0, 1.0, 1.0, 1.0));
    s.num("transmit_weight", "range 500, tau 2, probe 0.05, speed 5", 1000.0, tw(500.0, 2.0, 0.05, 5.0));
    s.num("transmit_weight", "zero displacement clamped", 5e8, tw(500.0, 0.0, 1.0, 1.0));
}

fn delays(s: &mut Suite, p: &SuiteParams) {
    let q = |bits, v| {
        queuing_delay(&QueueInputs {
            data_size_bits: bits,
            neighbor_count: v,
            data_rate_bps: 1e6,
        })
    };
    s.num("queuing_delay", "no neighbors", 0.0, q(2048.0, 0));
    s.num("queuing_delay", "256-byte packet, 4 neighbors, 1 Mb/s", 0.008192, q(2048.0, 4));
    s.num("queuing_delay", "256-byte packet, 8 neighbors", 0.016384, q(2048.0, 8));

    let b = |bc, v, z| {
        backoff_delay(&BackoffInputs {
            collision_prob: bc,
            neighbor_count: v,
            window: z,
        })
    };
    s.num("backoff_delay", "b 0.5, V 2, z 1", 4.0, b(0.5, 2, 1.0));
    s.num("backoff_delay", "b 0.5, V 3, z 2", 5.333333333333333, b(0.5, 3, 2.0));
    s.num("backoff_delay", "V 1, z 0.01", 0.01, b(0.3, 1, 0.01));

    let sw = |from, to| {
        switching_delay(&SwitchInputs {
            from_channel: ChannelId(from),
            to_channel: ChannelId(to),
            per_step_delay: p.switch_step_delay,
        })
    };
    s.val("switching_delay", "same channel", 0.0, sw(4, 4));
    s.val("switching_delay", "3 steps at a = 10 ms", 0.030, sw(2, 5));
    s.val("switching_delay", "channel 1 -> 2 at a = 10 ms", 0.010, sw(1, 2));

    s.val("link_delay", "all zero", 0.0, link_delay(0.0, 0.0, 0.0));
    let queue = q(2048.0, 4).unwrap_or(f64::NAN);
    s.val("link_delay", "switch 3 steps + queue + 4 ms backoff", 0.042192, link_delay(sw(2, 5), queue, 0.004));
    let perms = [
        link_delay(0.030, 0.008192, 0.004),
        link_delay(0.008192, 0.004, 0.030),
        link_delay(0.004, 0.030, 0.008192),
    ];
    s.exact(
        "link_delay",
        "argument order irrelevant",
        true,
        perms.iter().all(|v| close(perms[0], *v)),
    );
}

fn trust(s: &mut Suite) {
    let x = NodeId(10);
    let (a, b, c) = (NodeId(1), NodeId(2), NodeId(3));
    let with_neighbors = |n: u32| {
        let mut l = TrustLedger::new();
        l.observe_neighbor_count(x, Timestamp(0.0), n);
        l
    };
    let if_f = |l: &TrustLedger| if_value(l, x).as_f64();

    let mut l = with_neighbors(10);
    s.val("if_value", "no reports", 1.0, if_f(&l));
    l.record_report(x, a, Timestamp(0.0)).expect("distinct nodes");
    s.val("if_value", "one report", E, if_f(&l));
    l.record_report(x, b, Timestamp(0.0)).expect("distinct nodes");
    l.record_report(x, c, Timestamp(0.0)).expect("distinct nodes");
    s.val("if_value", "three reports", 20.085536923187668, if_f(&l));

    let mut l = with_neighbors(10);
    l.record_report(x, a, Timestamp(0.0)).expect("distinct nodes");
    s.exact("record_report", "first report: RN", 1, l.report_count(x));
    s.val("record_report", "first report: IF", E, if_f(&l));
    l.record_report(x, a, Timestamp(1.0)).expect("distinct nodes");
    s.exact("record_report", "duplicate report keeps RN", 1, l.report_count(x));
    let mut l = with_neighbors(3);
    l.record_report(c, a, Timestamp(0.0)).expect("distinct nodes");
    l.record_report(c, b, Timestamp(0.0)).expect("distinct nodes");
    l.observe_neighbor_count(c, Timestamp(0.0), 3);
    l.evaluate_malicious(c);
    let before = l.clone();
    let outcome = l.record_report(x, c, Timestamp(1.0));
    s.exact(
        "record_report",
        "report by blacklisted node ignored",
        true,
        outcome.is_ok() && l == before,
    );

    let verdict = |reporters: &[NodeId], neighbors: u32| {
        let mut l = with_neighbors(neighbors);
        for r in reporters {
            l.record_report(x, *r, Timestamp(0.0)).expect("distinct nodes");
        }
        let v = l.evaluate_malicious(x);
        (v, l.is_blacklisted(x))
    };
    s.exact("evaluate_malicious", "2 of 3 neighbors", "Malicious, blacklisted", {
        let (v, bl) = verdict(&[a, b], 3);
        format!("{v:?}{}", if bl { ", blacklisted" } else { "" })
    });
    s.exact("evaluate_malicious", "2 of 4 neighbors", format!("{:?}", Verdict::Trusted), format!("{:?}", verdict(&[a, b], 4).0));
    s.exact("evaluate_malicious", "no reports", format!("{:?}", Verdict::Trusted), format!("{:?}", verdict(&[], 4).0));
    s.val("evaluate_malicious", "no reports: IF", 1.0, if_f(&with_neighbors(4)));

    let mut l1 = with_neighbors(5);
    l1.record_report(x, a, Timestamp(0.0)).expect("distinct nodes");
    let mut l2 = with_neighbors(5);
    l2.record_report(x, b, Timestamp(0.0)).expect("distinct nodes");
    s.exact("merge_ledgers", "identity", true, merge_ledgers(&l1, &TrustLedger::new()) == l1);
    s.exact("merge_ledgers", "commutative", true, merge_ledgers(&l1, &l2) == merge_ledgers(&l2, &l1));
    s.exact("merge_ledgers", "reports from two replicas", 2, merge_ledgers(&l1, &l2).report_count(x));
}

struct StubCtx {
    neighbors: BTreeSet<NodeId>,
    blacklisted: BTreeSet<NodeId>,
}

impl RouteContext for StubCtx {
    fn now(&self) -> Timestamp {
        Timestamp(1.0)
    }

    fn is_blacklisted(&self, node: NodeId) -> bool {
        self.blacklisted.contains(&node)
    }

    fn knows_neighbor(&self, node: NodeId) -> bool {
        self.neighbors.contains(&node)
    }

    fn estimate_link(&self, _: NodeId, _: NodeId, _: &SenderSample) -> Option<LinkMetrics> {
        LinkMetrics::new(2.0, 1.0, 1, IfValue::ONE).ok()
    }

    fn local_sample(&self) -> SenderSample {
        SenderSample {
            node: NodeId(0),
            recv_pos: Position::new(0.0, 0.0),
            send_pos: Position::new(1.0, 0.0),
            t_recv: Timestamp(1.0),
            t_send: Timestamp(1.0),
            tx_time: 0.001,
            channel: ChannelId(0),
        }
    }

    fn cluster_head_of(&self, _: NodeId) -> Option<NodeId> {
        None
    }
}

fn unit_link() -> LinkMetrics {
    LinkMetrics::new(1.0, 1.0, 1, IfValue::ONE).expect("valid link")
}

fn entry(path: &[u32], score_per_link: f64) -> RouteEntry {
    let links = vec![LinkMetrics::new(score_per_link, 1.0, 1, IfValue::ONE).expect("valid link"); path.len() - 1];
    RouteEntry::new(path.iter().copied().map(NodeId).collect(), links, Timestamp(0.0)).expect("valid path")
}

fn action_name(a: &RreqAction) -> &'static str {
    match a {
        RreqAction::Drop(_) => "drop",
        RreqAction::Rebroadcast(_) => "rebroadcast",
        RreqAction::Reply(_) => "reply",
    }
}

fn routing(s: &mut Suite) {
    s.num("nhdf", "xi equals delay", 1.0, nhdf(0.37, 0.37, 5, IfValue::ONE));
    s.num("nhdf", "ratio 2, 3 channels", 8.0, nhdf(2.0, 1.0, 3, IfValue::ONE));
    s.num("nhdf", "infinite IF", 0.0, nhdf(2.0, 1.0, 3, IfValue::Infinite));

    let ctx = StubCtx {
        neighbors: [NodeId(2)].into(),
        blacklisted: BTreeSet::new(),
    };
    let mut origin = Router::new(NodeId(0));
    let rreq = origin.originate_rreq(NodeId(2), ctx.local_sample());
    let mut relay = Router::new(NodeId(1));
    let first = relay.handle_rreq(&rreq, &ctx);
    s.exact("handle_rreq", "destination is a direct neighbor", "reply", action_name(&first));
    let second = relay.handle_rreq(&rreq, &ctx);
    s.exact("handle_rreq", "second copy of (origin, seq)", "drop", action_name(&second));
    let far = StubCtx {
        neighbors: BTreeSet::new(),
        blacklisted: BTreeSet::new(),
    };
    let mut b = Router::new(NodeId(1));
    let RreqAction::Rebroadcast(via_b) = b.handle_rreq(&origin.originate_rreq(NodeId(7), far.local_sample()), &far) else {
        unreachable!("relay without the destination rebroadcasts")
    };
    s.exact("handle_rreq", "A -> B -> A", "drop", action_name(&origin.handle_rreq(&via_b, &far)));

    let rrep = |path: &[u32]| Rrep {
        source: NodeId(0),
        seq: 1,
        destination: NodeId(*path.last().expect("non-empty")),
        path: path.iter().copied().map(NodeId).collect(),
        links: vec![unit_link(); path.len() - 1],
        replier: NodeId(*path.last().expect("non-empty")),
        cluster_head: None,
        cursor: 0,
    };
    let source = Router::new(NodeId(0));
    let mut table = RoutingTable::default();
    let single = source.handle_rrep(&rrep(&[0, 1, 3]), &far);
    if let RrepAction::Complete(e) = &single {
        table.insert(e.clone());
    }
    s.exact(
        "handle_rrep",
        "single path becomes the route",
        "[0, 1, 3]",
        select_route(table.entries_for(NodeId(3))).map_or("none".into(), |e| format!("{:?}", e.path.iter().map(|n| n.0).collect::<Vec<_>>())),
    );
    if let RrepAction::Complete(e) = source.handle_rrep(&rrep(&[0, 2, 3]), &far) {
        table.insert(e);
    }
    s.exact("handle_rrep", "two paths both stored", 2, table.entries_for(NodeId(3)).len());
    let distrusting = StubCtx {
        neighbors: BTreeSet::new(),
        blacklisted: [NodeId(1)].into(),
    };
    s.exact(
        "handle_rrep",
        "reply through blacklisted relay",
        "discarded",
        match source.handle_rrep(&rrep(&[0, 1, 3]), &distrusting) {
            RrepAction::Discard(_) => "discarded",
            _ => "accepted",
        },
    );

    s.num("path_score", "[1, 1, 1]", 3.0, path_score(&[1.0, 1.0, 1.0]));
    s.num("path_score", "zero link vetoes", 0.0, path_score(&[5.0, 0.0, 7.0]));
    s.num("path_score", "[8]", 8.0, path_score(&[8.0]));

    let p1 = entry(&[0, 1, 2, 9], 1.0);
    let p2 = entry(&[0, 3, 9], 1.45);
    s.exact(
        "select_route",
        "scores 3.0 vs 2.9",
        "[0, 1, 2, 9]",
        select_route(&[p2.clone(), p1.clone()]).map_or("none".into(), |e| format!("{:?}", e.path.iter().map(|n| n.0).collect::<Vec<_>>())),
    );
    let tied3 = entry(&[0, 1, 2, 9], 1.0);
    let tied2 = entry(&[0, 4, 9], 1.5);
    s.exact(
        "select_route",
        "equal scores, fewer hops wins",
        "[0, 4, 9]",
        select_route(&[tied3, tied2]).map_or("none".into(), |e| format!("{:?}", e.path.iter().map(|n| n.0).collect::<Vec<_>>())),
    );
    let vetoed = [p1.rescored(|n| if n == NodeId(1) { IfValue::Infinite } else { IfValue::ONE }),
        p2.rescored(|n| if n == NodeId(3) { IfValue::Infinite } else { IfValue::ONE })];
    s.exact("select_route", "every path blacklisted", "route failure", match select_route(&vetoed) {
        Ok(_) => "selected",
        Err(RoutingError::RouteFailure) => "route failure",
        Err(_) => "other error",
    });
}

/// Evaluates every worked example with the given constants.
pub fn run_suite(params: &SuiteParams) -> Vec<Check> {
    let mut s = Suite { checks: Vec::new() };
    kinematics(&mut s);
    delays(&mut s, params);
    trust(&mut s);
    routing(&mut s);
    s.checks
}
