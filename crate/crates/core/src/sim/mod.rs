//! Discrete-event simulation of a mobile cognitive radio sensor network
//! running trust-aware reactive routing.
//!
//! All randomness comes from one seeded ChaCha stream and events are ordered
//! by `(time, insertion)`, so a `(config, seed)` pair always yields the same
//! trace.

mod behavior;
mod event;
mod mobility;

pub use behavior::{drop_observers, inject_malicious_behavior, Forwarding};
pub use event::{EventQueue, SimEvent};
pub use mobility::{advance, mobility_tick, Area, InvalidStep};

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ClusterMode, ScenarioConfig};
use crate::delay::DelayModel;
use crate::error::SimError;
use crate::kinematics::{
    direction_angle_or_zero, displacement, distance_from_rssi, speed, transmit_weight_with_floor,
    MobilitySample, RadioParams, TransmitWeightInputs,
};
use crate::metrics::RunMetrics;
use crate::model::{
    validate_scenario, ChannelId, ChannelSet, NodeId, NodeState, Position, Timestamp,
};
use crate::routing::{
    link_if, path_score, select_route, ControlMessage, LinkMetrics, RouteContext, RouteEntry,
    Router, RrepAction, RreqAction, SenderSample,
};
use crate::spectrum::{
    exchange_acl, form_clusters, form_fixed_clusters, recompute_common, AclBroadcast, Cluster,
    ClusterCandidate, NeighborView, PrimaryUser, SpectrumModel,
};
use crate::trace::{ClusterSnapshot, Trace, TraceEvent};
use crate::trust::{if_value, IfValue, ReportOutcome, TrustLedger};

/// Control message bytes per carried path hop.
const HOP_FIELD_BYTES: f64 = 16.0;
/// Data header bytes per source-route entry (node id).
const ROUTE_ENTRY_BYTES: f64 = 4.0;
/// Extra data header bytes per source-route entry carrying its IF value.
const ROUTE_IF_BYTES: f64 = 8.0;
/// Closest distance fed to the path-loss model.
const MIN_RSSI_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Trace,
}

/// Runs one scenario to completion.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let violations = validate_scenario(config);
    if !violations.is_empty() {
        return Err(SimError::InvalidConfig(violations));
    }
    if config.scenario.run_time_s == 0.0 {
        return Ok(RunOutput {
            metrics: RunMetrics::empty(0.0, config.packet_bits()),
            trace: Trace::new(),
        });
    }
    let mut sim = Simulator::new(config.clone());
    sim.run_to_end();
    Ok(sim.finish())
}

#[derive(Debug, Clone)]
struct Packet {
    id: u64,
    src: NodeId,
    dst: NodeId,
    gen_t: f64,
    path: Vec<NodeId>,
    /// Index in `path` of the node holding the packet.
    hop: usize,
}

#[derive(Debug, Clone, Copy)]
struct Flow {
    src: NodeId,
    dst: NodeId,
    start: f64,
    interval: f64,
}

#[derive(Debug)]
struct Discovery {
    seq: u64,
    retries_left: u32,
    buffer: Vec<Packet>,
}

#[derive(Debug)]
enum Msg {
    Data(Packet),
    Control {
        msg: Rc<ControlMessage>,
        ledger: Option<Rc<TrustLedger>>,
    },
}

#[derive(Debug)]
enum Ev {
    Tick(u64),
    PuToggle { pu: usize, on: bool },
    Send { flow: usize },
    Deliver { to: NodeId, from: NodeId, msg: Msg },
    WindowClose { node: NodeId, dst: NodeId, seq: u64 },
    Recluster(u64),
    Snapshot(u64),
    Watchdog { subject: NodeId, observers: Vec<NodeId> },
}

/// Per-node protocol state beyond [`NodeState`].
#[derive(Debug)]
struct Runtime {
    ledger: TrustLedger,
    /// Per sender, the largest `entry_count` of a replica already merged.
    /// Replicas only grow, so a smaller or equal count adds no reports.
    absorbed: Vec<usize>,
    view: NeighborView,
    free: ChannelSet,
    tuned: ChannelId,
    /// End of the current transmission; one transceiver per node.
    busy_until: f64,
    /// Nodes within range at the last mobility tick.
    neighbors: Vec<NodeId>,
    warned: BTreeSet<NodeId>,
    discoveries: BTreeMap<NodeId, Discovery>,
    active: BTreeMap<NodeId, RouteEntry>,
}

struct World {
    cfg: ScenarioConfig,
    area: Area,
    states: Vec<NodeState>,
    rt: Vec<Runtime>,
    spectrum: SpectrumModel,
    delay: DelayModel,
    radio: RadioParams,
    head_of: Vec<Option<NodeId>>,
    clusters: Vec<Cluster>,
    /// Time at which `states` positions were last advanced.
    tick_time: f64,
    trust: bool,
    rng: RefCell<ChaCha8Rng>,
    noise: Option<Normal<f64>>,
}

impl World {
    fn pos_at(&self, node: NodeId, t: f64) -> Position {
        let s = &self.states[node.index()];
        advance(s.pos, s.heading, s.speed_setpoint, t - self.tick_time, self.area).0
    }

    fn data_bits(&self) -> f64 {
        self.cfg.packet_bits()
    }

    /// Payload plus the source-route header for a `path_len`-node route;
    /// with trust enabled every entry also carries the node's IF.
    fn data_wire_bits(&self, path_len: usize) -> f64 {
        let per_entry = if self.trust { ROUTE_ENTRY_BYTES + ROUTE_IF_BYTES } else { ROUTE_ENTRY_BYTES };
        self.data_bits() + 8.0 * per_entry * path_len as f64
    }

    fn control_bits(&self, hop_fields: usize, ledger_bytes: usize) -> f64 {
        8.0 * (f64::from(self.cfg.traffic.control_size_bytes)
            + HOP_FIELD_BYTES * hop_fields as f64
            + ledger_bytes as f64)
    }

    fn neighbor_count(&self, node: NodeId) -> u32 {
        self.rt[node.index()].neighbors.len() as u32
    }

    /// Queuing plus backoff on the shared control channel; no retuning.
    fn control_latency(&self, node: NodeId, bits: f64) -> f64 {
        let v = self.neighbor_count(node);
        self.delay
            .link(bits, v, v + 1, ChannelId(0), ChannelId(0))
            .expect("validated delay parameters")
    }

    /// Nodes contending for `channel` around `node`, itself included.
    fn contenders(&self, node: NodeId, channel: ChannelId) -> u32 {
        1 + self.rt[node.index()]
            .neighbors
            .iter()
            .filter(|n| self.rt[n.index()].free.contains(channel))
            .count() as u32
    }

    fn data_link_delay(&self, node: NodeId, bits: f64, from: ChannelId, to: ChannelId) -> f64 {
        self.delay
            .link(
                bits,
                self.neighbor_count(node),
                self.contenders(node, to),
                from,
                to,
            )
            .expect("validated delay parameters")
    }

    fn if_of(&self, observer: NodeId, subject: NodeId) -> IfValue {
        if self.trust {
            if_value(&self.rt[observer.index()].ledger, subject)
        } else {
            IfValue::ONE
        }
    }

    fn is_blacklisted_by(&self, observer: NodeId, subject: NodeId) -> bool {
        self.trust && self.rt[observer.index()].ledger.is_blacklisted(subject)
    }

    fn sample(&self, node: NodeId, t_recv: f64, t_send: f64, tx_time: f64) -> SenderSample {
        SenderSample {
            node,
            recv_pos: self.pos_at(node, t_recv),
            send_pos: self.pos_at(node, t_send + tx_time),
            t_recv: Timestamp(t_recv),
            t_send: Timestamp(t_send),
            tx_time,
            channel: self.rt[node.index()].tuned,
        }
    }

    /// Link metrics of `from -> to` as evaluated by `me`, one of the two
    /// endpoints, for a request toward `destination`.
    fn estimate_link(
        &self,
        me: NodeId,
        from: NodeId,
        to: NodeId,
        destination: NodeId,
        sample: &SenderSample,
        now: f64,
    ) -> Option<LinkMetrics> {
        let other = if me == to { from } else { to };
        let own = &self.rt[me.index()];
        let common = own.free.intersection(own.view.get(other)?.free);
        if common.is_empty() {
            return None;
        }
        let true_distance = self.pos_at(from, now).distance(self.pos_at(to, now));
        if true_distance > self.cfg.radio.tx_range_m {
            return None;
        }
        let mut loss = self.radio.path_loss_at(true_distance.max(MIN_RSSI_DISTANCE));
        if let Some(noise) = &self.noise {
            loss += noise.sample(&mut *self.rng.borrow_mut());
        }
        let d = distance_from_rssi(&self.radio.with_path_loss(loss)).ok()?;

        let (dest_recv_pos, dest_send_pos) = if destination == me {
            (
                self.pos_at(me, sample.t_recv.secs()),
                self.pos_at(me, sample.t_send.secs() + sample.tx_time),
            )
        } else if let Some(e) = own.view.get(destination) {
            (e.prev.map_or(e.pos, |(p, _)| p), e.pos)
        } else {
            (Position::new(0.0, 0.0), Position::new(0.0, 0.0))
        };
        let motion = MobilitySample {
            recv_pos: sample.recv_pos,
            send_pos: sample.send_pos,
            dest_recv_pos,
            dest_send_pos,
            t_recv: sample.t_recv,
            t_send: sample.t_send,
            tx_time: sample.tx_time,
        };
        let theta = direction_angle_or_zero(&motion);
        let probe_bits = self.control_bits(0, 0);
        let probe = 2.0 * (self.control_latency(from, probe_bits) + self.delay.tx_time(probe_bits));
        let xi = transmit_weight_with_floor(
            &TransmitWeightInputs {
                tx_range: self.cfg.radio.tx_range_m,
                displacement: displacement(d, theta),
                probe_link_delay: probe,
                speed: speed(&motion).unwrap_or(0.0),
            },
            self.cfg.routing.transmit_weight_floor,
        )
        .ok()?;
        let channel = common.nearest_to(sample.channel)?;
        let delay = self.data_link_delay(from, self.data_bits(), sample.channel, channel);
        let link_trust = link_if(self.if_of(me, from), self.if_of(me, to));
        LinkMetrics::new(xi, delay, common.len() as u32, link_trust).ok()
    }
}

struct Ctx<'a> {
    w: &'a World,
    me: NodeId,
    destination: NodeId,
    now: f64,
}

impl RouteContext for Ctx<'_> {
    fn now(&self) -> Timestamp {
        Timestamp(self.now)
    }

    fn is_blacklisted(&self, node: NodeId) -> bool {
        self.w.is_blacklisted_by(self.me, node)
    }

    fn knows_neighbor(&self, node: NodeId) -> bool {
        self.w.rt[self.me.index()].view.contains(node)
    }

    fn estimate_link(&self, from: NodeId, to: NodeId, sample: &SenderSample) -> Option<LinkMetrics> {
        self.w
            .estimate_link(self.me, from, to, self.destination, sample, self.now)
    }

    fn local_sample(&self) -> SenderSample {
        let tx = self.w.delay.tx_time(self.w.control_bits(0, 0));
        self.w.sample(self.me, self.now, self.now, tx)
    }

    fn cluster_head_of(&self, node: NodeId) -> Option<NodeId> {
        self.w.head_of.get(node.index()).copied().flatten()
    }
}

struct Simulator {
    w: World,
    routers: Vec<Router>,
    queue: EventQueue<Ev>,
    trace: Trace,
    now: f64,
    flows: Vec<Flow>,
    next_packet: u64,
    generated: u64,
    delivered: u64,
    dropped: u64,
}

impl Simulator {
    fn new(cfg: ScenarioConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.scenario.rng_seed);
        let sc = &cfg.scenario;
        let area = Area {
            width: sc.area_width_m,
            height: sc.area_height_m,
        };
        let mut states = Vec::new();
        let mut pus = Vec::new();
        if cfg.nodes.is_empty() {
            for i in 0..sc.node_count {
                let pos = Position::new(
                    rng.random::<f64>() * area.width,
                    rng.random::<f64>() * area.height,
                );
                let heading = rng.random_range(-PI..PI);
                let channels: ChannelSet = index::sample(&mut rng, sc.channel_count, sc.channels_per_node)
                    .iter()
                    .map(|c| ChannelId(c as u16))
                    .collect();
                let mut s = NodeState::new(NodeId(i as u32), pos, channels);
                s.speed_setpoint = sc.speed_mps;
                s.heading = heading;
                states.push(s);
            }
            let mut bad = index::sample(&mut rng, sc.node_count, sc.malicious_count).into_vec();
            bad.sort_unstable();
            for i in bad {
                states[i].is_malicious = true;
            }
            for k in 0..cfg.spectrum.pu_count {
                let pos = Position::new(
                    rng.random::<f64>() * area.width,
                    rng.random::<f64>() * area.height,
                );
                let channel = ChannelId(rng.random_range(0..sc.channel_count) as u16);
                pus.push(PrimaryUser::with_renewal_schedule(
                    k as u32,
                    pos,
                    channel,
                    cfg.spectrum.pu_range_m,
                    cfg.spectrum.pu_mean_on_s,
                    cfg.spectrum.pu_mean_off_s,
                    sc.run_time_s,
                    &mut rng,
                ));
            }
        } else {
            let mut specs: Vec<_> = cfg.nodes.iter().collect();
            specs.sort_by_key(|s| s.id);
            for spec in specs {
                let pos = Position::new(spec.x, spec.y);
                if spec.primary_user {
                    pus.push(PrimaryUser::always_on(
                        pus.len() as u32,
                        pos,
                        ChannelId(spec.channels[0]),
                        cfg.spectrum.pu_range_m,
                    ));
                    continue;
                }
                let channels: ChannelSet = spec.channels.iter().map(|&c| ChannelId(c)).collect();
                let mut s = NodeState::new(NodeId(spec.id), pos, channels);
                s.speed_setpoint = sc.speed_mps;
                s.heading = spec.heading.unwrap_or_else(|| rng.random_range(-PI..PI));
                s.is_malicious = spec.malicious;
                states.push(s);
            }
        }

        let interval = 1.0 / cfg.traffic.cbr_rate_pps;
        let honest: Vec<NodeId> = states.iter().filter(|s| !s.is_malicious).map(|s| s.id).collect();
        let mut flows = Vec::new();
        if honest.len() >= 2 {
            let wanted = (cfg.traffic.source_fraction * states.len() as f64).round() as usize;
            let k = wanted.clamp(1, honest.len());
            let mut pool = honest.clone();
            pool.shuffle(&mut rng);
            for &src in &pool[..k] {
                let dst = loop {
                    let d = honest[rng.random_range(0..honest.len())];
                    if d != src {
                        break d;
                    }
                };
                let start = rng.random::<f64>() * interval;
                flows.push(Flow {
                    src,
                    dst,
                    start,
                    interval,
                });
            }
        }

        let spectrum = SpectrumModel::new(sc.channel_count, pus);
        let rt = states
            .iter()
            .map(|s| {
                let free = spectrum.sense_spectrum(s, Timestamp::ZERO);
                Runtime {
                    ledger: TrustLedger::new(),
                    absorbed: vec![0; states.len()],
                    view: NeighborView::default(),
                    free,
                    tuned: free.first().unwrap_or(ChannelId(0)),
                    busy_until: 0.0,
                    neighbors: Vec::new(),
                    warned: BTreeSet::new(),
                    discoveries: BTreeMap::new(),
                    active: BTreeMap::new(),
                }
            })
            .collect();
        let noise = (cfg.radio.rssi_noise_db > 0.0)
            .then(|| Normal::new(0.0, cfg.radio.rssi_noise_db).expect("finite noise"));
        let delay = DelayModel {
            collision_prob: cfg.delay.collision_prob,
            window: cfg.delay.window_s,
            per_step_delay: cfg.delay.switch_step_delay_s,
            data_rate_bps: cfg.delay.data_rate_bps,
        };
        let radio = RadioParams {
            path_loss_db: 0.0,
            loss_exponent: cfg.radio.loss_exponent,
            wavelength: cfg.radio.wavelength_m,
            ref_distance: cfg.radio.ref_distance_m,
        };
        let n = states.len();
        let w = World {
            trust: cfg.scenario.variant.trust_enabled(),
            cfg,
            area,
            states,
            rt,
            spectrum,
            delay,
            radio,
            head_of: vec![None; n],
            clusters: Vec::new(),
            tick_time: 0.0,
            rng: RefCell::new(rng),
            noise,
        };
        Simulator {
            routers: (0..n).map(|i| Router::new(NodeId(i as u32))).collect(),
            w,
            queue: EventQueue::new(),
            trace: Trace::new(),
            now: 0.0,
            flows,
            next_packet: 0,
            generated: 0,
            delivered: 0,
            dropped: 0,
        }
    }

    fn cfg(&self) -> &ScenarioConfig {
        &self.w.cfg
    }

    fn at(&mut self, t: f64, ev: Ev) {
        self.queue.schedule(Timestamp(t), ev);
    }

    fn record(&mut self, event: TraceEvent) {
        self.trace.push(self.now, event);
    }

    fn run_to_end(&mut self) {
        let run_time = self.cfg().scenario.run_time_s;
        let malicious = self
            .w
            .states
            .iter()
            .filter(|s| s.is_malicious)
            .map(|s| s.id)
            .collect();
        self.record(TraceEvent::Start {
            variant: self.cfg().scenario.variant.to_string(),
            node_count: self.w.states.len(),
            seed: self.cfg().scenario.rng_seed,
            run_time,
            packet_bits: self.w.data_bits(),
            malicious,
        });
        self.refresh_topology();
        self.recluster("initial");

        self.schedule_next_tick(1);
        let toggles: Vec<(f64, usize, bool)> = self
            .w
            .spectrum
            .primary_users
            .iter()
            .enumerate()
            .flat_map(|(k, pu)| pu.transitions(run_time).into_iter().map(move |(t, on)| (t, k, on)))
            .collect();
        for (t, pu, on) in toggles {
            self.at(t, Ev::PuToggle { pu, on });
        }
        for (k, f) in self.flows.clone().into_iter().enumerate() {
            self.at(f.start, Ev::Send { flow: k });
        }
        self.at(self.cfg().spectrum.recluster_period_s, Ev::Recluster(1));
        self.at(self.cfg().scenario.snapshot_interval_s, Ev::Snapshot(1));

        while self.queue.peek_time().is_some_and(|t| t.secs() <= run_time) {
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.at.secs();
            self.handle(ev.kind);
        }
        self.now = run_time;
    }

    fn finish(mut self) -> RunOutput {
        let queued = self
            .queue
            .iter()
            .filter(|e| matches!(e.kind, Ev::Deliver { msg: Msg::Data(_), .. }))
            .count();
        let buffered: usize = self
            .w
            .rt
            .iter()
            .flat_map(|r| r.discoveries.values())
            .map(|d| d.buffer.len())
            .sum();
        let in_flight = (queued + buffered) as u64;
        debug_assert_eq!(self.generated, self.delivered + self.dropped + in_flight);
        self.record(TraceEvent::End {
            generated: self.generated,
            delivered: self.delivered,
            dropped: self.dropped,
            in_flight,
        });
        RunOutput {
            metrics: RunMetrics::from_trace(&self.trace),
            trace: self.trace,
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Tick(k) => self.on_tick(k),
            Ev::PuToggle { pu, on } => self.on_pu_toggle(pu, on),
            Ev::Send { flow } => self.on_send(flow),
            Ev::Deliver { to, from, msg } => match msg {
                Msg::Data(p) => self.on_data(to, from, p),
                Msg::Control { msg, ledger } => self.on_control(to, from, &msg, ledger.as_deref()),
            },
            Ev::WindowClose { node, dst, seq } => self.on_window_close(node, dst, seq),
            Ev::Recluster(k) => {
                self.recluster("periodic");
                let next = (k + 1) as f64 * self.cfg().spectrum.recluster_period_s;
                self.at(next, Ev::Recluster(k + 1));
            }
            Ev::Snapshot(k) => {
                self.on_snapshot();
                let next = (k + 1) as f64 * self.cfg().scenario.snapshot_interval_s;
                self.at(next, Ev::Snapshot(k + 1));
            }
            Ev::Watchdog { subject, observers } => self.on_watchdog(subject, &observers),
        }
    }

    fn schedule_next_tick(&mut self, k: u64) {
        let t = k as f64 * self.cfg().scenario.mobility_tick_s;
        if t <= self.cfg().scenario.run_time_s {
            self.at(t, Ev::Tick(k));
        }
    }

    fn on_tick(&mut self, k: u64) {
        let dt = self.now - self.w.tick_time;
        if dt > 0.0 {
            mobility_tick(&mut self.w.states, dt, self.w.area).expect("positive step");
        }
        self.w.tick_time = self.now;
        self.refresh_topology();
        let now = self.now;
        let ttl = self.cfg().routing.route_ttl_s;
        for (s, r) in self.w.states.iter_mut().zip(&mut self.w.rt) {
            s.routing_table.remove_expired(Timestamp(now), ttl);
            r.active.retain(|_, e| now - e.discovered_at.secs() < ttl);
        }
        self.record(TraceEvent::MobilityTick { tick: k });
        self.check_clusters("common_lost");
        self.schedule_next_tick(k + 1);
    }

    /// Recomputes physical neighbors, sensed free channels and every node's
    /// neighbor view at the current positions.
    fn refresh_topology(&mut self) {
        let now = Timestamp(self.now);
        let range = self.cfg().radio.tx_range_m;
        let w = &mut self.w;
        let n = w.states.len();
        for i in 0..n {
            let p = w.states[i].pos;
            w.rt[i].neighbors = (0..n)
                .filter(|&j| j != i && w.states[j].pos.distance(p) <= range)
                .map(|j| NodeId(j as u32))
                .collect();
            w.rt[i].free = w.spectrum.sense_spectrum(&w.states[i], now);
        }
        let broadcasts: Vec<AclBroadcast> = (0..n)
            .map(|i| AclBroadcast {
                node: NodeId(i as u32),
                free: w.rt[i].free,
                neighbors: Arc::from(w.rt[i].neighbors.as_slice()),
                pos: w.states[i].pos,
            })
            .collect();
        let empty = BTreeSet::new();
        for i in 0..n {
            let blacklist = if w.trust { w.rt[i].ledger.blacklist() } else { &empty };
            let view = exchange_acl(NodeId(i as u32), &broadcasts, blacklist, Some(&w.rt[i].view), now);
            w.rt[i].view = view;
        }
    }

    fn check_clusters(&mut self, trigger: &str) {
        let rt = &self.w.rt;
        let broken = self.w.clusters.iter().any(|c| {
            c.members.len() > 1 && recompute_common(c, |m| rt[m.index()].free).is_empty()
        });
        if broken {
            self.recluster(trigger);
        }
    }

    fn recluster(&mut self, trigger: &str) {
        let w = &self.w;
        let candidates: Vec<ClusterCandidate> = (0..w.states.len())
            .map(|i| {
                let id = NodeId(i as u32);
                ClusterCandidate {
                    id,
                    free: w.rt[i].free,
                    neighbors: w.rt[i]
                        .neighbors
                        .iter()
                        .copied()
                        .filter(|b| w.rt[i].view.contains(*b) && w.rt[b.index()].view.contains(id))
                        .collect(),
                }
            })
            .collect();
        let clusters = match self.cfg().spectrum.cluster_mode {
            ClusterMode::Greedy => form_clusters(&candidates),
            ClusterMode::Fixed => form_fixed_clusters(&candidates, self.cfg().spectrum.fixed_cluster_count),
        };
        for c in &clusters {
            for m in &c.members {
                self.w.states[m.index()].cluster = Some(c.id);
                self.w.head_of[m.index()] = Some(c.head);
                if let Some(ch) = c.common_channels.first() {
                    self.w.rt[m.index()].tuned = ch;
                }
            }
        }
        let snapshot = clusters
            .iter()
            .map(|c| ClusterSnapshot {
                head: c.head,
                members: c.members.iter().copied().collect(),
                common: c.common_channels.iter().map(|ch| ch.0).collect(),
            })
            .collect();
        self.w.clusters = clusters;
        self.record(TraceEvent::Recluster {
            trigger: trigger.to_string(),
            clusters: snapshot,
        });
    }

    fn on_pu_toggle(&mut self, pu: usize, on: bool) {
        let p = &self.w.spectrum.primary_users[pu];
        let (id, channel) = (p.id, p.channel.0);
        self.record(TraceEvent::PuToggle { pu: id, channel, on });
        let now = Timestamp(self.now);
        for i in 0..self.w.states.len() {
            // Positions move between ticks; sense at the current spot.
            let pos = self.w.pos_at(NodeId(i as u32), self.now);
            let supported = self.w.states[i].channels;
            self.w.rt[i].free = self.w.spectrum.sense_at(supported, pos, now);
        }
        self.check_clusters("pu_active");
    }

    fn on_snapshot(&mut self) {
        let mut merged = TrustLedger::new();
        for (s, r) in self.w.states.iter().zip(&self.w.rt) {
            if !s.is_malicious {
                merged.merge_from(&r.ledger);
            }
        }
        let reports = merged
            .subjects()
            .map(|s| (s, merged.reporters(s).collect()))
            .collect();
        let blacklist = merged.blacklist().iter().copied().collect();
        self.record(TraceEvent::Snapshot { reports, blacklist });
    }

    fn drop_packet(&mut self, packet: &Packet, node: NodeId, reason: &str) {
        self.dropped += 1;
        self.record(TraceEvent::Drop {
            packet: packet.id,
            node,
            reason: reason.to_string(),
        });
    }

    fn on_send(&mut self, flow: usize) {
        let f = self.flows[flow];
        let id = self.next_packet;
        self.next_packet += 1;
        self.generated += 1;
        self.record(TraceEvent::DataGenerated {
            packet: id,
            src: f.src,
            dst: f.dst,
        });
        self.at(self.now + f.interval, Ev::Send { flow });
        let packet = Packet {
            id,
            src: f.src,
            dst: f.dst,
            gen_t: self.now,
            path: Vec::new(),
            hop: 0,
        };
        self.route_or_buffer(packet);
    }

    fn route_is_usable(&self, node: NodeId, e: &RouteEntry) -> bool {
        self.now - e.discovered_at.secs() < self.cfg().routing.route_ttl_s
            && !e.path.iter().any(|n| self.w.is_blacklisted_by(node, *n))
    }

    /// Best cached route rescored under `node`'s current trust view.
    fn select_from_table(&self, node: NodeId, dst: NodeId) -> Option<RouteEntry> {
        let candidates: Vec<RouteEntry> = self.w.states[node.index()]
            .routing_table
            .entries_for(dst)
            .iter()
            .filter(|e| self.now - e.discovered_at.secs() < self.cfg().routing.route_ttl_s)
            .map(|e| e.rescored(|n| self.w.if_of(node, n)))
            .collect();
        select_route(&candidates).ok().cloned()
    }

    fn activate(&mut self, node: NodeId, entry: RouteEntry) {
        self.record(TraceEvent::RouteSelect {
            node,
            dst: entry.destination,
            path: entry.path.clone(),
            score: entry.path_score,
        });
        self.w.rt[node.index()].active.insert(entry.destination, entry);
    }

    fn route_or_buffer(&mut self, mut packet: Packet) {
        let (src, dst) = (packet.src, packet.dst);
        let active = self.w.rt[src.index()].active.get(&dst).cloned();
        let route = match active {
            Some(e) if self.route_is_usable(src, &e) => Some(e.path),
            Some(_) => {
                self.w.rt[src.index()].active.remove(&dst);
                None
            }
            None => None,
        };
        let route = route.or_else(|| {
            let e = self.select_from_table(src, dst)?;
            let path = e.path.clone();
            self.activate(src, e);
            Some(path)
        });
        if let Some(path) = route {
            packet.path = path;
            self.send_data(src, packet);
            return;
        }
        let limit = self.cfg().traffic.queue_limit as usize;
        match self.w.rt[src.index()].discoveries.get_mut(&dst) {
            Some(d) if d.buffer.len() >= limit => self.drop_packet(&packet, src, "buffer_overflow"),
            Some(d) => d.buffer.push(packet),
            None => {
                let retries_left = self.cfg().routing.rreq_retries;
                self.w.rt[src.index()].discoveries.insert(
                    dst,
                    Discovery {
                        seq: 0,
                        retries_left,
                        buffer: vec![packet],
                    },
                );
                self.start_discovery(src, dst);
            }
        }
    }

    fn start_discovery(&mut self, src: NodeId, dst: NodeId) {
        let tx = self.w.delay.tx_time(self.w.control_bits(1, 0));
        let sample = self.w.sample(src, self.now, self.now, tx);
        let rreq = self.routers[src.index()].originate_rreq(dst, sample);
        let seq = rreq.seq;
        if let Some(d) = self.w.rt[src.index()].discoveries.get_mut(&dst) {
            d.seq = seq;
        }
        self.record(TraceEvent::RreqSend {
            node: src,
            origin: src,
            seq,
            dst,
        });
        self.send_control(src, ControlMessage::Rreq(rreq), None, self.now);
        let close = self.now + self.cfg().routing.rrep_wait_s;
        self.at(close, Ev::WindowClose { node: src, dst, seq });
    }

    fn on_window_close(&mut self, node: NodeId, dst: NodeId, seq: u64) {
        let r = &self.w.rt[node.index()];
        if r.discoveries.get(&dst).map(|d| d.seq) != Some(seq) {
            return;
        }
        if let Some(entry) = self.select_from_table(node, dst) {
            let path = entry.path.clone();
            self.activate(node, entry);
            let d = self.w.rt[node.index()].discoveries.remove(&dst).expect("open discovery");
            for mut p in d.buffer {
                p.path = path.clone();
                self.send_data(node, p);
            }
            return;
        }
        let d = self.w.rt[node.index()].discoveries.get_mut(&dst).expect("open discovery");
        if d.retries_left > 0 {
            d.retries_left -= 1;
            self.record(TraceEvent::RouteFailure { node, dst, retry: true });
            self.start_discovery(node, dst);
        } else {
            self.record(TraceEvent::RouteFailure { node, dst, retry: false });
            let d = self.w.rt[node.index()].discoveries.remove(&dst).expect("open discovery");
            for p in &d.buffer {
                self.drop_packet(p, node, "no_route");
            }
        }
    }

    fn send_data(&mut self, node: NodeId, mut packet: Packet) {
        let next = packet.path[packet.hop + 1];
        if self.w.is_blacklisted_by(node, next) {
            self.drop_packet(&packet, node, "blacklisted_next_hop");
            return;
        }
        let i = node.index();
        let distance = self.w.pos_at(node, self.now).distance(self.w.pos_at(next, self.now));
        let common = self.w.rt[i].free.intersection(self.w.rt[next.index()].free);
        let Some(channel) = common.nearest_to(self.w.rt[i].tuned) else {
            self.link_broken(node, packet);
            return;
        };
        if distance > self.cfg().radio.tx_range_m {
            self.link_broken(node, packet);
            return;
        }
        let bits = self.w.data_wire_bits(packet.path.len());
        let tx = self.w.delay.tx_time(bits);
        let backlog = ((self.w.rt[i].busy_until - self.now).max(0.0) / tx) as u32;
        if backlog >= self.cfg().traffic.queue_limit {
            self.drop_packet(&packet, node, "queue_overflow");
            return;
        }
        let delta = self.w.data_link_delay(node, bits, self.w.rt[i].tuned, channel);
        let start = self.now.max(self.w.rt[i].busy_until);
        self.w.rt[i].busy_until = start + tx;
        self.w.rt[i].tuned = channel;
        self.w.rt[next.index()].tuned = channel;
        self.record(TraceEvent::DataForward {
            packet: packet.id,
            node,
            next,
        });
        packet.hop += 1;
        self.at(
            start + tx + delta,
            Ev::Deliver {
                to: next,
                from: node,
                msg: Msg::Data(packet),
            },
        );
    }

    fn link_broken(&mut self, node: NodeId, packet: Packet) {
        if node == packet.src {
            self.w.rt[node.index()].active.remove(&packet.dst);
        }
        self.drop_packet(&packet, node, "link_broken");
    }

    fn on_data(&mut self, to: NodeId, from: NodeId, packet: Packet) {
        if to == packet.dst {
            self.delivered += 1;
            self.record(TraceEvent::Deliver {
                packet: packet.id,
                src: packet.src,
                dst: packet.dst,
                gen_t: packet.gen_t,
                hops: packet.hop,
            });
            return;
        }
        let p = self.cfg().trust.drop_probability;
        let verdict = {
            let mut rng = self.w.rng.borrow_mut();
            inject_malicious_behavior(&self.w.states[to.index()], p, &mut *rng)
        };
        match verdict {
            Forwarding::Forward => self.send_data(to, packet),
            Forwarding::Drop => {
                self.drop_packet(&packet, to, "malicious");
                if self.w.trust {
                    let observers = drop_observers(&self.w.states, to, from, self.cfg().radio.tx_range_m);
                    let t = self.now + self.cfg().trust.watchdog_timeout_s;
                    self.at(t, Ev::Watchdog { subject: to, observers });
                }
            }
        }
    }

    fn on_watchdog(&mut self, subject: NodeId, observers: &[NodeId]) {
        let now = Timestamp(self.now);
        for &o in observers {
            let r = &self.w.rt[o.index()];
            if r.ledger.is_blacklisted(subject) {
                continue;
            }
            let count = r
                .view
                .get(subject)
                .map_or(self.w.neighbor_count(subject) as usize, |e| e.neighbors.len());
            let ledger = &mut self.w.rt[o.index()].ledger;
            ledger.observe_neighbor_count(subject, now, count as u32);
            let Ok(ReportOutcome::Recorded { warn, .. }) = ledger.record_report(subject, o, now) else {
                continue;
            };
            let rn = ledger.report_count(subject);
            self.record(TraceEvent::Report {
                observer: o,
                subject,
                rn,
            });
            let msg = ControlMessage::Report { subject, reporter: o };
            self.send_control(o, msg, None, self.now);
            if warn {
                self.on_blacklisted(o, subject);
            }
        }
    }

    fn on_blacklisted(&mut self, node: NodeId, subject: NodeId) {
        self.record(TraceEvent::Blacklist {
            observer: node,
            subject,
        });
        let i = node.index();
        self.w.states[i].routing_table.remove_through(subject);
        self.w.rt[i].active.retain(|_, e| !e.contains(subject));
        if self.w.rt[i].warned.insert(subject) {
            self.record(TraceEvent::Warning { node, subject });
            let msg = ControlMessage::Warning { subject, origin: node };
            self.send_control(node, msg, None, self.now);
        }
    }

    /// Merges a neighbor's ledger replica into `node`'s, ignoring reports
    /// filed by nodes `node` has already convicted.
    fn absorb_ledger(&mut self, node: NodeId, from: NodeId, incoming: &TrustLedger) {
        let now = Timestamp(self.now);
        let r = &mut self.w.rt[node.index()];
        let before = r.ledger.blacklist().clone();
        let generation = incoming.entry_count();
        if generation > r.absorbed[from.index()] {
            r.ledger.merge_from_excluding(incoming, &before);
            r.absorbed[from.index()] = generation;
        } else {
            r.ledger.merge_observations_from(incoming);
        }
        let subjects: Vec<NodeId> = incoming
            .subjects()
            .filter(|s| incoming.has_report_outside(*s, &before))
            .collect();
        for s in subjects {
            if let Some(e) = r.view.get(s) {
                r.ledger.observe_neighbor_count(s, now, e.neighbors.len() as u32);
            }
            r.ledger.evaluate_malicious(s);
        }
        let newly: Vec<NodeId> = r
            .ledger
            .blacklist()
            .difference(&before)
            .copied()
            .filter(|s| *s != node)
            .collect();
        for s in newly {
            self.on_blacklisted(node, s);
        }
    }

    fn on_control(&mut self, to: NodeId, from: NodeId, msg: &ControlMessage, ledger: Option<&TrustLedger>) {
        if self.w.is_blacklisted_by(to, from) {
            return;
        }
        let honest = !self.w.states[to.index()].is_malicious;
        if let (true, true, Some(l)) = (self.w.trust, honest, ledger) {
            self.absorb_ledger(to, from, l);
        }
        match msg {
            ControlMessage::Rreq(rreq) => {
                let ctx = Ctx {
                    w: &self.w,
                    me: to,
                    destination: rreq.destination,
                    now: self.now,
                };
                match self.routers[to.index()].handle_rreq(rreq, &ctx) {
                    RreqAction::Drop(_) => {}
                    RreqAction::Rebroadcast(next) => {
                        let jitter = self.w.rng.borrow_mut().random::<f64>()
                            * self.cfg().routing.forward_jitter_s;
                        self.record(TraceEvent::RreqSend {
                            node: to,
                            origin: next.origin,
                            seq: next.seq,
                            dst: next.destination,
                        });
                        let t = self.now + jitter;
                        self.send_control(to, ControlMessage::Rreq(next), None, t);
                    }
                    RreqAction::Reply(rrep) => {
                        let scores: Vec<f64> = rrep.links.iter().map(|l| l.nhdf).collect();
                        self.record(TraceEvent::RrepSend {
                            node: to,
                            source: rrep.source,
                            seq: rrep.seq,
                            path: rrep.path.clone(),
                            score: path_score(&scores).unwrap_or(0.0),
                        });
                        let next = rrep.path[rrep.cursor];
                        self.send_control(to, ControlMessage::Rrep(rrep), Some(next), self.now);
                    }
                }
            }
            ControlMessage::Rrep(rrep) => {
                let ctx = Ctx {
                    w: &self.w,
                    me: to,
                    destination: rrep.destination,
                    now: self.now,
                };
                match self.routers[to.index()].handle_rrep(rrep, &ctx) {
                    RrepAction::Discard(_) => {}
                    RrepAction::Forward { rrep, cache } => {
                        self.w.states[to.index()].routing_table.insert(cache);
                        let next = rrep.path[rrep.cursor];
                        self.send_control(to, ControlMessage::Rrep(rrep), Some(next), self.now);
                    }
                    RrepAction::Complete(entry) => {
                        self.record(TraceEvent::RouteDiscovered {
                            node: to,
                            dst: entry.destination,
                            path: entry.path.clone(),
                            score: entry.path_score,
                        });
                        self.w.states[to.index()].routing_table.insert(entry);
                    }
                }
            }
            // Trust updates travel in the piggybacked ledger.
            ControlMessage::Report { .. } | ControlMessage::Warning { .. } | ControlMessage::Acl { .. } => {}
        }
    }

    /// Transmits a control message on the node's transceiver no earlier than
    /// `earliest`. `to = None` broadcasts to every current neighbor. With
    /// trust enabled the sender's ledger replica rides along.
    fn send_control(&mut self, from: NodeId, mut msg: ControlMessage, to: Option<NodeId>, earliest: f64) {
        let i = from.index();
        let ledger = self.w.trust.then(|| Rc::new(self.w.rt[i].ledger.clone()));
        let ledger_bytes = ledger.as_ref().map_or(0, |l| l.wire_bytes(self.w.states.len()));
        let bits = self.w.control_bits(msg.hop_fields(), ledger_bytes);
        let tx = self.w.delay.tx_time(bits);
        let start = earliest.max(self.w.rt[i].busy_until);
        self.w.rt[i].busy_until = start + tx;
        if let ControlMessage::Rreq(r) = &mut msg {
            r.sample = self.w.sample(from, self.now, start, tx);
        }
        let arrival = start + tx + self.w.control_latency(from, bits);
        let receivers = match to {
            Some(k) => {
                let d = self.w.pos_at(from, start).distance(self.w.pos_at(k, start));
                if d <= self.cfg().radio.tx_range_m {
                    vec![k]
                } else {
                    Vec::new()
                }
            }
            None => self.w.rt[i].neighbors.clone(),
        };
        self.record(TraceEvent::Control {
            node: from,
            msg: msg.kind(),
            receivers: receivers.len(),
        });
        let msg = Rc::new(msg);
        for r in receivers {
            self.at(
                arrival,
                Ev::Deliver {
                    to: r,
                    from,
                    msg: Msg::Control {
                        msg: Rc::clone(&msg),
                        ledger: ledger.clone(),
                    },
                },
            );
        }
    }
}
