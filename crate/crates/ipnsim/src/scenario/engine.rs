//! The discrete-event simulation loop.
//!
//! The engine owns the event queue and wires the pure state machines
//! together: traffic events encapsulate files at their source agents,
//! forwarding sweeps route resident bundles over the contact plan, and the
//! per-link convergence layers carry them — retransmission sessions over
//! lossy deep-space links, plain serialization over reliable terrestrial
//! ones. Custody acknowledgements, retransmission timers, bundle expiry and
//! store pressure all run through the same queue, so a run is a single
//! deterministic interleaving: identical scenario and seed give a
//! byte-identical metrics log.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::metrics::{summary_csv, MetricsLog, Row, Summary};
use super::{ScenarioConfig, ScenarioError};
use crate::bundle::{AgentConfig, Bundle, BundleId, Disposition, FileId, NodeAgent, ReceiveOutcome};
use crate::contactplan::{ClKind, Contact, ContactPlan, LinkSpec, NodeId};
use crate::linkmodel::{link_budget, BandSpec};
use crate::ltp::{
    retransmit_timeout_s, LtpConfig, ReceiverSession, Segment, SegmentKind, SenderSession,
    SessionId, SessionState,
};
use crate::routing::{best_route, best_route_to_node, resolve_entity, Route};
use crate::simcore::{EventQueue, LinkState, RngStreams};

/// Margin added to bundle expiry timers so a boundary-exact bundle is
/// examined just after its deadline, never at it.
const EXPIRY_SLACK_S: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    /// Stops the run early; must not exceed the scenario horizon.
    pub until_s: Option<f64>,
    /// Emits a route-trace row for every forwarding decision.
    pub trace: bool,
}

#[derive(Debug)]
pub struct RunOutput {
    pub metrics_jsonl: String,
    pub summary_csv: String,
    pub summary: Summary,
}

/// Runs a scenario to its horizon (or `opts.until_s`) and returns the logs.
pub fn run_scenario(sc: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutput, ScenarioError> {
    let plan = sc.compute_plan()?;
    let end_s = match opts.until_s {
        None => sc.horizon_s,
        Some(u) if u > 0.0 && u <= sc.horizon_s => u,
        Some(u) => {
            return Err(ScenarioError::Invalid(vec![format!(
                "run end {u} s must lie in (0, {}] (the plan horizon)",
                sc.horizon_s
            )]))
        }
    };
    let seed = opts.seed.unwrap_or(sc.seed);
    let mut eng = Engine::new(sc, plan, seed, end_s, opts.trace);
    eng.prime();
    while let Some(ev) = eng.q.pop_due(end_s) {
        eng.handle(ev.time_s, ev.payload);
    }
    Ok(eng.finish())
}

// ------------------------------------------------------------------- events

#[derive(Debug, Clone)]
enum Ev {
    TrafficStart { index: usize },
    /// A contact window opens; sweep the transmitting node.
    ContactOpen { from: NodeId },
    /// Re-attempt forwarding of whatever is resident at a node.
    Sweep { node: NodeId },
    SegmentArrival { from: NodeId, to: NodeId, segment: Segment },
    /// Custody acknowledgement reaching the previous hop.
    HopAck { node: NodeId, bundle: BundleId },
    /// A reliable convergence layer handing a bundle up at `to`.
    Delivery { from: NodeId, to: NodeId, bundle: Box<Bundle>, attempt: u32 },
    SenderTimer { session: SessionId, serial: u32 },
    ReceiverTimer { session: SessionId, serial: u32 },
    /// A link's suspended segments may continue in a new window.
    LinkResume { from: NodeId, to: NodeId },
    CustodyTimeout { node: NodeId, bundle: BundleId, attempt: u32 },
    Expiry { node: NodeId, bundle: BundleId },
}

// ------------------------------------------------------------ link runtime

#[derive(Debug)]
struct PendingTransfer {
    custody: NodeId,
    bundle: Bundle,
    attempt: u32,
}

#[derive(Debug)]
struct LinkRuntime {
    cl: ClKind,
    loss: f64,
    /// Retransmission-timer slack for sessions on this link.
    margin_s: f64,
    state: LinkState,
    /// Sessions currently transmitting on this directed link.
    active: BTreeSet<SessionId>,
    /// Transfers waiting for a session slot.
    waiting: VecDeque<PendingTransfer>,
    /// Segments cut off by a closing window, in FIFO order.
    suspended: VecDeque<(SessionId, Segment)>,
    resume_scheduled: bool,
    busy_accum_s: f64,
    bits_sent: u64,
    segments_sent: u64,
}

#[derive(Debug)]
struct SenderRt {
    s: SenderSession,
    from: NodeId,
    to: NodeId,
    custody: NodeId,
    bundle: Bundle,
    attempt: u32,
}

#[derive(Debug)]
struct ReceiverRt {
    r: ReceiverSession,
    from: NodeId,
    to: NodeId,
}

// ---------------------------------------------------------------- counters

#[derive(Debug, Default)]
struct Counters {
    files_created: u64,
    files_refused: u64,
    files_delivered: u64,
    files_acked: u64,
    bundles_created: u64,
    custody_refusals: u64,
    custody_retries: u64,
    hop_acks: u64,
    segments_lost: u64,
    sessions_cancelled: u64,
    latencies: Vec<f64>,
    round_trips: Vec<f64>,
}

// ------------------------------------------------------------------ engine

struct Engine<'s> {
    sc: &'s ScenarioConfig,
    plan: ContactPlan,
    q: EventQueue<Ev>,
    agents: BTreeMap<NodeId, NodeAgent>,
    links: BTreeMap<(NodeId, NodeId), LinkRuntime>,
    rng: RngStreams,
    ltp_cfg: LtpConfig,
    senders: BTreeMap<SessionId, SenderRt>,
    receivers: BTreeMap<SessionId, ReceiverRt>,
    /// Payload carried by each session, kept past sender retirement so a
    /// block completing against a cancelled sender still delivers.
    session_payload: BTreeMap<SessionId, (Bundle, u32)>,
    next_session: SessionId,
    log: MetricsLog,
    counters: Counters,
    trace: bool,
    end_s: f64,
    seed: u64,
    // Fate bookkeeping for conservation accounting.
    created: BTreeSet<BundleId>,
    created_size: BTreeMap<BundleId, u64>,
    delivered: BTreeSet<BundleId>,
    dead_lettered: BTreeSet<BundleId>,
    expired: BTreeSet<BundleId>,
    file_created_at: BTreeMap<FileId, f64>,
    route_failed_once: BTreeSet<(NodeId, BundleId)>,
    retry_scheduled: BTreeMap<NodeId, f64>,
}

impl<'s> Engine<'s> {
    fn new(sc: &'s ScenarioConfig, plan: ContactPlan, seed: u64, end_s: f64, trace: bool) -> Self {
        let agent_cfg = AgentConfig {
            max_payload_bits: sc.defaults.max_payload_bits,
            default_lifetime_s: sc.defaults.bundle_lifetime_s,
        };
        let agents = sc
            .nodes
            .iter()
            .map(|(id, n)| {
                (
                    id.clone(),
                    NodeAgent::new(id.clone(), n.region.clone(), n.store_capacity_bits, agent_cfg),
                )
            })
            .collect();

        let mut links = BTreeMap::new();
        for spec in &sc.links {
            let margin_s = sc.defaults.ltp_timer_margin_s
                + 2.0 * Self::base_band(sc, spec).map_or(0.0, |b| b.acquisition_delay_s);
            for (a, b) in [
                (spec.from.clone(), spec.to.clone()),
                (spec.to.clone(), spec.from.clone()),
            ] {
                links.insert(
                    (a, b),
                    LinkRuntime {
                        cl: spec.cl,
                        loss: spec.loss_probability,
                        margin_s,
                        state: LinkState::default(),
                        active: BTreeSet::new(),
                        waiting: VecDeque::new(),
                        suspended: VecDeque::new(),
                        resume_scheduled: false,
                        busy_accum_s: 0.0,
                        bits_sent: 0,
                        segments_sent: 0,
                    },
                );
            }
        }

        Engine {
            sc,
            plan,
            q: EventQueue::new(),
            agents,
            links,
            rng: RngStreams::new(seed),
            ltp_cfg: LtpConfig {
                segment_size_bits: sc.defaults.ltp_segment_bits,
                max_timer_retries: 50,
            },
            senders: BTreeMap::new(),
            receivers: BTreeMap::new(),
            session_payload: BTreeMap::new(),
            next_session: 1,
            log: MetricsLog::new(),
            counters: Counters::default(),
            trace,
            end_s,
            seed,
            created: BTreeSet::new(),
            created_size: BTreeMap::new(),
            delivered: BTreeSet::new(),
            dead_lettered: BTreeSet::new(),
            expired: BTreeSet::new(),
            file_created_at: BTreeMap::new(),
            route_failed_once: BTreeSet::new(),
            retry_scheduled: BTreeMap::new(),
        }
    }

    fn base_band<'a>(sc: &'a ScenarioConfig, spec: &LinkSpec) -> Option<&'a BandSpec> {
        spec.band.as_deref().and_then(|name| sc.bands.get(name))
    }

    /// The band a link uses at time `t`, honoring override windows.
    fn band_at(&self, spec: &LinkSpec, t: f64) -> Option<&BandSpec> {
        let name = spec
            .overrides
            .iter()
            .find(|o| o.start_s <= t && t < o.end_s)
            .map(|o| o.band.as_str())
            .or(spec.band.as_deref())?;
        self.sc.bands.get(name)
    }

    fn link_spec(&self, from: &NodeId, to: &NodeId) -> Option<&LinkSpec> {
        self.sc
            .links
            .iter()
            .find(|l| (&l.from == from && &l.to == to) || (&l.from == to && &l.to == from))
    }

    // ------------------------------------------------------------- priming

    fn prime(&mut self) {
        // Static plan rows, then the initial event population.
        for c in self.plan.contacts() {
            let path_loss_db = self.contact_path_loss(c);
            self.log.push(Row::Contact {
                from: c.from.0.clone(),
                to: c.to.0.clone(),
                start_s: c.start_s,
                end_s: c.end_s,
                rate_bps: c.rate_bps,
                owlt_start_s: c.owlt_start_s,
                owlt_end_s: c.owlt_end_s,
                path_loss_db,
            });
        }
        let opens: Vec<(f64, NodeId)> = self
            .plan
            .contacts()
            .iter()
            .map(|c| (c.start_s, c.from.clone()))
            .collect();
        for (t, from) in opens {
            if t <= self.end_s {
                self.q.schedule(t, Ev::ContactOpen { from });
            }
        }
        for (index, tr) in self.sc.traffic.iter().enumerate() {
            if tr.start_s <= self.end_s {
                self.q.schedule(tr.start_s, Ev::TrafficStart { index });
            }
        }
    }

    fn contact_path_loss(&self, c: &Contact) -> Option<f64> {
        let spec = self.link_spec(&c.from, &c.to)?;
        if spec.cl != ClKind::Ltp {
            return None;
        }
        let t_mid = 0.5 * (c.start_s + c.end_s);
        let band = self.band_at(spec, t_mid)?;
        let from_body = &self.sc.nodes.get(&c.from)?.body;
        let to_body = &self.sc.nodes.get(&c.to)?.body;
        let range = self.sc.ephemeris.distance(from_body, to_body, t_mid).ok()?;
        link_budget(band, range.max(1.0)).ok().map(|b| b.total_loss_db)
    }

    // ------------------------------------------------------------ dispatch

    fn handle(&mut self, t: f64, ev: Ev) {
        match ev {
            Ev::TrafficStart { index } => self.on_traffic(t, index),
            Ev::ContactOpen { from } => self.sweep(t, &from),
            Ev::Sweep { node } => {
                if self
                    .retry_scheduled
                    .get(&node)
                    .is_some_and(|&ts| ts <= t)
                {
                    self.retry_scheduled.remove(&node);
                }
                self.sweep(t, &node);
            }
            Ev::SegmentArrival { from, to, segment } => self.on_segment(t, from, to, segment),
            Ev::HopAck { node, bundle } => {
                if self.agents.get_mut(&node).unwrap().release_custody(&bundle) {
                    self.counters.hop_acks += 1;
                    self.log.push(Row::CustodyReleased {
                        t,
                        node: node.0.clone(),
                        bundle: bundle.to_string(),
                    });
                }
            }
            Ev::Delivery {
                from,
                to,
                bundle,
                attempt,
            } => self.deliver_bundle(t, &from, &to, *bundle, attempt),
            Ev::SenderTimer { session, serial } => self.on_sender_timer(t, session, serial),
            Ev::ReceiverTimer { session, serial } => self.on_receiver_timer(t, session, serial),
            Ev::LinkResume { from, to } => self.on_link_resume(t, from, to),
            Ev::CustodyTimeout {
                node,
                bundle,
                attempt,
            } => {
                if self
                    .agents
                    .get_mut(&node)
                    .unwrap()
                    .custody_expired(&bundle, attempt)
                {
                    self.counters.custody_retries += 1;
                    self.sweep(t, &node);
                }
            }
            Ev::Expiry { node, bundle } => {
                if self.agents.get_mut(&node).unwrap().expire_if_due(&bundle, t) {
                    self.expired.insert(bundle.clone());
                    self.log.push(Row::BundleExpired {
                        t,
                        node: node.0.clone(),
                        bundle: bundle.to_string(),
                    });
                }
            }
        }
    }

    // ------------------------------------------------------------- traffic

    fn on_traffic(&mut self, t: f64, index: usize) {
        let tr = &self.sc.traffic[index];
        let source = tr.source.clone();
        let agent = self.agents.get_mut(&source).unwrap();
        match agent.encapsulate_file(tr.dest.clone(), tr.size_bits, t, tr.lifetime_s) {
            Err(e) => {
                self.counters.files_refused += 1;
                self.log.push(Row::FileRefused {
                    t,
                    node: source.0.clone(),
                    size_bits: tr.size_bits,
                    free_bits: e.free_bits,
                });
            }
            Ok((file, ids)) => {
                self.counters.files_created += 1;
                self.file_created_at.insert(file.clone(), t);
                self.log.push(Row::FileCreated {
                    t,
                    node: source.0.clone(),
                    file: file.to_string(),
                    dest: tr.dest.to_string(),
                    size_bits: tr.size_bits,
                    fragments: ids.len() as u32,
                });
                for id in ids {
                    self.register_created(t, &source, &id);
                }
                self.sweep(t, &source);
            }
        }
    }

    /// Common bookkeeping for every bundle entering existence at `node`.
    fn register_created(&mut self, t: f64, node: &NodeId, id: &BundleId) {
        let agent = &self.agents[node];
        let b = agent.bundle(id).expect("created bundle is resident");
        self.counters.bundles_created += 1;
        self.created.insert(id.clone());
        self.created_size.insert(id.clone(), b.size_bits);
        self.log.push(Row::BundleCreated {
            t,
            node: node.0.clone(),
            bundle: id.to_string(),
            file: b.file().to_string(),
            size_bits: b.size_bits,
        });
        let expiry = b.expiry_s() + EXPIRY_SLACK_S;
        if expiry.is_finite() && expiry <= self.end_s {
            self.q.schedule(
                expiry,
                Ev::Expiry {
                    node: node.clone(),
                    bundle: id.clone(),
                },
            );
        }
    }

    // ---------------------------------------------------------- forwarding

    fn sweep(&mut self, t: f64, node: &NodeId) {
        let ready = self.agents[node].ready_for_forwarding(t);
        let mut earliest_retry: Option<f64> = None;

        for id in ready {
            let bundle = self.agents[node].bundle(&id).expect("ready implies resident").clone();
            let route = self.route_for(t, node, &bundle);
            match route {
                None => {
                    if self.route_failed_once.insert((node.clone(), id.clone())) {
                        self.log.push(Row::RouteFailure {
                            t,
                            node: node.0.clone(),
                            bundle: id.to_string(),
                            dest: bundle.dest.to_string(),
                        });
                    }
                    if let Some(next) = self.plan.next_departure(node, t) {
                        earliest_retry =
                            Some(earliest_retry.map_or(next, |e: f64| e.min(next)));
                    }
                }
                Some(route) => {
                    let first = route.hops[0].clone();
                    if first.start_s > t {
                        // The chosen path only opens later; the contact-open
                        // event will sweep this node again.
                        continue;
                    }
                    if self.trace {
                        self.log.push(Row::RouteTrace {
                            t,
                            node: node.0.clone(),
                            bundle: id.to_string(),
                            path: route.path.iter().map(|n| n.0.clone()).collect(),
                            arrival_s: route.arrival_s,
                        });
                    }
                    self.dispatch(t, node, &id, &first);
                }
            }
        }

        if let Some(ts) = earliest_retry {
            let already = self.retry_scheduled.get(node).is_some_and(|&s| s <= ts);
            if !already && ts <= self.end_s {
                self.retry_scheduled.insert(node.clone(), ts);
                self.q.schedule(ts, Ev::Sweep { node: node.clone() });
            }
        }
    }

    fn route_for(&self, t: f64, node: &NodeId, bundle: &Bundle) -> Option<Route> {
        let region = &self.agents[node].region;
        if &bundle.dest.region == region {
            let terminal = resolve_entity(
                &bundle.dest.region,
                &bundle.dest.entity,
                &self.sc.entities,
                &self.sc.nodes,
            )
            .ok()?;
            debug_assert_ne!(&terminal, node, "resident bundle addressed to itself");
            best_route_to_node(&self.plan, &self.sc.nodes, node, &terminal, t, bundle.size_bits)
        } else {
            best_route(
                &self.plan,
                &self.sc.nodes,
                node,
                &bundle.dest.region,
                t,
                bundle.size_bits,
            )
        }
    }

    /// Hands one resident bundle to the convergence layer of `contact`.
    fn dispatch(&mut self, t: f64, node: &NodeId, id: &BundleId, contact: &Contact) {
        let (bundle, attempt) = self
            .agents
            .get_mut(node)
            .unwrap()
            .mark_in_flight(id)
            .expect("ready implies resident");
        let key = (contact.from.clone(), contact.to.clone());
        let lr = self.links.get_mut(&key).expect("contact implies link");
        match lr.cl {
            ClKind::Reliable => {
                let owlt = contact.owlt_at(lr.state.earliest_start(t));
                let tx = lr
                    .state
                    .transmit(t, bundle.size_bits, contact.rate_bps, owlt, None)
                    .expect("unbounded window");
                lr.busy_accum_s += tx.completion_s - tx.tx_start_s;
                lr.bits_sent += bundle.size_bits;
                lr.segments_sent += 1;
                self.q.schedule(
                    tx.arrival_s,
                    Ev::Delivery {
                        from: contact.from.clone(),
                        to: contact.to.clone(),
                        bundle: Box::new(bundle),
                        attempt,
                    },
                );
            }
            ClKind::Ltp => {
                let transfer = PendingTransfer {
                    custody: node.clone(),
                    bundle,
                    attempt,
                };
                if lr.active.len() as u32 >= self.sc.defaults.max_ltp_sessions_per_link {
                    lr.waiting.push_back(transfer);
                } else {
                    self.start_session(t, &key, transfer);
                }
            }
        }
    }

    // ------------------------------------------------------------ sessions

    fn start_session(&mut self, t: f64, link: &(NodeId, NodeId), transfer: PendingTransfer) {
        let sid = self.next_session;
        self.next_session += 1;
        let mut session = SenderSession::new(sid, transfer.bundle.size_bits, self.ltp_cfg);
        let segments = session.start();
        self.session_payload
            .insert(sid, (transfer.bundle.clone(), transfer.attempt));
        self.links
            .get_mut(link)
            .expect("session on known link")
            .active
            .insert(sid);
        self.senders.insert(
            sid,
            SenderRt {
                s: session,
                from: link.0.clone(),
                to: link.1.clone(),
                custody: transfer.custody,
                bundle: transfer.bundle,
                attempt: transfer.attempt,
            },
        );
        self.push_segments(t, &link.0, &link.1, sid, segments);
    }

    /// Transmits session segments in FIFO order on a directed link,
    /// suspending whatever no longer fits in the current window.
    fn push_segments(
        &mut self,
        t: f64,
        from: &NodeId,
        to: &NodeId,
        sid: SessionId,
        segments: Vec<Segment>,
    ) {
        let key = (from.clone(), to.clone());
        let mut queue: VecDeque<(SessionId, Segment)> =
            segments.into_iter().map(|s| (sid, s)).collect();
        self.drain_onto_link(t, &key, &mut queue);
        if !queue.is_empty() {
            let lr = self.links.get_mut(&key).unwrap();
            lr.suspended.extend(queue);
            self.schedule_resume(t, &key);
        }
    }

    fn on_link_resume(&mut self, t: f64, from: NodeId, to: NodeId) {
        let key = (from, to);
        let lr = self.links.get_mut(&key).unwrap();
        lr.resume_scheduled = false;
        let mut queue = std::mem::take(&mut lr.suspended);
        self.drain_onto_link(t, &key, &mut queue);
        if !queue.is_empty() {
            let lr = self.links.get_mut(&key).unwrap();
            debug_assert!(lr.suspended.is_empty());
            lr.suspended = queue;
            self.schedule_resume(t, &key);
        }
    }

    fn schedule_resume(&mut self, t: f64, key: &(NodeId, NodeId)) {
        let next = self.plan.next_contact_start(&key.0, &key.1, t);
        let lr = self.links.get_mut(key).unwrap();
        if lr.resume_scheduled {
            return;
        }
        if let Some(ts) = next {
            if ts <= self.end_s {
                lr.resume_scheduled = true;
                self.q.schedule(
                    ts,
                    Ev::LinkResume {
                        from: key.0.clone(),
                        to: key.1.clone(),
                    },
                );
            }
        }
        // With no further window the segments stay parked; the bundles they
        // carry remain in custody upstream and are accounted at the end.
    }

    /// Sends queued segments until the window or the queue runs out.
    fn drain_onto_link(
        &mut self,
        t: f64,
        key: &(NodeId, NodeId),
        queue: &mut VecDeque<(SessionId, Segment)>,
    ) {
        while let Some((sid, segment)) = queue.front().cloned() {
            let Some(contact) = self.plan.contact_at(&key.0, &key.1, t).cloned() else {
                return; // between windows: caller parks the queue
            };
            let lr = self.links.get_mut(key).unwrap();
            let start = lr.state.earliest_start(t);
            if start >= contact.end_s {
                return; // window exhausted by earlier traffic
            }
            let owlt = contact.owlt_at(start);
            let tx = match lr.state.transmit(
                t,
                segment.wire_bits(),
                contact.rate_bps,
                owlt,
                Some(contact.end_s),
            ) {
                Err(_) => return, // does not fit before the window closes
                Ok(tx) => tx,
            };
            queue.pop_front();
            lr.busy_accum_s += tx.completion_s - tx.tx_start_s;
            lr.bits_sent += segment.wire_bits();
            lr.segments_sent += 1;
            let loss = lr.loss;
            let margin = lr.margin_s;

            let lost = self.rng.draw_loss(key.0.as_str(), key.1.as_str(), loss);
            if lost {
                self.counters.segments_lost += 1;
                self.log.push(Row::SegmentLost {
                    t: tx.completion_s,
                    from: key.0 .0.clone(),
                    to: key.1 .0.clone(),
                    session: sid,
                });
            } else {
                self.q.schedule(
                    tx.arrival_s,
                    Ev::SegmentArrival {
                        from: key.0.clone(),
                        to: key.1.clone(),
                        segment: segment.clone(),
                    },
                );
            }

            // Checkpoints and reports arm their retransmission timers at
            // the moment they leave the transmitter, lost or not.
            let timeout = retransmit_timeout_s(owlt, margin);
            match &segment.kind {
                SegmentKind::Data { checkpoint: Some(serial), .. } => {
                    let deadline = self.deadline_after_open(key, tx.completion_s, timeout);
                    self.q.schedule(
                        deadline,
                        Ev::SenderTimer {
                            session: sid,
                            serial: *serial,
                        },
                    );
                }
                SegmentKind::Report { serial, .. } => {
                    let deadline = self.deadline_after_open(key, tx.completion_s, timeout);
                    self.q.schedule(
                        deadline,
                        Ev::ReceiverTimer {
                            session: sid,
                            serial: *serial,
                        },
                    );
                }
                _ => {}
            }
        }
    }

    /// Absolute deadline `duration` of *link-open* time after `start`:
    /// retransmission timers do not tick across contact gaps.
    fn deadline_after_open(&self, key: &(NodeId, NodeId), start: f64, duration: f64) -> f64 {
        let mut remaining = duration;
        let mut t = start;
        for c in self.plan.windows(&key.0, &key.1) {
            if c.end_s <= t {
                continue;
            }
            let open_from = t.max(c.start_s);
            let available = c.end_s - open_from;
            if available >= remaining {
                return open_from + remaining;
            }
            remaining -= available;
            t = c.end_s;
        }
        // No further open time inside the plan: effectively never.
        self.plan.horizon_s() + 1.0
    }

    // ------------------------------------------------------ segment events

    fn on_segment(&mut self, t: f64, from: NodeId, to: NodeId, segment: Segment) {
        let sid = segment.session;
        match segment.kind {
            SegmentKind::Data {
                offset_bits,
                len_bits,
                total_len_bits,
                checkpoint,
            } => {
                let rx = self.receivers.entry(sid).or_insert_with(|| ReceiverRt {
                    r: ReceiverSession::new(sid, self.ltp_cfg),
                    from: from.clone(),
                    to: to.clone(),
                });
                let (out, deliver) = rx.r.on_data(offset_bits, len_bits, total_len_bits, checkpoint);
                self.push_segments(t, &to, &from, sid, out);
                if deliver {
                    let (bundle, attempt) = self
                        .session_payload
                        .get(&sid)
                        .cloned()
                        .expect("completed session has a payload");
                    self.deliver_bundle(t, &from, &to, bundle, attempt);
                }
            }
            SegmentKind::Report { serial, ref claims } => {
                // Reports travel receiver -> sender, so the session's
                // forward link is (to, from).
                let Some(sr) = self.senders.get_mut(&sid) else {
                    // Closed sender stub: still acknowledge so the receiver
                    // can retire its report timer.
                    let ack = Segment {
                        session: sid,
                        kind: SegmentKind::ReportAck { serial },
                    };
                    self.push_segments(t, &to, &from, sid, vec![ack]);
                    return;
                };
                let out = sr.s.on_report(serial, claims);
                let closed = sr.s.is_closed();
                self.push_segments(t, &to, &from, sid, out);
                if closed {
                    self.retire_session(t, sid, false);
                }
            }
            SegmentKind::ReportAck { serial } => {
                if let Some(rx) = self.receivers.get_mut(&sid) {
                    rx.r.on_report_ack(serial);
                    if rx.r.state() != SessionState::Active {
                        self.receivers.remove(&sid);
                    }
                }
            }
            SegmentKind::Cancel => {
                if let Some(rx) = self.receivers.get_mut(&sid) {
                    rx.r.on_cancel();
                    self.receivers.remove(&sid);
                }
            }
        }
    }

    fn on_sender_timer(&mut self, t: f64, sid: SessionId, serial: u32) {
        let Some(sr) = self.senders.get_mut(&sid) else {
            return;
        };
        let out = sr.s.on_checkpoint_timeout(serial);
        if out.is_empty() {
            return; // stale timer
        }
        let cancelled = sr.s.state() == SessionState::Cancelled;
        let (from, to) = (sr.from.clone(), sr.to.clone());
        self.push_segments(t, &from, &to, sid, out);
        if cancelled {
            self.counters.sessions_cancelled += 1;
            self.log.push(Row::SessionCancelled {
                t,
                from: from.0.clone(),
                to: to.0.clone(),
                session: sid,
            });
            self.retire_session(t, sid, true);
        }
    }

    fn on_receiver_timer(&mut self, t: f64, sid: SessionId, serial: u32) {
        let Some(rx) = self.receivers.get_mut(&sid) else {
            return;
        };
        let out = rx.r.on_report_timeout(serial);
        if out.is_empty() {
            return;
        }
        if rx.r.state() == SessionState::Cancelled {
            self.receivers.remove(&sid);
            return;
        }
        let (from, to) = (rx.from.clone(), rx.to.clone());
        // Reports ride the reverse direction of the data flow.
        self.push_segments(t, &to, &from, sid, out);
    }

    /// Removes a finished or cancelled sender session, recovering custody
    /// on cancellation and pulling the next waiting transfer into the slot.
    fn retire_session(&mut self, t: f64, sid: SessionId, cancelled: bool) {
        let Some(sr) = self.senders.remove(&sid) else {
            return;
        };
        if cancelled {
            let agent = self.agents.get_mut(&sr.custody).unwrap();
            if agent.custody_expired(&sr.bundle.id, sr.attempt) {
                self.counters.custody_retries += 1;
                self.sweep(t, &sr.custody.clone());
            }
        }
        let key = (sr.from.clone(), sr.to.clone());
        let lr = self.links.get_mut(&key).unwrap();
        lr.active.remove(&sid);
        if let Some(next) = lr.waiting.pop_front() {
            self.start_session(t, &key, next);
        }
    }

    // ------------------------------------------------------------ delivery

    /// A bundle reached `node` over the link from `prev`. Decides the
    /// disposition, updates the agent, acknowledges custody and reacts to
    /// the outcome.
    fn deliver_bundle(&mut self, t: f64, prev: &NodeId, node: &NodeId, bundle: Bundle, attempt: u32) {
        let id = bundle.id.clone();
        let file = bundle.file().clone();
        let mut hops: Vec<String> = bundle.hop_log.iter().map(|n| n.0.clone()).collect();
        hops.push(node.0.clone());

        let disposition = self.disposition_for(node, &bundle);
        let outcome = self
            .agents
            .get_mut(node)
            .unwrap()
            .on_receive(bundle, t, disposition);

        if outcome.acknowledges() {
            let owlt = self.reverse_owlt(node, prev, t);
            self.q.schedule(
                t + owlt,
                Ev::HopAck {
                    node: prev.clone(),
                    bundle: id.clone(),
                },
            );
        }

        match outcome {
            ReceiveOutcome::Duplicate => {}
            ReceiveOutcome::Expired => {
                self.expired.insert(id.clone());
                self.log.push(Row::BundleExpired {
                    t,
                    node: node.0.clone(),
                    bundle: id.to_string(),
                });
            }
            ReceiveOutcome::Refused {
                needed_bits,
                free_bits,
            } => {
                self.counters.custody_refusals += 1;
                self.log.push(Row::CustodyRefused {
                    t,
                    node: node.0.clone(),
                    bundle: id.to_string(),
                    needed_bits,
                    free_bits,
                });
                // No acknowledgement will come: revive the sender's copy
                // after the backoff and try again.
                let retry = t + self.sc.defaults.custody_backoff_s;
                if retry <= self.end_s {
                    self.q.schedule(
                        retry,
                        Ev::CustodyTimeout {
                            node: prev.clone(),
                            bundle: id.clone(),
                            attempt,
                        },
                    );
                }
            }
            ReceiveOutcome::Stored => {
                self.log.push(Row::CustodyAccepted {
                    t,
                    from: prev.0.clone(),
                    to: node.0.clone(),
                    bundle: id.to_string(),
                });
                self.schedule_expiry(t, node, &id);
                self.sweep(t, node);
            }
            ReceiveOutcome::DeliveredFragment { file } => {
                self.note_delivered(t, node, &id, &file, &hops);
            }
            ReceiveOutcome::DeliveredFile { file, ack } => {
                self.note_delivered(t, node, &id, &file, &hops);
                self.counters.files_delivered += 1;
                let latency = t - self.file_created_at.get(&file).copied().unwrap_or(t);
                self.counters.latencies.push(latency);
                self.log.push(Row::FileDelivered {
                    t,
                    node: node.0.clone(),
                    file: file.to_string(),
                    latency_s: latency,
                });
                if let Some(ack_id) = ack {
                    self.register_created(t, node, &ack_id);
                    self.sweep(t, node);
                }
            }
            ReceiveOutcome::AckDelivered { file } => {
                self.note_delivered(t, node, &id, &file, &hops);
                self.counters.files_acked += 1;
                let rt = t - self.file_created_at.get(&file).copied().unwrap_or(t);
                self.counters.round_trips.push(rt);
                self.log.push(Row::FileAcked {
                    t,
                    node: node.0.clone(),
                    file: file.to_string(),
                    round_trip_s: rt,
                });
            }
            ReceiveOutcome::DeadLettered => {
                self.dead_lettered.insert(id.clone());
                self.log.push(Row::DeadLettered {
                    t,
                    node: node.0.clone(),
                    bundle: id.to_string(),
                    dest: self.agents[node].region.clone(),
                });
            }
        }
        let _ = file;
    }

    fn note_delivered(&mut self, t: f64, node: &NodeId, id: &BundleId, file: &FileId, hops: &[String]) {
        self.delivered.insert(id.clone());
        self.log.push(Row::BundleDelivered {
            t,
            node: node.0.clone(),
            bundle: id.to_string(),
            file: file.to_string(),
            hops: hops.to_vec(),
        });
    }

    fn schedule_expiry(&mut self, t: f64, node: &NodeId, id: &BundleId) {
        let Some(b) = self.agents[node].bundle(id) else {
            return;
        };
        let expiry = b.expiry_s() + EXPIRY_SLACK_S;
        if expiry.is_finite() && expiry >= t && expiry <= self.end_s {
            self.q.schedule(
                expiry,
                Ev::Expiry {
                    node: node.clone(),
                    bundle: id.clone(),
                },
            );
        }
    }

    fn disposition_for(&self, node: &NodeId, bundle: &Bundle) -> Disposition {
        let region = &self.agents[node].region;
        if &bundle.dest.region != region {
            return Disposition::Relay;
        }
        match resolve_entity(
            &bundle.dest.region,
            &bundle.dest.entity,
            &self.sc.entities,
            &self.sc.nodes,
        ) {
            Ok(terminal) if &terminal == node => Disposition::Terminal,
            Ok(_) => Disposition::OtherNode,
            Err(_) => Disposition::Unresolvable,
        }
    }

    /// Propagation delay for the zero-size custody acknowledgement from
    /// `node` back to `prev`.
    fn reverse_owlt(&self, node: &NodeId, prev: &NodeId, t: f64) -> f64 {
        if let Some(c) = self.plan.contact_at(node, prev, t) {
            return c.owlt_at(t);
        }
        if let Some(c) = self.plan.contact_at(prev, node, t) {
            return c.owlt_at(t);
        }
        // Window already closed behind the bundle: use the delay the
        // carrying direction last had.
        self.plan
            .windows(prev, node)
            .iter()
            .rev()
            .find(|c| c.start_s <= t)
            .map(|c| c.owlt_at(t))
            .unwrap_or(0.0)
    }

    // ------------------------------------------------------------- closing

    fn finish(mut self) -> RunOutput {
        // Link utilization and store peaks, in key order.
        for ((from, to), lr) in &self.links {
            self.log.push(Row::LinkUtilization {
                from: from.0.clone(),
                to: to.0.clone(),
                busy_s: lr.busy_accum_s,
                bits_sent: lr.bits_sent,
                segments_sent: lr.segments_sent,
            });
        }
        for (id, agent) in &self.agents {
            self.log.push(Row::StorePeak {
                node: id.0.clone(),
                peak_bits: agent.store().peak_bits(),
                capacity_bits: self.sc.nodes[id].store_capacity_bits,
            });
        }

        // Fate classification: delivered > dead-lettered > alive > expired.
        let mut in_flight = 0u64;
        let mut resident = 0u64;
        let mut expired = 0u64;
        let mut lost = 0u64;
        for id in &self.created {
            if self.delivered.contains(id) || self.dead_lettered.contains(id) {
                continue;
            }
            let alive = self
                .agents
                .values()
                .filter_map(|a| a.is_in_flight(id))
                .collect::<Vec<_>>();
            if alive.iter().any(|&f| f) {
                in_flight += 1;
            } else if !alive.is_empty() {
                resident += 1;
            } else if self.expired.contains(id) {
                expired += 1;
            } else {
                lost += 1;
            }
        }

        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let c = &self.counters;
        let bits_delivered: u64 = self
            .delivered
            .iter()
            .filter_map(|id| self.created_size.get(id))
            .sum();
        let summary = Summary {
            scenario: self.sc.name.clone(),
            seed: self.seed,
            end_s: self.end_s,
            files_created: c.files_created,
            files_refused: c.files_refused,
            files_delivered: c.files_delivered,
            files_acked: c.files_acked,
            bundles_created: c.bundles_created,
            bundles_delivered: self.delivered.len() as u64,
            bundles_dead_lettered: self.dead_lettered.len() as u64,
            bundles_in_flight_at_end: in_flight,
            bundles_resident_at_end: resident,
            bundles_expired: expired,
            bundles_lost: lost,
            custody_refusals: c.custody_refusals,
            custody_retries: c.custody_retries,
            hop_acks: c.hop_acks,
            segments_lost: c.segments_lost,
            sessions_cancelled: c.sessions_cancelled,
            route_failures: self.route_failed_once.len() as u64,
            bits_delivered,
            mean_file_latency_s: mean(&c.latencies),
            max_file_latency_s: c
                .latencies
                .iter()
                .copied()
                .reduce(f64::max),
            mean_file_round_trip_s: mean(&c.round_trips),
        };
        assert!(
            summary.conservation_holds(),
            "bundle conservation violated: {summary:?}"
        );
        self.log.push(Row::Summary(summary.clone()));
        RunOutput {
            metrics_jsonl: self.log.to_jsonl(),
            summary_csv: summary_csv(&summary),
            summary,
        }
    }
}
