//! Store-and-forward bundle layer.
//!
//! Files are encapsulated into fragment bundles (ceil split at the payload
//! cap). Every node takes *custody* of the bundles it accepts: a copy stays
//! in the node's store until the next hop acknowledges reception, and a
//! custody timer re-exposes it for forwarding when the acknowledgement never
//! comes. Destinations reassemble fragments and answer each completed file
//! with an end-to-end acknowledgement bundle routed back to the file's
//! origin like any other traffic.
//!
//! `NodeAgent` holds the per-node state (store, dedup set, reassembly
//! buffers) and is a pure state machine: the simulator owns clocks, routing
//! and links, and feeds arrivals in; outcomes say what to acknowledge, what
//! to keep forwarding and what was delivered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::contactplan::NodeId;
use crate::routing::EndpointId;

/// Wire size of an end-to-end file acknowledgement bundle, in bits.
pub const ACK_BUNDLE_BITS: u64 = 8_000;

// -------------------------------------------------------------- identifiers

/// One file transfer, named by its origin node and a per-node counter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FileId {
    pub origin: NodeId,
    pub seq: u64,
}

impl fmt::Display for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/file-{}", self.origin, self.seq)
    }
}

/// Globally unique bundle name: origin node plus a per-node counter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BundleId {
    pub source: NodeId,
    pub seq: u64,
}

impl fmt::Display for BundleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.source, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BundleKind {
    /// One fragment of a file.
    Data {
        file: FileId,
        fragment_index: u32,
        fragment_count: u32,
    },
    /// End-to-end acknowledgement for a completely received file.
    FileAck { file: FileId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub id: BundleId,
    pub kind: BundleKind,
    pub dest: EndpointId,
    /// Where end-to-end acknowledgements for this bundle's file go.
    pub reply_to: EndpointId,
    pub size_bits: u64,
    pub created_s: f64,
    /// Seconds of validity from `created_s`; `f64::INFINITY` never expires.
    pub lifetime_s: f64,
    /// Custody chain: every node that accepted the bundle, source first.
    pub hop_log: Vec<NodeId>,
}

impl Bundle {
    pub fn expiry_s(&self) -> f64 {
        self.created_s + self.lifetime_s
    }

    /// Strictly after the deadline: a bundle reaching it exactly survives.
    pub fn is_expired(&self, now_s: f64) -> bool {
        now_s > self.expiry_s()
    }

    pub fn file(&self) -> &FileId {
        match &self.kind {
            BundleKind::Data { file, .. } | BundleKind::FileAck { file } => file,
        }
    }
}

// -------------------------------------------------------------------- store

#[derive(Debug, Error, PartialEq)]
#[error("store full: {needed_bits} bits needed, {free_bits} free")]
pub struct StoreFull {
    pub needed_bits: u64,
    pub free_bits: u64,
}

#[derive(Debug)]
struct StoredBundle {
    bundle: Bundle,
    /// Entry time into *this* store; orders forwarding sweeps.
    arrival_s: f64,
    in_flight: bool,
    attempt: u32,
}

/// Bounded bundle storage with peak-occupancy tracking.
#[derive(Debug)]
pub struct BundleStore {
    capacity_bits: u64,
    used_bits: u64,
    peak_bits: u64,
    resident: BTreeMap<BundleId, StoredBundle>,
}

impl BundleStore {
    pub fn new(capacity_bits: u64) -> Self {
        BundleStore {
            capacity_bits,
            used_bits: 0,
            peak_bits: 0,
            resident: BTreeMap::new(),
        }
    }

    fn insert(&mut self, bundle: Bundle, arrival_s: f64) -> Result<(), StoreFull> {
        let free = self.capacity_bits - self.used_bits;
        if bundle.size_bits > free {
            return Err(StoreFull {
                needed_bits: bundle.size_bits,
                free_bits: free,
            });
        }
        self.used_bits += bundle.size_bits;
        self.peak_bits = self.peak_bits.max(self.used_bits);
        let prior = self.resident.insert(
            bundle.id.clone(),
            StoredBundle {
                bundle,
                arrival_s,
                in_flight: false,
                attempt: 0,
            },
        );
        debug_assert!(prior.is_none(), "bundle stored twice");
        Ok(())
    }

    fn remove(&mut self, id: &BundleId) -> Option<Bundle> {
        self.resident.remove(id).map(|s| {
            self.used_bits -= s.bundle.size_bits;
            s.bundle
        })
    }

    pub fn contains(&self, id: &BundleId) -> bool {
        self.resident.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn used_bits(&self) -> u64 {
        self.used_bits
    }

    pub fn peak_bits(&self) -> u64 {
        self.peak_bits
    }
}

// -------------------------------------------------------------------- agent

/// How the receiving node relates to an arriving bundle's destination;
/// decided by the caller, which owns the region and entity tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    /// Not in the destination region yet: keep forwarding toward it.
    Relay,
    /// This node is the resolved terminal for the destination entity.
    Terminal,
    /// In the destination region, but the entity lives on another node.
    OtherNode,
    /// In the destination region and the entity cannot be resolved.
    Unresolvable,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReceiveOutcome {
    /// Already seen: acknowledge again so the sender releases custody,
    /// then discard this copy.
    Duplicate,
    /// No store space: drop silently; the sender's custody timer retries.
    Refused { needed_bits: u64, free_bits: u64 },
    /// Arrived past its deadline: drop silently.
    Expired,
    /// Accepted custody; still resident and awaiting forwarding.
    Stored,
    /// Accepted and consumed: a fragment of a still-incomplete file.
    DeliveredFragment { file: FileId },
    /// Accepted and consumed: the fragment that completed its file. The
    /// acknowledgement bundle has been stored for forwarding; `None` when
    /// the store had no room for it (the receipt is lost, not the file).
    DeliveredFile { file: FileId, ack: Option<BundleId> },
    /// Accepted and consumed: an end-to-end acknowledgement reaching the
    /// origin of the acknowledged file.
    AckDelivered { file: FileId },
    /// Accepted, but the destination entity does not resolve; dropped.
    DeadLettered,
}

impl ReceiveOutcome {
    /// Whether this arrival must be acknowledged to the previous hop.
    pub fn acknowledges(&self) -> bool {
        !matches!(
            self,
            ReceiveOutcome::Refused { .. } | ReceiveOutcome::Expired
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    /// Fragmentation cap for encapsulated files, in bits per bundle.
    pub max_payload_bits: u64,
    /// Validity of bundles this node originates, in seconds.
    pub default_lifetime_s: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_payload_bits: 1_000_000,
            default_lifetime_s: 30.0 * 86_400.0,
        }
    }
}

#[derive(Debug)]
struct Reassembly {
    pending: BTreeSet<u32>,
    fragment_count: u32,
    bits_received: u64,
    first_arrival_s: f64,
}

/// Per-node bundle-layer state machine.
#[derive(Debug)]
pub struct NodeAgent {
    pub node: NodeId,
    pub region: String,
    cfg: AgentConfig,
    store: BundleStore,
    next_bundle_seq: u64,
    next_file_seq: u64,
    /// Every bundle ever accepted here, for duplicate suppression.
    seen: BTreeSet<BundleId>,
    reassembly: BTreeMap<FileId, Reassembly>,
    delivered_files: BTreeSet<FileId>,
    acked_files: BTreeSet<FileId>,
}

impl NodeAgent {
    pub fn new(
        node: NodeId,
        region: impl Into<String>,
        store_capacity_bits: u64,
        cfg: AgentConfig,
    ) -> Self {
        NodeAgent {
            node,
            region: region.into(),
            cfg,
            store: BundleStore::new(store_capacity_bits),
            next_bundle_seq: 1,
            next_file_seq: 1,
            seen: BTreeSet::new(),
            reassembly: BTreeMap::new(),
            delivered_files: BTreeSet::new(),
            acked_files: BTreeSet::new(),
        }
    }

    pub fn store(&self) -> &BundleStore {
        &self.store
    }

    fn own_endpoint(&self) -> EndpointId {
        EndpointId::new(self.region.clone(), self.node.0.clone())
    }

    fn next_bundle_id(&mut self) -> BundleId {
        let id = BundleId {
            source: self.node.clone(),
            seq: self.next_bundle_seq,
        };
        self.next_bundle_seq += 1;
        id
    }

    /// Splits a file into fragment bundles (all at the payload cap except a
    /// shorter tail), stores them and returns their ids in fragment order.
    pub fn encapsulate_file(
        &mut self,
        dest: EndpointId,
        total_bits: u64,
        now_s: f64,
        lifetime_s: Option<f64>,
    ) -> Result<(FileId, Vec<BundleId>), StoreFull> {
        assert!(total_bits > 0, "empty file");
        let file = FileId {
            origin: self.node.clone(),
            seq: self.next_file_seq,
        };
        let cap = self.cfg.max_payload_bits;
        let count = total_bits.div_ceil(cap);
        let lifetime = lifetime_s.unwrap_or(self.cfg.default_lifetime_s);

        // Refuse atomically if the whole file cannot fit.
        let free = self.store.capacity_bits - self.store.used_bits;
        if total_bits > free {
            return Err(StoreFull {
                needed_bits: total_bits,
                free_bits: free,
            });
        }

        self.next_file_seq += 1;
        let mut ids = Vec::with_capacity(count as usize);
        for index in 0..count {
            let size = if index == count - 1 {
                total_bits - cap * (count - 1)
            } else {
                cap
            };
            let id = self.next_bundle_id();
            let bundle = Bundle {
                id: id.clone(),
                kind: BundleKind::Data {
                    file: file.clone(),
                    fragment_index: index as u32,
                    fragment_count: count as u32,
                },
                dest: dest.clone(),
                reply_to: self.own_endpoint(),
                size_bits: size,
                created_s: now_s,
                lifetime_s: lifetime,
                hop_log: vec![self.node.clone()],
            };
            self.seen.insert(id.clone());
            self.store
                .insert(bundle, now_s)
                .expect("capacity checked above");
            ids.push(id);
        }
        Ok((file, ids))
    }

    /// Resident bundles eligible for a forwarding attempt, ordered by
    /// arrival into this store, then by id.
    pub fn ready_for_forwarding(&self, now_s: f64) -> Vec<BundleId> {
        let mut ready: Vec<(f64, &BundleId)> = self
            .store
            .resident
            .iter()
            .filter(|(_, s)| !s.in_flight && !s.bundle.is_expired(now_s))
            .map(|(id, s)| (s.arrival_s, id))
            .collect();
        ready.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        ready.into_iter().map(|(_, id)| id.clone()).collect()
    }

    pub fn bundle(&self, id: &BundleId) -> Option<&Bundle> {
        self.store.resident.get(id).map(|s| &s.bundle)
    }

    /// `Some(true)` when the bundle is held here awaiting an
    /// acknowledgement, `Some(false)` when resident and idle, `None` when
    /// this store does not hold it.
    pub fn is_in_flight(&self, id: &BundleId) -> Option<bool> {
        self.store.resident.get(id).map(|s| s.in_flight)
    }

    /// Marks a resident bundle as handed to the convergence layer and
    /// returns (copy to transmit, custody attempt number).
    pub fn mark_in_flight(&mut self, id: &BundleId) -> Option<(Bundle, u32)> {
        let s = self.store.resident.get_mut(id)?;
        debug_assert!(!s.in_flight, "bundle already in flight");
        s.in_flight = true;
        s.attempt += 1;
        Some((s.bundle.clone(), s.attempt))
    }

    /// The next hop acknowledged reception: custody transfers, our copy goes.
    pub fn release_custody(&mut self, id: &BundleId) -> bool {
        self.store.remove(id).is_some()
    }

    /// Custody timer fired. True when it was current (bundle re-exposed for
    /// forwarding); false for stale timers and departed bundles.
    pub fn custody_expired(&mut self, id: &BundleId, attempt: u32) -> bool {
        match self.store.resident.get_mut(id) {
            Some(s) if s.in_flight && s.attempt == attempt => {
                s.in_flight = false;
                true
            }
            _ => false,
        }
    }

    /// Drops the bundle if it is past its deadline; true when removed.
    pub fn expire_if_due(&mut self, id: &BundleId, now_s: f64) -> bool {
        let due = self
            .store
            .resident
            .get(id)
            .is_some_and(|s| s.bundle.is_expired(now_s));
        if due {
            self.store.remove(id);
        }
        due
    }

    /// Handles a bundle arriving over a convergence layer.
    pub fn on_receive(
        &mut self,
        bundle: Bundle,
        now_s: f64,
        disposition: Disposition,
    ) -> ReceiveOutcome {
        if bundle.is_expired(now_s) {
            return ReceiveOutcome::Expired;
        }
        if self.seen.contains(&bundle.id) {
            return ReceiveOutcome::Duplicate;
        }

        let mut bundle = bundle;
        bundle.hop_log.push(self.node.clone());

        match disposition {
            Disposition::Relay | Disposition::OtherNode => {
                let id = bundle.id.clone();
                match self.store.insert(bundle, now_s) {
                    Ok(()) => {
                        self.seen.insert(id);
                        ReceiveOutcome::Stored
                    }
                    // Refusals stay un-seen on purpose: once space frees up,
                    // the sender's retry of this same bundle must succeed.
                    Err(e) => ReceiveOutcome::Refused {
                        needed_bits: e.needed_bits,
                        free_bits: e.free_bits,
                    },
                }
            }
            Disposition::Terminal => {
                self.seen.insert(bundle.id.clone());
                self.consume(bundle, now_s)
            }
            Disposition::Unresolvable => {
                self.seen.insert(bundle.id.clone());
                ReceiveOutcome::DeadLettered
            }
        }
    }

    /// Terminal-node consumption: reassembly for data, closure for acks.
    fn consume(&mut self, bundle: Bundle, now_s: f64) -> ReceiveOutcome {
        match bundle.kind.clone() {
            BundleKind::FileAck { file } => {
                self.acked_files.insert(file.clone());
                ReceiveOutcome::AckDelivered { file }
            }
            BundleKind::Data {
                file,
                fragment_index,
                fragment_count,
            } => {
                if self.delivered_files.contains(&file) {
                    // Straggler fragment of an already-complete file.
                    return ReceiveOutcome::DeliveredFragment { file };
                }
                let r = self.reassembly.entry(file.clone()).or_insert(Reassembly {
                    pending: (0..fragment_count).collect(),
                    fragment_count,
                    bits_received: 0,
                    first_arrival_s: now_s,
                });
                debug_assert_eq!(r.fragment_count, fragment_count);
                if r.pending.remove(&fragment_index) {
                    r.bits_received += bundle.size_bits;
                }
                if !r.pending.is_empty() {
                    return ReceiveOutcome::DeliveredFragment { file };
                }
                // Complete: retire the buffer and store the return ack.
                self.reassembly.remove(&file);
                self.delivered_files.insert(file.clone());
                let ack_id = self.next_bundle_id();
                let ack = Bundle {
                    id: ack_id.clone(),
                    kind: BundleKind::FileAck { file: file.clone() },
                    dest: bundle.reply_to.clone(),
                    reply_to: self.own_endpoint(),
                    size_bits: ACK_BUNDLE_BITS,
                    created_s: now_s,
                    lifetime_s: self.cfg.default_lifetime_s,
                    hop_log: vec![self.node.clone()],
                };
                self.seen.insert(ack_id.clone());
                let ack = match self.store.insert(ack, now_s) {
                    Ok(()) => Some(ack_id),
                    // No room for the receipt: the file still counts as
                    // delivered, only the end-to-end acknowledgement is lost.
                    Err(_) => None,
                };
                ReceiveOutcome::DeliveredFile { file, ack }
            }
        }
    }

    pub fn delivered_files(&self) -> &BTreeSet<FileId> {
        &self.delivered_files
    }

    pub fn acked_files(&self) -> &BTreeSet<FileId> {
        &self.acked_files
    }

    pub fn bits_received_for(&self, file: &FileId) -> u64 {
        self.reassembly
            .get(file)
            .map(|r| r.bits_received)
            .unwrap_or(0)
    }

    pub fn reassembly_started_s(&self, file: &FileId) -> Option<f64> {
        self.reassembly.get(file).map(|r| r.first_arrival_s)
    }
}

// --------------------------------------------------------------------- tests
