//! Discrete-event core: event queue, clock, link serialization, RNG streams.
//!
//! Events are totally ordered by `(time, insertion sequence)`, so
//! simultaneous events execute in FIFO order and a run is a pure function of
//! its inputs. Scheduling an event before the current clock is a programming
//! error and panics immediately rather than corrupting causality.
//!
//! Each directed link serializes transmissions: a transmission starts at
//! `max(now, busy_until)`, occupies the link for `size / rate`, and arrives
//! one-way light time after its start. Randomness is confined to per-link
//! ChaCha streams derived from the base seed and the link's endpoint names,
//! so reseeding or re-ordering one link never perturbs draws on another.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

// -------------------------------------------------------------- event queue

/// A scheduled occurrence carrying an opaque payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    pub time_s: f64,
    /// Global insertion sequence; ties on time execute in this order.
    pub seq: u64,
    pub payload: T,
}

struct HeapEntry<T>(Event<T>);

impl<T> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.0.time_s == other.0.time_s && self.0.seq == other.0.seq
    }
}

impl<T> Eq for HeapEntry<T> {}

impl<T> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first ordering.
        other
            .0
            .time_s
            .total_cmp(&self.0.time_s)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

impl<T> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority queue of pending events plus the simulation clock.
pub struct EventQueue<T> {
    heap: BinaryHeap<HeapEntry<T>>,
    next_seq: u64,
    now_s: f64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now_s: 0.0,
        }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        EventQueue::default()
    }

    /// Current simulation time, seconds.
    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `payload` at absolute time `time_s`.
    ///
    /// Panics if `time_s` precedes the clock: past scheduling would break
    /// causality and is always a bug in the caller.
    pub fn schedule(&mut self, time_s: f64, payload: T) -> u64 {
        assert!(
            time_s >= self.now_s,
            "attempted to schedule an event at {time_s} s with clock at {} s",
            self.now_s
        );
        assert!(time_s.is_finite(), "event time must be finite, got {time_s}");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry(Event {
            time_s,
            seq,
            payload,
        }));
        seq
    }

    /// Pops the next event due at or before `until_s`, advancing the clock
    /// to the event's time. Returns `None` when nothing further is due.
    pub fn pop_due(&mut self, until_s: f64) -> Option<Event<T>> {
        match self.heap.peek() {
            Some(entry) if entry.0.time_s <= until_s => {
                let ev = self.heap.pop().unwrap().0;
                self.now_s = ev.time_s;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Drains events through `t_end_s` into `handler`, leaves the clock at
    /// `t_end_s`, and returns the number executed.
    pub fn run_until(&mut self, t_end_s: f64, mut handler: impl FnMut(Event<T>)) -> u64 {
        let mut executed = 0;
        while let Some(ev) = self.pop_due(t_end_s) {
            handler(ev);
            executed += 1;
        }
        if t_end_s > self.now_s {
            self.now_s = t_end_s;
        }
        executed
    }
}

// ------------------------------------------------------- link serialization

/// Mutable per-directed-link transmission state.
#[derive(Debug, Clone, Default)]
pub struct LinkState {
    /// Time at which the link finishes its last accepted transmission.
    pub busy_until_s: f64,
}

/// Outcome of an accepted transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    /// When bits start flowing (after FIFO queueing).
    pub tx_start_s: f64,
    /// When the last bit leaves the sender.
    pub completion_s: f64,
    /// When the last bit reaches the receiver: completion + owlt.
    pub arrival_s: f64,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum TransmitError {
    /// The contact closes before serialization would finish; nothing is
    /// sent and the link state is left untouched.
    #[error("contact closes at {window_end_s} s before completion at {completion_s} s")]
    ContactCloses {
        window_end_s: f64,
        completion_s: f64,
    },
}

impl LinkState {
    /// The earliest instant a transmission issued at `t_now_s` could start.
    pub fn earliest_start(&self, t_now_s: f64) -> f64 {
        t_now_s.max(self.busy_until_s)
    }

    /// Serializes `size_bits` at `rate_bps` starting no earlier than
    /// `t_now_s`, with propagation delay `owlt_s` (evaluated by the caller
    /// at the transmission start). `window_end_s` bounds the transmission:
    /// if serialization cannot complete before it, the transmission is
    /// refused and the link is left idle for the caller to retry in a later
    /// window.
    pub fn transmit(
        &mut self,
        t_now_s: f64,
        size_bits: u64,
        rate_bps: f64,
        owlt_s: f64,
        window_end_s: Option<f64>,
    ) -> Result<Transmission, TransmitError> {
        assert!(rate_bps > 0.0, "transmit requires a positive rate");
        let tx_start_s = self.earliest_start(t_now_s);
        let completion_s = tx_start_s + size_bits as f64 / rate_bps;
        if let Some(end) = window_end_s {
            if completion_s > end {
                return Err(TransmitError::ContactCloses {
                    window_end_s: end,
                    completion_s,
                });
            }
        }
        self.busy_until_s = completion_s;
        Ok(Transmission {
            tx_start_s,
            completion_s,
            arrival_s: completion_s + owlt_s,
        })
    }
}

// ---------------------------------------------------------------- rng streams

/// Independent, reproducible RNG streams keyed by directed link.
///
/// Stream seeds mix the base seed with an FNV-1a hash of each endpoint
/// name, so every `(from, to)` pair owns a generator whose draws are
/// unaffected by activity anywhere else.
pub struct RngStreams {
    base_seed: u64,
    streams: BTreeMap<(String, String), ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(base_seed: u64) -> Self {
        RngStreams {
            base_seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// The stream for directed link `from -> to`, created on first use.
    pub fn stream(&mut self, from: &str, to: &str) -> &mut ChaCha8Rng {
        if !self.streams.contains_key(&(from.to_string(), to.to_string())) {
            let mut seed = [0u8; 32];
            seed[0..8].copy_from_slice(&self.base_seed.to_le_bytes());
            seed[8..16].copy_from_slice(&fnv1a64(from.as_bytes()).to_le_bytes());
            seed[16..24].copy_from_slice(&fnv1a64(to.as_bytes()).to_le_bytes());
            seed[24..32].copy_from_slice(&fnv1a64(b"link-stream").to_le_bytes());
            self.streams
                .insert((from.to_string(), to.to_string()), ChaCha8Rng::from_seed(seed));
        }
        self.streams
            .get_mut(&(from.to_string(), to.to_string()))
            .unwrap()
    }

    /// One Bernoulli loss draw on the link's stream. `p = 0` never consumes
    /// randomness, so lossless links stay draw-free.
    pub fn draw_loss(&mut self, from: &str, to: &str, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        self.stream(from, to).gen::<f64>() < p
    }
}

/// FNV-1a, 64-bit: stable across platforms and runs.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

// --------------------------------------------------------------------- tests
