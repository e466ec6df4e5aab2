//! Licklider-style reliable block transfer for long-delay links.
//!
//! A block (one serialized bundle) is split into data segments. The last
//! segment of every transmission round is a *checkpoint*; a checkpoint asks
//! the receiver for a *report* listing the byte ranges received so far. The
//! sender retransmits whatever the report does not claim, closing the loop
//! with a report-acknowledgement. Checkpoints and reports are each guarded
//! by a retransmission timer of `2 * one-way-light-time + margin`, so a lost
//! control segment costs one extra round trip rather than a stalled session.
//!
//! Sessions are pure state machines: each input returns the segments to put
//! on the wire, and the caller owns clocks, timers and the actual channel.
//! This keeps every retransmission decision unit-testable without a
//! simulator and keeps the simulator free of protocol arithmetic.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Identifies one transfer session on one directed link.
pub type SessionId = u64;

/// Wire size of report, report-ack and cancel segments, in bits.
pub const CONTROL_SEGMENT_BITS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtpConfig {
    /// Maximum payload carried by one data segment, in bits.
    pub segment_size_bits: u64,
    /// Give up and cancel the session after this many timer-driven
    /// retransmissions of the same outstanding checkpoint or report.
    pub max_timer_retries: u32,
}

impl Default for LtpConfig {
    fn default() -> Self {
        LtpConfig {
            segment_size_bits: 50_000,
            max_timer_retries: 50,
        }
    }
}

/// Retransmission timer: a full round trip plus a safety margin.
pub fn retransmit_timeout_s(owlt_s: f64, margin_s: f64) -> f64 {
    2.0 * owlt_s + margin_s
}

// ----------------------------------------------------------------- segments

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub session: SessionId,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    Data {
        offset_bits: u64,
        len_bits: u64,
        total_len_bits: u64,
        /// Present when this segment is a checkpoint.
        checkpoint: Option<u32>,
    },
    Report {
        serial: u32,
        /// Cumulative received ranges, half-open `[start, end)` in bits.
        claims: Vec<(u64, u64)>,
    },
    ReportAck {
        serial: u32,
    },
    Cancel,
}

impl Segment {
    pub fn wire_bits(&self) -> u64 {
        match &self.kind {
            SegmentKind::Data { len_bits, .. } => *len_bits,
            _ => CONTROL_SEGMENT_BITS,
        }
    }

    pub fn is_checkpoint(&self) -> Option<u32> {
        match &self.kind {
            SegmentKind::Data { checkpoint, .. } => *checkpoint,
            _ => None,
        }
    }
}

// ---------------------------------------------------------------- range set

/// Sorted, disjoint, half-open `[start, end)` ranges over block offsets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RangeSet {
    spans: Vec<(u64, u64)>,
}

impl RangeSet {
    pub fn new() -> Self {
        RangeSet::default()
    }

    pub fn full(len: u64) -> Self {
        if len == 0 {
            RangeSet::new()
        } else {
            RangeSet {
                spans: vec![(0, len)],
            }
        }
    }

    pub fn insert(&mut self, start: u64, end: u64) {
        assert!(start <= end, "inverted range");
        if start == end {
            return;
        }
        let mut merged = Vec::with_capacity(self.spans.len() + 1);
        let (mut s, mut e) = (start, end);
        for &(a, b) in &self.spans {
            if b < s || a > e {
                merged.push((a, b));
            } else {
                s = s.min(a);
                e = e.max(b);
            }
        }
        merged.push((s, e));
        merged.sort_unstable();
        self.spans = merged;
    }

    pub fn remove(&mut self, start: u64, end: u64) {
        assert!(start <= end, "inverted range");
        if start == end {
            return;
        }
        let mut kept = Vec::with_capacity(self.spans.len() + 1);
        for &(a, b) in &self.spans {
            if b <= start || a >= end {
                kept.push((a, b));
                continue;
            }
            if a < start {
                kept.push((a, start));
            }
            if b > end {
                kept.push((end, b));
            }
        }
        self.spans = kept;
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn covers(&self, start: u64, end: u64) -> bool {
        self.spans.iter().any(|&(a, b)| a <= start && end <= b)
    }

    pub fn total(&self) -> u64 {
        self.spans.iter().map(|&(a, b)| b - a).sum()
    }

    pub fn spans(&self) -> &[(u64, u64)] {
        &self.spans
    }
}

// ------------------------------------------------------------------- sender

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Active,
    Closed,
    Cancelled,
}

#[derive(Debug)]
pub struct SenderSession {
    pub id: SessionId,
    total_len_bits: u64,
    cfg: LtpConfig,
    /// Ranges the receiver has not yet claimed.
    unclaimed: RangeSet,
    /// Checkpoint serial whose report we are waiting for.
    outstanding_checkpoint: Option<u32>,
    next_checkpoint_serial: u32,
    highest_report_serial: Option<u32>,
    timer_retries: u32,
    state: SessionState,
}

impl SenderSession {
    pub fn new(id: SessionId, total_len_bits: u64, cfg: LtpConfig) -> Self {
        assert!(total_len_bits > 0, "empty block");
        assert!(cfg.segment_size_bits > 0, "zero segment size");
        SenderSession {
            id,
            total_len_bits,
            cfg,
            unclaimed: RangeSet::full(total_len_bits),
            outstanding_checkpoint: None,
            next_checkpoint_serial: 1,
            highest_report_serial: None,
            timer_retries: 0,
            state: SessionState::Active,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn is_closed(&self) -> bool {
        self.state != SessionState::Active
    }

    /// Splits `[start, end)` into data segments. The caller decides which
    /// one, if any, carries the checkpoint flag.
    fn segments_for(&self, start: u64, end: u64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        let mut at = start;
        while at < end {
            let len = self.cfg.segment_size_bits.min(end - at);
            out.push((at, len));
            at += len;
        }
        out
    }

    fn emit_round(&mut self, ranges: Vec<(u64, u64)>) -> Vec<Segment> {
        let pieces: Vec<(u64, u64)> = ranges
            .iter()
            .flat_map(|&(a, b)| self.segments_for(a, b))
            .collect();
        let serial = self.next_checkpoint_serial;
        self.next_checkpoint_serial += 1;
        self.outstanding_checkpoint = Some(serial);
        let last = pieces.len() - 1;
        pieces
            .into_iter()
            .enumerate()
            .map(|(i, (offset, len))| Segment {
                session: self.id,
                kind: SegmentKind::Data {
                    offset_bits: offset,
                    len_bits: len,
                    total_len_bits: self.total_len_bits,
                    checkpoint: (i == last).then_some(serial),
                },
            })
            .collect()
    }

    /// Emits the initial full round; the final segment is checkpoint 1.
    pub fn start(&mut self) -> Vec<Segment> {
        assert_eq!(self.state, SessionState::Active);
        self.emit_round(vec![(0, self.total_len_bits)])
    }

    /// Handles a reception report. Always acknowledges it; retransmits
    /// unclaimed data (new checkpoint) or closes when everything is claimed.
    pub fn on_report(&mut self, serial: u32, claims: &[(u64, u64)]) -> Vec<Segment> {
        let ack = Segment {
            session: self.id,
            kind: SegmentKind::ReportAck { serial },
        };
        if self.state != SessionState::Active {
            return vec![ack]; // late duplicate against a closed session
        }
        for &(a, b) in claims {
            self.unclaimed.remove(a, b);
        }
        if self.unclaimed.is_empty() {
            self.state = SessionState::Closed;
            return vec![ack];
        }
        if self
            .highest_report_serial
            .is_some_and(|highest| serial <= highest)
        {
            // A re-sent or reordered report. Acknowledge it, but leave the
            // outstanding checkpoint armed: only a *new* report answers the
            // current round, and dropping the timer here would strand the
            // session if that round was lost.
            return vec![ack];
        }
        self.highest_report_serial = Some(serial);
        self.outstanding_checkpoint = None;
        self.timer_retries = 0;
        let missing: Vec<(u64, u64)> = self.unclaimed.spans().to_vec();
        let mut out = vec![ack];
        out.extend(self.emit_round(missing));
        out
    }

    /// Timer expiry for checkpoint `serial`: re-sends just the checkpoint
    /// segment, or cancels the session after too many attempts. Stale
    /// timers (the report already arrived) return nothing.
    pub fn on_checkpoint_timeout(&mut self, serial: u32) -> Vec<Segment> {
        if self.state != SessionState::Active || self.outstanding_checkpoint != Some(serial) {
            return Vec::new();
        }
        self.timer_retries += 1;
        if self.timer_retries > self.cfg.max_timer_retries {
            self.state = SessionState::Cancelled;
            return vec![Segment {
                session: self.id,
                kind: SegmentKind::Cancel,
            }];
        }
        // Re-send the checkpoint as a zero-new-data probe: the smallest
        // still-unclaimed tail segment re-flagged with the same serial.
        let &(a, b) = self.unclaimed.spans().last().expect("active implies unclaimed");
        let len = (b - a).min(self.cfg.segment_size_bits);
        vec![Segment {
            session: self.id,
            kind: SegmentKind::Data {
                offset_bits: b - len,
                len_bits: len,
                total_len_bits: self.total_len_bits,
                checkpoint: Some(serial),
            },
        }]
    }
}

// ----------------------------------------------------------------- receiver

#[derive(Debug)]
pub struct ReceiverSession {
    pub id: SessionId,
    cfg: LtpConfig,
    total_len_bits: Option<u64>,
    received: RangeSet,
    delivered: bool,
    /// Serial of the report we are waiting to see acknowledged, with the
    /// claims it carried (re-sent verbatim on timer expiry).
    outstanding_report: Option<(u32, Vec<(u64, u64)>)>,
    next_report_serial: u32,
    seen_checkpoints: BTreeSet<u32>,
    timer_retries: u32,
    state: SessionState,
}

impl ReceiverSession {
    pub fn new(id: SessionId, cfg: LtpConfig) -> Self {
        ReceiverSession {
            id,
            cfg,
            total_len_bits: None,
            received: RangeSet::new(),
            delivered: false,
            outstanding_report: None,
            next_report_serial: 1,
            seen_checkpoints: BTreeSet::new(),
            timer_retries: 0,
            state: SessionState::Active,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn received_bits(&self) -> u64 {
        self.received.total()
    }

    fn is_complete(&self) -> bool {
        match self.total_len_bits {
            Some(total) => self.received.covers(0, total),
            None => false,
        }
    }

    fn fresh_report(&mut self) -> Segment {
        let serial = self.next_report_serial;
        self.next_report_serial += 1;
        let claims = self.received.spans().to_vec();
        self.outstanding_report = Some((serial, claims.clone()));
        self.timer_retries = 0;
        Segment {
            session: self.id,
            kind: SegmentKind::Report { serial, claims },
        }
    }

    /// Handles a data segment. Returns segments to send plus `true` when
    /// the complete block must be delivered upward (exactly once).
    pub fn on_data(
        &mut self,
        offset_bits: u64,
        len_bits: u64,
        total_len_bits: u64,
        checkpoint: Option<u32>,
    ) -> (Vec<Segment>, bool) {
        if self.state != SessionState::Active {
            return (Vec::new(), false);
        }
        self.total_len_bits.get_or_insert(total_len_bits);
        debug_assert_eq!(self.total_len_bits, Some(total_len_bits));
        self.received.insert(offset_bits, offset_bits + len_bits);

        let deliver = self.is_complete() && !self.delivered;
        if deliver {
            self.delivered = true;
        }
        let mut out = Vec::new();
        if let Some(serial) = checkpoint {
            if self.seen_checkpoints.insert(serial) {
                out.push(self.fresh_report());
            } else if let Some((serial, claims)) = self.outstanding_report.clone() {
                // Duplicate checkpoint while a report is unacknowledged:
                // re-send that report rather than inventing a new one.
                out.push(Segment {
                    session: self.id,
                    kind: SegmentKind::Report { serial, claims },
                });
            } else {
                // Duplicate checkpoint after our report was acknowledged:
                // the ack to us got through but the report may have been
                // processed against a newer round; answer with the current
                // cumulative picture.
                out.push(self.fresh_report());
            }
        }
        (out, deliver)
    }

    /// Handles a report acknowledgement; closes the session once complete.
    pub fn on_report_ack(&mut self, serial: u32) {
        if let Some((outstanding, _)) = self.outstanding_report {
            if outstanding == serial {
                self.outstanding_report = None;
                self.timer_retries = 0;
            }
        }
        if self.delivered && self.outstanding_report.is_none() {
            self.state = SessionState::Closed;
        }
    }

    /// Timer expiry for report `serial`: re-sends it verbatim, or cancels
    /// after too many attempts. Stale timers return nothing.
    pub fn on_report_timeout(&mut self, serial: u32) -> Vec<Segment> {
        let Some((outstanding, claims)) = self.outstanding_report.clone() else {
            return Vec::new();
        };
        if self.state != SessionState::Active || outstanding != serial {
            return Vec::new();
        }
        self.timer_retries += 1;
        if self.timer_retries > self.cfg.max_timer_retries {
            self.state = SessionState::Cancelled;
            return vec![Segment {
                session: self.id,
                kind: SegmentKind::Cancel,
            }];
        }
        vec![Segment {
            session: self.id,
            kind: SegmentKind::Report {
                serial,
                claims,
            },
        }]
    }

    pub fn on_cancel(&mut self) {
        self.state = SessionState::Cancelled;
    }
}

// --------------------------------------------------------------------- tests
