//! Contact plans: precomputed directed transmission windows.
//!
//! A contact records that `from` can transmit to `to` from `start_s` to
//! `end_s` at a fixed rate, with one-way light time linearly interpolated
//! between its window endpoints. Plans are compiled from orbital geometry by
//! sampling a visibility predicate (line of sight and achievable rate above
//! the band floor) on a fixed grid and refining each window edge by
//! bisection to one-second tolerance, so the predicate holds one second
//! inside every edge and fails one second outside. Features shorter than
//! the sampling step are invisible by construction; the default step of one
//! hour resolves every planetary-scale geometry of interest.
//!
//! Each geometric window yields two directed contacts, forward and return,
//! whose rates preserve the band's asymmetry ratio exactly. Optical
//! acquisition delay is deducted from the usable window start at compile
//! time, so consumers never re-apply it. Ground links skip geometry
//! entirely: they carry a configured fixed rate and light time across the
//! whole horizon.
//!
//! The interchange format is line-oriented text: `#` comments, then one
//! record per line, `from to start_s end_s rate_bps owlt_start_s
//! owlt_end_s`, sorted by (start, from, to). Floats are printed in Rust's
//! shortest round-trip form, so export followed by import reproduces the
//! plan bit for bit.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::{BodyId, Ephemeris, EphemerisError, Occluder};
use crate::linkmodel::{achievable_rate, owlt_s, BandSpec, LinkModelError};

/// Window edges are bisected until bracketed within this many seconds.
pub const EDGE_TOLERANCE_S: f64 = 1.0;

/// Ranges below this are clamped before rate evaluation; co-located nodes
/// would otherwise divide by zero.
const MIN_RANGE_M: f64 = 1.0;

// ------------------------------------------------------------------- nodes

/// Name of a network node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// What a node is, which constrains the convergence layers it may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    MissionCenter,
    GroundStation,
    RelaySatellite,
    LagrangianRelay,
    Orbiter,
    SurfaceAsset,
}

impl NodeRole {
    /// Ground roles may speak the reliable terrestrial convergence layer.
    pub fn is_ground(&self) -> bool {
        matches!(self, NodeRole::MissionCenter | NodeRole::GroundStation)
    }
}

/// A network node riding a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub body: BodyId,
    pub role: NodeRole,
    /// DTN region, e.g. "mars.int.ltp".
    pub region: String,
    /// Persistent bundle store capacity, bits.
    pub store_capacity_bits: u64,
}

/// All nodes in a scenario, keyed by id.
pub type NodeTable = BTreeMap<NodeId, Node>;

// ------------------------------------------------------------------- links

/// Which convergence layer a link runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClKind {
    /// Red-part LTP over a space link.
    Ltp,
    /// Loss-free in-order stream for ground segments.
    Reliable,
}

/// Replaces a link's band inside [start_s, end_s); models scheduled
/// weather-driven RF fallback for hybrid optical sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandOverride {
    pub band: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// An allowed communicating pair. `from -> to` is the forward (high-rate)
/// direction; compilation emits the return contact automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub cl: ClKind,
    /// Band name, required for LTP links.
    pub band: Option<String>,
    /// Per-LTP-segment loss probability on this link, both directions.
    pub loss_probability: f64,
    /// Fixed rate for reliable links, bits/s.
    pub fixed_rate_bps: Option<f64>,
    /// Fixed one-way delay for reliable links, seconds.
    pub fixed_owlt_s: Option<f64>,
    pub overrides: Vec<BandOverride>,
}

// ----------------------------------------------------------------- contacts

/// One directed transmission window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub from: NodeId,
    pub to: NodeId,
    pub start_s: f64,
    pub end_s: f64,
    /// Constant within the window: the minimum of the endpoint evaluations,
    /// so the plan never promises more than the geometry delivers.
    pub rate_bps: f64,
    pub owlt_start_s: f64,
    pub owlt_end_s: f64,
}

impl Contact {
    /// One-way light time at `t_s`, linearly interpolated and clamped to
    /// the window.
    pub fn owlt_at(&self, t_s: f64) -> f64 {
        if self.end_s <= self.start_s {
            return self.owlt_start_s;
        }
        let frac = ((t_s - self.start_s) / (self.end_s - self.start_s)).clamp(0.0, 1.0);
        self.owlt_start_s + frac * (self.owlt_end_s - self.owlt_start_s)
    }

    /// True when the window covers `t_s` (half-open on the right).
    pub fn is_open_at(&self, t_s: f64) -> bool {
        t_s >= self.start_s && t_s < self.end_s
    }
}

/// A sorted set of contacts over a horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactPlan {
    contacts: Vec<Contact>,
    horizon_s: f64,
}

impl ContactPlan {
    pub fn new(mut contacts: Vec<Contact>, horizon_s: f64) -> Self {
        sort_contacts(&mut contacts);
        ContactPlan {
            contacts,
            horizon_s,
        }
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn horizon_s(&self) -> f64 {
        self.horizon_s
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    /// All contacts departing `from`, in plan order.
    pub fn contacts_from<'a>(&'a self, from: &'a NodeId) -> impl Iterator<Item = &'a Contact> {
        self.contacts.iter().filter(move |c| &c.from == from)
    }

    /// The contact on directed link `from -> to` open at `t_s`, if any.
    pub fn contact_at(&self, from: &NodeId, to: &NodeId, t_s: f64) -> Option<&Contact> {
        self.contacts
            .iter()
            .find(|c| &c.from == from && &c.to == to && c.is_open_at(t_s))
    }

    /// Start of the next window on `from -> to` at or after `t_s`.
    pub fn next_contact_start(&self, from: &NodeId, to: &NodeId, t_s: f64) -> Option<f64> {
        self.contacts
            .iter()
            .filter(|c| &c.from == from && &c.to == to && c.start_s >= t_s)
            .map(|c| c.start_s)
            .fold(None, |acc, s| Some(acc.map_or(s, |a: f64| a.min(s))))
    }

    /// Start of the next window departing `from` toward anyone, after `t_s`.
    pub fn next_departure(&self, from: &NodeId, t_s: f64) -> Option<f64> {
        self.contacts
            .iter()
            .filter(|c| &c.from == from && c.start_s > t_s)
            .map(|c| c.start_s)
            .fold(None, |acc, s| Some(acc.map_or(s, |a: f64| a.min(s))))
    }

    /// Windows of the directed pair, sorted by start.
    pub fn windows(&self, from: &NodeId, to: &NodeId) -> Vec<&Contact> {
        self.contacts
            .iter()
            .filter(|c| &c.from == from && &c.to == to)
            .collect()
    }

    /// Gaps strictly between consecutive windows of the directed pair:
    /// `(gap_start, gap_end)` pairs, horizon edges excluded.
    pub fn gaps(&self, from: &NodeId, to: &NodeId) -> Vec<(f64, f64)> {
        let ws = self.windows(from, to);
        ws.windows(2)
            .filter(|pair| pair[1].start_s > pair[0].end_s)
            .map(|pair| (pair[0].end_s, pair[1].start_s))
            .collect()
    }
}

fn sort_contacts(contacts: &mut [Contact]) {
    contacts.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then_with(|| a.from.cmp(&b.from))
            .then_with(|| a.to.cmp(&b.to))
    });
}

// -------------------------------------------------------------------- errors

#[derive(Debug, Error)]
pub enum ContactPlanError {
    #[error(transparent)]
    Ephemeris(#[from] EphemerisError),
    #[error(transparent)]
    LinkModel(#[from] LinkModelError),
    #[error("link {0} -> {1}: {2}")]
    InvalidLink(NodeId, NodeId, String),
    #[error("unknown node \"{0}\"")]
    UnknownNode(String),
    #[error("unknown band \"{0}\"")]
    UnknownBand(String),
    #[error("plan text line {line}: {message}")]
    Parse { line: usize, message: String },
}

// -------------------------------------------------------------- compilation

/// Compiles the directed contact plan for `links` over `[0, horizon_s]`,
/// sampling visibility every `step_s` seconds.
pub fn compute_contacts(
    eph: &Ephemeris,
    nodes: &NodeTable,
    links: &[LinkSpec],
    bands: &BTreeMap<String, BandSpec>,
    occluders: &[Occluder],
    horizon_s: f64,
    step_s: f64,
) -> Result<ContactPlan, ContactPlanError> {
    assert!(horizon_s > 0.0 && step_s > 0.0, "horizon and step must be positive");
    let mut contacts = Vec::new();
    for link in links {
        let from = nodes
            .get(&link.from)
            .ok_or_else(|| ContactPlanError::UnknownNode(link.from.0.clone()))?;
        let to = nodes
            .get(&link.to)
            .ok_or_else(|| ContactPlanError::UnknownNode(link.to.0.clone()))?;
        match link.cl {
            ClKind::Reliable => {
                let rate = link.fixed_rate_bps.ok_or_else(|| {
                    ContactPlanError::InvalidLink(
                        link.from.clone(),
                        link.to.clone(),
                        "reliable links need fixed_rate_bps".into(),
                    )
                })?;
                let owlt = link.fixed_owlt_s.ok_or_else(|| {
                    ContactPlanError::InvalidLink(
                        link.from.clone(),
                        link.to.clone(),
                        "reliable links need fixed_owlt_s".into(),
                    )
                })?;
                for (a, b) in [(&link.from, &link.to), (&link.to, &link.from)] {
                    contacts.push(Contact {
                        from: a.clone(),
                        to: b.clone(),
                        start_s: 0.0,
                        end_s: horizon_s,
                        rate_bps: rate,
                        owlt_start_s: owlt,
                        owlt_end_s: owlt,
                    });
                }
            }
            ClKind::Ltp => {
                let band_name = link.band.as_ref().ok_or_else(|| {
                    ContactPlanError::InvalidLink(
                        link.from.clone(),
                        link.to.clone(),
                        "LTP links need a band".into(),
                    )
                })?;
                compile_geometric_link(
                    eph, from, to, link, band_name, bands, occluders, horizon_s, step_s,
                    &mut contacts,
                )?;
            }
        }
    }
    Ok(ContactPlan::new(contacts, horizon_s))
}

/// The band in force at `t_s` given the default and scheduled overrides.
fn band_at<'a>(
    default: &'a str,
    overrides: &'a [BandOverride],
    t_s: f64,
) -> &'a str {
    for ov in overrides {
        if t_s >= ov.start_s && t_s < ov.end_s {
            return &ov.band;
        }
    }
    default
}

/// Cuts `[0, horizon]` at every override boundary so each piece has one band.
fn band_segments(
    default: &str,
    overrides: &[BandOverride],
    horizon_s: f64,
) -> Vec<(f64, f64, String)> {
    let mut cuts = vec![0.0, horizon_s];
    for ov in overrides {
        for edge in [ov.start_s, ov.end_s] {
            if edge > 0.0 && edge < horizon_s {
                cuts.push(edge);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[0], w[1], band_at(default, overrides, mid).to_string())
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn compile_geometric_link(
    eph: &Ephemeris,
    from: &Node,
    to: &Node,
    link: &LinkSpec,
    default_band: &str,
    bands: &BTreeMap<String, BandSpec>,
    occluders: &[Occluder],
    horizon_s: f64,
    step_s: f64,
    out: &mut Vec<Contact>,
) -> Result<(), ContactPlanError> {
    for (seg_start, seg_end, band_name) in band_segments(default_band, &link.overrides, horizon_s)
    {
        let band = bands
            .get(&band_name)
            .ok_or_else(|| ContactPlanError::UnknownBand(band_name.clone()))?;

        let visible = |t: f64| -> Result<bool, ContactPlanError> {
            if !eph.line_of_sight(&from.body, &to.body, t, occluders)? {
                return Ok(false);
            }
            let range = eph.distance(&from.body, &to.body, t)?.max(MIN_RANGE_M);
            let (fwd, _) = achievable_rate(band, range)?;
            Ok(fwd > 0.0)
        };

        for (w0, w1) in scan_windows(seg_start, seg_end, step_s, &visible)? {
            let usable0 = w0 + band.acquisition_delay_s;
            if usable0 >= w1 {
                continue;
            }
            let range0 = eph.distance(&from.body, &to.body, usable0)?.max(MIN_RANGE_M);
            let range1 = eph.distance(&from.body, &to.body, w1)?.max(MIN_RANGE_M);
            let (f0, _) = achievable_rate(band, range0)?;
            let (f1, _) = achievable_rate(band, range1)?;
            let forward = f0.min(f1);
            if forward <= 0.0 {
                continue;
            }
            let ret = forward / band.asymmetry_ratio;
            let owlt0 = owlt_s(range0);
            let owlt1 = owlt_s(range1);
            out.push(Contact {
                from: from.id.clone(),
                to: to.id.clone(),
                start_s: usable0,
                end_s: w1,
                rate_bps: forward,
                owlt_start_s: owlt0,
                owlt_end_s: owlt1,
            });
            out.push(Contact {
                from: to.id.clone(),
                to: from.id.clone(),
                start_s: usable0,
                end_s: w1,
                rate_bps: ret,
                owlt_start_s: owlt0,
                owlt_end_s: owlt1,
            });
        }
    }
    Ok(())
}

/// Scans `[seg_start, seg_end]` on the sampling grid and returns maximal
/// true-intervals of `visible`, edges refined by bisection.
fn scan_windows(
    seg_start: f64,
    seg_end: f64,
    step_s: f64,
    visible: &impl Fn(f64) -> Result<bool, ContactPlanError>,
) -> Result<Vec<(f64, f64)>, ContactPlanError> {
    let mut windows = Vec::new();
    let mut prev_t = seg_start;
    let mut prev_v = visible(seg_start)?;
    let mut open_at = if prev_v { Some(seg_start) } else { None };

    let mut t = seg_start;
    while t < seg_end {
        t = (t + step_s).min(seg_end);
        let v = visible(t)?;
        if v != prev_v {
            let edge = refine_edge(prev_t, t, prev_v, visible)?;
            if v {
                open_at = Some(edge);
            } else if let Some(start) = open_at.take() {
                if edge > start {
                    windows.push((start, edge));
                }
            }
        }
        prev_t = t;
        prev_v = v;
    }
    if let Some(start) = open_at {
        if seg_end > start {
            windows.push((start, seg_end));
        }
    }
    Ok(windows)
}

/// Bisects the visibility boundary inside `(lo, hi)` where `visible(lo) ==
/// lo_v != visible(hi)`, returning a point on the true side within
/// [`EDGE_TOLERANCE_S`].
fn refine_edge(
    mut lo: f64,
    mut hi: f64,
    lo_v: bool,
    visible: &impl Fn(f64) -> Result<bool, ContactPlanError>,
) -> Result<f64, ContactPlanError> {
    while hi - lo > EDGE_TOLERANCE_S {
        let mid = 0.5 * (lo + hi);
        if visible(mid)? == lo_v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Return the endpoint on the true side of the boundary.
    Ok(if lo_v { lo } else { hi })
}

// -------------------------------------------------------------- text format

/// Serializes the plan to the line-oriented interchange format.
pub fn export_plan(plan: &ContactPlan) -> String {
    let mut s = String::new();
    s.push_str("# contact plan\n");
    s.push_str(&format!("# horizon_s {}\n", plan.horizon_s()));
    s.push_str("# fields: from to start_s end_s rate_bps owlt_start_s owlt_end_s\n");
    for c in plan.contacts() {
        s.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            c.from, c.to, c.start_s, c.end_s, c.rate_bps, c.owlt_start_s, c.owlt_end_s
        ));
    }
    s
}

/// Parses the interchange format produced by [`export_plan`].
pub fn import_plan(text: &str) -> Result<ContactPlan, ContactPlanError> {
    let mut contacts = Vec::new();
    let mut horizon_s: Option<f64> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            if parts.next() == Some("horizon_s") {
                let value = parts.next().ok_or(ContactPlanError::Parse {
                    line: line_no,
                    message: "horizon_s header missing its value".into(),
                })?;
                horizon_s = Some(value.parse().map_err(|e| ContactPlanError::Parse {
                    line: line_no,
                    message: format!("bad horizon value \"{value}\": {e}"),
                })?);
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(ContactPlanError::Parse {
                line: line_no,
                message: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64, ContactPlanError> {
            s.parse().map_err(|e| ContactPlanError::Parse {
                line: line_no,
                message: format!("bad number \"{s}\": {e}"),
            })
        };
        let c = Contact {
            from: NodeId::new(fields[0]),
            to: NodeId::new(fields[1]),
            start_s: num(fields[2])?,
            end_s: num(fields[3])?,
            rate_bps: num(fields[4])?,
            owlt_start_s: num(fields[5])?,
            owlt_end_s: num(fields[6])?,
        };
        if c.end_s <= c.start_s {
            return Err(ContactPlanError::Parse {
                line: line_no,
                message: format!("window must have start < end, got [{}, {}]", c.start_s, c.end_s),
            });
        }
        contacts.push(c);
    }
    let horizon = horizon_s.unwrap_or_else(|| {
        contacts.iter().map(|c| c.end_s).fold(0.0, f64::max)
    });
    Ok(ContactPlan::new(contacts, horizon))
}

// --------------------------------------------------------------------- tests

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ephemeris::{OrbitSpec, ASTRONOMICAL_UNIT_M};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EARTH_PERIOD_S: f64 = 365.256 * 86_400.0;
    const MARS_PERIOD_S: f64 = 686.98 * 86_400.0;
    const DAY_S: f64 = 86_400.0;

    fn test_band(name: &str, acquisition_delay_s: f64) -> BandSpec {
        BandSpec {
            name: name.into(),
            frequency_hz: 32.0e9,
            reference_rate_bps: 1.0e6,
            reference_range_m: 0.52 * ASTRONOMICAL_UNIT_M,
            asymmetry_ratio: 1000.0,
            atmospheric_margin_db: 0.0,
            acquisition_delay_s,
            max_rate_bps: None,
            min_rate_bps: 0.0,
        }
    }

    fn node(id: &str, body: &str, role: NodeRole) -> Node {
        Node {
            id: NodeId::from(id),
            body: BodyId::from(body),
            role,
            region: "test.int.ltp".into(),
            store_capacity_bits: 1_000_000_000,
        }
    }

    struct Fixture {
        eph: Ephemeris,
        nodes: NodeTable,
        bands: BTreeMap<String, BandSpec>,
        occluders: Vec<Occluder>,
    }

    /// Sun, Earth, Mars, both planets starting at phase 0, one ground node
    /// per planet, Ka band, solar exclusion 0.035 au.
    fn earth_mars_fixture() -> Fixture {
        let mut eph = Ephemeris::new();
        eph.add_body("sun", OrbitSpec::FixedPoint { x_m: 0.0, y_m: 0.0 })
            .unwrap();
        eph.add_body(
            "earth",
            OrbitSpec::CircularHeliocentric {
                radius_m: ASTRONOMICAL_UNIT_M,
                period_s: EARTH_PERIOD_S,
                phase_rad: 0.0,
            },
        )
        .unwrap();
        eph.add_body(
            "mars",
            OrbitSpec::CircularHeliocentric {
                radius_m: 1.524 * ASTRONOMICAL_UNIT_M,
                period_s: MARS_PERIOD_S,
                phase_rad: 0.0,
            },
        )
        .unwrap();
        let mut nodes = NodeTable::new();
        for n in [
            node("dsn_1", "earth", NodeRole::GroundStation),
            node("mro_1", "mars", NodeRole::Orbiter),
        ] {
            nodes.insert(n.id.clone(), n);
        }
        let mut bands = BTreeMap::new();
        bands.insert("Ka".to_string(), test_band("Ka", 0.0));
        Fixture {
            eph,
            nodes,
            bands,
            occluders: vec![Occluder {
                body: BodyId::from("sun"),
                radius_m: 0.035 * ASTRONOMICAL_UNIT_M,
            }],
        }
    }

    fn ltp_link(from: &str, to: &str, band: &str) -> LinkSpec {
        LinkSpec {
            from: NodeId::from(from),
            to: NodeId::from(to),
            cl: ClKind::Ltp,
            band: Some(band.into()),
            loss_probability: 0.0,
            fixed_rate_bps: None,
            fixed_owlt_s: None,
            overrides: Vec::new(),
        }
    }

    #[test]
    fn unobstructed_fixed_pair_yields_one_full_horizon_window() {
        let mut eph = Ephemeris::new();
        eph.add_body("a", OrbitSpec::FixedPoint { x_m: 0.0, y_m: 0.0 })
            .unwrap();
        eph.add_body(
            "b",
            OrbitSpec::FixedPoint {
                x_m: 0.52 * ASTRONOMICAL_UNIT_M,
                y_m: 0.0,
            },
        )
        .unwrap();
        let mut nodes = NodeTable::new();
        for n in [
            node("na", "a", NodeRole::GroundStation),
            node("nb", "b", NodeRole::Orbiter),
        ] {
            nodes.insert(n.id.clone(), n);
        }
        let mut bands = BTreeMap::new();
        bands.insert("Ka".to_string(), test_band("Ka", 0.0));
        let plan = compute_contacts(
            &eph,
            &nodes,
            &[ltp_link("na", "nb", "Ka")],
            &bands,
            &[],
            1000.0,
            100.0,
        )
        .unwrap();
        assert_eq!(plan.contacts().len(), 2, "one window, two directions");
        let fwd = &plan.windows(&NodeId::from("na"), &NodeId::from("nb"))[0];
        assert_eq!((fwd.start_s, fwd.end_s), (0.0, 1000.0));
        assert_eq!(fwd.rate_bps, 1.0e6, "reference range gives reference rate");
        let ret = &plan.windows(&NodeId::from("nb"), &NodeId::from("na"))[0];
        assert_eq!(ret.rate_bps, 1000.0, "return direction divided by asymmetry");
        assert!((fwd.owlt_start_s - 259.48).abs() < 0.01);
    }

    #[test]
    fn geostationary_relay_keeps_continuous_contact_with_its_ground_site() {
        let mut eph = Ephemeris::new();
        eph.add_body("sun", OrbitSpec::FixedPoint { x_m: 0.0, y_m: 0.0 })
            .unwrap();
        eph.add_body(
            "earth",
            OrbitSpec::CircularHeliocentric {
                radius_m: ASTRONOMICAL_UNIT_M,
                period_s: EARTH_PERIOD_S,
                phase_rad: 0.0,
            },
        )
        .unwrap();
        eph.add_body(
            "geo",
            OrbitSpec::CircularPlanetocentric {
                parent: BodyId::from("earth"),
                radius_m: 4.2164e7,
                period_s: 86_164.0,
                phase_rad: 0.0,
            },
        )
        .unwrap();
        let mut nodes = NodeTable::new();
        for n in [
            node("gs", "earth", NodeRole::GroundStation),
            node("relay", "geo", NodeRole::RelaySatellite),
        ] {
            nodes.insert(n.id.clone(), n);
        }
        let mut bands = BTreeMap::new();
        let mut band = test_band("Ka", 0.0);
        band.max_rate_bps = Some(5.0e7);
        bands.insert("Ka".to_string(), band);
        let horizon = 10.0 * DAY_S;
        let plan = compute_contacts(
            &eph,
            &nodes,
            &[ltp_link("gs", "relay", "Ka")],
            &bands,
            &[Occluder {
                body: BodyId::from("sun"),
                radius_m: 0.035 * ASTRONOMICAL_UNIT_M,
            }],
            horizon,
            3600.0,
        )
        .unwrap();
        let ws = plan.windows(&NodeId::from("gs"), &NodeId::from("relay"));
        assert_eq!(ws.len(), 1, "24-hour-view relay never loses its site");
        assert_eq!((ws[0].start_s, ws[0].end_s), (0.0, horizon));
        assert_eq!(ws[0].rate_bps, 5.0e7, "proximity rate must hit the band cap");
        assert!(ws[0].owlt_start_s < 0.2, "GEO light time is a fraction of a second");
    }

    #[test]
    fn earth_mars_pair_blacks_out_once_per_synodic_period() {
        let f = earth_mars_fixture();
        let syn = f
            .eph
            .synodic_period(&BodyId::from("earth"), &BodyId::from("mars"))
            .unwrap();
        let plan = compute_contacts(
            &f.eph,
            &f.nodes,
            &[ltp_link("dsn_1", "mro_1", "Ka")],
            &f.bands,
            &f.occluders,
            syn,
            3600.0,
        )
        .unwrap();
        let gaps = plan.gaps(&NodeId::from("dsn_1"), &NodeId::from("mro_1"));
        assert_eq!(gaps.len(), 1, "exactly one conjunction blackout per synodic period");
        let duration_days = (gaps[0].1 - gaps[0].0) / DAY_S;
        assert!(
            (duration_days - 14.4).abs() <= 1.0,
            "blackout lasted {duration_days} days, expected 14.4 +/- 1"
        );
    }

    #[test]
    fn windows_repeat_with_the_synodic_period() {
        let f = earth_mars_fixture();
        let syn = f
            .eph
            .synodic_period(&BodyId::from("earth"), &BodyId::from("mars"))
            .unwrap();
        let plan = compute_contacts(
            &f.eph,
            &f.nodes,
            &[ltp_link("dsn_1", "mro_1", "Ka")],
            &f.bands,
            &f.occluders,
            2.0 * syn,
            3600.0,
        )
        .unwrap();
        let gaps = plan.gaps(&NodeId::from("dsn_1"), &NodeId::from("mro_1"));
        assert_eq!(gaps.len(), 2, "two blackouts over two synodic periods");
        // Each blackout edge must recur one synodic period later, within
        // twice the bisection tolerance.
        assert!(
            ((gaps[1].0 - gaps[0].0) - syn).abs() <= 2.0 * EDGE_TOLERANCE_S,
            "blackout start drifted: {} vs {}",
            gaps[1].0 - gaps[0].0,
            syn
        );
        assert!(
            ((gaps[1].1 - gaps[0].1) - syn).abs() <= 2.0 * EDGE_TOLERANCE_S,
            "blackout end drifted"
        );
    }

    #[test]
    fn window_edges_satisfy_the_refinement_contract() {
        let f = earth_mars_fixture();
        let syn = f
            .eph
            .synodic_period(&BodyId::from("earth"), &BodyId::from("mars"))
            .unwrap();
        let plan = compute_contacts(
            &f.eph,
            &f.nodes,
            &[ltp_link("dsn_1", "mro_1", "Ka")],
            &f.bands,
            &f.occluders,
            syn,
            3600.0,
        )
        .unwrap();
        let visible = |t: f64| {
            f.eph
                .line_of_sight(&BodyId::from("earth"), &BodyId::from("mars"), t, &f.occluders)
                .unwrap()
        };
        for c in plan.windows(&NodeId::from("dsn_1"), &NodeId::from("mro_1")) {
            // Interior edges only; horizon clips are not refined boundaries.
            if c.start_s > 0.0 {
                assert!(visible(c.start_s + 1.0), "must be visible 1 s inside start");
                assert!(!visible(c.start_s - 1.0), "must be blocked 1 s before start");
            }
            if c.end_s < plan.horizon_s() {
                assert!(visible(c.end_s - 1.0), "must be visible 1 s before end");
                assert!(!visible(c.end_s + 1.0), "must be blocked 1 s after end");
            }
        }
    }

    #[test]
    fn acquisition_delay_shaves_the_usable_window_start() {
        let f = earth_mars_fixture();
        let mut bands = f.bands.clone();
        bands.insert("optical".to_string(), {
            let mut b = test_band("optical", 60.0);
            b.frequency_hz = 1.93e14;
            b
        });
        let syn = f
            .eph
            .synodic_period(&BodyId::from("earth"), &BodyId::from("mars"))
            .unwrap();
        let rf = compute_contacts(
            &f.eph,
            &f.nodes,
            &[ltp_link("dsn_1", "mro_1", "Ka")],
            &bands,
            &f.occluders,
            syn,
            3600.0,
        )
        .unwrap();
        let opt = compute_contacts(
            &f.eph,
            &f.nodes,
            &[ltp_link("dsn_1", "mro_1", "optical")],
            &bands,
            &f.occluders,
            syn,
            3600.0,
        )
        .unwrap();
        let rf_ws = rf.windows(&NodeId::from("dsn_1"), &NodeId::from("mro_1"));
        let opt_ws = opt.windows(&NodeId::from("dsn_1"), &NodeId::from("mro_1"));
        assert_eq!(rf_ws.len(), opt_ws.len());
        // The second RF window starts at a refined geometric edge; optical
        // must start 60 s later.
        let (rf_w, opt_w) = (rf_ws[1], opt_ws[1]);
        assert!(
            (opt_w.start_s - rf_w.start_s - 60.0).abs() < 1e-6,
            "optical usable start {} vs RF {}",
            opt_w.start_s,
            rf_w.start_s
        );
        assert_eq!(opt_w.end_s, rf_w.end_s, "window ends are unaffected");
    }

    #[test]
    fn band_overrides_split_windows_at_their_boundaries() {
        let mut eph = Ephemeris::new();
        eph.add_body("a", OrbitSpec::FixedPoint { x_m: 0.0, y_m: 0.0 })
            .unwrap();
        eph.add_body(
            "b",
            OrbitSpec::FixedPoint {
                x_m: 0.52 * ASTRONOMICAL_UNIT_M,
                y_m: 0.0,
            },
        )
        .unwrap();
        let mut nodes = NodeTable::new();
        for n in [
            node("na", "a", NodeRole::GroundStation),
            node("nb", "b", NodeRole::Orbiter),
        ] {
            nodes.insert(n.id.clone(), n);
        }
        let mut bands = BTreeMap::new();
        bands.insert("Ka".to_string(), test_band("Ka", 0.0));
        bands.insert("X".to_string(), {
            let mut b = test_band("X", 0.0);
            b.frequency_hz = 8.4e9;
            b.reference_rate_bps = 2.0e6;
            b
        });
        let mut link = ltp_link("na", "nb", "Ka");
        link.overrides.push(BandOverride {
            band: "X".into(),
            start_s: 400.0,
            end_s: 600.0,
        });
        let plan = compute_contacts(&eph, &nodes, &[link], &bands, &[], 1000.0, 50.0).unwrap();
        let ws = plan.windows(&NodeId::from("na"), &NodeId::from("nb"));
        assert_eq!(ws.len(), 3, "override must cut the window into three pieces");
        assert_eq!(
            (ws[0].start_s, ws[0].end_s, ws[0].rate_bps),
            (0.0, 400.0, 1.0e6)
        );
        assert_eq!(
            (ws[1].start_s, ws[1].end_s, ws[1].rate_bps),
            (400.0, 600.0, 2.0e6),
            "override window must carry the override band's rate"
        );
        assert_eq!(
            (ws[2].start_s, ws[2].end_s, ws[2].rate_bps),
            (600.0, 1000.0, 1.0e6)
        );
    }

    #[test]
    fn reliable_links_span_the_horizon_with_fixed_parameters() {
        let mut eph = Ephemeris::new();
        eph.add_body("earth", OrbitSpec::FixedPoint { x_m: 0.0, y_m: 0.0 })
            .unwrap();
        let mut nodes = NodeTable::new();
        for n in [
            node("mc", "earth", NodeRole::MissionCenter),
            node("gs", "earth", NodeRole::GroundStation),
        ] {
            nodes.insert(n.id.clone(), n);
        }
        let link = LinkSpec {
            from: NodeId::from("gs"),
            to: NodeId::from("mc"),
            cl: ClKind::Reliable,
            band: None,
            loss_probability: 0.0,
            fixed_rate_bps: Some(1.0e8),
            fixed_owlt_s: Some(0.05),
            overrides: Vec::new(),
        };
        let plan =
            compute_contacts(&eph, &nodes, &[link], &BTreeMap::new(), &[], 5000.0, 100.0).unwrap();
        assert_eq!(plan.contacts().len(), 2);
        for c in plan.contacts() {
            assert_eq!((c.start_s, c.end_s), (0.0, 5000.0));
            assert_eq!(c.rate_bps, 1.0e8);
            assert_eq!(c.owlt_at(2500.0), 0.05);
        }
    }

    #[test]
    fn no_two_contacts_of_a_directed_pair_overlap() {
        let f = earth_mars_fixture();
        let syn = f
            .eph
            .synodic_period(&BodyId::from("earth"), &BodyId::from("mars"))
            .unwrap();
        let plan = compute_contacts(
            &f.eph,
            &f.nodes,
            &[ltp_link("dsn_1", "mro_1", "Ka")],
            &f.bands,
            &f.occluders,
            2.0 * syn,
            3600.0,
        )
        .unwrap();
        let ws = plan.windows(&NodeId::from("dsn_1"), &NodeId::from("mro_1"));
        for pair in ws.windows(2) {
            assert!(
                pair[0].end_s <= pair[1].start_s,
                "windows [{}, {}] and [{}, {}] overlap",
                pair[0].start_s,
                pair[0].end_s,
                pair[1].start_s,
                pair[1].end_s
            );
        }
    }

    #[test]
    fn owlt_interpolates_linearly_and_clamps() {
        let c = Contact {
            from: NodeId::from("a"),
            to: NodeId::from("b"),
            start_s: 100.0,
            end_s: 200.0,
            rate_bps: 1.0e6,
            owlt_start_s: 10.0,
            owlt_end_s: 20.0,
        };
        assert_eq!(c.owlt_at(100.0), 10.0);
        assert_eq!(c.owlt_at(150.0), 15.0);
        assert_eq!(c.owlt_at(200.0), 20.0);
        assert_eq!(c.owlt_at(0.0), 10.0, "clamped before the window");
        assert_eq!(c.owlt_at(300.0), 20.0, "clamped after the window");
    }

    #[test]
    fn export_then_import_is_the_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut contacts = Vec::new();
        for i in 0..100 {
            let start = rng.gen_range(0.0..1.0e6);
            let dur = rng.gen_range(1.0..1.0e5);
            contacts.push(Contact {
                from: NodeId::new(format!("n{}", i % 7)),
                to: NodeId::new(format!("n{}", (i + 1) % 7)),
                start_s: start,
                end_s: start + dur,
                rate_bps: rng.gen_range(1.0..1.0e9),
                owlt_start_s: rng.gen_range(0.01..2.0e4),
                owlt_end_s: rng.gen_range(0.01..2.0e4),
            });
        }
        let plan = ContactPlan::new(contacts, 2.0e6);
        let text = export_plan(&plan);
        let back = import_plan(&text).expect("exported plan must re-import");
        assert_eq!(back, plan, "round-trip must reproduce the plan exactly");
        assert_eq!(export_plan(&back), text, "second export must be identical");
    }

    #[test]
    fn empty_plans_export_headers_only() {
        let plan = ContactPlan::new(Vec::new(), 100.0);
        let text = export_plan(&plan);
        assert!(text.lines().all(|l| l.starts_with('#')));
        let back = import_plan(&text).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.horizon_s(), 100.0);
    }

    #[test]
    fn malformed_records_are_rejected_with_line_numbers() {
        let text = "# contact plan\na b 0 10 1000 1\n";
        let err = import_plan(text).expect_err("6 fields must fail");
        assert!(
            err.to_string().contains("line 2"),
            "error should cite the line: {err}"
        );

        let text = "a b 10 5 1000 1 1\n";
        let err = import_plan(text).expect_err("inverted window must fail");
        assert!(err.to_string().contains("start < end"), "got: {err}");

        let text = "a b zero 5 1000 1 1\n";
        assert!(import_plan(text).is_err(), "non-numeric field must fail");
    }

    #[test]
    fn plan_lookups_find_open_contacts_and_next_starts() {
        let contacts = vec![
            Contact {
                from: NodeId::from("a"),
                to: NodeId::from("b"),
                start_s: 10.0,
                end_s: 20.0,
                rate_bps: 1.0e6,
                owlt_start_s: 1.0,
                owlt_end_s: 1.0,
            },
            Contact {
                from: NodeId::from("a"),
                to: NodeId::from("b"),
                start_s: 50.0,
                end_s: 60.0,
                rate_bps: 1.0e6,
                owlt_start_s: 1.0,
                owlt_end_s: 1.0,
            },
        ];
        let plan = ContactPlan::new(contacts, 100.0);
        let a = NodeId::from("a");
        let b = NodeId::from("b");
        assert!(plan.contact_at(&a, &b, 15.0).is_some());
        assert!(plan.contact_at(&a, &b, 20.0).is_none(), "windows are half-open");
        assert!(plan.contact_at(&b, &a, 15.0).is_none(), "direction matters");
        assert_eq!(plan.next_contact_start(&a, &b, 25.0), Some(50.0));
        assert_eq!(plan.next_contact_start(&a, &b, 61.0), None);
        assert_eq!(plan.next_departure(&a, 10.0), Some(50.0));
        assert_eq!(plan.gaps(&a, &b), vec![(20.0, 50.0)]);
    }
}
