//! Scenario definition, validation and execution.
//!
//! A scenario is a TOML document declaring bodies (orbits), radio/optical
//! bands, nodes, allowed links, traffic and per-region entity tables. This
//! module turns the raw document into a fully validated [`ScenarioConfig`]
//! with every name resolved and every duration in seconds, ready for
//! contact-plan compilation and simulation.

mod builtin;
mod engine;
mod metrics;

pub use builtin::{builtin_names, builtin_toml};
pub use engine::{run_scenario, RunOptions, RunOutput};
pub use metrics::{MetricsLog, Summary};

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::contactplan::{
    compute_contacts, BandOverride, ClKind, ContactPlan, ContactPlanError, LinkSpec, Node,
    NodeId, NodeRole, NodeTable,
};
use crate::ephemeris::{
    BodyId, Ephemeris, LagrangePoint, Occluder, OrbitSpec, ASTRONOMICAL_UNIT_M,
};
use crate::linkmodel::BandSpec;
use crate::routing::{resolve_entity, EndpointId, EntityTable};

// ---------------------------------------------------------------- durations

/// Parses `"90d"`, `"1.5h"`, `"30m"`, `"45s"`, bare seconds (`"3600"`), and
/// the unbounded spellings `"inf"`, `"infinite"`, `"never"`.
pub fn parse_duration(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty duration".to_string());
    }
    if matches!(s, "inf" | "infinite" | "never") {
        return Ok(f64::INFINITY);
    }
    let (number, unit) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => (&s[..i], &s[i..]),
        _ => (s, "s"),
    };
    let value: f64 = number
        .parse()
        .map_err(|_| format!("bad duration \"{s}\""))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("bad duration \"{s}\""));
    }
    let scale = match unit {
        "s" => 1.0,
        "m" => 60.0,
        "h" => 3600.0,
        "d" => 86_400.0,
        _ => return Err(format!("bad duration unit in \"{s}\" (use s, m, h or d)")),
    };
    Ok(value * scale)
}

// ------------------------------------------------------------- raw document

fn default_step() -> String {
    "1h".to_string()
}

fn default_seed() -> u64 {
    1
}

fn default_store_bits() -> f64 {
    1e10
}

fn default_loss() -> f64 {
    0.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    horizon: String,
    #[serde(default = "default_step")]
    step: String,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    defaults: RawDefaults,
    #[serde(default, rename = "body")]
    bodies: Vec<RawBody>,
    #[serde(default, rename = "band")]
    bands: Vec<RawBand>,
    #[serde(default, rename = "node")]
    nodes: Vec<RawNode>,
    #[serde(default, rename = "link")]
    links: Vec<RawLink>,
    #[serde(default, rename = "traffic")]
    traffic: Vec<RawTraffic>,
    #[serde(default)]
    entities: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    bundle_lifetime: Option<String>,
    max_payload_bits: Option<u64>,
    custody_backoff: Option<String>,
    ltp_segment_bits: Option<u64>,
    ltp_timer_margin: Option<String>,
    max_ltp_sessions_per_link: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBody {
    name: String,
    orbit: RawOrbit,
    /// Setting a radius makes the body block line of sight. For the sun
    /// this is conventionally much larger than the photosphere, acting as
    /// the conjunction exclusion radius.
    occluding_radius_au: Option<f64>,
    occluding_radius_m: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
enum RawOrbit {
    Fixed {
        #[serde(default)]
        x_m: f64,
        #[serde(default)]
        y_m: f64,
    },
    Circular {
        radius_au: Option<f64>,
        radius_m: Option<f64>,
        period: String,
        #[serde(default)]
        phase_deg: f64,
    },
    Planetocentric {
        parent: String,
        radius_au: Option<f64>,
        radius_m: Option<f64>,
        period: String,
        #[serde(default)]
        phase_deg: f64,
    },
    Lagrangian {
        parent: String,
        point: String,
        mass_ratio: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    name: String,
    frequency_ghz: f64,
    reference_rate_bps: f64,
    reference_range_au: Option<f64>,
    reference_range_m: Option<f64>,
    #[serde(default = "one")]
    asymmetry: f64,
    #[serde(default)]
    atmospheric_margin_db: f64,
    #[serde(default)]
    acquisition_delay_s: f64,
    max_rate_bps: Option<f64>,
    #[serde(default)]
    min_rate_bps: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    body: String,
    role: NodeRole,
    region: String,
    #[serde(default = "default_store_bits")]
    store_bits: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from: String,
    to: String,
    cl: ClKind,
    band: Option<String>,
    #[serde(default = "default_loss")]
    loss: f64,
    rate_bps: Option<f64>,
    owlt_s: Option<f64>,
    #[serde(default, rename = "override")]
    overrides: Vec<RawOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    band: String,
    start: String,
    end: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    source: String,
    dest: String,
    size_bits: f64,
    start: String,
    lifetime: Option<String>,
}

// --------------------------------------------------------------- validated

#[derive(Debug, Clone, PartialEq)]
pub struct SimDefaults {
    pub bundle_lifetime_s: f64,
    pub max_payload_bits: u64,
    pub custody_backoff_s: f64,
    pub ltp_segment_bits: u64,
    /// Base slack added to every retransmission timer, before the
    /// per-band acquisition term.
    pub ltp_timer_margin_s: f64,
    pub max_ltp_sessions_per_link: u32,
}

impl Default for SimDefaults {
    fn default() -> Self {
        SimDefaults {
            bundle_lifetime_s: 30.0 * 86_400.0,
            max_payload_bits: 1_000_000,
            custody_backoff_s: 3600.0,
            ltp_segment_bits: 50_000,
            ltp_timer_margin_s: 10.0,
            max_ltp_sessions_per_link: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub source: NodeId,
    pub dest: EndpointId,
    pub size_bits: u64,
    pub start_s: f64,
    /// `None` uses the scenario default lifetime.
    pub lifetime_s: Option<f64>,
}

/// A fully validated scenario: every reference resolved, every duration in
/// seconds, ready to compile and run.
#[derive(Debug)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub horizon_s: f64,
    pub step_s: f64,
    pub seed: u64,
    pub defaults: SimDefaults,
    pub ephemeris: Ephemeris,
    pub occluders: Vec<Occluder>,
    pub bands: BTreeMap<String, BandSpec>,
    pub nodes: NodeTable,
    pub links: Vec<LinkSpec>,
    pub traffic: Vec<TrafficSpec>,
    pub entities: EntityTable,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario does not parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Plan(#[from] ContactPlanError),
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text)?;
        validate(raw)
    }

    /// Compiles the contact plan for this scenario's full horizon.
    pub fn compute_plan(&self) -> Result<ContactPlan, ScenarioError> {
        Ok(compute_contacts(
            &self.ephemeris,
            &self.nodes,
            &self.links,
            &self.bands,
            &self.occluders,
            self.horizon_s,
            self.step_s,
        )?)
    }
}

fn length_m(
    what: &str,
    au: Option<f64>,
    m: Option<f64>,
    errors: &mut Vec<String>,
) -> f64 {
    match (au, m) {
        (Some(v), None) => v * ASTRONOMICAL_UNIT_M,
        (None, Some(v)) => v,
        (None, None) => {
            errors.push(format!("{what}: missing length (give *_au or *_m)"));
            f64::NAN
        }
        (Some(_), Some(_)) => {
            errors.push(format!("{what}: give either *_au or *_m, not both"));
            f64::NAN
        }
    }
}

fn duration_or(
    what: &str,
    text: &str,
    errors: &mut Vec<String>,
) -> f64 {
    match parse_duration(text) {
        Ok(v) => v,
        Err(e) => {
            errors.push(format!("{what}: {e}"));
            f64::NAN
        }
    }
}

fn validate(raw: RawScenario) -> Result<ScenarioConfig, ScenarioError> {
    let mut errors: Vec<String> = Vec::new();

    if raw.name.trim().is_empty() {
        errors.push("scenario name is empty".into());
    }
    let horizon_s = duration_or("horizon", &raw.horizon, &mut errors);
    if horizon_s.is_finite() && horizon_s <= 0.0 {
        errors.push(format!("horizon must be positive, got {}", raw.horizon));
    }
    if horizon_s.is_infinite() {
        errors.push("horizon must be finite".into());
    }
    let step_s = duration_or("step", &raw.step, &mut errors);
    if step_s.is_finite() && (step_s <= 0.0 || step_s > horizon_s) {
        errors.push(format!(
            "step must lie in (0, horizon], got {} against horizon {}",
            raw.step, raw.horizon
        ));
    }

    // Defaults.
    let base = SimDefaults::default();
    let defaults = SimDefaults {
        bundle_lifetime_s: raw
            .defaults
            .bundle_lifetime
            .as_deref()
            .map(|d| duration_or("defaults.bundle_lifetime", d, &mut errors))
            .unwrap_or(base.bundle_lifetime_s),
        max_payload_bits: raw.defaults.max_payload_bits.unwrap_or(base.max_payload_bits),
        custody_backoff_s: raw
            .defaults
            .custody_backoff
            .as_deref()
            .map(|d| duration_or("defaults.custody_backoff", d, &mut errors))
            .unwrap_or(base.custody_backoff_s),
        ltp_segment_bits: raw.defaults.ltp_segment_bits.unwrap_or(base.ltp_segment_bits),
        ltp_timer_margin_s: raw
            .defaults
            .ltp_timer_margin
            .as_deref()
            .map(|d| duration_or("defaults.ltp_timer_margin", d, &mut errors))
            .unwrap_or(base.ltp_timer_margin_s),
        max_ltp_sessions_per_link: raw
            .defaults
            .max_ltp_sessions_per_link
            .unwrap_or(base.max_ltp_sessions_per_link),
    };
    if defaults.max_payload_bits == 0 {
        errors.push("defaults.max_payload_bits must be positive".into());
    }
    if defaults.ltp_segment_bits == 0 {
        errors.push("defaults.ltp_segment_bits must be positive".into());
    }
    if defaults.max_ltp_sessions_per_link == 0 {
        errors.push("defaults.max_ltp_sessions_per_link must be positive".into());
    }
    if defaults.bundle_lifetime_s <= 0.0 {
        errors.push("defaults.bundle_lifetime must be positive".into());
    }

    // Bodies.
    let mut ephemeris = Ephemeris::new();
    let mut occluders = Vec::new();
    let mut body_names = BTreeSet::new();
    for b in &raw.bodies {
        let what = format!("body \"{}\"", b.name);
        if b.name.trim().is_empty() {
            errors.push("a body has an empty name".into());
        }
        if !body_names.insert(b.name.clone()) {
            errors.push(format!("{what}: duplicate name"));
            continue;
        }
        let orbit = match &b.orbit {
            RawOrbit::Fixed { x_m, y_m } => Some(OrbitSpec::FixedPoint { x_m: *x_m, y_m: *y_m }),
            RawOrbit::Circular {
                radius_au,
                radius_m,
                period,
                phase_deg,
            } => {
                let radius = length_m(&format!("{what} radius"), *radius_au, *radius_m, &mut errors);
                let period_s = duration_or(&format!("{what} period"), period, &mut errors);
                (radius.is_finite() && period_s.is_finite()).then(|| OrbitSpec::CircularHeliocentric {
                    radius_m: radius,
                    period_s,
                    phase_rad: phase_deg.to_radians(),
                })
            }
            RawOrbit::Planetocentric {
                parent,
                radius_au,
                radius_m,
                period,
                phase_deg,
            } => {
                let radius = length_m(&format!("{what} radius"), *radius_au, *radius_m, &mut errors);
                let period_s = duration_or(&format!("{what} period"), period, &mut errors);
                (radius.is_finite() && period_s.is_finite()).then(|| OrbitSpec::CircularPlanetocentric {
                    parent: BodyId::from(parent.as_str()),
                    radius_m: radius,
                    period_s,
                    phase_rad: phase_deg.to_radians(),
                })
            }
            RawOrbit::Lagrangian {
                parent,
                point,
                mass_ratio,
            } => {
                let lp = match point.as_str() {
                    "L1" => Some(LagrangePoint::L1),
                    "L2" => Some(LagrangePoint::L2),
                    "L3" => Some(LagrangePoint::L3),
                    "L4" => Some(LagrangePoint::L4),
                    "L5" => Some(LagrangePoint::L5),
                    other => {
                        errors.push(format!("{what}: unknown libration point \"{other}\""));
                        None
                    }
                };
                lp.map(|point| OrbitSpec::Lagrangian {
                    parent: BodyId::from(parent.as_str()),
                    point,
                    mass_ratio: *mass_ratio,
                })
            }
        };
        if let Some(orbit) = orbit {
            if let Err(e) = ephemeris.add_body(BodyId::from(b.name.as_str()), orbit) {
                errors.push(format!("{what}: {e}"));
            }
        }
        match (b.occluding_radius_au, b.occluding_radius_m) {
            (None, None) => {}
            (au, m) => {
                let r = length_m(&format!("{what} occluding radius"), au, m, &mut errors);
                if r.is_finite() && r > 0.0 {
                    occluders.push(Occluder {
                        body: BodyId::from(b.name.as_str()),
                        radius_m: r,
                    });
                } else if r.is_finite() {
                    errors.push(format!("{what}: occluding radius must be positive"));
                }
            }
        }
    }
    if let Err(e) = ephemeris.validate() {
        errors.push(format!("bodies do not form a valid system: {e}"));
    }

    // Bands.
    let mut bands: BTreeMap<String, BandSpec> = BTreeMap::new();
    for b in &raw.bands {
        let what = format!("band \"{}\"", b.name);
        if bands.contains_key(&b.name) {
            errors.push(format!("{what}: duplicate name"));
            continue;
        }
        let range = length_m(
            &format!("{what} reference range"),
            b.reference_range_au,
            b.reference_range_m,
            &mut errors,
        );
        let spec = BandSpec {
            name: b.name.clone(),
            frequency_hz: b.frequency_ghz * 1e9,
            reference_rate_bps: b.reference_rate_bps,
            reference_range_m: range,
            asymmetry_ratio: b.asymmetry,
            atmospheric_margin_db: b.atmospheric_margin_db,
            acquisition_delay_s: b.acquisition_delay_s,
            max_rate_bps: b.max_rate_bps,
            min_rate_bps: b.min_rate_bps,
        };
        if range.is_finite() {
            if let Err(e) = spec.validate() {
                errors.push(format!("{what}: {e}"));
            }
        }
        bands.insert(b.name.clone(), spec);
    }

    // Nodes.
    let mut nodes = NodeTable::new();
    for n in &raw.nodes {
        let what = format!("node \"{}\"", n.name);
        if n.name.trim().is_empty()
            || n.name.contains(char::is_whitespace)
            || n.name.contains(':')
            || n.name.contains('#')
        {
            errors.push(format!(
                "{what}: names must be non-empty without whitespace, ':' or '#'"
            ));
        }
        if !body_names.contains(&n.body) {
            errors.push(format!("{what}: unknown body \"{}\"", n.body));
        }
        if n.region.trim().is_empty() {
            errors.push(format!("{what}: region is empty"));
        }
        if n.store_bits.is_nan() || n.store_bits <= 0.0 {
            errors.push(format!("{what}: store_bits must be positive"));
        }
        let id = NodeId::new(n.name.clone());
        if nodes
            .insert(
                id.clone(),
                Node {
                    id,
                    body: BodyId::from(n.body.as_str()),
                    role: n.role,
                    region: n.region.clone(),
                    store_capacity_bits: n.store_bits as u64,
                },
            )
            .is_some()
        {
            errors.push(format!("{what}: duplicate name"));
        }
    }
    let regions: BTreeSet<&str> = nodes.values().map(|n| n.region.as_str()).collect();

    // Links.
    let mut links = Vec::new();
    let mut pairs = BTreeSet::new();
    for (i, l) in raw.links.iter().enumerate() {
        let what = format!("link[{i}] {} -> {}", l.from, l.to);
        let from = NodeId::new(l.from.clone());
        let to = NodeId::new(l.to.clone());
        if !nodes.contains_key(&from) {
            errors.push(format!("{what}: unknown node \"{}\"", l.from));
            continue;
        }
        if !nodes.contains_key(&to) {
            errors.push(format!("{what}: unknown node \"{}\"", l.to));
            continue;
        }
        if from == to {
            errors.push(format!("{what}: a link needs two distinct nodes"));
            continue;
        }
        let key = if l.from <= l.to {
            (l.from.clone(), l.to.clone())
        } else {
            (l.to.clone(), l.from.clone())
        };
        if !pairs.insert(key) {
            errors.push(format!("{what}: duplicate link for this pair"));
        }
        if !(0.0..1.0).contains(&l.loss) {
            errors.push(format!("{what}: loss must lie in [0, 1), got {}", l.loss));
        }
        let mut overrides = Vec::new();
        match l.cl {
            ClKind::Ltp => {
                match &l.band {
                    None => errors.push(format!("{what}: ltp links need a band")),
                    Some(b) if !bands.contains_key(b) => {
                        errors.push(format!("{what}: unknown band \"{b}\""))
                    }
                    Some(_) => {}
                }
                if l.rate_bps.is_some() || l.owlt_s.is_some() {
                    errors.push(format!(
                        "{what}: rate_bps/owlt_s are for reliable links; ltp rates follow the band"
                    ));
                }
                for (j, o) in l.overrides.iter().enumerate() {
                    let owhat = format!("{what} override[{j}]");
                    if !bands.contains_key(&o.band) {
                        errors.push(format!("{owhat}: unknown band \"{}\"", o.band));
                    }
                    let start = duration_or(&format!("{owhat} start"), &o.start, &mut errors);
                    let end = duration_or(&format!("{owhat} end"), &o.end, &mut errors);
                    if start.is_finite() && end.is_finite() {
                        if start >= end {
                            errors.push(format!("{owhat}: start must precede end"));
                        }
                        overrides.push(BandOverride {
                            band: o.band.clone(),
                            start_s: start,
                            end_s: end,
                        });
                    }
                }
            }
            ClKind::Reliable => {
                let f = &nodes[&from];
                let t = &nodes[&to];
                if !(f.role.is_ground() && t.role.is_ground() && f.body == t.body) {
                    errors.push(format!(
                        "{what}: reliable links connect ground-side nodes on the same body"
                    ));
                }
                if l.band.is_some() || !l.overrides.is_empty() {
                    errors.push(format!("{what}: bands are for ltp links"));
                }
                match l.rate_bps {
                    Some(r) if r > 0.0 => {}
                    _ => errors.push(format!("{what}: reliable links need rate_bps > 0")),
                }
                match l.owlt_s {
                    Some(o) if o >= 0.0 => {}
                    _ => errors.push(format!("{what}: reliable links need owlt_s >= 0")),
                }
                if l.loss != 0.0 {
                    errors.push(format!("{what}: reliable links are lossless; loss must be 0"));
                }
            }
        }
        links.push(LinkSpec {
            from,
            to,
            cl: l.cl,
            band: l.band.clone(),
            loss_probability: l.loss,
            fixed_rate_bps: l.rate_bps,
            fixed_owlt_s: l.owlt_s,
            overrides,
        });
    }

    // Entity tables.
    let mut entities = EntityTable::new();
    for (region, table) in &raw.entities {
        for (entity, node_name) in table {
            let what = format!("entities.\"{region}\".\"{entity}\"");
            let id = NodeId::new(node_name.clone());
            match nodes.get(&id) {
                None => errors.push(format!("{what}: unknown node \"{node_name}\"")),
                Some(n) if n.region != *region => errors.push(format!(
                    "{what}: node \"{node_name}\" belongs to region \"{}\"",
                    n.region
                )),
                Some(_) => {
                    entities
                        .entry(region.clone())
                        .or_default()
                        .insert(entity.clone(), id);
                }
            }
        }
    }

    // Traffic.
    let mut traffic = Vec::new();
    for (i, t) in raw.traffic.iter().enumerate() {
        let what = format!("traffic[{i}]");
        let source = NodeId::new(t.source.clone());
        if !nodes.contains_key(&source) {
            errors.push(format!("{what}: unknown source \"{}\"", t.source));
            continue;
        }
        let dest = match t.dest.parse::<EndpointId>() {
            Ok(d) => d,
            Err(e) => {
                errors.push(format!("{what}: {e}"));
                continue;
            }
        };
        if !regions.contains(dest.region.as_str()) {
            errors.push(format!(
                "{what}: no node belongs to destination region \"{}\"",
                dest.region
            ));
            continue;
        }
        if let Ok(terminal) = resolve_entity(&dest.region, &dest.entity, &entities, &nodes) {
            if terminal == source {
                errors.push(format!("{what}: destination resolves to its own source"));
            }
        }
        if !(t.size_bits >= 1.0 && t.size_bits.is_finite()) {
            errors.push(format!("{what}: size_bits must be at least 1"));
            continue;
        }
        let start_s = duration_or(&format!("{what} start"), &t.start, &mut errors);
        if start_s.is_infinite() {
            errors.push(format!("{what}: start must be finite"));
        }
        let lifetime_s = match t.lifetime.as_deref() {
            None => None,
            Some(d) => {
                let v = duration_or(&format!("{what} lifetime"), d, &mut errors);
                if v.is_finite() && v <= 0.0 {
                    errors.push(format!("{what}: lifetime must be positive"));
                }
                Some(v)
            }
        };
        traffic.push(TrafficSpec {
            source,
            dest,
            size_bits: t.size_bits as u64,
            start_s,
            lifetime_s,
        });
    }

    if !errors.is_empty() {
        return Err(ScenarioError::Invalid(errors));
    }
    Ok(ScenarioConfig {
        name: raw.name,
        description: raw.description,
        horizon_s,
        step_s,
        seed: raw.seed,
        defaults,
        ephemeris,
        occluders,
        bands,
        nodes,
        links,
        traffic,
        entities,
    })
}

// --------------------------------------------------------------------- tests
