//! Two-dimensional coplanar orbital geometry.
//!
//! Every body moves in the ecliptic plane in heliocentric coordinates with
//! the Sun conventionally at the origin. Four orbit kinds are supported:
//!
//! * fixed point - a body pinned at constant coordinates,
//! * circular heliocentric - uniform circular motion about the origin,
//! * circular planetocentric - uniform circular motion about a parent body,
//! * Lagrangian - a point riding the Sun-parent line (L1/L2 via the Hill
//!   radius approximation, L3 diametrically opposite) or the parent's orbit
//!   (L4 leading and L5 trailing by 60 degrees).
//!
//! Angles for circular motion are `phase + 2*pi * (t mod T) / T`; the
//! explicit reduction of `t` keeps positions periodic to sub-millimeter
//! accuracy over many orbits.
//!
//! Line of sight between two bodies fails when the segment joining them
//! passes through an occluder's exclusion sphere: the closest point of the
//! segment to the occluder center must be strictly interior to the segment
//! and closer than the exclusion radius. An occluder sitting behind either
//! endpoint therefore never blocks.
//!
//! Units: meters, seconds, radians.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 2.997_924_58e8;

/// Astronomical unit, m.
pub const ASTRONOMICAL_UNIT_M: f64 = 1.495_978_707e11;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------- identifiers

/// Name of a body known to the ephemeris.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BodyId(pub String);

impl BodyId {
    pub fn new(name: impl Into<String>) -> Self {
        BodyId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BodyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BodyId {
    fn from(s: &str) -> Self {
        BodyId(s.to_string())
    }
}

// ------------------------------------------------------------------ geometry

/// Position in the ecliptic plane, heliocentric coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance_to(&self, other: Position) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    fn sub(&self, other: Position) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }
}

/// The five Sun-parent libration points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagrangePoint {
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl fmt::Display for LagrangePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LagrangePoint::L1 => "L1",
            LagrangePoint::L2 => "L2",
            LagrangePoint::L3 => "L3",
            LagrangePoint::L4 => "L4",
            LagrangePoint::L5 => "L5",
        };
        f.write_str(s)
    }
}

/// How a body moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrbitSpec {
    /// Pinned at constant heliocentric coordinates.
    FixedPoint { x_m: f64, y_m: f64 },
    /// Uniform circular motion about the origin.
    /// `phase_rad` is the angle at t = 0.
    CircularHeliocentric {
        radius_m: f64,
        period_s: f64,
        phase_rad: f64,
    },
    /// Uniform circular motion about `parent`.
    CircularPlanetocentric {
        parent: BodyId,
        radius_m: f64,
        period_s: f64,
        phase_rad: f64,
    },
    /// A libration point of the Sun-`parent` pair. `mass_ratio` is
    /// m_parent / M_sun and is only consulted for L1 and L2, whose offset
    /// along the Sun-parent line is the Hill radius
    /// r_H = r * (mass_ratio / 3)^(1/3).
    Lagrangian {
        parent: BodyId,
        point: LagrangePoint,
        mass_ratio: f64,
    },
}

/// A body whose exclusion sphere blocks line of sight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub body: BodyId,
    pub radius_m: f64,
}

// -------------------------------------------------------------------- errors

#[derive(Debug, Error)]
pub enum EphemerisError {
    #[error("unknown body \"{0}\"")]
    UnknownBody(String),
    #[error("cyclic parent chain through body \"{0}\"")]
    CyclicParents(String),
    #[error("body \"{0}\": {1}")]
    InvalidOrbit(String, String),
    #[error("synodic period requires two distinct heliocentric periods ({0})")]
    SynodicUndefined(String),
}

// ----------------------------------------------------------------- ephemeris

/// The set of bodies and their orbits.
#[derive(Debug, Clone, Default)]
pub struct Ephemeris {
    bodies: BTreeMap<BodyId, OrbitSpec>,
}

impl Ephemeris {
    pub fn new() -> Self {
        Ephemeris::default()
    }

    /// Adds a body, rejecting degenerate orbit parameters.
    pub fn add_body(
        &mut self,
        id: impl Into<BodyId>,
        spec: OrbitSpec,
    ) -> Result<(), EphemerisError> {
        let id = id.into();
        match &spec {
            OrbitSpec::CircularHeliocentric {
                radius_m, period_s, ..
            }
            | OrbitSpec::CircularPlanetocentric {
                radius_m, period_s, ..
            } => {
                if *radius_m <= 0.0 {
                    return Err(EphemerisError::InvalidOrbit(
                        id.0,
                        format!("radius must be positive, got {radius_m}"),
                    ));
                }
                if *period_s <= 0.0 {
                    return Err(EphemerisError::InvalidOrbit(
                        id.0,
                        format!("period must be positive, got {period_s}"),
                    ));
                }
            }
            OrbitSpec::Lagrangian {
                point, mass_ratio, ..
            } => {
                let needs_mass =
                    matches!(point, LagrangePoint::L1 | LagrangePoint::L2);
                if needs_mass && *mass_ratio <= 0.0 {
                    return Err(EphemerisError::InvalidOrbit(
                        id.0,
                        format!("{point} requires a positive mass ratio, got {mass_ratio}"),
                    ));
                }
            }
            OrbitSpec::FixedPoint { .. } => {}
        }
        self.bodies.insert(id, spec);
        Ok(())
    }

    pub fn contains(&self, id: &BodyId) -> bool {
        self.bodies.contains_key(id)
    }

    pub fn body_ids(&self) -> impl Iterator<Item = &BodyId> {
        self.bodies.keys()
    }

    pub fn spec(&self, id: &BodyId) -> Option<&OrbitSpec> {
        self.bodies.get(id)
    }

    /// Checks that every parent reference resolves and no parent chain cycles.
    pub fn validate(&self) -> Result<(), EphemerisError> {
        for (id, spec) in &self.bodies {
            if let Some(parent) = parent_of(spec) {
                if !self.bodies.contains_key(parent) {
                    return Err(EphemerisError::UnknownBody(parent.0.clone()));
                }
            }
            let mut seen = BTreeSet::new();
            let mut cur = id.clone();
            while let Some(parent) = self.bodies.get(&cur).and_then(parent_of) {
                if !seen.insert(cur.clone()) {
                    return Err(EphemerisError::CyclicParents(id.0.clone()));
                }
                if parent == id {
                    return Err(EphemerisError::CyclicParents(id.0.clone()));
                }
                cur = parent.clone();
            }
        }
        Ok(())
    }

    /// Heliocentric position of `body` at simulation time `t_s`.
    pub fn position_at(&self, body: &BodyId, t_s: f64) -> Result<Position, EphemerisError> {
        self.position_inner(body, t_s, 0)
    }

    fn position_inner(
        &self,
        body: &BodyId,
        t_s: f64,
        depth: usize,
    ) -> Result<Position, EphemerisError> {
        // Parent chains are user input; depth guards malformed cycles that
        // slipped past validate().
        if depth > self.bodies.len() + 1 {
            return Err(EphemerisError::CyclicParents(body.0.clone()));
        }
        let spec = self
            .bodies
            .get(body)
            .ok_or_else(|| EphemerisError::UnknownBody(body.0.clone()))?;
        match spec {
            OrbitSpec::FixedPoint { x_m, y_m } => Ok(Position::new(*x_m, *y_m)),
            OrbitSpec::CircularHeliocentric {
                radius_m,
                period_s,
                phase_rad,
            } => Ok(circular_position(
                Position::ORIGIN,
                *radius_m,
                *period_s,
                *phase_rad,
                t_s,
            )),
            OrbitSpec::CircularPlanetocentric {
                parent,
                radius_m,
                period_s,
                phase_rad,
            } => {
                let center = self.position_inner(parent, t_s, depth + 1)?;
                Ok(circular_position(
                    center, *radius_m, *period_s, *phase_rad, t_s,
                ))
            }
            OrbitSpec::Lagrangian {
                parent,
                point,
                mass_ratio,
            } => {
                let p = self.position_inner(parent, t_s, depth + 1)?;
                Ok(lagrange_position(p, *point, *mass_ratio))
            }
        }
    }

    /// Euclidean distance between two bodies at time `t_s`, meters.
    pub fn distance(&self, a: &BodyId, b: &BodyId, t_s: f64) -> Result<f64, EphemerisError> {
        let pa = self.position_at(a, t_s)?;
        let pb = self.position_at(b, t_s)?;
        Ok(pa.distance_to(pb))
    }

    /// True when no occluder's exclusion sphere blocks the segment from `a`
    /// to `b` at time `t_s`. Occluders coincident with either endpoint are
    /// ignored (a relay is never blocked by its own host body's center).
    pub fn line_of_sight(
        &self,
        a: &BodyId,
        b: &BodyId,
        t_s: f64,
        occluders: &[Occluder],
    ) -> Result<bool, EphemerisError> {
        let pa = self.position_at(a, t_s)?;
        let pb = self.position_at(b, t_s)?;
        for occ in occluders {
            let center = self.position_at(&occ.body, t_s)?;
            if segment_blocked(pa, pb, center, occ.radius_m) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Synodic period of two bodies: 1 / |1/T_a - 1/T_b|.
    ///
    /// A fixed-point body acts as the infinite-period limit, so pairing one
    /// with a circular orbit returns the circular body's own period. Equal
    /// periods (or two fixed points) have no synodic period.
    pub fn synodic_period(&self, a: &BodyId, b: &BodyId) -> Result<f64, EphemerisError> {
        let ta = self.heliocentric_period(a)?;
        let tb = self.heliocentric_period(b)?;
        match (ta, tb) {
            (Some(ta), Some(tb)) => {
                if ta == tb {
                    Err(EphemerisError::SynodicUndefined(format!(
                        "{a} and {b} share period {ta} s"
                    )))
                } else {
                    Ok(1.0 / (1.0 / ta - 1.0 / tb).abs())
                }
            }
            (Some(t), None) | (None, Some(t)) => Ok(t),
            (None, None) => Err(EphemerisError::SynodicUndefined(format!(
                "{a} and {b} are both fixed"
            ))),
        }
    }

    /// `Some(period)` for circular heliocentric bodies, `None` for fixed
    /// points, error otherwise.
    fn heliocentric_period(&self, id: &BodyId) -> Result<Option<f64>, EphemerisError> {
        let spec = self
            .bodies
            .get(id)
            .ok_or_else(|| EphemerisError::UnknownBody(id.0.clone()))?;
        match spec {
            OrbitSpec::CircularHeliocentric { period_s, .. } => Ok(Some(*period_s)),
            OrbitSpec::FixedPoint { .. } => Ok(None),
            _ => Err(EphemerisError::SynodicUndefined(format!(
                "{id} is neither heliocentric nor fixed"
            ))),
        }
    }
}

fn parent_of(spec: &OrbitSpec) -> Option<&BodyId> {
    match spec {
        OrbitSpec::CircularPlanetocentric { parent, .. }
        | OrbitSpec::Lagrangian { parent, .. } => Some(parent),
        _ => None,
    }
}

/// Position on a circle of `radius_m` about `center`. The time argument is
/// reduced modulo the period before the angle is formed, which keeps the
/// returned position periodic to within floating-point rounding of the
/// inputs themselves.
fn circular_position(
    center: Position,
    radius_m: f64,
    period_s: f64,
    phase_rad: f64,
    t_s: f64,
) -> Position {
    let angle = phase_rad + TWO_PI * (t_s.rem_euclid(period_s) / period_s);
    Position::new(
        center.x + radius_m * angle.cos(),
        center.y + radius_m * angle.sin(),
    )
}

/// Libration point of the Sun-parent pair given the parent's heliocentric
/// position. L1 sits sunward of the parent and L2 anti-sunward, both offset
/// by the Hill radius; L3 mirrors the parent through the Sun; L4 leads and
/// L5 trails by 60 degrees on the parent's circle.
fn lagrange_position(parent: Position, point: LagrangePoint, mass_ratio: f64) -> Position {
    let r = parent.distance_to(Position::ORIGIN);
    match point {
        LagrangePoint::L1 | LagrangePoint::L2 => {
            let hill = r * (mass_ratio / 3.0).cbrt();
            let scale = match point {
                LagrangePoint::L1 => (r - hill) / r,
                _ => (r + hill) / r,
            };
            Position::new(parent.x * scale, parent.y * scale)
        }
        LagrangePoint::L3 => Position::new(-parent.x, -parent.y),
        LagrangePoint::L4 => rotate(parent, std::f64::consts::FRAC_PI_3),
        LagrangePoint::L5 => rotate(parent, -std::f64::consts::FRAC_PI_3),
    }
}

fn rotate(p: Position, angle_rad: f64) -> Position {
    let (s, c) = angle_rad.sin_cos();
    Position::new(p.x * c - p.y * s, p.x * s + p.y * c)
}

/// True when `center`'s exclusion sphere of `radius_m` blocks the segment
/// from `pa` to `pb`: the closest point of the segment to `center` must be
/// strictly interior to the segment and within the radius.
fn segment_blocked(pa: Position, pb: Position, center: Position, radius_m: f64) -> bool {
    let (dx, dy) = pb.sub(pa);
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return false;
    }
    let (cx, cy) = center.sub(pa);
    let s = (cx * dx + cy * dy) / len_sq;
    if s <= 0.0 || s >= 1.0 {
        return false;
    }
    let px = pa.x + s * dx;
    let py = pa.y + s * dy;
    center.distance_to(Position::new(px, py)) < radius_m
}

// --------------------------------------------------------------------- tests

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// One year and the Mars sidereal year, in seconds.
    const EARTH_PERIOD_S: f64 = 365.256 * 86_400.0;
    const MARS_PERIOD_S: f64 = 686.98 * 86_400.0;
    const MARS_RADIUS_M: f64 = 1.524 * ASTRONOMICAL_UNIT_M;

    /// Absolute position tolerance for periodicity checks, 1 mm: rounding
    /// of the time argument itself costs up to ~0.9 mm at Earth orbital
    /// speed over ten periods, so anything tighter would be flaky.
    const PERIODICITY_TOL_M: f64 = 1e-3;

    fn approx_eq(actual: f64, expected: f64, tol: f64) -> bool {
        (actual - expected).abs() <= tol
    }

    fn sun_earth_mars() -> Ephemeris {
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
                radius_m: MARS_RADIUS_M,
                period_s: MARS_PERIOD_S,
                phase_rad: 0.0,
            },
        )
        .unwrap();
        eph
    }

    #[test]
    fn earth_position_quarter_turns() {
        let eph = sun_earth_mars();
        let earth = BodyId::from("earth");

        let p0 = eph.position_at(&earth, 0.0).unwrap();
        assert!(approx_eq(p0.x, ASTRONOMICAL_UNIT_M, 1.0), "x at t=0: {}", p0.x);
        assert!(approx_eq(p0.y, 0.0, 1.0), "y at t=0: {}", p0.y);

        let q = eph.position_at(&earth, EARTH_PERIOD_S / 4.0).unwrap();
        assert!(approx_eq(q.x, 0.0, 10.0), "x at T/4: {}", q.x);
        assert!(approx_eq(q.y, ASTRONOMICAL_UNIT_M, 10.0), "y at T/4: {}", q.y);

        let h = eph.position_at(&earth, EARTH_PERIOD_S / 2.0).unwrap();
        assert!(approx_eq(h.x, -ASTRONOMICAL_UNIT_M, 10.0), "x at T/2: {}", h.x);
        assert!(approx_eq(h.y, 0.0, 10.0), "y at T/2: {}", h.y);
    }

    #[test]
    fn circular_positions_are_periodic_over_ten_orbits() {
        let eph = sun_earth_mars();
        let earth = BodyId::from("earth");
        for k in 0..200 {
            let t = k as f64 * (EARTH_PERIOD_S * 10.0 / 200.0);
            let a = eph.position_at(&earth, t).unwrap();
            let b = eph.position_at(&earth, t + EARTH_PERIOD_S).unwrap();
            let drift = a.distance_to(b);
            assert!(
                drift < PERIODICITY_TOL_M,
                "position drifted {drift} m after one period at t={t}"
            );
        }
    }

    #[test]
    fn earth_mars_distance_extremes() {
        let eph = sun_earth_mars();
        let earth = BodyId::from("earth");
        let mars = BodyId::from("mars");

        // Both bodies start at phase 0: aligned, closest approach 0.524 au.
        let close = eph.distance(&earth, &mars, 0.0).unwrap();
        let expected_close = (1.524 - 1.0) * ASTRONOMICAL_UNIT_M;
        assert!(
            approx_eq(close, expected_close, 1.0),
            "closest approach {close} m, expected {expected_close} m"
        );

        // Sweep one synodic period for the opposition distance 2.524 au.
        let syn = eph.synodic_period(&earth, &mars).unwrap();
        let mut max_d: f64 = 0.0;
        let mut min_d = f64::INFINITY;
        let steps = 20_000;
        for k in 0..=steps {
            let t = k as f64 * syn / steps as f64;
            let d = eph.distance(&earth, &mars, t).unwrap();
            max_d = max_d.max(d);
            min_d = min_d.min(d);
        }
        let min_au = min_d / ASTRONOMICAL_UNIT_M;
        let max_au = max_d / ASTRONOMICAL_UNIT_M;
        assert!(
            (0.52..=0.53).contains(&min_au),
            "min Earth-Mars distance {min_au} au outside [0.52, 0.53]"
        );
        assert!(
            (2.51..=2.53).contains(&max_au),
            "max Earth-Mars distance {max_au} au outside [2.51, 2.53]"
        );
    }

    #[test]
    fn distance_to_self_is_zero() {
        let eph = sun_earth_mars();
        let earth = BodyId::from("earth");
        assert_eq!(eph.distance(&earth, &earth, 12_345.0).unwrap(), 0.0);
    }

    #[test]
    fn lagrange_points_sit_where_expected() {
        let mut eph = sun_earth_mars();
        let mass_ratio = 3.003e-6;
        for (name, point) in [
            ("earth_l1", LagrangePoint::L1),
            ("earth_l2", LagrangePoint::L2),
            ("earth_l3", LagrangePoint::L3),
            ("earth_l4", LagrangePoint::L4),
            ("earth_l5", LagrangePoint::L5),
        ] {
            eph.add_body(
                name,
                OrbitSpec::Lagrangian {
                    parent: BodyId::from("earth"),
                    point,
                    mass_ratio,
                },
            )
            .unwrap();
        }

        let au = ASTRONOMICAL_UNIT_M;
        let hill = au * (mass_ratio / 3.0_f64).cbrt();
        assert!(
            approx_eq(hill / au, 0.010_003, 1e-5),
            "Earth Hill radius {hill} m"
        );

        // Earth starts at (au, 0), so L1/L2 lie on the x axis.
        let l1 = eph.position_at(&BodyId::from("earth_l1"), 0.0).unwrap();
        assert!(approx_eq(l1.x, au - hill, 1.0), "L1 x: {}", l1.x);
        assert!(approx_eq(l1.y, 0.0, 1.0), "L1 y: {}", l1.y);

        let l2 = eph.position_at(&BodyId::from("earth_l2"), 0.0).unwrap();
        assert!(approx_eq(l2.x, au + hill, 1.0), "L2 x: {}", l2.x);

        let l3 = eph.position_at(&BodyId::from("earth_l3"), 0.0).unwrap();
        assert!(approx_eq(l3.x, -au, 1.0), "L3 x: {}", l3.x);
        assert!(approx_eq(l3.y, 0.0, 1.0), "L3 y: {}", l3.y);

        // L4 leads by 60 degrees: (au cos 60, au sin 60).
        let l4 = eph.position_at(&BodyId::from("earth_l4"), 0.0).unwrap();
        assert!(approx_eq(l4.x, au * 0.5, 10.0), "L4 x: {}", l4.x);
        assert!(
            approx_eq(l4.y, au * 3.0_f64.sqrt() / 2.0, 10.0),
            "L4 y: {}",
            l4.y
        );

        // L5 trails by 60 degrees: same x, mirrored y.
        let l5 = eph.position_at(&BodyId::from("earth_l5"), 0.0).unwrap();
        assert!(approx_eq(l5.x, au * 0.5, 10.0), "L5 x: {}", l5.x);
        assert!(
            approx_eq(l5.y, -au * 3.0_f64.sqrt() / 2.0, 10.0),
            "L5 y: {}",
            l5.y
        );

        // L1/L2 keep their Hill offset as Earth moves.
        let t = EARTH_PERIOD_S / 3.0;
        let earth_pos = eph.position_at(&BodyId::from("earth"), t).unwrap();
        let l2_pos = eph.position_at(&BodyId::from("earth_l2"), t).unwrap();
        assert!(
            approx_eq(earth_pos.distance_to(l2_pos), hill, 1.0),
            "L2 offset drifted: {}",
            earth_pos.distance_to(l2_pos)
        );
    }

    #[test]
    fn line_of_sight_blocked_only_through_the_exclusion_sphere() {
        let mut eph = sun_earth_mars();
        // Place Mars diametrically opposite Earth: the segment runs through
        // the origin where the Sun sits.
        eph.add_body(
            "mars_opposed",
            OrbitSpec::CircularHeliocentric {
                radius_m: MARS_RADIUS_M,
                period_s: MARS_PERIOD_S,
                phase_rad: std::f64::consts::PI,
            },
        )
        .unwrap();
        let occ = [Occluder {
            body: BodyId::from("sun"),
            radius_m: 0.035 * ASTRONOMICAL_UNIT_M,
        }];

        let blocked = eph
            .line_of_sight(
                &BodyId::from("earth"),
                &BodyId::from("mars_opposed"),
                0.0,
                &occ,
            )
            .unwrap();
        assert!(!blocked, "superior-conjunction geometry must be occluded");

        // Same heliocentric longitude: the Sun is far from the segment.
        let visible = eph
            .line_of_sight(&BodyId::from("earth"), &BodyId::from("mars"), 0.0, &occ)
            .unwrap();
        assert!(visible, "aligned bodies on the same side must see each other");

        // No occluders at all: always visible.
        let clear = eph
            .line_of_sight(
                &BodyId::from("earth"),
                &BodyId::from("mars_opposed"),
                0.0,
                &[],
            )
            .unwrap();
        assert!(clear, "without occluders the path must be clear");
    }

    #[test]
    fn occluder_behind_an_endpoint_does_not_block() {
        // Closest approach of the segment to the occluder center must be
        // strictly interior: an occluder beyond either endpoint is ignored
        // even when the endpoint sits inside the exclusion radius.
        let mut eph = Ephemeris::new();
        eph.add_body("occ", OrbitSpec::FixedPoint { x_m: 0.0, y_m: 0.0 })
            .unwrap();
        eph.add_body("a", OrbitSpec::FixedPoint { x_m: 1.0e9, y_m: 0.0 })
            .unwrap();
        eph.add_body("b", OrbitSpec::FixedPoint { x_m: 5.0e9, y_m: 0.0 })
            .unwrap();
        let occ = [Occluder {
            body: BodyId::from("occ"),
            radius_m: 2.0e9,
        }];
        // "a" is inside the sphere but the segment a->b points away from it.
        let visible = eph
            .line_of_sight(&BodyId::from("a"), &BodyId::from("b"), 0.0, &occ)
            .unwrap();
        assert!(visible, "occluder behind endpoint a must not block");
    }

    #[test]
    fn line_of_sight_is_symmetric() {
        let eph = sun_earth_mars();
        let occ = [Occluder {
            body: BodyId::from("sun"),
            radius_m: 0.035 * ASTRONOMICAL_UNIT_M,
        }];
        let earth = BodyId::from("earth");
        let mars = BodyId::from("mars");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let t = rng.gen_range(0.0..10.0 * EARTH_PERIOD_S);
            let ab = eph.line_of_sight(&earth, &mars, t, &occ).unwrap();
            let ba = eph.line_of_sight(&mars, &earth, t, &occ).unwrap();
            assert_eq!(ab, ba, "line of sight asymmetric at t={t}");
        }
    }

    #[test]
    fn distance_is_symmetric_and_triangle_bounded() {
        let eph = sun_earth_mars();
        let ids = [BodyId::from("sun"), BodyId::from("earth"), BodyId::from("mars")];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let t = rng.gen_range(0.0..5.0 * MARS_PERIOD_S);
            let d_em = eph.distance(&ids[1], &ids[2], t).unwrap();
            let d_me = eph.distance(&ids[2], &ids[1], t).unwrap();
            assert_eq!(d_em, d_me, "distance asymmetric at t={t}");
            let d_es = eph.distance(&ids[1], &ids[0], t).unwrap();
            let d_sm = eph.distance(&ids[0], &ids[2], t).unwrap();
            assert!(
                d_em <= d_es + d_sm + 1e-3,
                "triangle inequality violated at t={t}: {d_em} > {d_es} + {d_sm}"
            );
        }
    }

    /// The conjunction blackout duration has a closed form for circular
    /// coplanar orbits: the segment's perpendicular distance to the Sun near
    /// anti-alignment is p = rE*rM/(rE+rM) * delta, with delta the angular
    /// offset from anti-alignment, so the blackout half-width is
    /// delta_max = R_excl / p_coeff and the duration is
    /// T_syn * delta_max / pi. A dense sweep of the line-of-sight predicate
    /// must agree.
    #[test]
    fn conjunction_blackout_duration_matches_closed_form() {
        let eph = sun_earth_mars();
        let occ = [Occluder {
            body: BodyId::from("sun"),
            radius_m: 0.035 * ASTRONOMICAL_UNIT_M,
        }];
        let earth = BodyId::from("earth");
        let mars = BodyId::from("mars");
        let syn = eph.synodic_period(&earth, &mars).unwrap();

        let p_coeff = (1.0 * 1.524) / (1.0 + 1.524); // au per radian
        let delta_max = 0.035 / p_coeff;
        let closed_form_days = (syn / 86_400.0) * delta_max / std::f64::consts::PI;
        assert!(
            approx_eq(closed_form_days, 14.39, 0.05),
            "closed-form blackout {closed_form_days} d"
        );

        // Dense sweep at 600 s resolution across one synodic period.
        let step = 600.0;
        let mut blocked_s = 0.0;
        let mut t = 0.0;
        while t < syn {
            if !eph.line_of_sight(&earth, &mars, t, &occ).unwrap() {
                blocked_s += step;
            }
            t += step;
        }
        let swept_days = blocked_s / 86_400.0;
        assert!(
            approx_eq(swept_days, closed_form_days, 0.05),
            "swept blackout {swept_days} d vs closed form {closed_form_days} d"
        );
    }

    #[test]
    fn synodic_period_matches_orbit_rate_difference() {
        let eph = sun_earth_mars();
        let syn_days = eph
            .synodic_period(&BodyId::from("earth"), &BodyId::from("mars"))
            .unwrap()
            / 86_400.0;
        assert!(
            approx_eq(syn_days, 779.93, 0.05),
            "Earth-Mars synodic period {syn_days} d"
        );
    }

    #[test]
    fn synodic_period_against_fixed_body_is_own_period() {
        let mut eph = sun_earth_mars();
        eph.add_body("star", OrbitSpec::FixedPoint { x_m: 1.0e15, y_m: 0.0 })
            .unwrap();
        let p = eph
            .synodic_period(&BodyId::from("earth"), &BodyId::from("star"))
            .unwrap();
        assert_eq!(p, EARTH_PERIOD_S, "fixed-point pairing must yield T_a");
    }

    #[test]
    fn synodic_period_rejects_equal_periods() {
        let mut eph = sun_earth_mars();
        eph.add_body(
            "trojan",
            OrbitSpec::CircularHeliocentric {
                radius_m: ASTRONOMICAL_UNIT_M,
                period_s: EARTH_PERIOD_S,
                phase_rad: 1.0,
            },
        )
        .unwrap();
        let err = eph.synodic_period(&BodyId::from("earth"), &BodyId::from("trojan"));
        assert!(err.is_err(), "equal periods must have no synodic period");
    }

    #[test]
    fn unknown_body_is_reported_by_name() {
        let eph = sun_earth_mars();
        let err = eph
            .position_at(&BodyId::from("phobos"), 0.0)
            .expect_err("unknown body must fail");
        assert!(
            err.to_string().contains("phobos"),
            "error should name the body: {err}"
        );
    }

    #[test]
    fn cyclic_parent_chain_is_rejected() {
        let mut eph = Ephemeris::new();
        eph.add_body(
            "a",
            OrbitSpec::CircularPlanetocentric {
                parent: BodyId::from("b"),
                radius_m: 1.0e6,
                period_s: 100.0,
                phase_rad: 0.0,
            },
        )
        .unwrap();
        eph.add_body(
            "b",
            OrbitSpec::CircularPlanetocentric {
                parent: BodyId::from("a"),
                radius_m: 1.0e6,
                period_s: 100.0,
                phase_rad: 0.0,
            },
        )
        .unwrap();
        assert!(eph.validate().is_err(), "cycle a->b->a must fail validation");
        assert!(
            eph.position_at(&BodyId::from("a"), 0.0).is_err(),
            "position through a cycle must fail"
        );
    }

    #[test]
    fn degenerate_orbit_parameters_are_rejected() {
        let mut eph = Ephemeris::new();
        let err = eph.add_body(
            "bad",
            OrbitSpec::CircularHeliocentric {
                radius_m: 0.0,
                period_s: 100.0,
                phase_rad: 0.0,
            },
        );
        assert!(err.is_err(), "zero radius must be rejected");
        let err = eph.add_body(
            "bad",
            OrbitSpec::CircularHeliocentric {
                radius_m: 1.0e11,
                period_s: -1.0,
                phase_rad: 0.0,
            },
        );
        assert!(err.is_err(), "negative period must be rejected");
    }
}
