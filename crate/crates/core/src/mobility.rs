//! Random Waypoint motion.
//!
//! Every node starts paused. When a pause ends it draws a destination
//! uniformly over the arena and a speed uniformly in `[min_speed, max_speed]`,
//! travels there in a straight line, pauses again, and so on. Positions
//! between events are recovered by linear interpolation.

use crate::kernel::{KernelError, RngStream, SimTime};
use crate::NodeId;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Default for Arena {
    fn default() -> Self {
        Arena {
            width: 500.0,
            height: 500.0,
        }
    }
}

impl Arena {
    pub fn is_valid(&self) -> bool {
        self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<Point, KernelError> {
        Ok(Point::new(rng.uniform(0.0, self.width)?, rng.uniform(0.0, self.height)?))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} {:.6}", self.x, self.y)
    }
}

/// Motion parameters shared by every node of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointParams {
    pub pause_time: SimTime,
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for WaypointParams {
    fn default() -> Self {
        WaypointParams {
            pause_time: SimTime::ZERO,
            min_speed: 0.1,
            max_speed: 20.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Paused,
    Moving,
}

/// Current Random-Waypoint leg of one node. While paused, `pos == dest`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilityState {
    pub node: NodeId,
    pub pos: Point,
    pub dest: Point,
    pub speed: f64,
    pub phase: Phase,
    pub phase_start: SimTime,
    pub phase_end: SimTime,
}

/// One movement leg, as written to the mobility scenario file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leg {
    pub node: NodeId,
    pub start: SimTime,
    pub from: Point,
    pub to: Point,
    pub speed: f64,
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} {:.6}", self.node, self.start, self.from, self.to, self.speed)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("at least one node is required")]
    NoNodes,
    #[error("time {t} lies outside the current phase [{start}, {end}]")]
    OutsidePhase { t: SimTime, start: SimTime, end: SimTime },
    #[error("invalid speed range [{min}, {max}]")]
    SpeedRange { min: f64, max: f64 },
    #[error(transparent)]
    Rng(#[from] KernelError),
}

pub fn init_positions(
    n: usize,
    arena: Arena,
    params: &WaypointParams,
    start: SimTime,
    rng: &mut RngStream,
) -> Result<Vec<MobilityState>, MobilityError> {
    if n == 0 {
        return Err(MobilityError::NoNodes);
    }
    (0..n)
        .map(|i| {
            let pos = arena.sample(rng)?;
            Ok(MobilityState {
                node: NodeId(i as u32),
                pos,
                dest: pos,
                speed: 0.0,
                phase: Phase::Paused,
                phase_start: start,
                phase_end: start + params.pause_time,
            })
        })
        .collect()
}

/// Starts a new movement leg at `now` from a paused state.
pub fn next_leg(
    st: &MobilityState,
    arena: Arena,
    params: &WaypointParams,
    now: SimTime,
    rng: &mut RngStream,
) -> Result<MobilityState, MobilityError> {
    debug_assert_eq!(st.phase, Phase::Paused);
    if !(params.min_speed > 0.0 && params.min_speed <= params.max_speed) {
        return Err(MobilityError::SpeedRange {
            min: params.min_speed,
            max: params.max_speed,
        });
    }
    let dest = arena.sample(rng)?;
    let speed = rng.uniform(params.min_speed, params.max_speed)?;
    let travel = SimTime::from_secs_f64(st.pos.dist(dest) / speed);
    Ok(MobilityState {
        dest,
        speed,
        phase: Phase::Moving,
        phase_start: now,
        phase_end: now + travel,
        ..*st
    })
}

/// Ends a movement leg: the node sits at its destination for the pause time.
pub fn arrive(st: &MobilityState, params: &WaypointParams) -> MobilityState {
    MobilityState {
        pos: st.dest,
        speed: 0.0,
        phase: Phase::Paused,
        phase_start: st.phase_end,
        phase_end: st.phase_end + params.pause_time,
        ..*st
    }
}

pub fn position_at(st: &MobilityState, t: SimTime) -> Result<Point, MobilityError> {
    if t < st.phase_start || t > st.phase_end {
        return Err(MobilityError::OutsidePhase {
            t,
            start: st.phase_start,
            end: st.phase_end,
        });
    }
    Ok(interpolate(st, t))
}

fn interpolate(st: &MobilityState, t: SimTime) -> Point {
    match st.phase {
        Phase::Paused => st.pos,
        Phase::Moving => {
            let span = (st.phase_end - st.phase_start).as_micros();
            if span == 0 {
                return st.dest;
            }
            let frac = ((t - st.phase_start).as_micros() as f64 / span as f64).clamp(0.0, 1.0);
            let lerp = |a: f64, b: f64| (a + (b - a) * frac).clamp(a.min(b), a.max(b));
            Point::new(lerp(st.pos.x, st.dest.x), lerp(st.pos.y, st.dest.y))
        }
    }
}

/// Mobility of a whole run. The owner advances each node by calling
/// [`Mobility::advance`] at the node's `phase_end`.
#[derive(Clone, Debug)]
pub struct Mobility {
    arena: Arena,
    params: WaypointParams,
    states: Vec<MobilityState>,
    legs: Vec<Leg>,
}

impl Mobility {
    pub fn new(
        n: usize,
        arena: Arena,
        params: WaypointParams,
        rng: &mut RngStream,
    ) -> Result<Self, MobilityError> {
        let states = init_positions(n, arena, &params, SimTime::ZERO, rng)?;
        Ok(Mobility {
            arena,
            params,
            states,
            legs: Vec::new(),
        })
    }

    /// Fixed layout; nodes never move.
    pub fn fixed(positions: &[Point], arena: Arena) -> Self {
        let states = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| MobilityState {
                node: NodeId(i as u32),
                pos: p,
                dest: p,
                speed: 0.0,
                phase: Phase::Paused,
                phase_start: SimTime::ZERO,
                phase_end: SimTime::from_micros(u64::MAX / 2),
            })
            .collect();
        Mobility {
            arena,
            params: WaypointParams {
                pause_time: SimTime::from_micros(u64::MAX / 2),
                ..WaypointParams::default()
            },
            states,
            legs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn arena(&self) -> Arena {
        self.arena
    }

    pub fn state(&self, node: NodeId) -> &MobilityState {
        &self.states[node.index()]
    }

    pub fn states(&self) -> &[MobilityState] {
        &self.states
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    /// Position of `node` at `t`, which must lie in its current phase.
    pub fn position(&self, node: NodeId, t: SimTime) -> Point {
        let st = &self.states[node.index()];
        debug_assert!(t >= st.phase_start && t <= st.phase_end, "stale mobility query");
        self.arena.clamp(interpolate(st, t))
    }

    /// Places `node` at `p` from `now` on, paused indefinitely. Used for
    /// scripted topologies.
    pub fn teleport(&mut self, node: NodeId, p: Point, now: SimTime) {
        let st = &mut self.states[node.index()];
        *st = MobilityState {
            pos: p,
            dest: p,
            speed: 0.0,
            phase: Phase::Paused,
            phase_start: now,
            phase_end: SimTime::from_micros(u64::MAX / 2),
            ..*st
        };
    }

    /// Completes the current phase of `node` at `now` and starts the next one.
    /// Returns the new phase end.
    pub fn advance(
        &mut self,
        node: NodeId,
        now: SimTime,
        rng: &mut RngStream,
    ) -> Result<SimTime, MobilityError> {
        let st = self.states[node.index()];
        let next = match st.phase {
            Phase::Paused => {
                let leg = next_leg(&st, self.arena, &self.params, now, rng)?;
                self.legs.push(Leg {
                    node,
                    start: now,
                    from: leg.pos,
                    to: leg.dest,
                    speed: leg.speed,
                });
                leg
            }
            Phase::Moving => arrive(&st, &self.params),
        };
        self.states[node.index()] = next;
        Ok(next.phase_end)
    }
}
