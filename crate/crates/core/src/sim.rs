//! Single-lane signalized corridor microsimulation.
//!
//! Vehicles enter at position 0, follow a Krauss-style safe-speed rule and
//! leave once their front passes the end of the corridor. A fixed-time
//! signal part way along the corridor is the only source of queues.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five miles per hour in metres per second.
pub const FIVE_MPH: f64 = 2.2352;

/// Queue / no-queue state of the corridor or of a prediction.
pub type QueueLabel = bool;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarFollowingParams {
    pub v_max: f64,
    pub accel: f64,
    pub decel: f64,
    pub min_gap: f64,
    pub vehicle_length: f64,
    pub dt: f64,
    /// Driver reaction time used by the safe-speed bound.
    pub reaction_time: f64,
}

impl Default for CarFollowingParams {
    fn default() -> Self {
        Self {
            v_max: 13.9,
            accel: 1.5,
            decel: 3.0,
            min_gap: 2.0,
            vehicle_length: 5.0,
            dt: 0.1,
            reaction_time: 2.0,
        }
    }
}

impl CarFollowingParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v_max", self.v_max),
            ("accel", self.accel),
            ("decel", self.decel),
            ("min_gap", self.min_gap),
            ("vehicle_length", self.vehicle_length),
            ("dt", self.dt),
            ("reaction_time", self.reaction_time),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.dt > 1.0 {
            return Err(Error::InvalidConfig(format!("dt must be <= 1.0, got {}", self.dt)));
        }
        Ok(())
    }

    /// Minimum front-to-front distance between consecutive vehicles.
    #[inline]
    pub fn spacing(&self) -> f64 {
        self.vehicle_length + self.min_gap
    }

    /// Krauss safe speed for a follower at `speed` with `gap` metres of free
    /// space to a leader travelling at `leader_speed`.
    #[inline]
    pub fn safe_speed(&self, gap: f64, leader_speed: f64, speed: f64) -> f64 {
        let tau = self.reaction_time;
        let denom = (leader_speed + speed) / (2.0 * self.decel) + tau;
        (leader_speed + (gap - leader_speed * tau) / denom).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Green,
    Red,
}

/// Fixed-time signal. Each cycle starts with green.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalState {
    pub location: f64,
    pub green_s: f64,
    pub red_s: f64,
}

impl Default for SignalState {
    fn default() -> Self {
        Self {
            location: 800.0,
            green_s: 40.0,
            red_s: 60.0,
        }
    }
}

impl SignalState {
    pub fn validate(&self) -> Result<()> {
        if !(self.green_s > 0.0 && self.red_s > 0.0) {
            return Err(Error::InvalidConfig(
                "signal green_s and red_s must be > 0".into(),
            ));
        }
        if !(self.location.is_finite() && self.location >= 0.0) {
            return Err(Error::InvalidConfig("signal location must be >= 0".into()));
        }
        Ok(())
    }

    pub fn cycle_s(&self) -> f64 {
        self.green_s + self.red_s
    }

    pub fn phase_at(&self, clock: f64) -> Phase {
        if clock.rem_euclid(self.cycle_s()) < self.green_s {
            Phase::Green
        } else {
            Phase::Red
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub id: u64,
    pub position: f64,
    pub speed: f64,
    pub is_cv: bool,
}

/// Result of one call to [`World::spawn`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpawnOutcome {
    /// No arrival was pending.
    Idle,
    /// A vehicle entered the corridor.
    Spawned { id: u64, is_cv: bool },
    /// Arrivals are waiting for the entry region to clear.
    Deferred { pending: u32 },
}

#[derive(Clone, Debug)]
pub struct World {
    /// Lead vehicle first; positions strictly decreasing.
    vehicles: Vec<VehicleState>,
    tick: u64,
    pub signal: SignalState,
    pub corridor_length: f64,
    pub params: CarFollowingParams,
    next_id: u64,
    pending: u32,
}

impl World {
    pub fn new(
        params: CarFollowingParams,
        signal: SignalState,
        corridor_length: f64,
    ) -> Result<Self> {
        params.validate()?;
        signal.validate()?;
        if !(corridor_length.is_finite() && corridor_length > 0.0) {
            return Err(Error::InvalidConfig("corridor_length must be > 0".into()));
        }
        Ok(Self {
            vehicles: Vec::new(),
            tick: 0,
            signal,
            corridor_length,
            params,
            next_id: 0,
            pending: 0,
        })
    }

    /// Builds a world from explicit vehicle states. Vehicles are sorted so
    /// that the lead vehicle comes first.
    pub fn with_vehicles(
        params: CarFollowingParams,
        signal: SignalState,
        corridor_length: f64,
        mut vehicles: Vec<VehicleState>,
    ) -> Result<Self> {
        let mut world = Self::new(params, signal, corridor_length)?;
        vehicles.sort_by(|a, b| b.position.total_cmp(&a.position));
        let spacing = world.params.spacing();
        for pair in vehicles.windows(2) {
            if pair[0].position - pair[1].position < spacing {
                return Err(Error::InvalidConfig(format!(
                    "vehicles {} and {} closer than {spacing} m",
                    pair[0].id, pair[1].id
                )));
            }
        }
        if let Some(v) = vehicles
            .iter()
            .find(|v| !(0.0..=corridor_length).contains(&v.position) || v.speed < 0.0)
        {
            return Err(Error::InvalidConfig(format!("vehicle {} out of range", v.id)));
        }
        let mut ids: Vec<u64> = vehicles.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate vehicle id".into()));
        }
        world.next_id = ids.last().map_or(0, |m| m + 1);
        world.vehicles = vehicles;
        Ok(world)
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn clock(&self) -> f64 {
        self.tick as f64 * self.params.dt
    }

    pub fn phase(&self) -> Phase {
        self.signal.phase_at(self.clock())
    }

    pub fn pending_arrivals(&self) -> u32 {
        self.pending
    }

    fn entry_free(&self) -> bool {
        self.vehicles
            .last()
            .is_none_or(|tail| tail.position >= self.params.spacing())
    }

    /// Draws one arrival with probability `demand_rate * dt` and admits the
    /// oldest waiting arrival if the entry region is clear.
    ///
    /// The connected flag is drawn as `u < cv_penetration` from a single
    /// uniform, so runs that differ only in penetration see the same traffic
    /// and nested sets of connected vehicles.
    pub fn spawn<R: Rng + ?Sized>(
        &mut self,
        demand_rate: f64,
        cv_penetration: f64,
        rng: &mut R,
    ) -> SpawnOutcome {
        debug_assert!((0.0..=1.0).contains(&cv_penetration));
        if rng.gen::<f64>() < demand_rate * self.params.dt {
            self.pending += 1;
        }
        if self.pending == 0 {
            return SpawnOutcome::Idle;
        }
        if !self.entry_free() {
            return SpawnOutcome::Deferred {
                pending: self.pending,
            };
        }
        let is_cv = rng.gen::<f64>() < cv_penetration;
        let speed = match self.vehicles.last() {
            Some(tail) => {
                let gap = tail.position - self.params.spacing();
                self.params
                    .safe_speed(gap, tail.speed, self.params.v_max)
                    .min(self.params.v_max)
                    .min(gap / self.params.dt)
            }
            None => self.params.v_max,
        };
        let id = self.next_id;
        self.next_id += 1;
        self.pending -= 1;
        self.vehicles.push(VehicleState {
            id,
            position: 0.0,
            speed,
            is_cv,
        });
        SpawnOutcome::Spawned { id, is_cv }
    }

    /// Advances the world by one time step.
    pub fn step(&mut self) {
        let p = &self.params;
        let dt = p.dt;
        let red = self.phase() == Phase::Red;
        let stop_line = self.signal.location;

        // Speeds are computed from the pre-step state of every vehicle.
        let mut new_speeds = Vec::with_capacity(self.vehicles.len());
        for (i, veh) in self.vehicles.iter().enumerate() {
            let mut v = (veh.speed + p.accel * dt).min(p.v_max);
            if i > 0 {
                let leader = &self.vehicles[i - 1];
                let gap = (leader.position - veh.position - p.spacing()).max(0.0);
                v = v.min(p.safe_speed(gap, leader.speed, veh.speed)).min(gap / dt);
            }
            if red && veh.position < stop_line {
                let to_line = stop_line - veh.position;
                // Vehicles that can no longer stop at the line run through it.
                if veh.speed * veh.speed / (2.0 * p.decel) <= to_line {
                    v = v.min(p.safe_speed(to_line, 0.0, veh.speed)).min(to_line / dt);
                }
            }
            new_speeds.push(v.max(0.0));
        }
        for (veh, v) in self.vehicles.iter_mut().zip(new_speeds) {
            veh.speed = v;
            veh.position += v * dt;
        }
        let end = self.corridor_length;
        let exited = self.vehicles.iter().take_while(|v| v.position > end).count();
        self.vehicles.drain(..exited);
        self.tick += 1;
    }

    /// Spawn followed by step.
    pub fn advance<R: Rng + ?Sized>(&mut self, demand_rate: f64, cv_penetration: f64, rng: &mut R) {
        self.spawn(demand_rate, cv_penetration, rng);
        self.step();
    }

    pub fn mean_speed(&self) -> Option<f64> {
        if self.vehicles.is_empty() {
            None
        } else {
            Some(self.vehicles.iter().map(|v| v.speed).sum::<f64>() / self.vehicles.len() as f64)
        }
    }

    /// Appends one CSV row per vehicle: `t,vehicle_id,position_m,speed_mps,is_cv`.
    pub fn write_trajectory_rows<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        let t = self.clock();
        for v in &self.vehicles {
            writeln!(
                out,
                "{t:.1},{},{},{},{}",
                v.id, v.position, v.speed, v.is_cv as u8
            )?;
        }
        Ok(())
    }
}

pub const TRAJECTORY_HEADER: &str = "t,vehicle_id,position_m,speed_mps,is_cv";

/// True iff the mean speed of every vehicle on the corridor is strictly
/// below `threshold`. An empty corridor has no queue.
pub fn ground_truth(world: &World, threshold: f64) -> QueueLabel {
    world.mean_speed().is_some_and(|m| m < threshold)
}
