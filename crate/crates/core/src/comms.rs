//! Mobile-edge BSM broadcast and the DSRC channel to the roadside unit.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::sim::World;

/// BSM broadcast period in seconds (10 Hz).
pub const BSM_PERIOD: f64 = 0.1;

/// Basic safety message. `position` is the 1-D corridor coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Bsm {
    pub vehicle_id: u64,
    pub timestamp: f64,
    pub position: f64,
    pub speed: f64,
}

impl Bsm {
    /// Index of the broadcast slot this message belongs to.
    #[inline]
    pub fn slot(&self) -> u64 {
        (self.timestamp / BSM_PERIOD).round() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub loss_rate: f64,
    pub rsu_position: f64,
    pub range: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            loss_rate: 0.0,
            rsu_position: 800.0,
            range: 1000.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(Error::InvalidConfig(format!(
                "loss_rate must be in [0, 1], got {}",
                self.loss_rate
            )));
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::InvalidConfig("range must be > 0".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn in_range(&self, bsm: &Bsm) -> bool {
        (bsm.position - self.rsu_position).abs() <= self.range
    }
}

/// One BSM per connected vehicle, stamped with the world clock.
pub fn emit(world: &World) -> Vec<Bsm> {
    let t = world.clock();
    world
        .vehicles()
        .iter()
        .filter(|v| v.is_cv)
        .map(|v| Bsm {
            vehicle_id: v.id,
            timestamp: t,
            position: v.position,
            speed: v.speed,
        })
        .collect()
}

/// Delivers each BSM that is in range and survives an independent
/// Bernoulli(`loss_rate`) drop. One uniform is drawn per input message,
/// in range or not, so the stream position does not depend on geometry.
pub fn transmit<R: Rng + ?Sized>(bsms: &[Bsm], channel: &ChannelParams, rng: &mut R) -> Vec<Bsm> {
    bsms.iter()
        .filter(|b| {
            let u: f64 = rng.gen();
            channel.in_range(b) && u >= channel.loss_rate
        })
        .cloned()
        .collect()
}

/// Channel whose drop decision for a message is a pure function of
/// `(seed, vehicle_id, slot)`.
///
/// Runs that share a seed but differ in penetration or loss rate see the
/// same uniform for the same message, so their delivered sets are nested.
#[derive(Clone, Debug)]
pub struct KeyedChannel {
    pub params: ChannelParams,
    seed: u64,
}

impl KeyedChannel {
    pub fn new(params: ChannelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            seed: seed::derive(seed, &[seed::STREAM_CHANNEL]),
        })
    }

    #[inline]
    fn uniform(&self, bsm: &Bsm) -> f64 {
        seed::unit_f64(seed::mix64(
            self.seed ^ seed::mix64(bsm.vehicle_id ^ seed::mix64(bsm.slot())),
        ))
    }

    #[inline]
    pub fn delivered(&self, bsm: &Bsm) -> bool {
        self.params.in_range(bsm) && self.uniform(bsm) >= self.params.loss_rate
    }

    pub fn transmit(&self, bsms: &[Bsm]) -> Vec<Bsm> {
        bsms.iter().filter(|b| self.delivered(b)).cloned().collect()
    }
}

pub const DELIVERY_LOG_HEADER: &str = "t,vehicle_id,position_m,speed_mps,delivered";

pub fn write_delivery_row<W: Write + ?Sized>(out: &mut W, bsm: &Bsm, delivered: bool) -> std::io::Result<()> {
    writeln!(
        out,
        "{:.1},{},{},{},{}",
        bsm.timestamp, bsm.vehicle_id, bsm.position, bsm.speed, delivered as u8
    )
}
