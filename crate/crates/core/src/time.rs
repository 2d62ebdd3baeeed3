//! Simulated time.
//!
//! Time is an integer tick count so that differences are exact; one clock
//! cycle is [`TICKS_PER_CYCLE`] ticks. Fractional cycle costs from the timing
//! model round to the nearest tick.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

pub const TICKS_PER_CYCLE: u64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_cycles(cycles: f64) -> SimTime {
        debug_assert!(cycles >= 0.0 && cycles.is_finite());
        SimTime((cycles * TICKS_PER_CYCLE as f64).round() as u64)
    }

    pub fn cycles(self) -> f64 {
        self.0 as f64 / TICKS_PER_CYCLE as f64
    }

    pub fn ns(self, clock_hz: f64) -> f64 {
        self.cycles() * 1e9 / clock_hz
    }

    pub fn seconds(self, clock_hz: f64) -> f64 {
        self.cycles() / clock_hz
    }

    pub fn ticks(self) -> u64 {
        self.0
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("simulated time went backwards"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}cy", self.cycles())
    }
}
