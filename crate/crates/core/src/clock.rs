//! Simulated time. `now` is derived from an integer tick count so that
//! repeated stepping never accumulates rounding error.

pub const DEFAULT_TICK: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clock {
    tick: f64,
    ticks: u64,
}

impl Default for Clock {
    fn default() -> Self {
        Self::new(DEFAULT_TICK)
    }
}

impl Clock {
    pub fn new(tick: f64) -> Self {
        assert!(tick > 0.0 && tick.is_finite(), "tick must be positive");
        Self { tick, ticks: 0 }
    }

    pub fn now(&self) -> f64 {
        self.ticks as f64 * self.tick
    }

    pub fn tick_len(&self) -> f64 {
        self.tick
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Advance by one tick and return the new time.
    pub fn advance(&mut self) -> f64 {
        self.ticks += 1;
        self.now()
    }

    /// Jump forward to the latest tick not after `seconds`. Never moves backwards.
    pub fn advance_to(&mut self, seconds: f64) -> f64 {
        let target = (seconds / self.tick).floor();
        if target.is_finite() && target > self.ticks as f64 {
            self.ticks = target as u64;
        }
        self.now()
    }
}
