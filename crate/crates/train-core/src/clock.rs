//! Device clock models.
//!
//! Variant A devices own a battery-backed RTC read as absolute time;
//! imperfect synchronization appears as a fixed per-device offset.
//! Variant B devices own only a monotonic secure timer whose rate
//! deviates from true time by a fixed ppm drift. All conversions are
//! integer-exact so the simulation stays deterministic.

/// Absolute clock with a constant offset from true time, microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rtc {
    pub offset_us: i64,
}

impl Rtc {
    pub fn reading(&self, true_now_us: u64) -> u64 {
        add_signed(true_now_us, self.offset_us)
    }

    /// Earliest true time at which the reading shows `reading_us`.
    pub fn true_time_for_reading(&self, reading_us: u64) -> u64 {
        add_signed(reading_us, -self.offset_us)
    }
}

/// Monotonic elapsed-time counter with a constant rate error. A timer
/// with drift `p` ppm advances by `1_000_000 + p` ticks per true second.
/// The rate must stay positive: `drift_ppm > -1_000_000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecureTimer {
    pub drift_ppm: i32,
}

impl SecureTimer {
    fn rate(&self) -> u128 {
        let r = 1_000_000i64 + self.drift_ppm as i64;
        debug_assert!(r > 0, "timer rate must be positive");
        r as u128
    }

    /// Reading shown after `true_elapsed_us` of true time.
    pub fn elapsed_reading(&self, true_elapsed_us: u64) -> u64 {
        let ticks = true_elapsed_us as u128 * self.rate() / 1_000_000;
        ticks.min(u64::MAX as u128) as u64
    }

    /// Smallest true elapsed time whose reading has reached `reading_us`,
    /// the instant a timer armed for that reading fires.
    pub fn true_elapsed_for_reading(&self, reading_us: u64) -> u64 {
        let rate = self.rate();
        let num = reading_us as u128 * 1_000_000;
        let e = num.div_ceil(rate);
        e.min(u64::MAX as u128) as u64
    }
}

fn add_signed(base: u64, delta: i64) -> u64 {
    if delta >= 0 {
        base.saturating_add(delta as u64)
    } else {
        base.saturating_sub(delta.unsigned_abs())
    }
}
