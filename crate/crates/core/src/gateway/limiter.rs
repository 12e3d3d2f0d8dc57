use std::sync::Mutex;
use std::time::Duration;

use super::clock::Clock;

/// Shared per-endpoint limiter handing out evenly spaced send slots
/// (a token bucket with capacity one).
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Duration>>,
}

impl RateLimiter {
    /// `rps <= 0` disables limiting.
    pub fn new(rps: f64) -> Self {
        let interval = (rps > 0.0 && rps.is_finite()).then(|| Duration::from_secs_f64(1.0 / rps));
        RateLimiter {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    /// Blocks on `clock` until the caller may send.
    pub fn acquire(&self, clock: &dyn Clock) {
        let Some(interval) = self.interval else {
            return;
        };
        let now = clock.now();
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            clock.sleep(wait);
        }
    }
}
