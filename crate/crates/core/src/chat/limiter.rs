//! Sliding-window request rate limiting shared across workers.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Pure sliding-window counter: at most `capacity` acquisitions inside any
/// window of the configured length. Time is passed in, so tests can drive
/// it with a simulated clock.
#[derive(Debug)]
pub struct SlidingWindowLimiter {
    capacity: usize,
    window: Duration,
    issued: VecDeque<Instant>,
}

impl SlidingWindowLimiter {
    /// Requests-per-minute limiter.
    pub fn per_minute(rpm: usize) -> Self {
        Self::new(rpm, Duration::from_secs(60))
    }

    pub fn new(capacity: usize, window: Duration) -> Self {
        Self {
            capacity,
            window,
            issued: VecDeque::new(),
        }
    }

    /// Records an acquisition at `now`, or returns how long to wait.
    pub fn try_acquire(&mut self, now: Instant) -> Result<(), Duration> {
        while let Some(&front) = self.issued.front() {
            if front + self.window <= now {
                self.issued.pop_front();
            } else {
                break;
            }
        }
        if self.issued.len() < self.capacity {
            self.issued.push_back(now);
            Ok(())
        } else {
            let front = *self.issued.front().expect("non-empty at capacity");
            Err(front + self.window - now)
        }
    }
}

/// Thread-safe wrapper with an async acquire loop.
#[derive(Debug, Clone)]
pub struct SharedLimiter(Arc<Mutex<SlidingWindowLimiter>>);

impl SharedLimiter {
    pub fn per_minute(rpm: usize) -> Self {
        Self(Arc::new(Mutex::new(SlidingWindowLimiter::per_minute(rpm))))
    }

    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut limiter = self.0.lock().expect("limiter lock");
                match limiter.try_acquire(Instant::now()) {
                    Ok(()) => return,
                    Err(wait) => wait,
                }
            };
            tokio::time::sleep(wait).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_never_exceeds_capacity() {
        let base = Instant::now();
        let window = Duration::from_secs(60);
        let mut limiter = SlidingWindowLimiter::new(5, window);

        // Greedy client: try every simulated second for ten minutes and
        // record the granted instants.
        let mut granted: Vec<Instant> = Vec::new();
        for second in 0..600u64 {
            let now = base + Duration::from_secs(second);
            if limiter.try_acquire(now).is_ok() {
                granted.push(now);
            }
        }
        // Every sliding 60s window holds at most 5 grants.
        for (i, &start) in granted.iter().enumerate() {
            let in_window = granted[i..]
                .iter()
                .take_while(|&&g| g < start + window)
                .count();
            assert!(in_window <= 5, "window starting at grant {i} holds {in_window}");
        }
        // The limiter is not starving: 10 minutes admit 10 windows' worth.
        assert!(granted.len() >= 45, "granted only {}", granted.len());
    }

    #[test]
    fn rejection_reports_time_until_admission() {
        let base = Instant::now();
        let mut limiter = SlidingWindowLimiter::new(1, Duration::from_secs(60));
        limiter.try_acquire(base).unwrap();
        let wait = limiter.try_acquire(base + Duration::from_secs(10)).unwrap_err();
        assert_eq!(wait, Duration::from_secs(50));
        limiter
            .try_acquire(base + Duration::from_secs(60))
            .unwrap();
    }

    #[tokio::test]
    async fn shared_limiter_admits_under_capacity() {
        let limiter = SharedLimiter::per_minute(100);
        for _ in 0..10 {
            limiter.acquire().await;
        }
    }
}
