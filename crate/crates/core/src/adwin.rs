//! Adaptive windowing change detector.
//!
//! The window is stored as an exponential histogram: row `r` holds up to
//! `M` buckets each summarising `2^r` consecutive observations (sum and
//! sum of squared deviations). After every insertion each boundary between
//! adjacent buckets splits the window into an older part `W0` and a newer
//! part `W1`; if their means differ by at least
//!
//! ```text
//! eps_cut = sqrt((2/m) * var_W * ln(2/d')) + (2/(3m)) * ln(2/d')
//! m = 1 / (1/n0 + 1/n1),   d' = delta / n
//! ```
//!
//! the older part is dropped and a change is reported.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 0.002;
pub const MAX_BUCKETS_PER_ROW: usize = 5;
/// No cut is tested while the window is shorter than this.
pub const MIN_OBSERVATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bucket {
    sum: f64,
    /// Sum of squared deviations from the bucket mean.
    m2: f64,
    size: usize,
}

impl Bucket {
    fn merge(older: Bucket, newer: Bucket) -> Bucket {
        let (n1, n2) = (older.size as f64, newer.size as f64);
        let d = older.sum / n1 - newer.sum / n2;
        Bucket {
            sum: older.sum + newer.sum,
            m2: older.m2 + newer.m2 + n1 * n2 / (n1 + n2) * d * d,
            size: older.size + newer.size,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adwin {
    delta: f64,
    max_buckets: usize,
    clock: usize,
    ticks: usize,
    /// `rows[r]`: buckets of size `2^r`, newest at the front.
    rows: Vec<VecDeque<Bucket>>,
    total_count: usize,
    total_sum: f64,
    total_m2: f64,
    detections: u64,
}

impl Default for Adwin {
    fn default() -> Self {
        Self::new(DEFAULT_DELTA)
    }
}

impl Adwin {
    /// # Panics
    /// If `delta` is not in (0, 1).
    pub fn new(delta: f64) -> Self {
        Self::with_params(delta, MAX_BUCKETS_PER_ROW, 1)
    }

    /// `clock` tests for cuts on every `clock`-th insertion.
    pub fn with_params(delta: f64, max_buckets: usize, clock: usize) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "delta must be in (0,1)");
        assert!(max_buckets >= 2, "need at least two buckets per row");
        Self {
            delta,
            max_buckets,
            clock: clock.max(1),
            ticks: 0,
            rows: Vec::new(),
            total_count: 0,
            total_sum: 0.0,
            total_m2: 0.0,
            detections: 0,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn window_size(&self) -> usize {
        self.total_count
    }

    pub fn mean(&self) -> f64 {
        if self.total_count == 0 {
            0.0
        } else {
            self.total_sum / self.total_count as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.total_count == 0 {
            0.0
        } else {
            self.total_m2 / self.total_count as f64
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.rows.iter().map(VecDeque::len).sum()
    }

    /// Upper bound on [`Adwin::bucket_count`] for the current window.
    pub fn bucket_bound(&self) -> usize {
        let n = self.total_count.max(self.max_buckets) as f64;
        let m = self.max_buckets as f64;
        (m * (n / m).log2() + m).ceil() as usize
    }

    /// Drift signals since construction or the last reset.
    pub fn detections(&self) -> u64 {
        self.detections
    }

    pub fn reset(&mut self) {
        *self = Self::with_params(self.delta, self.max_buckets, self.clock);
    }

    /// Inserts `value`; returns whether a change was detected.
    pub fn add(&mut self, value: f64) -> Result<bool> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        self.insert(value);
        self.ticks += 1;
        if !self.ticks.is_multiple_of(self.clock) {
            return Ok(false);
        }
        let mut drifted = false;
        while self.total_count >= MIN_OBSERVATIONS {
            match self.find_cut() {
                Some(buckets) => {
                    self.drop_oldest(buckets);
                    drifted = true;
                }
                None => break,
            }
        }
        if drifted {
            self.detections += 1;
        }
        Ok(drifted)
    }

    fn insert(&mut self, value: f64) {
        if self.total_count > 0 {
            let n = self.total_count as f64;
            let d = value - self.mean();
            self.total_m2 += n / (n + 1.0) * d * d;
        }
        self.total_count += 1;
        self.total_sum += value;
        if self.rows.is_empty() {
            self.rows.push(VecDeque::new());
        }
        self.rows[0].push_front(Bucket {
            sum: value,
            m2: 0.0,
            size: 1,
        });
        let mut r = 0;
        while self.rows[r].len() > self.max_buckets {
            let older = self.rows[r].pop_back().expect("row overflow");
            let newer = self.rows[r].pop_back().expect("row overflow");
            if self.rows.len() == r + 1 {
                self.rows.push(VecDeque::new());
            }
            self.rows[r + 1].push_front(Bucket::merge(older, newer));
            r += 1;
        }
    }

    /// Number of oldest buckets forming `W0` at the first significant cut.
    fn find_cut(&self) -> Option<usize> {
        let n = self.total_count as f64;
        let ln_term = (2.0 * n / self.delta).ln();
        let var = self.variance();
        let (mut n0, mut s0) = (0usize, 0.0f64);
        let mut seen = 0usize;
        for row in self.rows.iter().rev() {
            for b in row.iter().rev() {
                n0 += b.size;
                s0 += b.sum;
                seen += 1;
                let n1 = self.total_count - n0;
                if n1 == 0 {
                    return None;
                }
                let mu0 = s0 / n0 as f64;
                let mu1 = (self.total_sum - s0) / n1 as f64;
                let m = 1.0 / (1.0 / n0 as f64 + 1.0 / n1 as f64);
                let eps = ((2.0 / m) * var * ln_term).sqrt() + 2.0 / (3.0 * m) * ln_term;
                if (mu0 - mu1).abs() >= eps {
                    return Some(seen);
                }
            }
        }
        None
    }

    fn drop_oldest(&mut self, mut buckets: usize) {
        while buckets > 0 {
            let row = self.rows.last_mut().expect("bucket to drop");
            row.pop_back();
            if row.is_empty() {
                self.rows.pop();
            }
            buckets -= 1;
        }
        let merged = self
            .rows
            .iter()
            .rev()
            .flat_map(|r| r.iter().rev())
            .copied()
            .reduce(Bucket::merge);
        match merged {
            Some(b) => {
                self.total_count = b.size;
                self.total_sum = b.sum;
                self.total_m2 = b.m2;
            }
            None => {
                self.total_count = 0;
                self.total_sum = 0.0;
                self.total_m2 = 0.0;
            }
        }
    }
}
