//! Training-set maintenance: a fixed-capacity FIFO window and an adaptive
//! window driven by the ADWIN cut rule.

use std::collections::VecDeque;
use std::io::Write;

use crate::learning::LabeledSample;

#[derive(Clone, Debug)]
pub struct FixedWindow {
    samples: VecDeque<LabeledSample>,
    capacity: usize,
}

impl FixedWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            samples: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &VecDeque<LabeledSample> {
        &self.samples
    }

    /// Appends `new_samples` and evicts the oldest entries beyond capacity.
    /// Returns the number evicted.
    pub fn update<I: IntoIterator<Item = LabeledSample>>(&mut self, new_samples: I) -> usize {
        self.samples.extend(new_samples);
        let excess = self.samples.len().saturating_sub(self.capacity);
        self.samples.drain(..excess);
        excess
    }
}

/// Cut threshold for a split into sub-windows of `n0` and `n1` elements of a
/// window of `n` elements at confidence `delta`.
pub fn epsilon_cut(n0: usize, n1: usize, n: usize, delta: f64) -> f64 {
    let m = 1.0 / (1.0 / n0 as f64 + 1.0 / n1 as f64);
    let delta_prime = delta / n as f64;
    ((1.0 / (2.0 * m)) * (4.0 / delta_prime).ln()).sqrt()
}

/// Exhaustive-split adaptive window over a real-valued signal.
#[derive(Clone, Debug)]
pub struct AdwinState {
    values: VecDeque<f64>,
    delta: f64,
    prefix: Vec<f64>,
}

impl AdwinState {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        Self {
            values: VecDeque::new(),
            delta,
            prefix: Vec::new(),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &VecDeque<f64> {
        &self.values
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.values.iter().sum::<f64>() / self.values.len() as f64)
    }

    /// Appends `value`, then drops the oldest sub-window while any split
    /// shows a significant difference in means. Returns whether anything
    /// was dropped.
    pub fn insert(&mut self, value: f64) -> bool {
        assert!(value.is_finite(), "ADWIN input must be finite");
        self.values.push_back(value);
        let mut cut = false;
        while let Some(n0) = self.find_cut() {
            self.values.drain(..n0);
            cut = true;
        }
        cut
    }

    /// Length of the oldest prefix that should be dropped, scanning splits
    /// from the oldest end.
    fn find_cut(&mut self) -> Option<usize> {
        let n = self.values.len();
        if n < 2 {
            return None;
        }
        self.prefix.clear();
        self.prefix.reserve(n + 1);
        self.prefix.push(0.0);
        let mut acc = 0.0;
        for v in &self.values {
            acc += v;
            self.prefix.push(acc);
        }
        let total = acc;
        (1..n).find(|&n0| {
            let n1 = n - n0;
            let mean0 = self.prefix[n0] / n0 as f64;
            let mean1 = (total - self.prefix[n0]) / n1 as f64;
            (mean0 - mean1).abs() >= epsilon_cut(n0, n1, n, self.delta)
        })
    }
}

/// Trims `training_set` from its oldest end down to `window_len` entries.
/// Returns the number removed.
pub fn adwin_sync(training_set: &mut VecDeque<LabeledSample>, window_len: usize) -> usize {
    let excess = training_set.len().saturating_sub(window_len);
    training_set.drain(..excess);
    excess
}

pub const WINDOW_LOG_HEADER: &str = "t,policy,window_len,cut_occurred";

pub fn write_window_row<W: Write + ?Sized>(
    out: &mut W,
    t: f64,
    policy: &str,
    window_len: usize,
    cut: bool,
) -> std::io::Result<()> {
    writeln!(out, "{t:.1},{policy},{window_len},{}", cut as u8)
}
