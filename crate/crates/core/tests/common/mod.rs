//! Brute-force references shared by the oracle and acceptance tests.
#![allow(dead_code)]

/// Reference implementation: after each insert, evaluates the cut
/// inequality at every split by accumulating from the newest end, and
/// drops the oldest qualifying prefix until none qualifies.
pub struct NaiveAdwin {
    pub values: Vec<f64>,
    pub delta: f64,
}

impl NaiveAdwin {
    pub fn new(delta: f64) -> Self {
        Self { values: Vec::new(), delta }
    }

    pub fn insert(&mut self, v: f64) -> bool {
        self.values.push(v);
        let mut cut = false;
        loop {
            let n = self.values.len();
            let total: f64 = self.values.iter().sum();
            let mut tail = 0.0;
            let mut drop_at = None;
            // n1 = n - n0 grows from 1; remember the largest n0 that qualifies
            // so the split nearest the oldest end wins.
            for n1 in 1..n {
                tail += self.values[n - n1];
                let n0 = n - n1;
                let m0 = (total - tail) / n0 as f64;
                let m1 = tail / n1 as f64;
                let hm = 1.0 / (1.0 / n0 as f64 + 1.0 / n1 as f64);
                let eps = ((1.0 / (2.0 * hm)) * (4.0 * n as f64 / self.delta).ln()).sqrt();
                if (m0 - m1).abs() >= eps {
                    drop_at = Some(n0);
                }
            }
            match drop_at {
                Some(n0) => {
                    self.values.drain(..n0);
                    cut = true;
                }
                None => return cut,
            }
        }
    }
}

/// Largest number of points any line (or constant rule) labels correctly.
/// Candidate lines pass through pairs of points, nudged and rotated
/// slightly so every combinatorially distinct split is visited.
pub fn best_linear_agreement(points: &[[f64; 2]], labels: &[bool]) -> usize {
    let score = |w: [f64; 2], b: f64| {
        points
            .iter()
            .zip(labels)
            .filter(|(p, &l)| (w[0] * p[0] + w[1] * p[1] + b > 0.0) == l)
            .count()
    };
    let mut best = labels.iter().filter(|&&l| l).count().max(labels.iter().filter(|&&l| !l).count());
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let d = [points[j][0] - points[i][0], points[j][1] - points[i][1]];
            for rot in [-1e-3, 0.0, 1e-3] {
                let n = [-d[1] + rot * d[0], d[0] + rot * d[1]];
                let b0 = -(n[0] * points[i][0] + n[1] * points[i][1]);
                for shift in [-1e-6, 1e-6] {
                    for sgn in [1.0, -1.0] {
                        best = best.max(score([sgn * n[0], sgn * n[1]], sgn * (b0 + shift)));
                    }
                }
            }
        }
    }
    best
}

