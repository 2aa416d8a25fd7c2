use std::collections::VecDeque;

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BufferError {
    #[error("timestamp {t} does not advance past the latest sample {latest}")]
    NonIncreasing { t: f64, latest: f64 },
    #[error("sample has dimension {got}, buffer holds {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Timestamped input history realizing `τ(t - h(t))`.
///
/// Reads interpolate linearly between bracketing samples, return zero before
/// the first sample and hold the newest sample after the last one. Samples
/// older than `window` behind the newest are dropped, keeping one extra so
/// interpolation at the window edge stays exact.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    dim: usize,
    window: f64,
    samples: VecDeque<(f64, DVector<f64>)>,
}

impl DelayBuffer {
    pub fn new(dim: usize, window: f64) -> Self {
        DelayBuffer {
            dim,
            window: window.max(0.0),
            samples: VecDeque::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latest(&self) -> Option<(f64, &DVector<f64>)> {
        self.samples.back().map(|(t, v)| (*t, v))
    }

    pub fn push(&mut self, t: f64, value: DVector<f64>) -> Result<(), BufferError> {
        if value.len() != self.dim {
            return Err(BufferError::Dimension {
                expected: self.dim,
                got: value.len(),
            });
        }
        if let Some(&(latest, _)) = self.samples.back() {
            if !(t > latest) {
                return Err(BufferError::NonIncreasing { t, latest });
            }
        }
        self.samples.push_back((t, value));
        let cutoff = t - self.window;
        while self.samples.len() > 2 && self.samples[1].0 <= cutoff {
            self.samples.pop_front();
        }
        Ok(())
    }

    // Index of the last sample with timestamp <= t.
    fn floor_index(&self, t: f64) -> Option<usize> {
        let idx = self.samples.partition_point(|(ts, _)| *ts <= t);
        idx.checked_sub(1)
    }

    /// Value of the history at `t_query`.
    pub fn sample(&self, t_query: f64) -> DVector<f64> {
        let Some(i) = self.floor_index(t_query) else {
            return DVector::zeros(self.dim);
        };
        let (t0, v0) = &self.samples[i];
        match self.samples.get(i + 1) {
            Some((t1, v1)) => {
                let w = (t_query - t0) / (t1 - t0);
                v0 + (v1 - v0) * w
            }
            None => v0.clone(),
        }
    }

    /// `∫_a^b` of the history read by [`DelayBuffer::sample`].
    pub fn integrate(&self, a: f64, b: f64) -> DVector<f64> {
        if !(b > a) || self.samples.is_empty() {
            return DVector::zeros(self.dim);
        }
        let mut acc = DVector::zeros(self.dim);
        let start = a.max(self.samples[0].0);
        if start >= b {
            return acc;
        }
        let first = self.floor_index(start).unwrap_or(0);
        let mut lo = start;
        let mut i = first;
        while lo < b {
            let hi = match self.samples.get(i + 1) {
                Some((t1, _)) => t1.min(b),
                None => b,
            };
            if hi > lo {
                // trapezoid is exact on each linear piece
                acc += (self.sample(lo) + self.sample(hi)) * (0.5 * (hi - lo));
            }
            lo = hi;
            i += 1;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn ramp() -> DelayBuffer {
        let mut b = DelayBuffer::new(1, 10.0);
        b.push(0.0, dvector![0.0]).unwrap();
        b.push(0.1, dvector![1.0]).unwrap();
        b
    }

    #[test]
    fn sample_examples() {
        let b = ramp();
        assert_relative_eq!(b.sample(0.05)[0], 0.5, epsilon = 1e-15);
        assert_eq!(b.sample(-0.05), dvector![0.0]);
        assert_eq!(b.sample(0.1), dvector![1.0]);
        assert_eq!(b.sample(0.7), dvector![1.0]);
    }

    #[test]
    fn push_rejects_stale_and_misshaped() {
        let mut b = ramp();
        assert!(matches!(
            b.push(0.1, dvector![2.0]),
            Err(BufferError::NonIncreasing { .. })
        ));
        assert!(matches!(
            b.push(0.2, dvector![2.0, 1.0]),
            Err(BufferError::Dimension { .. })
        ));
    }

    #[test]
    fn pruning_keeps_window_reads_exact() {
        let mut b = DelayBuffer::new(1, 0.5);
        for i in 0..1000 {
            let t = i as f64 * 0.01;
            b.push(t, dvector![t]).unwrap();
        }
        assert!(b.len() < 60);
        assert_relative_eq!(b.sample(9.99 - 0.495)[0], 9.99 - 0.495, epsilon = 1e-12);
    }

    #[test]
    fn integral_of_constant_and_linear() {
        let mut b = DelayBuffer::new(1, 10.0);
        for i in 0..=10 {
            b.push(i as f64 * 0.1, dvector![2.0]).unwrap();
        }
        assert_relative_eq!(b.integrate(0.35, 0.95)[0], 2.0 * 0.6, epsilon = 1e-13);
        // held past the newest sample
        assert_relative_eq!(b.integrate(0.5, 1.5)[0], 2.0, epsilon = 1e-13);
        // zero before the first sample
        assert_relative_eq!(b.integrate(-1.0, 0.5)[0], 1.0, epsilon = 1e-13);
        assert_eq!(DelayBuffer::new(1, 1.0).integrate(0.0, 1.0), dvector![0.0]);
    }
}
