use std::collections::VecDeque;

use super::Vector;
use crate::error::{Error, Result};

/// Fixed-step ring buffer of past vector samples.
///
/// Sample `k` sits at `start_time + k·step`. Lookups before `start_time`
/// return the configured initial history as long as they fall inside the
/// `prehistory` span; anything older than the retained window is an error.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    step: f64,
    capacity: usize,
    start_time: f64,
    prehistory: f64,
    initial: Vector,
    samples: VecDeque<Vector>,
    /// Index of the oldest retained sample.
    first_index: usize,
}

impl HistoryBuffer {
    pub fn new(step: f64, capacity: usize, start_time: f64, initial: Vector, prehistory: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("history step must be positive, got {step}")));
        }
        if capacity == 0 {
            return Err(Error::InvalidArgument("history capacity must be at least 1".into()));
        }
        if !(prehistory >= 0.0) || initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("invalid initial history".into()));
        }
        Ok(Self {
            step,
            capacity,
            start_time,
            prehistory,
            initial,
            samples: VecDeque::with_capacity(capacity),
            first_index: 0,
        })
    }

    /// Buffer sized to serve a delay of `delay` seconds, with the initial
    /// history covering the same span before `start_time`.
    pub fn for_delay(step: f64, delay: f64, start_time: f64, initial: Vector) -> Result<Self> {
        let capacity = (delay / step).round() as usize + 1;
        Self::new(step, capacity, start_time, initial, delay)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.first_index + self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn newest_time(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.time_of(self.len() - 1))
    }

    fn time_of(&self, index: usize) -> f64 {
        self.start_time + index as f64 * self.step
    }

    /// Appends the sample for the next grid time.
    pub fn push(&mut self, value: Vector) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
            self.first_index += 1;
        }
        self.samples.push_back(value);
    }

    /// Value at grid offset `index` from `start_time`; negative indices fall in
    /// the initial-history window.
    pub fn sample_index(&self, index: i64) -> Result<&Vector> {
        let out_of_range = || Error::OutOfRange {
            t: self.start_time + index as f64 * self.step,
            oldest: self.start_time + self.first_index as f64 * self.step,
            newest: self.start_time + (self.len() as f64 - 1.0) * self.step,
        };
        if index < 0 {
            let span = (-index) as f64 * self.step;
            return if span <= self.prehistory * (1.0 + 1e-12) + 1e-12 && self.first_index == 0 {
                Ok(&self.initial)
            } else {
                Err(out_of_range())
            };
        }
        let index = index as usize;
        if index < self.first_index || index >= self.len() {
            return Err(out_of_range());
        }
        Ok(&self.samples[index - self.first_index])
    }

    /// Value at the grid point nearest `t`.
    pub fn sample(&self, t: f64) -> Result<&Vector> {
        let index = ((t - self.start_time) / self.step).round() as i64;
        self.sample_index(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn constant_buffer() {
        let mut buf = HistoryBuffer::for_delay(0.1, 1.0, 0.0, v(2.5)).unwrap();
        for _ in 0..30 {
            buf.push(v(2.5));
        }
        assert_eq!(buf.sample(2.5).unwrap(), &v(2.5));
        assert_eq!(buf.sample(2.9).unwrap(), &v(2.5));
    }

    #[test]
    fn sine_grid_hit() {
        let h = 1e-3;
        let mut buf = HistoryBuffer::new(h, 2001, 0.0, v(0.0), 0.0).unwrap();
        for k in 0..=1000 {
            buf.push(v((k as f64 * h).sin()));
        }
        assert_eq!(buf.sample(0.5).unwrap()[0], (500.0 * h).sin());
    }

    #[test]
    fn zero_initial_history() {
        let buf = HistoryBuffer::for_delay(1e-3, 2.0, 0.0, Vector::zeros(2)).unwrap();
        for t in [-2.0, -1.5, -0.001] {
            assert_eq!(buf.sample(t).unwrap(), &Vector::zeros(2));
        }
        assert!(matches!(buf.sample(-2.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn evicted_samples_are_out_of_range() {
        let mut buf = HistoryBuffer::new(1.0, 3, 0.0, v(0.0), 3.0).unwrap();
        for k in 0..10 {
            buf.push(v(k as f64));
        }
        assert_eq!(buf.sample(9.0).unwrap(), &v(9.0));
        assert_eq!(buf.sample(7.0).unwrap(), &v(7.0));
        assert!(buf.sample(6.0).is_err());
        assert!(buf.sample(-1.0).is_err());
        assert!(buf.sample(10.0).is_err());
    }
}
