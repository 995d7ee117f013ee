use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::field::{check_same_grid, SpectralField};
use crate::grid::FourierGrid;

/// Field snapshots on a uniform time grid starting at `t = 0`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    label: String,
    times: Vec<f64>,
    snapshots: Vec<SpectralField>,
}

impl Trajectory {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            times: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, field: SpectralField) -> Result<()> {
        match self.times.last() {
            None if t != 0.0 => return Err(invalid("trajectories start at t = 0")),
            Some(&last) if t <= last => {
                return Err(invalid(format!("time {t} does not increase past {last}")))
            }
            _ => {}
        }
        if let Some(first) = self.snapshots.first() {
            check_same_grid(first.grid(), field.grid())?;
        }
        self.times.push(t);
        self.snapshots.push(field);
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[SpectralField] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&SpectralField> {
        self.snapshots.last()
    }

    pub fn t_end(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn grid(&self) -> Option<&Arc<FourierGrid>> {
        self.snapshots.first().map(|s| s.grid())
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &SpectralField)> {
        self.times.iter().copied().zip(&self.snapshots)
    }

    /// Errors unless both trajectories share times (to 1e-12) and grid.
    pub fn check_same_time_grid(&self, other: &Trajectory) -> Result<()> {
        let close = self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        if !close {
            return Err(Error::TimeGridMismatch(format!(
                "'{}' has {} snapshots up to t={}, '{}' has {} up to t={}",
                self.label,
                self.len(),
                self.t_end(),
                other.label,
                other.len(),
                other.t_end()
            )));
        }
        if let (Some(a), Some(b)) = (self.grid(), other.grid()) {
            check_same_grid(a, b)?;
        }
        Ok(())
    }

    /// Snapshot-wise `self - other`.
    pub fn difference(&self, other: &Trajectory, label: impl Into<String>) -> Result<Trajectory> {
        self.check_same_time_grid(other)?;
        let mut out = Trajectory::new(label);
        for ((t, a), b) in self.iter().zip(&other.snapshots) {
            out.push(t, a.sub(b)?)?;
        }
        Ok(out)
    }

    /// Maps every snapshot to a scalar.
    pub fn series(&self, f: impl Fn(&SpectralField) -> f64) -> Vec<f64> {
        self.snapshots.iter().map(f).collect()
    }
}
