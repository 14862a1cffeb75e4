use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::model::ModelSpec;
use crate::norms::{weighted_norm, weighted_norm_with_derivative, GridFunction, WeightSpec};
use crate::profile::WaveProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverId {
    Characteristics,
    HalfLine,
    Tracking,
    FiniteVolume,
}

/// Solution at one output time in the co-moving frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: GridFunction,
    /// Deviation from the reference and its `x`-derivative, when the solver tracks them.
    pub deviation: Option<(Vec<f64>, Vec<f64>)>,
}

impl Snapshot {
    /// Weighted norm of the deviation from `profile`.
    ///
    /// Uses the transported deviation when present, otherwise grid differences.
    pub fn deviation_norm(&self, profile: &WaveProfile, w: &WeightSpec) -> Result<f64> {
        match &self.deviation {
            Some((d, dd)) => {
                let g = GridFunction {
                    x0: self.u.x0,
                    dx: self.u.dx,
                    values: d.clone(),
                    breaks: self.u.breaks.clone(),
                };
                weighted_norm_with_derivative(&g, dd, w)
            }
            None => {
                let mut g = self.u.clone();
                for (i, v) in g.values.iter_mut().enumerate() {
                    *v -= profile.value(self.u.x(i));
                }
                g.breaks
                    .extend(profile.discontinuities.iter().map(|d| d.position));
                let b = std::mem::take(&mut g.breaks);
                weighted_norm(&g.with_breaks(b), w)
            }
        }
    }
}

/// Position series of one tracked discontinuity.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ShiftSeries {
    pub t: Vec<f64>,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
}

impl ShiftSeries {
    /// Linear interpolation of `ψ` at `t`, clamped to the recorded times.
    pub fn psi_at(&self, t: f64) -> f64 {
        let k = self.t.partition_point(|&s| s <= t);
        match k {
            0 => self.psi.first().copied().unwrap_or(0.0),
            k if k == self.t.len() => self.psi[k - 1],
            k => {
                let (t0, t1) = (self.t[k - 1], self.t[k]);
                let a = (t - t0) / (t1 - t0);
                (1.0 - a) * self.psi[k - 1] + a * self.psi[k]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub solver: SolverId,
    pub sigma: f64,
    pub dx: f64,
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
    pub shifts: Vec<ShiftSeries>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory has at least the initial snapshot")
    }

    /// Weighted norm of the deviation from `profile` at each output time.
    pub fn deviation_norms(&self, profile: &WaveProfile, w: &WeightSpec) -> Result<Vec<f64>> {
        self.snapshots
            .iter()
            .map(|s| s.deviation_norm(profile, w))
            .collect()
    }

    /// Like [`Trajectory::deviation_norms`], against the profile moved with the first tracked shift.
    pub fn tracked_deviation_norms(
        &self,
        profile: &WaveProfile,
        w: &WeightSpec,
    ) -> Result<Vec<f64>> {
        let Some(s) = self.shifts.first() else {
            return self.deviation_norms(profile, w);
        };
        self.snapshots
            .iter()
            .map(|snap| snap.deviation_norm(&profile.translated(s.psi_at(snap.t)), w))
            .collect()
    }

    /// True when every snapshot value lies in the model range.
    pub fn within_range(&self, model: &ModelSpec) -> bool {
        let (a, b) = model.u_range();
        self.snapshots
            .iter()
            .all(|s| s.u.values.iter().all(|&v| v >= a && v <= b))
    }

    /// Snapshot CSV with columns `t,x,u`.
    pub fn write_snapshots_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,u")?;
        for s in &self.snapshots {
            for (i, v) in s.u.values.iter().enumerate() {
                writeln!(w, "{},{},{}", s.t, s.u.x(i), v)?;
            }
        }
        Ok(())
    }

    /// Shift CSV with columns `t,index,psi,dpsi`.
    pub fn write_shifts_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,index,psi,dpsi")?;
        for (k, s) in self.shifts.iter().enumerate() {
            for i in 0..s.t.len() {
                writeln!(w, "{},{},{},{}", s.t[i], k, s.psi[i], s.dpsi[i])?;
            }
        }
        Ok(())
    }
}

/// Writes `t,norm,weight` rows.
pub fn write_norms_csv<W: Write>(mut w: W, t: &[f64], series: &[(String, Vec<f64>)]) -> Result<()> {
    writeln!(w, "t,norm,weight")?;
    for (id, n) in series {
        for (ti, ni) in t.iter().zip(n) {
            writeln!(w, "{ti},{ni},{id}")?;
        }
    }
    Ok(())
}
