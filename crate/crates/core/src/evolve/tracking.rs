//! Discontinuous waves: smooth blocks glued along Rankine–Hugoniot shifts.
//!
//! Block `i` evolves `ů_i + χ_i d` around the full underlying solution of
//! segment `i`, where `χ_i` cuts the perturbation off over a collar beyond the
//! adjacent jumps. Jump `i` sits at `d_i + ψ_i(t)` with
//! `ψ_i' = F(u_{i+1}, u_i) - F(ů_{i+1}(d_i), ů_i(d_i))` evaluated on the blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::norms::{default_window, fit_decay_rate, DecayFit, GridFunction};
use crate::profile::WaveProfile;

use super::characteristics::{scalar_seed, Bundle, Dynamics, GridOptions, Reference};
use super::perturbation::smoothstep;
use super::trajectory::{ShiftSeries, Snapshot, SolverId, Trajectory};

/// Default collar width of the block extensions.
pub const DEFAULT_COLLAR: f64 = 2.0;
/// Fraction of the collar a shift may use before tracking stops.
pub const ESCAPE_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingOptions {
    pub grid: GridOptions,
    pub collar: f64,
}

impl TrackingOptions {
    pub fn new(grid: GridOptions) -> Self {
        TrackingOptions {
            grid,
            collar: DEFAULT_COLLAR,
        }
    }
}

/// Cutoff equal to one up to half a collar beyond each jump and zero past a full collar.
fn cutoff(x: f64, lo: Option<f64>, hi: Option<f64>, collar: f64) -> [f64; 2] {
    let half = 0.5 * collar;
    let mut c = [1.0, 0.0];
    if let Some(d) = lo {
        let [s, ds] = smoothstep((x - (d - collar)) / half);
        c = [c[0] * s, c[1] * s + c[0] * ds / half];
    }
    if let Some(d) = hi {
        let [s, ds] = smoothstep(((d + collar) - x) / half);
        c = [c[0] * s, c[1] * s - c[0] * ds / half];
    }
    c
}

struct Tracker<'a> {
    model: &'a ModelSpec,
    blocks: Vec<Bundle<'a>>,
    positions: Vec<f64>,
    background: Vec<f64>,
}

impl Tracker<'_> {
    fn value(&self, block: usize, x: f64) -> Result<f64> {
        let s = self.blocks[block].sample(x)?;
        Ok(self.blocks[block].dynamics().reference().eval(x)[0] + s.d)
    }

    fn dpsi(&self, psi: &[f64]) -> Result<Vec<f64>> {
        (0..psi.len())
            .map(|i| {
                let x = self.positions[i] + psi[i];
                let ul = self.value(i, x)?;
                let ur = self.value(i + 1, x)?;
                Ok(self.model.averaged_flux(ur, ul) - self.background[i])
            })
            .collect()
    }

    fn advance_blocks(&mut self) -> Result<()> {
        self.blocks.par_iter_mut().try_for_each(|b| b.step())
    }

    fn snapshot(&self, psi: &[f64], opts: &GridOptions) -> Result<Snapshot> {
        let xs = opts.xs();
        let breaks: Vec<f64> = self.positions.iter().zip(psi).map(|(d, p)| d + p).collect();
        let mut values = Vec::with_capacity(xs.len());
        let mut start = 0;
        for (i, block) in self.blocks.iter().enumerate() {
            let end = breaks
                .get(i)
                .map_or(xs.len(), |&b| xs.partition_point(|&x| x < b));
            if end > start {
                let part = &xs[start..end];
                let r = block.dynamics().reference();
                for (x, s) in part.iter().zip(block.sample_sorted(part)?) {
                    values.push(r.eval(*x)[0] + s.d);
                }
            }
            start = start.max(end);
        }
        Ok(Snapshot {
            t: self.blocks[0].time(),
            u: GridFunction {
                x0: opts.domain.0,
                dx: opts.dx(),
                values,
                breaks,
            },
            deviation: None,
        })
    }
}

/// Evolves `ů + d` for a profile with jumps, tracking every jump position.
pub fn evolve_with_tracking(
    model: &ModelSpec,
    profile: &WaveProfile,
    deviation: impl Fn(f64) -> [f64; 2] + Send + Sync + Clone,
    horizon: f64,
    opts: &TrackingOptions,
) -> Result<Trajectory> {
    let grid = &opts.grid;
    let collar = opts.collar;
    let positions: Vec<f64> = profile.discontinuities.iter().map(|d| d.position).collect();
    if positions.is_empty() {
        return Err(Error::Unsupported(
            "profile has no discontinuity to track".into(),
        ));
    }
    if positions.len() > 2 {
        return Err(Error::Unsupported(
            "at most two tracked discontinuities".into(),
        ));
    }
    if !(collar > 0.0) {
        return Err(Error::Config(format!(
            "collar must be positive, got {collar}"
        )));
    }
    let (a, b) = grid.domain;
    if positions.iter().any(|&d| d - collar < a || d + collar > b) {
        return Err(Error::Config(
            "output window must contain every jump with its collar".into(),
        ));
    }
    let sigma = profile.sigma;
    let n = profile.segments.len();
    let mut blocks = Vec::with_capacity(n);
    for (i, seg) in profile.segments.iter().enumerate() {
        let lo = (i > 0).then(|| positions[i - 1]);
        let hi = (i + 1 < n).then(|| positions[i]);
        let keep = (lo.map_or(a, |d| d - collar), hi.map_or(b, |d| d + collar));
        let dev = deviation.clone();
        let seed = move |x: f64| {
            let [c, dc] = cutoff(x, lo, hi, collar);
            if c == 0.0 {
                return [0.0, 0.0];
            }
            let [p, dp] = dev(x);
            [c * p, dc * p + c * dp]
        };
        let dynamics = Dynamics::new(
            model,
            sigma,
            Reference::Segment {
                segment: seg.clone(),
                shift: 0.0,
            },
        );
        blocks.push(Bundle::new(
            dynamics,
            scalar_seed(seed),
            keep,
            grid.dx(),
            0.5 * grid.dt,
            horizon,
        )?);
    }
    let background = profile
        .discontinuities
        .iter()
        .map(|d| model.averaged_flux(d.right, d.left))
        .collect();
    let mut tr = Tracker {
        model,
        blocks,
        positions,
        background,
    };

    let m = tr.positions.len();
    let mut psi = vec![0.0; m];
    let mut shifts = vec![ShiftSeries::default(); m];
    let record = |shifts: &mut Vec<ShiftSeries>, t: f64, psi: &[f64], dpsi: &[f64]| {
        for i in 0..psi.len() {
            shifts[i].t.push(t);
            shifts[i].psi.push(psi[i]);
            shifts[i].dpsi.push(dpsi[i]);
        }
    };
    let mut k1 = tr.dpsi(&psi)?;
    record(&mut shifts, 0.0, &psi, &k1);
    let (steps, every) = grid.schedule(horizon);
    let h = grid.dt;
    let mut snapshots = vec![tr.snapshot(&psi, grid)?];
    for step in 1..=steps {
        let axpy =
            |c: f64, k: &[f64]| -> Vec<f64> { psi.iter().zip(k).map(|(p, k)| p + c * k).collect() };
        tr.advance_blocks()?;
        let k2 = tr.dpsi(&axpy(0.5 * h, &k1))?;
        let k3 = tr.dpsi(&axpy(0.5 * h, &k2))?;
        tr.advance_blocks()?;
        let k4 = tr.dpsi(&axpy(h, &k3))?;
        for i in 0..m {
            psi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = step as f64 * h;
        if let Some(index) = psi.iter().position(|p| p.abs() > ESCAPE_FRACTION * collar) {
            return Err(Error::TrackingEscape { index, time: t });
        }
        k1 = tr.dpsi(&psi)?;
        record(&mut shifts, t, &psi, &k1);
        if step % every == 0 || step == steps {
            snapshots.push(tr.snapshot(&psi, grid)?);
        }
    }
    Ok(Trajectory {
        solver: SolverId::Tracking,
        sigma,
        dx: grid.dx(),
        dt: h,
        snapshots,
        shifts,
    })
}

/// Fitted form used to extrapolate `∫_T^∞ ψ'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailForm {
    Exponential,
    Algebraic,
    /// No integrable fit; the estimate is `ψ(T)`.
    None,
}

/// Estimate of the terminal shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftLimit {
    pub psi_inf: f64,
    pub psi_end: f64,
    pub tail: f64,
    pub form: TailForm,
    pub fit: DecayFit,
}

/// `ψ∞ = ψ(T) + ∫_T^∞ ψ'` with the tail from the better of the exponential and
/// algebraic fits of `|ψ'|` on `window` (default `[0.2T, 0.9T]`).
pub fn estimate_shift_limit(
    series: &ShiftSeries,
    window: Option<(f64, f64)>,
) -> Result<ShiftLimit> {
    let (&t_end, &psi_end, &dpsi_end) =
        match (series.t.last(), series.psi.last(), series.dpsi.last()) {
            (Some(t), Some(p), Some(d)) => (t, p, d),
            _ => return Err(Error::EmptyWindow),
        };
    let abs: Vec<f64> = series.dpsi.iter().map(|d| d.abs()).collect();
    let fit = fit_decay_rate(
        &series.t,
        &abs,
        window.unwrap_or_else(|| default_window(t_end)),
    )?;
    let exp_ok = fit.omega > 0.0 && fit.r2.is_some();
    let alg_ok = fit.loglog_slope < -1.0 && fit.loglog_r2.is_some();
    let form = match (exp_ok, alg_ok) {
        (true, true) if fit.loglog_r2 > fit.r2 => TailForm::Algebraic,
        (true, _) => TailForm::Exponential,
        (false, true) => TailForm::Algebraic,
        (false, false) => TailForm::None,
    };
    let tail = match form {
        TailForm::Exponential => dpsi_end / fit.omega,
        TailForm::Algebraic => dpsi_end * t_end / (-fit.loglog_slope - 1.0),
        TailForm::None => 0.0,
    };
    Ok(ShiftLimit {
        psi_inf: psi_end + tail,
        psi_end,
        tail,
        form,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::perturbation::Perturbation;
    use crate::model::catalog;
    use crate::profile::build_riemann_shock;

    fn grid() -> GridOptions {
        GridOptions {
            domain: (-8.0, 8.0),
            n: 641,
            dt: 0.02,
            output_dt: 0.5,
        }
    }

    #[test]
    fn cutoff_is_one_inside_and_zero_beyond_collar() {
        assert_eq!(cutoff(0.0, Some(-1.0), Some(1.0), 2.0), [1.0, 0.0]);
        assert_eq!(cutoff(1.9, Some(-1.0), Some(1.0), 2.0)[0], 1.0);
        assert_eq!(cutoff(3.0, Some(-1.0), Some(1.0), 2.0)[0], 0.0);
        assert_eq!(cutoff(-3.5, Some(-1.0), None, 2.0)[0], 0.0);
    }

    #[test]
    fn exact_shock_does_not_move() {
        let m = catalog::burgers_bistable();
        let (_, p) = build_riemann_shock(&m, 1.0, -1.0).unwrap();
        let tr = evolve_with_tracking(&m, &p, |_| [0.0, 0.0], 4.0, &TrackingOptions::new(grid()))
            .unwrap();
        assert!(tr.shifts[0].psi.iter().all(|&v| v == 0.0));
        for s in &tr.snapshots {
            for (i, &v) in s.u.values.iter().enumerate() {
                assert_eq!(v, p.value(s.u.x(i)));
            }
        }
    }

    #[test]
    fn stable_shock_shift_decays_at_endstate_rate() {
        // constant deviation right of the shock: u_r = -1 + δ(t), δ' = g(-1 + δ), ψ' ≈ δ/2
        let m = catalog::burgers_bistable();
        let (_, p) = build_riemann_shock(&m, 1.0, -1.0).unwrap();
        let d = Perturbation::Tail {
            amplitude: 0.02,
            rate: 0.0,
            power: 0.0,
            onset: 0.5,
            ramp: 1.0,
        };
        let tr = evolve_with_tracking(
            &m,
            &p,
            move |x| d.eval(x),
            6.0,
            &TrackingOptions::new(grid()),
        )
        .unwrap();
        let s = &tr.shifts[0];
        let abs: Vec<f64> = s.dpsi.iter().map(|v| v.abs()).collect();
        let fit = fit_decay_rate(&s.t, &abs, (2.0, 5.5)).unwrap();
        assert!((fit.omega - 2.0).abs() < 0.2 * 2.0, "{fit:?}");
        let lim = estimate_shift_limit(s, Some((2.0, 5.5))).unwrap();
        assert_eq!(lim.form, TailForm::Exponential);
        assert!(lim.psi_inf > 0.0 && lim.psi_inf < 0.02);
    }

    #[test]
    fn shift_derivative_is_the_chord_formula() {
        let m = catalog::burgers_bistable();
        let (_, p) = build_riemann_shock(&m, 1.0, -1.0).unwrap();
        let d = Perturbation::Sech {
            amplitude: 0.03,
            center: 0.7,
            width: 1.0,
            power: 1.0,
        };
        let dd = d.clone();
        let tr = evolve_with_tracking(
            &m,
            &p,
            move |x| dd.eval(x),
            2.0,
            &TrackingOptions::new(grid()),
        )
        .unwrap();
        let s = &tr.shifts[0];
        // the initial slope from the datum alone
        let (ul, ur) = (1.0 + d.eval(0.0)[0], -1.0 + d.eval(0.0)[0]);
        assert!(
            (s.dpsi[0] - (m.averaged_flux(ur, ul) - m.averaged_flux(-1.0, 1.0))).abs() <= 1e-10
        );
    }

    #[test]
    fn escape_is_reported() {
        let m = catalog::burgers_inviscid();
        let (_, p) = build_riemann_shock(&m, 1.0, -1.0).unwrap();
        let d = Perturbation::Tail {
            amplitude: 0.5,
            rate: 0.0,
            power: 0.0,
            onset: 0.2,
            ramp: 0.5,
        };
        let err = evolve_with_tracking(
            &m,
            &p,
            move |x| d.eval(x),
            10.0,
            &TrackingOptions::new(grid()),
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::TrackingEscape { index: 0, .. }),
            "{err}"
        );
    }
}
