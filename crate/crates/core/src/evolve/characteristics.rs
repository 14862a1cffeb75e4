//! Characteristic bundles in deviation form.
//!
//! Each curve carries `X` and the deviation `D = U - ů(X)` from a reference
//! solution, the slope deviation `Q = ∂ₓu - ů'(X)` and the log ratio `L` of its
//! Jacobian `∂X/∂x₀` to that of the reference flow. All right-hand sides are
//! written through polynomial increments so small deviations keep their
//! relative accuracy in the tails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::norms::{GridFunction, Sampler};
use crate::poly::Poly;
use crate::profile::SmoothSegment;

use super::trajectory::{Snapshot, SolverId, Trajectory};

/// Curve state `[X, D, Q, L, E, Y_x]`; the last two are only used with a transverse flux.
pub type State = [f64; 6];

const X: usize = 0;
const D: usize = 1;
const Q: usize = 2;
const L: usize = 3;
const E: usize = 4;
const YX: usize = 5;

/// Relative Jacobian below which curves are reported as crossing.
pub const CROSSING_RATIO: f64 = 0.05;
/// Gaps wider than this multiple of the seed spacing get a new curve.
pub const REFINE_RATIO: f64 = 1.5;

/// Background solution the deviation is measured against.
#[derive(Debug, Clone)]
pub enum Reference {
    /// A constant state; `g(c)` enters as forcing when `c` is not a zero of `g`.
    Constant(f64),
    /// `ů(x - shift)` from a profile segment including its extension.
    Segment { segment: SmoothSegment, shift: f64 },
}

impl Reference {
    pub fn eval(&self, x: f64) -> [f64; 3] {
        match self {
            Reference::Constant(c) => [*c, 0.0, 0.0],
            Reference::Segment { segment, shift } => segment.eval(x - shift),
        }
    }
}

/// `K(u) = (F⊥'(u) - σ⊥)/(f'(u) - σ)` with the common characteristic root removed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedRatio {
    num: Poly,
    den: Poly,
}

impl SpeedRatio {
    pub fn new(
        model: &ModelSpec,
        sigma: f64,
        fperp: &Poly,
        sigma_perp: f64,
        u_star: Option<f64>,
    ) -> Self {
        let mut num = fperp.add_constant(-sigma_perp);
        let mut den = model.flux_prime().add_constant(-sigma);
        if let Some(us) = u_star {
            num = num.deflate(us);
            den = den.deflate(us);
        }
        SpeedRatio { num, den }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.num.eval(u) / self.den.eval(u)
    }
}

/// Transverse flux data for the position equation of planar waves.
#[derive(Debug, Clone)]
pub struct Transverse {
    pub fperp: Poly,
    pub dfperp: Poly,
    pub sigma_perp: f64,
    pub ratio: SpeedRatio,
}

/// Right-hand side of the curve equations around one reference.
#[derive(Debug, Clone)]
pub struct Dynamics<'a> {
    model: &'a ModelSpec,
    sigma: f64,
    reference: Reference,
    transverse: Option<&'a Transverse>,
    forcing: f64,
}

impl<'a> Dynamics<'a> {
    pub fn new(model: &'a ModelSpec, sigma: f64, reference: Reference) -> Self {
        let forcing = match reference {
            Reference::Constant(c) => model.g(c),
            Reference::Segment { .. } => 0.0,
        };
        Dynamics {
            model,
            sigma,
            reference,
            transverse: None,
            forcing,
        }
    }

    pub fn with_transverse(mut self, t: &'a Transverse) -> Self {
        self.transverse = Some(t);
        self
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Characteristic speed `f'(U) - σ`.
    pub fn speed(&self, s: &State) -> f64 {
        let ub = self.reference.eval(s[X])[0];
        self.model.df(ub + s[D]) - self.sigma
    }

    pub fn rhs(&self, s: &State) -> State {
        let m = self.model;
        let [ub, dub, ddub] = self.reference.eval(s[X]);
        let (d, q) = (s[D], s[Q]);
        let u = ub + d;
        let df_inc = m.flux_prime().increment(ub, d);
        let ddf_inc = m.flux_second().increment(ub, d);
        let dg_inc = m.source_prime().increment(ub, d);
        let ddf_u = m.ddf(u);
        let dg_u = m.dg(u);
        let mut out = [0.0; 6];
        out[X] = m.df(u) - self.sigma;
        out[D] = m.source().increment(ub, d) - dub * df_inc + self.forcing;
        out[Q] = dg_inc * dub + dg_u * q
            - ddf_inc * dub * dub
            - ddf_u * q * (2.0 * dub + q)
            - ddub * df_inc;
        out[L] = ddf_inc * dub + ddf_u * q;
        if let Some(t) = self.transverse {
            out[E] = t.fperp.increment(ub, d) - t.ratio.eval(ub) * df_inc;
            out[YX] = (dub + q) * (t.dfperp.eval(u) - ddf_u * s[YX]);
        }
        out
    }

    fn rk4(&self, s: &State, h: f64) -> State {
        let add = |a: &State, b: &State, c: f64| {
            let mut r = *a;
            for i in 0..6 {
                r[i] += c * b[i];
            }
            r
        };
        let k1 = self.rhs(s);
        let k2 = self.rhs(&add(s, &k1, 0.5 * h));
        let k3 = self.rhs(&add(s, &k2, 0.5 * h));
        let k4 = self.rhs(&add(s, &k3, h));
        let mut r = *s;
        for i in 0..6 {
            r[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r
    }
}

/// Initial curve state from a label `x₀`.
pub type Seed<'a> = Box<dyn Fn(f64) -> State + Send + Sync + 'a>;

/// Seed for a scalar deviation `(d, d')`.
pub fn scalar_seed<'a>(dev: impl Fn(f64) -> [f64; 2] + Send + Sync + 'a) -> Seed<'a> {
    Box::new(move |x0| {
        let [d, dd] = dev(x0);
        [x0, d, dd, 0.0, 0.0, 0.0]
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Curve {
    label: f64,
    s: State,
    /// False for curves interpolated at a later time rather than integrated from their label.
    exact: bool,
}

/// Values interpolated from a bundle at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BundleSample {
    pub d: f64,
    pub dx: f64,
    pub e: f64,
    pub ex: f64,
}

/// Ordered family of characteristic curves covering a window.
pub struct Bundle<'a> {
    dynamics: Dynamics<'a>,
    seed: Seed<'a>,
    curves: Vec<Curve>,
    t: f64,
    steps: usize,
    dt: f64,
    spacing: f64,
    keep: (f64, f64),
    inserted: usize,
}

impl<'a> Bundle<'a> {
    /// Seeds curves at `spacing` over `keep` plus the inflow reach over `horizon`.
    pub fn new(
        dynamics: Dynamics<'a>,
        seed: Seed<'a>,
        keep: (f64, f64),
        spacing: f64,
        dt: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(spacing > 0.0 && dt > 0.0 && keep.1 > keep.0) {
            return Err(Error::Config(format!(
                "bad bundle window {keep:?}, spacing {spacing}, dt {dt}"
            )));
        }
        let margin = 4.0 * spacing;
        let reach = |side: f64| {
            // grow the seeded strip until it holds every curve that can enter
            let mut len = margin;
            for _ in 0..6 {
                let n = (len / spacing).ceil() as usize + 1;
                let mut vmax: f64 = 0.0;
                for k in 0..=n {
                    let x0 = if side < 0.0 {
                        keep.0 - k as f64 * spacing
                    } else {
                        keep.1 + k as f64 * spacing
                    };
                    let inward = -side * dynamics.speed(&seed(x0));
                    vmax = vmax.max(inward);
                }
                let next = vmax * horizon * 1.2 + margin;
                if next <= len {
                    break;
                }
                len = next;
            }
            len
        };
        let (la, lb) = (reach(-1.0), reach(1.0));
        let start = keep.0 - la;
        let n = ((keep.1 + lb - start) / spacing).ceil() as usize;
        let curves = (0..=n)
            .map(|k| {
                let label = start + k as f64 * spacing;
                Curve {
                    label,
                    s: seed(label),
                    exact: true,
                }
            })
            .collect();
        Ok(Bundle {
            dynamics,
            seed,
            curves,
            t: 0.0,
            steps: 0,
            dt,
            spacing,
            keep,
            inserted: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn inserted(&self) -> usize {
        self.inserted
    }

    pub fn dynamics(&self) -> &Dynamics<'a> {
        &self.dynamics
    }

    /// `(label, state)` of every curve in order.
    pub fn curves(&self) -> impl Iterator<Item = (f64, &State)> {
        self.curves.iter().map(|c| (c.label, &c.s))
    }

    fn integrate_from_zero(&self, label: f64) -> State {
        let mut s = (self.seed)(label);
        for _ in 0..self.steps {
            s = self.dynamics.rk4(&s, self.dt);
        }
        s
    }

    /// Advances every curve by one step and maintains coverage.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        for c in &mut self.curves {
            c.s = self.dynamics.rk4(&c.s, dt);
        }
        self.t += dt;
        self.steps += 1;

        for (k, c) in self.curves.iter().enumerate() {
            let ordered = k == 0 || c.s[X] > self.curves[k - 1].s[X];
            if !ordered || c.s[L] < CROSSING_RATIO.ln() || !c.s[D].is_finite() {
                return Err(Error::CrossingDetected { time: self.t });
            }
        }

        let margin = 4.0 * self.spacing;
        let (lo, hi) = (self.keep.0 - margin, self.keep.1 + margin);
        let dynamics = &self.dynamics;
        self.curves.retain(|c| {
            let x = c.s[X];
            !((x < lo && dynamics.speed(&c.s) < 0.0) || (x > hi && dynamics.speed(&c.s) > 0.0))
        });

        loop {
            let mut exact = Vec::new();
            let mut remesh = Vec::new();
            for (k, w) in self.curves.windows(2).enumerate() {
                let (a, b) = (w[0].s[X], w[1].s[X]);
                if !(b - a > REFINE_RATIO * self.spacing && b > lo && a < hi) {
                    continue;
                }
                let mid = 0.5 * (w[0].label + w[1].label);
                // labels closer than rounding cannot be split further
                if w[0].exact && w[1].exact && mid > w[0].label && mid < w[1].label {
                    exact.push(mid);
                } else {
                    remesh.push(k);
                }
            }
            if exact.is_empty() && remesh.is_empty() {
                break;
            }
            self.inserted += exact.len() + remesh.len();
            let mut fresh: Vec<Curve> = remesh.into_iter().map(|k| self.interpolated(k)).collect();
            fresh.extend(exact.into_iter().map(|label| Curve {
                label,
                s: self.integrate_from_zero(label),
                exact: true,
            }));
            self.curves.append(&mut fresh);
            self.curves.sort_by(|p, q| p.s[X].total_cmp(&q.s[X]));
        }
        Ok(())
    }

    /// Curve at the midpoint between curves `k` and `k + 1` from the current interpolant.
    fn interpolated(&self, k: usize) -> Curve {
        let (a, b) = (&self.curves[k], &self.curves[k + 1]);
        let x = 0.5 * (a.s[X] + b.s[X]);
        let p = self.hermite(k, x);
        let mut s = [
            x,
            p.d,
            p.dx,
            0.5 * (a.s[L] + b.s[L]),
            p.e,
            0.5 * (a.s[YX] + b.s[YX]),
        ];
        if let Some(tr) = self.dynamics.transverse {
            s[YX] = p.ex + tr.ratio.eval(self.dynamics.reference.eval(x)[0]);
        }
        Curve {
            label: 0.5 * (a.label + b.label),
            s,
            exact: false,
        }
    }

    fn bracket(&self, x: f64) -> Result<usize> {
        let k = self.curves.partition_point(|c| c.s[X] <= x);
        if k == 0 || k == self.curves.len() {
            return Err(Error::Coverage { x, time: self.t });
        }
        Ok(k - 1)
    }

    fn hermite(&self, k: usize, x: f64) -> BundleSample {
        let (a, b) = (&self.curves[k].s, &self.curves[k + 1].s);
        let h = b[X] - a[X];
        let t = (x - a[X]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (h00, h10, h01, h11) = (
            2.0 * t3 - 3.0 * t2 + 1.0,
            t3 - 2.0 * t2 + t,
            -2.0 * t3 + 3.0 * t2,
            t3 - t2,
        );
        let (g00, g10, g01, g11) = (
            (6.0 * t2 - 6.0 * t) / h,
            3.0 * t2 - 4.0 * t + 1.0,
            (-6.0 * t2 + 6.0 * t) / h,
            3.0 * t2 - 2.0 * t,
        );
        let interp = |va: f64, sa: f64, vb: f64, sb: f64| {
            (
                va * h00 + h * sa * h10 + vb * h01 + h * sb * h11,
                va * g00 + sa * g10 + vb * g01 + sb * g11,
            )
        };
        let (d, dx) = interp(a[D], a[Q], b[D], b[Q]);
        let mut out = BundleSample {
            d,
            dx,
            e: 0.0,
            ex: 0.0,
        };
        if let Some(tr) = self.dynamics.transverse {
            let ex_a = a[YX] - tr.ratio.eval(self.dynamics.reference.eval(a[X])[0]);
            let ex_b = b[YX] - tr.ratio.eval(self.dynamics.reference.eval(b[X])[0]);
            let (e, ex) = interp(a[E], ex_a, b[E], ex_b);
            out.e = e;
            out.ex = ex;
        }
        out
    }

    /// Interpolated deviation at `x`.
    pub fn sample(&self, x: f64) -> Result<BundleSample> {
        let k = self.bracket(x)?;
        Ok(self.hermite(k, x))
    }

    /// Interpolated deviations at increasing positions.
    pub fn sample_sorted(&self, xs: &[f64]) -> Result<Vec<BundleSample>> {
        let mut out = Vec::with_capacity(xs.len());
        let mut k = match xs.first() {
            Some(&x) => self.bracket(x)?,
            None => return Ok(out),
        };
        for &x in xs {
            while k + 2 < self.curves.len() && self.curves[k + 1].s[X] <= x {
                k += 1;
            }
            if x < self.curves[k].s[X] || x > self.curves[k + 1].s[X] {
                return Err(Error::Coverage { x, time: self.t });
            }
            out.push(self.hermite(k, x));
        }
        Ok(out)
    }
}

/// Grid and step controls for the 1-D solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Output window.
    pub domain: (f64, f64),
    /// Output nodes (the curve seed spacing equals the node spacing).
    pub n: usize,
    pub dt: f64,
    /// Output cadence in time units.
    pub output_dt: f64,
}

impl GridOptions {
    pub fn dx(&self) -> f64 {
        (self.domain.1 - self.domain.0) / (self.n - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n).map(|i| self.domain.0 + i as f64 * dx).collect()
    }

    pub(crate) fn schedule(&self, horizon: f64) -> (usize, usize) {
        let steps = (horizon / self.dt).round().max(1.0) as usize;
        let every = (self.output_dt / self.dt).round().max(1.0) as usize;
        (steps, every)
    }
}

pub(crate) fn bundle_snapshot(bundle: &Bundle, opts: &GridOptions) -> Result<Snapshot> {
    let xs = opts.xs();
    let samples = bundle.sample_sorted(&xs)?;
    let r = bundle.dynamics().reference();
    let u: Vec<f64> = xs
        .iter()
        .zip(&samples)
        .map(|(&x, s)| r.eval(x)[0] + s.d)
        .collect();
    Ok(Snapshot {
        t: bundle.time(),
        u: GridFunction {
            x0: opts.domain.0,
            dx: opts.dx(),
            values: u,
            breaks: Vec::new(),
        },
        deviation: Some((
            samples.iter().map(|s| s.d).collect(),
            samples.iter().map(|s| s.dx).collect(),
        )),
    })
}

/// Evolves `ů + d` where `ů` is `reference` and `d` a smooth deviation.
pub fn evolve_perturbed(
    model: &ModelSpec,
    sigma: f64,
    reference: Reference,
    deviation: impl Fn(f64) -> [f64; 2] + Send + Sync,
    horizon: f64,
    opts: &GridOptions,
) -> Result<Trajectory> {
    let dynamics = Dynamics::new(model, sigma, reference);
    let mut bundle = Bundle::new(
        dynamics,
        scalar_seed(deviation),
        opts.domain,
        opts.dx(),
        opts.dt,
        horizon,
    )?;
    let (steps, every) = opts.schedule(horizon);
    let mut snapshots = vec![bundle_snapshot(&bundle, opts)?];
    for k in 1..=steps {
        bundle.step()?;
        if k % every == 0 || k == steps {
            snapshots.push(bundle_snapshot(&bundle, opts)?);
        }
    }
    log::debug!(
        "characteristics: {} curves, {} inserted",
        bundle.len(),
        bundle.inserted()
    );
    Ok(Trajectory {
        solver: SolverId::Characteristics,
        sigma,
        dx: opts.dx(),
        dt: opts.dt,
        snapshots,
        shifts: Vec::new(),
    })
}

/// Evolves a smooth grid datum; values beyond the grid are held at the end values.
pub fn evolve_characteristics(
    model: &ModelSpec,
    sigma: f64,
    u0: &GridFunction,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let opts = GridOptions {
        domain: (u0.x0, u0.x_end()),
        n: u0.len(),
        dt,
        output_dt: (horizon / 100.0).max(dt),
    };
    evolve_characteristics_with(model, sigma, u0, horizon, &opts)
}

/// As [`evolve_characteristics`] with explicit output controls.
pub fn evolve_characteristics_with(
    model: &ModelSpec,
    sigma: f64,
    u0: &GridFunction,
    horizon: f64,
    opts: &GridOptions,
) -> Result<Trajectory> {
    if !u0.breaks.is_empty() {
        return Err(Error::Config(
            "characteristics solver needs a smooth datum".into(),
        ));
    }
    let sampler = Sampler::new(u0);
    let (a, b) = (u0.x0, u0.x_end());
    let (va, vb) = (u0.values[0], u0.values[u0.len() - 1]);
    let dev = move |x: f64| {
        if x <= a {
            [va, 0.0]
        } else if x >= b {
            [vb, 0.0]
        } else {
            let (v, d) = sampler.eval(x).expect("inside grid");
            [v, d]
        }
    };
    evolve_perturbed(model, sigma, Reference::Constant(0.0), dev, horizon, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;
    use crate::profile::build_characteristic_front;

    fn tanh_ref() -> (ModelSpec, SmoothSegment) {
        let m = catalog::burgers_bistable();
        let p = build_characteristic_front(&m, 0.0, 0.0, 60.0).unwrap();
        (m, p.segments[0].clone())
    }

    #[test]
    fn exact_profile_is_stationary() {
        let (m, seg) = tanh_ref();
        let opts = GridOptions {
            domain: (-10.0, 10.0),
            n: 801,
            dt: 0.02,
            output_dt: 1.0,
        };
        let tr = evolve_perturbed(
            &m,
            0.0,
            Reference::Segment {
                segment: seg.clone(),
                shift: 0.0,
            },
            |_| [0.0, 0.0],
            5.0,
            &opts,
        )
        .unwrap();
        for s in &tr.snapshots {
            for (i, v) in s.u.values.iter().enumerate() {
                assert!((v - seg.value(s.u.x(i))).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_zero_of_g_is_stationary() {
        let m = catalog::burgers_bistable();
        let u0 = GridFunction::from_fn(-5.0, 5.0, 201, |_| 1.0);
        let tr = evolve_characteristics(&m, 0.3, &u0, 2.0, 0.05).unwrap();
        assert!(tr.last().u.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn curves_follow_the_characteristic_system() {
        // independent oracle: the plain (X, U) system with a much finer RK4 step
        let (m, seg) = tanh_ref();
        let dev = |x: f64| [0.05 / x.cosh(), -0.05 * x.tanh() / x.cosh()];
        let reference = Reference::Segment {
            segment: seg.clone(),
            shift: 0.0,
        };
        let dynamics = Dynamics::new(&m, 0.0, reference);
        let mut b = Bundle::new(dynamics, scalar_seed(dev), (-4.0, 4.0), 0.05, 0.01, 2.0).unwrap();
        for _ in 0..200 {
            b.step().unwrap();
        }
        let (label, s) = b
            .curves()
            .find(|(l, _)| (l - 0.5).abs() < 1e-9)
            .map(|(l, s)| (l, *s))
            .unwrap();
        let rhs = |y: [f64; 2]| [m.df(y[1]), m.g(y[1])];
        let mut y = [label, seg.value(label) + dev(label)[0]];
        let h = 1e-4;
        for _ in 0..20_000 {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        assert!((s[X] - y[0]).abs() < 1e-7, "{} vs {}", s[X], y[0]);
        assert!((seg.value(s[X]) + s[D] - y[1]).abs() < 1e-7);
    }

    #[test]
    fn slope_deviation_matches_differences() {
        let (m, seg) = tanh_ref();
        let dev = |x: f64| [0.05 / x.cosh(), -0.05 * x.tanh() / x.cosh()];
        let opts = GridOptions {
            domain: (-6.0, 6.0),
            n: 1201,
            dt: 0.01,
            output_dt: 1.0,
        };
        let tr = evolve_perturbed(
            &m,
            0.0,
            Reference::Segment {
                segment: seg,
                shift: 0.0,
            },
            dev,
            2.0,
            &opts,
        )
        .unwrap();
        let (d, dd) = tr.last().deviation.clone().unwrap();
        let h = opts.dx();
        for i in (10..1190).step_by(37) {
            let fd = (d[i + 1] - d[i - 1]) / (2.0 * h);
            assert!((fd - dd[i]).abs() < 1e-5, "{fd} vs {}", dd[i]);
        }
    }

    #[test]
    fn compression_is_reported() {
        let m = catalog::burgers_inviscid();
        let u0 = GridFunction::from_fn(-4.0, 4.0, 401, |x| -x.tanh());
        let err = evolve_characteristics(&m, 0.0, &u0, 3.0, 0.01).unwrap_err();
        match err {
            Error::CrossingDetected { time } => assert!(time > 0.5 && time < 1.1, "{time}"),
            e => panic!("{e}"),
        }
    }
}
