//! Weighted `W^{1,∞}` norms, sub-exponential weights, orbital and
//! space-modulated distances, and decay-rate fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::WaveProfile;

/// Largest admissible `κ Δx`.
pub const WEIGHT_RESOLUTION: f64 = 0.1;

/// Closed-form sub-exponential factors `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubExpWeight {
    /// `(1 + t)^{-r}`
    Algebraic { r: f64 },
    /// `e^{-a t}`
    Exponential { a: f64 },
    /// `2^{-j}` on `[j, j+1)`
    Dyadic,
    /// `e^{-t²}`; not sub-exponential, kept as a negative control.
    Gaussian,
}

impl SubExpWeight {
    pub fn ln_eval(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            SubExpWeight::Algebraic { r } => -r * t.ln_1p(),
            SubExpWeight::Exponential { a } => -a * t,
            SubExpWeight::Dyadic => -t.floor() * std::f64::consts::LN_2,
            SubExpWeight::Gaussian => -t * t,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.ln_eval(t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightSide {
    /// Localizes toward `+∞` only.
    #[default]
    Plus,
    /// Localizes toward both infinities.
    Both,
}

/// Weight `Ω_κ(x̃) ρ(x̃)` with `x̃ = x₊` or `|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct WeightSpec {
    pub kappa: f64,
    #[serde(default)]
    pub rho: Option<SubExpWeight>,
    #[serde(default)]
    pub side: WeightSide,
}

impl WeightSpec {
    pub fn weightless() -> Self {
        WeightSpec::default()
    }

    pub fn exponential(kappa: f64) -> Self {
        WeightSpec {
            kappa,
            ..Default::default()
        }
    }

    pub fn with_rho(mut self, rho: SubExpWeight) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn with_side(mut self, side: WeightSide) -> Self {
        self.side = side;
        self
    }

    fn reduced(&self, x: f64) -> f64 {
        match self.side {
            WeightSide::Plus => x.max(0.0),
            WeightSide::Both => x.abs(),
        }
    }

    /// `ln w(x)`.
    pub fn ln_weight(&self, x: f64) -> f64 {
        let t = self.reduced(x);
        -self.kappa * t + self.rho.map_or(0.0, |r| r.ln_eval(t))
    }

    pub fn weight(&self, x: f64) -> f64 {
        self.ln_weight(x).exp()
    }

    fn check_resolution(&self, dx: f64) -> Result<()> {
        if self.kappa * dx >= WEIGHT_RESOLUTION {
            return Err(Error::UnresolvedWeight(self.kappa * dx));
        }
        Ok(())
    }
}

/// `|v| / w(x)` evaluated without overflow.
#[inline]
fn scaled(v: f64, ln_w: f64) -> f64 {
    let f = (-ln_w).exp();
    if v == 0.0 {
        0.0
    } else if f.is_finite() {
        v.abs() * f
    } else {
        (v.abs().ln() - ln_w).exp()
    }
}

/// Values on a uniform grid, with discontinuity positions between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    #[serde(default)]
    pub breaks: Vec<f64>,
}

impl GridFunction {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0) || !x0.is_finite() {
            return Err(Error::InvalidModel(format!(
                "grid step {dx} must be positive"
            )));
        }
        Ok(GridFunction {
            x0,
            dx,
            values,
            breaks: Vec::new(),
        })
    }

    /// Samples `f` on `n` nodes spanning `[a, b]`.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let dx = (b - a) / (n - 1) as f64;
        let values = (0..n).map(|i| f(a + i as f64 * dx)).collect();
        GridFunction {
            x0: a,
            dx,
            values,
            breaks: Vec::new(),
        }
    }

    pub fn with_breaks(mut self, mut breaks: Vec<f64>) -> Self {
        breaks.sort_by(f64::total_cmp);
        self.breaks = breaks;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn x_end(&self) -> f64 {
        self.x(self.len().saturating_sub(1))
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    /// Index ranges of nodes not separated by a discontinuity.
    pub fn runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.len() {
            let (a, b) = (self.x(i - 1), self.x(i));
            if self.breaks.iter().any(|&d| d > a && d <= b) {
                out.push(start..i);
                start = i;
            }
        }
        if start < self.len() {
            out.push(start..self.len());
        }
        out
    }

    /// Second-order differences that never straddle a discontinuity.
    pub fn derivative(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        let h = self.dx;
        let v = &self.values;
        for run in self.runs() {
            let (a, b) = (run.start, run.end);
            match b - a {
                0 | 1 => {}
                2 => {
                    let s = (v[a + 1] - v[a]) / h;
                    d[a] = s;
                    d[a + 1] = s;
                }
                _ => {
                    d[a] = (-3.0 * v[a] + 4.0 * v[a + 1] - v[a + 2]) / (2.0 * h);
                    d[b - 1] = (3.0 * v[b - 1] - 4.0 * v[b - 2] + v[b - 3]) / (2.0 * h);
                    for i in a + 1..b - 1 {
                        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
                    }
                }
            }
        }
        d
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        let mut g = self.clone();
        for (a, b) in g.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        g.breaks.extend(other.breaks.iter().copied());
        g.breaks.sort_by(f64::total_cmp);
        g.breaks.dedup();
        g
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        let mut g = self.clone();
        g.values.iter_mut().for_each(|v| *v *= c);
        g
    }
}

/// `max_i max(|v_i|, |∂ₓv_i|) / w(x_i)`.
pub fn weighted_norm(v: &GridFunction, w: &WeightSpec) -> Result<f64> {
    let dv = v.derivative();
    weighted_norm_with_derivative(v, &dv, w)
}

/// As [`weighted_norm`] with a supplied derivative.
pub fn weighted_norm_with_derivative(v: &GridFunction, dv: &[f64], w: &WeightSpec) -> Result<f64> {
    w.check_resolution(v.dx)?;
    let mut m: f64 = 0.0;
    for (i, (&a, &b)) in v.values.iter().zip(dv).enumerate() {
        let lw = w.ln_weight(v.x(i));
        m = m.max(scaled(a, lw)).max(scaled(b, lw));
    }
    Ok(m)
}

/// Weighted sup over scattered points, `(x, v, ∂ₓv)`.
pub fn weighted_sup(x: &[f64], v: &[f64], dv: &[f64], w: &WeightSpec) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let lw = w.ln_weight(x[i]);
        m = m.max(scaled(v[i], lw)).max(scaled(dv[i], lw));
    }
    m
}

/// Outcome of the sub-exponential test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubExpCheck {
    pub pass: bool,
    /// First `(C, ω)` meeting both conditions.
    pub constants: Option<(f64, f64)>,
    pub lower_bound_ok: bool,
    pub convolution_ok: bool,
    /// First `(C', ω')` with `ρ(s)/ρ(t) ≤ C' e^{ω'(t-s)}` for `s ≤ t`.
    pub ratio_constants: Option<(f64, f64)>,
}

pub const OMEGA_GRID: [f64; 7] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
pub const C_GRID: [f64; 10] = [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1e3];
const SUBEXP_SAMPLES: usize = 20_000;

/// Searches `(C, ω)` with `C e^{-ωt} ≤ ρ(t)` and
/// `∫₀ᵗ e^{-ω(t-s)} ρ(s) ds ≤ C ρ(t)` on `[0, T]`.
pub fn check_subexponential(rho: &SubExpWeight, horizon: f64, omega_grid: &[f64]) -> SubExpCheck {
    let n = SUBEXP_SAMPLES;
    let h = horizon / n as f64;
    let t: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let lr: Vec<f64> = t.iter().map(|&s| rho.ln_eval(s)).collect();

    let lower = |c: f64, om: f64| {
        t.iter()
            .zip(&lr)
            .all(|(&s, &l)| c.ln() - om * s <= l + 1e-12)
    };
    // J = I/ρ, exact when ln ρ is linear between samples
    let conv_max = |om: f64| {
        let mut j: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let mu = om - (lr[k] - lr[k + 1]) / h;
            let step = if (mu * h).abs() < 1e-12 {
                h
            } else {
                -(-mu * h).exp_m1() / mu
            };
            j = (-mu * h).exp() * j + step;
            worst = worst.max(j);
        }
        worst
    };

    let mut any_lower = false;
    let mut any_conv = false;
    let mut constants = None;
    'outer: for &om in omega_grid {
        let cm = conv_max(om);
        for &c in &C_GRID {
            let l = lower(c, om);
            let v = cm <= c * (1.0 + 1e-9);
            any_lower |= l;
            any_conv |= v;
            if l && v {
                constants = Some((c, om));
                break 'outer;
            }
        }
    }

    let mut ratio_constants = None;
    'ratio: for &om in omega_grid {
        let mut run = f64::NEG_INFINITY;
        let mut worst = f64::NEG_INFINITY;
        for (&s, &l) in t.iter().zip(&lr) {
            let here = l + om * s;
            run = run.max(here);
            worst = worst.max(run - here);
        }
        for &c in &C_GRID {
            if worst <= c.ln() + 1e-12 {
                ratio_constants = Some((c, om));
                break 'ratio;
            }
        }
    }

    SubExpCheck {
        pass: constants.is_some(),
        constants,
        lower_bound_ok: any_lower,
        convolution_ok: any_conv,
        ratio_constants,
    }
}

/// Cubic Hermite sampler of a grid function honoring its discontinuities.
pub struct Sampler<'a> {
    v: &'a GridFunction,
    dv: Vec<f64>,
    run_of: Vec<usize>,
}

impl<'a> Sampler<'a> {
    pub fn new(v: &'a GridFunction) -> Self {
        let runs = v.runs();
        let mut run_of = vec![0; v.len()];
        for (k, r) in runs.iter().enumerate() {
            for i in r.clone() {
                run_of[i] = k;
            }
        }
        Sampler {
            dv: v.derivative(),
            v,
            run_of,
        }
    }

    /// Value and slope at `y`, `None` outside the grid.
    pub fn eval(&self, y: f64) -> Option<(f64, f64)> {
        let v = self.v;
        let n = v.len();
        if n < 2 {
            return None;
        }
        let s = (y - v.x0) / v.dx;
        if s < -1e-12 || s > (n - 1) as f64 + 1e-12 {
            return None;
        }
        let i = (s.floor().max(0.0) as usize).min(n - 2);
        let (a, b) = (v.x(i), v.x(i + 1));
        if self.run_of[i] != self.run_of[i + 1] {
            let d = v
                .breaks
                .iter()
                .copied()
                .find(|&d| d > a && d <= b)
                .unwrap_or(b);
            // extrapolate from the node on the same side of the break
            let k = if y < d { i } else { i + 1 };
            let dy = y - v.x(k);
            return Some((v.values[k] + self.dv[k] * dy, self.dv[k]));
        }
        let h = v.dx;
        let t = (y - a) / h;
        let (p0, p1, m0, m1) = (
            v.values[i],
            v.values[i + 1],
            self.dv[i] * h,
            self.dv[i + 1] * h,
        );
        let t2 = t * t;
        let t3 = t2 * t;
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let der = ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        Some((val, der))
    }
}

/// `‖v∘Ψ - ů‖` for `Ψ = Id + s`, on the nodes of `v` whose image stays in the grid.
/// Both terms share one stencil, and `inverse` maps breaks of `v` back through `Ψ`.
fn composed_distance(
    sampler: &Sampler,
    v: &GridFunction,
    profile: &WaveProfile,
    w: &WeightSpec,
    shift: impl Fn(usize) -> f64,
    inverse: impl Fn(f64) -> f64,
) -> f64 {
    let mut first = None;
    let mut values = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let x = v.x(i);
        match sampler.eval(x + shift(i)) {
            Some((val, _)) => {
                first.get_or_insert(i);
                values.push(val - profile.value(x));
            }
            None if first.is_some() => break,
            None => {}
        }
    }
    let Some(i0) = first else {
        return f64::INFINITY;
    };
    let mut breaks: Vec<f64> = profile.discontinuities.iter().map(|d| d.position).collect();
    breaks.extend(v.breaks.iter().map(|&d| inverse(d)));
    let g = GridFunction {
        x0: v.x(i0),
        dx: v.dx,
        values,
        breaks: Vec::new(),
    }
    .with_breaks(breaks);
    let dg = g.derivative();
    let mut m: f64 = 0.0;
    for (i, (&a, &b)) in g.values.iter().zip(&dg).enumerate() {
        let lw = w.ln_weight(g.x(i));
        m = m.max(scaled(a, lw)).max(scaled(b, lw));
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitalFit {
    pub distance: f64,
    pub phi: f64,
    /// False when the scan found several separated local minima.
    pub unimodal: bool,
}

const GOLDEN_TOL: f64 = 1e-6;
const ORBITAL_SCAN: usize = 81;

/// `inf_φ ‖v(· + φ) - ů‖` over `φ ∈ bracket` by scan and golden-section polish.
pub fn orbital_distance(
    v: &GridFunction,
    profile: &WaveProfile,
    w: &WeightSpec,
    bracket: (f64, f64),
) -> Result<OrbitalFit> {
    w.check_resolution(v.dx)?;
    let sampler = Sampler::new(v);
    let obj = |phi: f64| composed_distance(&sampler, v, profile, w, |_| phi, |d| d - phi);
    let (a, b) = bracket;
    let n = ORBITAL_SCAN;
    let grid: Vec<f64> = (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&p| obj(p)).collect();
    let mut best = 0;
    for k in 1..n {
        // ties by smaller |φ|
        if vals[k] < vals[best] || (vals[k] == vals[best] && grid[k].abs() < grid[best].abs()) {
            best = k;
        }
    }
    let minima = (1..n - 1)
        .filter(|&k| vals[k] < vals[k - 1] && vals[k] <= vals[k + 1])
        .count();
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while hi - lo > GOLDEN_TOL {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = obj(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = obj(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = obj(mid);
    let (phi, distance) = if fm <= vals[best] {
        (mid, fm)
    } else {
        (grid[best], vals[best])
    };
    Ok(OrbitalFit {
        distance,
        phi,
        unimodal: minima <= 1,
    })
}

/// Cubic spline with zero end slopes on uniform knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClampedSpline {
    pub a: f64,
    pub b: f64,
    pub values: Vec<f64>,
    second: Vec<f64>,
}

impl ClampedSpline {
    pub fn new(a: f64, b: f64, values: Vec<f64>) -> Self {
        let k = values.len();
        assert!(k >= 2, "at least two knots");
        let h = (b - a) / (k - 1) as f64;
        // tridiagonal system for second derivatives with s'(a) = s'(b) = 0
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        let off = h / 6.0;
        for i in 0..k {
            diag[i] = if i == 0 || i == k - 1 {
                h / 3.0
            } else {
                2.0 * h / 3.0
            };
        }
        rhs[0] = (values[1] - values[0]) / h;
        rhs[k - 1] = -(values[k - 1] - values[k - 2]) / h;
        for i in 1..k - 1 {
            rhs[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h;
        }
        for i in 1..k {
            let m = off / diag[i - 1];
            diag[i] -= m * off;
            rhs[i] -= m * rhs[i - 1];
        }
        let mut second = vec![0.0; k];
        second[k - 1] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            second[i] = (rhs[i] - off * second[i + 1]) / diag[i];
        }
        ClampedSpline {
            a,
            b,
            values,
            second,
        }
    }

    /// `(s, s', s'')`, held constant outside `[a, b]`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let k = self.values.len();
        let h = (self.b - self.a) / (k - 1) as f64;
        if x <= self.a {
            return [self.values[0], 0.0, 0.0];
        }
        if x >= self.b {
            return [self.values[k - 1], 0.0, 0.0];
        }
        let i = (((x - self.a) / h) as usize).min(k - 2);
        let (y0, y1, m0, m1) = (
            self.values[i],
            self.values[i + 1],
            self.second[i],
            self.second[i + 1],
        );
        let t = x - (self.a + i as f64 * h);
        let u = h - t;
        let s = m0 * u.powi(3) / (6.0 * h)
            + m1 * t.powi(3) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * u
            + (y1 / h - m1 * h / 6.0) * t;
        let ds = -m0 * u * u / (2.0 * h) + m1 * t * t / (2.0 * h) - (y0 / h - m0 * h / 6.0)
            + (y1 / h - m1 * h / 6.0);
        let dds = (m0 * u + m1 * t) / h;
        [s, ds, dds]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceModulatedFit {
    /// Upper bound on the space-modulated distance.
    pub bound: f64,
    pub mismatch: f64,
    pub modulation_cost: f64,
    pub spline: ClampedSpline,
    pub converged: bool,
}

/// Lower bound on `Ψ'`.
pub const MIN_SLOPE: f64 = 0.5;
const HJ_MIN_STEP: f64 = 1e-6;
const HJ_MAX_EVALS: usize = 20_000;

struct SmProblem<'a> {
    sampler: Sampler<'a>,
    v: &'a GridFunction,
    profile: &'a WaveProfile,
    w: &'a WeightSpec,
}

impl SmProblem<'_> {
    fn parts(&self, knots: &[f64]) -> (f64, f64, ClampedSpline) {
        let sp = ClampedSpline::new(self.v.x0, self.v.x_end(), knots.to_vec());
        let ev: Vec<[f64; 3]> = (0..self.v.len()).map(|i| sp.eval(self.v.x(i))).collect();
        if ev.iter().any(|e| 1.0 + e[1] <= MIN_SLOPE) {
            return (f64::INFINITY, f64::INFINITY, sp);
        }
        let inverse = |d: f64| {
            let mut x = d - sp.eval(d)[0];
            for _ in 0..4 {
                let e = sp.eval(x);
                x -= (x + e[0] - d) / (1.0 + e[1]);
            }
            x
        };
        let mismatch = composed_distance(
            &self.sampler,
            self.v,
            self.profile,
            self.w,
            |i| ev[i][0],
            inverse,
        );
        let mut cost: f64 = 0.0;
        for (i, e) in ev.iter().enumerate() {
            let lw = self.w.ln_weight(self.v.x(i));
            cost = cost.max(scaled(e[1], lw)).max(scaled(e[2], lw));
        }
        (mismatch, cost, sp)
    }

    fn objective(&self, knots: &[f64]) -> f64 {
        let (m, c, _) = self.parts(knots);
        m + c
    }

    fn hooke_jeeves(&self, start: Vec<f64>, step0: f64) -> (Vec<f64>, f64, bool) {
        let mut x = start;
        let mut fx = self.objective(&x);
        let mut step = step0;
        let mut evals = 1;
        while step > HJ_MIN_STEP {
            if evals > HJ_MAX_EVALS {
                return (x, fx, false);
            }
            let mut improved = false;
            for k in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[k] += dir * step;
                    let fy = self.objective(&y);
                    evals += 1;
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (x, fx, true)
    }
}

/// Upper bound on `inf_Ψ ‖v∘Ψ - ů‖ + ‖∂ₓ(Ψ - Id)‖` over `Ψ = Id + s`, `s` a
/// clamped cubic spline on `knots` uniform nodes spanning the grid, `Ψ' > 1/2`.
pub fn space_modulated_distance(
    v: &GridFunction,
    profile: &WaveProfile,
    w: &WeightSpec,
    knots: usize,
    bracket: (f64, f64),
) -> Result<SpaceModulatedFit> {
    space_modulated_distance_from(v, profile, w, knots, bracket, &[])
}

/// As [`space_modulated_distance`] with extra candidate knot vectors as starts.
pub fn space_modulated_distance_from(
    v: &GridFunction,
    profile: &WaveProfile,
    w: &WeightSpec,
    knots: usize,
    bracket: (f64, f64),
    starts: &[Vec<f64>],
) -> Result<SpaceModulatedFit> {
    if knots < 2 {
        return Err(Error::InvalidModel(
            "space modulation needs at least two knots".into(),
        ));
    }
    let orb = orbital_distance(v, profile, w, bracket)?;
    let problem = SmProblem {
        sampler: Sampler::new(v),
        v,
        profile,
        w,
    };
    let mut candidates = vec![vec![0.0; knots], vec![orb.phi; knots]];
    if knots > 2 {
        let coarse = space_modulated_distance_from(v, profile, w, 2, bracket, &[])?;
        let (a, b) = (v.x0, v.x_end());
        let warm = (0..knots)
            .map(|k| {
                coarse
                    .spline
                    .eval(a + (b - a) * k as f64 / (knots - 1) as f64)[0]
            })
            .collect();
        candidates.push(warm);
    }
    candidates.extend(starts.iter().filter(|s| s.len() == knots).cloned());
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for c in candidates {
        let r = problem.hooke_jeeves(c, 0.1);
        if best.as_ref().map_or(true, |b| r.1 < b.1) {
            best = Some(r);
        }
    }
    let (x, _, converged) = best.expect("at least one start");
    let (mismatch, modulation_cost, spline) = problem.parts(&x);
    Ok(SpaceModulatedFit {
        bound: mismatch + modulation_cost,
        mismatch,
        modulation_cost,
        spline,
        converged,
    })
}

/// Least-squares fits of a positive series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Minus the slope of `ln n` against `t`.
    pub omega: f64,
    /// `None` when `ln n` has zero variance.
    pub r2: Option<f64>,
    /// Slope of `ln n` against `ln t`.
    pub loglog_slope: f64,
    pub loglog_r2: Option<f64>,
    pub points: usize,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, Option<f64>) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let scale = y.iter().map(|b| b.abs()).fold(1.0, f64::max);
    let range = y.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - y.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let r2 = if range <= 1e-12 * scale {
        None
    } else {
        Some(sxy * sxy / (sxx * syy))
    };
    (if r2.is_none() { 0.0 } else { slope }, r2)
}

/// Exponential and algebraic fits on `t ∈ [window.0, window.1]`.
pub fn fit_decay_rate(t: &[f64], n: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(n)
        .filter(|(&ti, &ni)| ti >= window.0 && ti <= window.1 && ni > 0.0)
        .map(|(&ti, &ni)| (ti, ni))
        .collect();
    if pts.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ln: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, r2) = linear_fit(&ts, &ln);
    let pos: Vec<usize> = (0..ts.len()).filter(|&i| ts[i] > 0.0).collect();
    let (ll, llr2) = if pos.len() >= 2 {
        let lt: Vec<f64> = pos.iter().map(|&i| ts[i].ln()).collect();
        let ly: Vec<f64> = pos.iter().map(|&i| ln[i]).collect();
        linear_fit(&lt, &ly)
    } else {
        (0.0, None)
    };
    Ok(DecayFit {
        omega: -slope,
        r2,
        loglog_slope: ll,
        loglog_r2: llr2,
        points: pts.len(),
    })
}

/// Default fit window `[0.2 T, 0.9 T]`.
pub fn default_window(horizon: f64) -> (f64, f64) {
    (0.2 * horizon, 0.9 * horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;
    use crate::profile::build_characteristic_front;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tanh_profile() -> WaveProfile {
        build_characteristic_front(&catalog::burgers_bistable(), 0.0, 0.0, 60.0).unwrap()
    }

    #[test]
    fn zero_has_zero_norm() {
        let v = GridFunction::from_fn(-5.0, 5.0, 201, |_| 0.0);
        assert_eq!(
            weighted_norm(&v, &WeightSpec::exponential(1.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn weight_itself_has_norm_max_one_kappa() {
        for kappa in [0.5, 2.0] {
            let w = WeightSpec::exponential(kappa);
            let v = GridFunction::from_fn(-5.0, 10.0, 3001, |x| w.weight(x));
            let n = weighted_norm(&v, &w).unwrap();
            assert_abs_diff_eq!(n, f64::max(1.0, kappa), epsilon = 1e-4);
        }
    }

    #[test]
    fn weight_is_one_on_left_and_nonincreasing() {
        let w = WeightSpec::exponential(1.3).with_rho(SubExpWeight::Algebraic { r: 2.0 });
        let mut prev = f64::INFINITY;
        for k in 0..400 {
            let x = -10.0 + 0.05 * k as f64;
            let v = w.weight(x);
            if x <= 0.0 {
                assert_eq!(v, 1.0);
            }
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn stencils_do_not_cross_breaks() {
        let mk = |h: f64| {
            GridFunction::from_fn(-2.0, 2.0, 401, |x| {
                if x < 0.005 {
                    x.sin()
                } else {
                    h + x.cos()
                }
            })
            .with_breaks(vec![0.005])
        };
        let w = WeightSpec::exponential(0.5);
        let a = mk(0.0);
        let b = mk(3.0);
        let (da, db) = (a.derivative(), b.derivative());
        for (p, q) in da.iter().zip(&db) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
        // norm only changes through the values, never through a jump-sized slope
        assert!(da.iter().all(|d| d.abs() < 1.1));
        // a crossing stencil would report a slope near 3 / (2 Δx) = 150
        assert!(weighted_norm(&b, &w).unwrap() < 10.0);
    }

    #[test]
    fn unresolved_weight_is_rejected() {
        let v = GridFunction::from_fn(0.0, 1.0, 11, |x| x);
        assert!(matches!(
            weighted_norm(&v, &WeightSpec::exponential(1.0)),
            Err(Error::UnresolvedWeight(_))
        ));
    }

    #[test]
    fn subexponential_catalog() {
        let h = 50.0;
        assert!(check_subexponential(&SubExpWeight::Algebraic { r: 2.0 }, h, &OMEGA_GRID).pass);
        assert!(check_subexponential(&SubExpWeight::Exponential { a: 1.0 }, h, &OMEGA_GRID).pass);
        let d = check_subexponential(&SubExpWeight::Dyadic, h, &OMEGA_GRID);
        assert!(d.pass);
        assert!(d.ratio_constants.is_some());
        let g = check_subexponential(&SubExpWeight::Gaussian, h, &OMEGA_GRID);
        assert!(!g.pass);
        assert!(!g.lower_bound_ok);
        assert!(g.ratio_constants.is_none());
    }

    #[test]
    fn convolution_oracle_for_exponential_weight() {
        // ∫₀ᵗ e^{-ω(t-s)} e^{-s} ds / e^{-t} = (1 - e^{-(ω-1)t})/(ω-1) < 1/(ω-1)
        let c = check_subexponential(&SubExpWeight::Exponential { a: 1.0 }, 30.0, &[2.0]);
        assert_eq!(c.constants, Some((1.0, 2.0)));
        // at ω = 1.5 the convolution needs C ≥ 2 while the lower bound needs C ≤ 1
        let c = check_subexponential(&SubExpWeight::Exponential { a: 1.0 }, 30.0, &[1.5]);
        assert!(c.lower_bound_ok && c.convolution_ok);
        assert_eq!(c.constants, None);
    }

    #[test]
    fn orbital_examples() {
        let p = tanh_profile();
        let w = WeightSpec::weightless();
        let same = GridFunction::from_fn(-10.0, 10.0, 2001, |x| p.value(x));
        let f = orbital_distance(&same, &p, &w, (-1.0, 1.0)).unwrap();
        assert!(f.distance < 1e-6 && f.phi.abs() < 1e-3);
        let shifted = GridFunction::from_fn(-10.0, 10.0, 2001, |x| p.value(x - 0.3));
        let f = orbital_distance(&shifted, &p, &w, (-1.0, 1.0)).unwrap();
        assert!(f.distance < 1e-4, "{f:?}");
        assert!((f.phi - 0.3).abs() < 1e-3, "{f:?}");
        let bump = GridFunction::from_fn(-10.0, 10.0, 2001, |x| p.value(x) + 0.01 * (-x * x).exp());
        let f = orbital_distance(&bump, &p, &w, (-1.0, 1.0)).unwrap();
        // e^{-x²} is not a multiple of ů' = sech², so some mismatch survives
        assert!(f.distance > 1e-5, "{f:?}");
    }

    #[test]
    fn spline_reproduces_clamped_cubic() {
        let s2 = ClampedSpline::new(0.0, 1.0, vec![0.2, 0.7]);
        let nodes: Vec<f64> = (0..8).map(|k| s2.eval(k as f64 / 7.0)[0]).collect();
        let s8 = ClampedSpline::new(0.0, 1.0, nodes);
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            let (a, b) = (s2.eval(x), s8.eval(x));
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-10);
        }
        assert_abs_diff_eq!(s2.eval(0.0)[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s2.eval(0.5)[0], 0.45, epsilon = 1e-12);
    }

    #[test]
    fn space_modulated_examples() {
        let p = tanh_profile();
        let w = WeightSpec::weightless();
        let (a, b) = (-8.0, 8.0);
        let same = GridFunction::from_fn(a, b, 801, |x| p.value(x));
        let sm = space_modulated_distance(&same, &p, &w, 4, (-1.0, 1.0)).unwrap();
        assert!(sm.bound < 1e-6);

        let gen: Vec<f64> = (0..8)
            .map(|k| 0.1 * (std::f64::consts::PI * k as f64 / 7.0).sin())
            .collect();
        let psi = ClampedSpline::new(a, b, gen.clone());
        let v = GridFunction::from_fn(a, b, 801, |x| p.value(x + psi.eval(x)[0]));
        let mut cost: f64 = 0.0;
        for i in 0..v.len() {
            let e = psi.eval(v.x(i));
            cost = cost.max(e[1].abs()).max(e[2].abs());
        }
        let orb = orbital_distance(&v, &p, &w, (-1.0, 1.0)).unwrap();
        let sm8 = space_modulated_distance_from(&v, &p, &w, 8, (-1.0, 1.0), &[gen]).unwrap();
        assert!(sm8.bound <= cost + 1e-3, "{} vs {cost}", sm8.bound);
        assert!(sm8.bound <= orb.distance + 1e-12);
        let sm2 = space_modulated_distance(&v, &p, &w, 2, (-1.0, 1.0)).unwrap();
        let sm8 = space_modulated_distance(&v, &p, &w, 8, (-1.0, 1.0)).unwrap();
        assert!(sm8.bound <= sm2.bound + 1e-12);
        assert!(sm2.bound <= orb.distance + 1e-12);
    }

    #[test]
    fn fit_examples() {
        let t: Vec<f64> = (0..101).map(|k| k as f64 * 0.1).collect();
        let n: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let f = fit_decay_rate(&t, &n, (0.0, 10.0)).unwrap();
        assert_abs_diff_eq!(f.omega, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.r2.unwrap(), 1.0, epsilon = 1e-12);

        let t: Vec<f64> = (0..=900).map(|k| 10.0 + k as f64 * 0.1).collect();
        let n: Vec<f64> = t.iter().map(|s| (1.0 + s).powi(-2)).collect();
        let f = fit_decay_rate(&t, &n, (10.0, 100.0)).unwrap();
        // normal equations of ln n = a + b ln t, solved by Cramer's rule
        let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&ti, &ni) in t.iter().zip(&n) {
            let (x, y) = (ti.ln(), ni.ln());
            s0 += 1.0;
            s1 += x;
            s2 += x * x;
            r0 += y;
            r1 += x * y;
        }
        let oracle = (s0 * r1 - s1 * r0) / (s0 * s2 - s1 * s1);
        assert_abs_diff_eq!(f.loglog_slope, oracle, epsilon = 1e-9);
        assert!((f.loglog_slope + 2.0).abs() < 0.06, "{}", f.loglog_slope);

        let c = fit_decay_rate(&t, &vec![0.3; t.len()], (10.0, 100.0)).unwrap();
        assert_eq!(c.omega, 0.0);
        assert!(c.r2.is_none());

        assert!(matches!(
            fit_decay_rate(&t, &n, (200.0, 300.0)),
            Err(Error::EmptyWindow)
        ));
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous_and_subadditive(
            a in prop::collection::vec(-1.0f64..1.0, 6),
            b in prop::collection::vec(-1.0f64..1.0, 6),
            c in -3.0f64..3.0,
            kappa in 0.0f64..2.0,
        ) {
            let w = WeightSpec::exponential(kappa).with_rho(SubExpWeight::Algebraic { r: 1.0 });
            let mk = |q: &Vec<f64>| GridFunction::from_fn(-4.0, 6.0, 401, |x| {
                q[0] * (q[1] * x).sin() + q[2] * (-(x - q[3]).powi(2)).exp() + q[4] * (q[5] * x).cos()
            });
            let (u, v) = (mk(&a), mk(&b));
            let nu = weighted_norm(&u, &w).unwrap();
            let ncu = weighted_norm(&u.scale(c), &w).unwrap();
            prop_assert!((ncu - c.abs() * nu).abs() <= 1e-12 * (1.0 + ncu));
            let mut sum = u.clone();
            for (s, t) in sum.values.iter_mut().zip(&v.values) { *s += t; }
            let ns = weighted_norm(&sum, &w).unwrap();
            prop_assert!(ns <= (nu + weighted_norm(&v, &w).unwrap()) * (1.0 + 1e-12));
        }

        #[test]
        fn orbital_bounded_by_plain_norm(amp in -0.05f64..0.05, x0 in -2.0f64..2.0) {
            let p = tanh_profile();
            let w = WeightSpec::exponential(0.3);
            let v = GridFunction::from_fn(-6.0, 6.0, 601, |x| p.value(x) + amp * (-(x - x0).powi(2)).exp());
            let f = orbital_distance(&v, &p, &w, (-0.5, 0.5)).unwrap();
            let sampler = Sampler::new(&v);
            let at_zero = composed_distance(&sampler, &v, &p, &w, |_| 0.0, |d| d);
            prop_assert!(f.distance <= at_zero + 1e-12);
        }
    }
}
