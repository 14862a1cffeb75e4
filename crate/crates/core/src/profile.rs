//! Traveling-wave profiles: smooth fronts, characteristic fronts, Riemann
//! shocks and composite discontinuous waves glued by Rankine–Hugoniot.
//!
//! Every non-constant piece is stored as the full solution of the profile ODE
//! `(f'(u) - σ) u' = g(u)` between two zeros of `g`, sampled with `(u, u', u'')`
//! and interpolated by quintic Hermite polynomials. The active interval of a
//! piece may be smaller than its sampled range; the remainder serves as the
//! smooth one-sided extension needed by the shock-tracking solver.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, DEGENERACY_TOL};
use crate::poly::{bisect, Poly};

/// Integration and truncation parameters for profile construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    /// Local error tolerance of the step-doubling RK4, relative to the gap to the target zero.
    pub rtol: f64,
    pub atol: f64,
    /// Integration stops once `|u - u∞|` drops below this.
    pub tail_gap: f64,
    /// Hard cap on `|x|`.
    pub max_halfwidth: f64,
    /// Taylor step leaving a characteristic point.
    pub h0: f64,
    pub max_step: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            rtol: 1e-10,
            atol: 1e-15,
            tail_gap: 1e-12,
            max_halfwidth: 60.0,
            h0: 1e-3,
            max_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Constant,
    Monotone,
    CharacteristicCrossing,
}

/// One smooth block of a profile.
///
/// Samples may extend beyond the active interval `(lo, hi)`; beyond the last
/// sample the solution continues along its linearized exponential tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothSegment {
    pub kind: SegmentKind,
    pub lo: f64,
    pub hi: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub ddu: Vec<f64>,
    /// Limits of the underlying solution at `-∞` and `+∞`.
    pub limits: (f64, f64),
    /// Position of the characteristic point of the underlying solution, if any.
    pub x_star: Option<f64>,
    /// Linearized rates `ds/du` at the two limits.
    pub tail_rates: (f64, f64),
}

impl SmoothSegment {
    pub fn constant(value: f64) -> Self {
        SmoothSegment {
            kind: SegmentKind::Constant,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            x: vec![0.0],
            u: vec![value],
            du: vec![0.0],
            ddu: vec![0.0],
            limits: (value, value),
            x_star: None,
            tail_rates: (0.0, 0.0),
        }
    }

    /// `(ů, ů', ů'')` of the underlying solution, including the extension.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.tail(0, self.limits.0, self.tail_rates.0, x);
        }
        if x >= self.x[n - 1] {
            return self.tail(n - 1, self.limits.1, self.tail_rates.1, x);
        }
        let k = self.x.partition_point(|&xi| xi <= x) - 1;
        quintic_hermite(
            self.x[k],
            self.x[k + 1],
            [self.u[k], self.du[k], self.ddu[k]],
            [self.u[k + 1], self.du[k + 1], self.ddu[k + 1]],
            x,
        )
    }

    /// Linearized continuation `u∞ + (ů'_k/λ) e^{λ(x - x_k)}` beyond sample `k`.
    fn tail(&self, k: usize, limit: f64, lambda: f64, x: f64) -> [f64; 3] {
        let dx = x - self.x[k];
        if self.du[k] == 0.0 || lambda == 0.0 || !lambda.is_finite() || lambda * dx > 0.0 {
            return [self.u[k], 0.0, 0.0];
        }
        // the slope carries more relative precision than u - u∞ near the limit
        let d = self.du[k] * (lambda * dx).exp();
        [limit + d / lambda, d, lambda * d]
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn translate(&mut self, dx: f64) {
        for x in &mut self.x {
            *x += dx;
        }
        self.lo += dx;
        self.hi += dx;
        if let Some(xs) = &mut self.x_star {
            *xs += dx;
        }
    }

    pub fn is_constant(&self) -> bool {
        self.kind == SegmentKind::Constant
    }

    /// Position where the underlying monotone solution takes the value `u`.
    pub fn position_of(&self, u: f64) -> Option<f64> {
        let n = self.x.len();
        if n < 2 {
            return None;
        }
        let (u0, u1) = (self.u[0], self.u[n - 1]);
        if (u - u0) * (u - u1) > 0.0 {
            return None;
        }
        let k = (0..n - 1).find(|&k| (self.u[k] - u) * (self.u[k + 1] - u) <= 0.0)?;
        let f = |x: f64| self.value(x) - u;
        let fa = f(self.x[k]);
        if fa == 0.0 {
            return Some(self.x[k]);
        }
        Some(bisect(f, self.x[k], self.x[k + 1], fa))
    }
}

/// Quintic Hermite interpolation returning value, first and second derivative.
pub fn quintic_hermite(x0: f64, x1: f64, a: [f64; 3], b: [f64; 3], x: f64) -> [f64; 3] {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 0.5 * (t3 - 2.0 * t4 + t5);
    let d0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let d1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let d2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
    let d4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let d5 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
    let e0 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
    let e1 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
    let e2 = 0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3);
    let e4 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
    let e5 = 0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3);
    let hh = h * h;
    let v = a[0] * h0 + h * a[1] * h1 + hh * a[2] * h2 + b[0] * h3 + h * b[1] * h4 + hh * b[2] * h5;
    let dv =
        (a[0] * d0 + h * a[1] * d1 + hh * a[2] * d2 - b[0] * d0 + h * b[1] * d4 + hh * b[2] * d5)
            / h;
    let ddv =
        (a[0] * e0 + h * a[1] * e1 + hh * a[2] * e2 - b[0] * e0 + h * b[1] * e4 + hh * b[2] * e5)
            / hh;
    [v, dv, ddv]
}

/// A discontinuity with its one-sided limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discontinuity {
    pub position: f64,
    pub left: f64,
    pub right: f64,
    /// `[g(ů)] / [ů]` across the jump.
    pub jump_ratio: f64,
}

/// Piecewise-smooth traveling-wave profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveProfile {
    pub sigma: f64,
    pub segments: Vec<SmoothSegment>,
    pub discontinuities: Vec<Discontinuity>,
    pub endstate_minus: f64,
    pub endstate_plus: f64,
    /// `(x⋆, u⋆)` pairs.
    pub characteristic_points: Vec<(f64, f64)>,
    pub halfwidth: f64,
}

impl WaveProfile {
    /// The constant wave `ů ≡ value` travelling at `sigma`.
    pub fn constant(value: f64, sigma: f64) -> Self {
        WaveProfile {
            sigma,
            segments: vec![SmoothSegment::constant(value)],
            discontinuities: Vec::new(),
            endstate_minus: value,
            endstate_plus: value,
            characteristic_points: Vec::new(),
            halfwidth: 0.0,
        }
    }

    /// Index of the segment owning `x`; a discontinuity belongs to its right segment.
    pub fn segment_index(&self, x: f64) -> usize {
        self.discontinuities.partition_point(|d| d.position <= x)
    }

    pub fn eval(&self, x: f64) -> [f64; 3] {
        self.segments[self.segment_index(x)].eval(x)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x)[0]
    }

    pub fn is_smooth(&self) -> bool {
        self.discontinuities.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.is_smooth() && self.segments[0].is_constant()
    }

    /// The profile shifted so that the new profile is `ů(· - dx)`.
    pub fn translated(&self, dx: f64) -> WaveProfile {
        let mut p = self.clone();
        for s in &mut p.segments {
            s.translate(dx);
        }
        for d in &mut p.discontinuities {
            d.position += dx;
        }
        for c in &mut p.characteristic_points {
            c.0 += dx;
        }
        p
    }

    /// Writes `x, u, u', segment_id` on a uniform grid of `n` points.
    pub fn write_csv<W: Write>(&self, mut w: W, n: usize) -> Result<()> {
        writeln!(w, "x,u,du,segment_id")?;
        let l = self.halfwidth.max(1.0);
        for i in 0..n {
            let x = -l + 2.0 * l * i as f64 / (n.max(2) - 1) as f64;
            let k = self.segment_index(x);
            let [u, du, _] = self.segments[k].eval(x);
            writeln!(w, "{x},{u},{du},{k}")?;
        }
        Ok(())
    }
}

/// Step-doubling RK4 for the autonomous scalar ODE `u' = s(u)` from `(x0, u0)`
/// in direction `dir`, until `u` is within `tail_gap` of `target`.
fn integrate_branch<S: Fn(f64) -> f64>(
    s: &S,
    x0: f64,
    u0: f64,
    dir: f64,
    target: f64,
    u_range: (f64, f64),
    opts: &ProfileOptions,
) -> Result<Vec<(f64, f64)>> {
    let rk4 = |u: f64, h: f64| {
        let k1 = s(u);
        let k2 = s(u + 0.5 * h * k1);
        let k3 = s(u + 0.5 * h * k2);
        let k4 = s(u + h * k3);
        u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut out = Vec::new();
    let (mut x, mut u) = (x0, u0);
    let mut h = opts.max_step.min(1e-2);
    let side = (u0 - target).signum();
    let mut iterations = 0usize;
    while (u - target).abs() > opts.tail_gap && x.abs() < opts.max_halfwidth {
        iterations += 1;
        if iterations > 10_000_000 {
            return Err(Error::NoConvergence("profile integration stalled".into()));
        }
        let hs = dir * h;
        let big = rk4(u, hs);
        let half = rk4(u, 0.5 * hs);
        let small = rk4(half, 0.5 * hs);
        let err = (small - big).abs() / 15.0;
        let scale = opts.rtol * (u - target).abs().max(1e-300) + opts.atol;
        let crossed = (small - target) * side < 0.0;
        if (err <= scale && !crossed) || h <= 1e-9 {
            u = small + (small - big) / 15.0;
            if (u - target) * side < 0.0 {
                u = target;
            }
            x += hs;
            if !(u_range.0..=u_range.1).contains(&u) || !u.is_finite() {
                return Err(Error::NoAdjacentZero);
            }
            out.push((x, u));
        }
        let factor = if err > 0.0 {
            (0.9 * (scale / err).powf(0.2)).clamp(0.2, 2.0)
        } else {
            2.0
        };
        h = (h * if crossed { 0.25 } else { factor }).clamp(1e-9, opts.max_step);
    }
    Ok(out)
}

/// Right side of the profile ODE as a function of `u`, together with its derivative.
trait Slope {
    fn s(&self, u: f64) -> f64;
    fn ds(&self, u: f64) -> f64;
}

/// `g / (f' - σ)`.
struct PlainSlope<'a> {
    g: &'a Poly,
    dg: &'a Poly,
    a: Poly,
    da: &'a Poly,
}

impl Slope for PlainSlope<'_> {
    fn s(&self, u: f64) -> f64 {
        self.g.eval(u) / self.a.eval(u)
    }
    fn ds(&self, u: f64) -> f64 {
        let a = self.a.eval(u);
        (self.dg.eval(u) * a - self.g.eval(u) * self.da.eval(u)) / (a * a)
    }
}

/// `G / H` after removing the common root `u⋆` from `g` and `f' - σ`.
struct DeflatedSlope {
    num: Poly,
    dnum: Poly,
    den: Poly,
    dden: Poly,
}

impl Slope for DeflatedSlope {
    fn s(&self, u: f64) -> f64 {
        self.num.eval(u) / self.den.eval(u)
    }
    fn ds(&self, u: f64) -> f64 {
        let d = self.den.eval(u);
        (self.dnum.eval(u) * d - self.num.eval(u) * self.dden.eval(u)) / (d * d)
    }
}

fn assemble_segment<S: Slope>(
    slope: &S,
    left: Vec<(f64, f64)>,
    center: (f64, f64),
    right: Vec<(f64, f64)>,
    limits: (f64, f64),
    x_star: Option<f64>,
) -> SmoothSegment {
    let mut pts: Vec<(f64, f64)> = left.into_iter().rev().collect();
    pts.push(center);
    pts.extend(right);
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let u: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let du: Vec<f64> = u.iter().map(|&v| slope.s(v)).collect();
    let ddu: Vec<f64> = u.iter().zip(&du).map(|(&v, &d)| slope.ds(v) * d).collect();
    SmoothSegment {
        kind: if x_star.is_some() {
            SegmentKind::CharacteristicCrossing
        } else {
            SegmentKind::Monotone
        },
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        x,
        u,
        du,
        ddu,
        limits,
        x_star,
        tail_rates: (slope.ds(limits.0), slope.ds(limits.1)),
    }
}

fn zero_tolerance(model: &ModelSpec) -> f64 {
    1e-9 * model
        .source()
        .coeffs()
        .iter()
        .fold(1.0f64, |m, c| m.max(c.abs()))
}

/// Full front solution between two consecutive zeros, with `ů(0)` at the midpoint.
pub fn smooth_front_solution(
    model: &ModelSpec,
    u_minus: f64,
    u_plus: f64,
    sigma: f64,
    opts: &ProfileOptions,
) -> Result<SmoothSegment> {
    let tol = zero_tolerance(model);
    for &z in &[u_minus, u_plus] {
        if model.g(z).abs() > tol || model.dg(z).abs() < DEGENERACY_TOL {
            return Err(Error::NotAZero(z));
        }
    }
    if u_minus == u_plus {
        return Err(Error::InvalidModel("front endstates coincide".into()));
    }
    let (lo, hi) = (u_minus.min(u_plus), u_minus.max(u_plus));
    let inner = |v: f64| v > lo + 1e-9 && v < hi - 1e-9;
    if let Some(z) = model.source_zeros().into_iter().find(|z| inner(z.u)) {
        return Err(Error::NonConsecutiveZeros(z.u));
    }
    // closed interval: a characteristic endstate also makes the ODE singular
    let shifted = model.flux_prime().add_constant(-sigma);
    if let Some(r) = shifted.roots_in(lo, hi).into_iter().next() {
        return Err(Error::CharacteristicInRange { u: r.value, sigma });
    }
    let slope = PlainSlope {
        g: model.source(),
        dg: model.source_prime(),
        a: shifted,
        da: model.flux_second(),
    };
    let mid = 0.5 * (u_minus + u_plus);
    if slope.s(mid) * (u_plus - u_minus) <= 0.0 {
        return Err(Error::Degenerate(format!(
            "no front from {u_minus} to {u_plus} at speed {sigma}: profile ODE points the other way"
        )));
    }
    let s = |u: f64| slope.s(u);
    let ur = model.u_range();
    let right = integrate_branch(&s, 0.0, mid, 1.0, u_plus, ur, opts)?;
    let left = integrate_branch(&s, 0.0, mid, -1.0, u_minus, ur, opts)?;
    Ok(assemble_segment(
        &slope,
        left,
        (0.0, mid),
        right,
        (u_minus, u_plus),
        None,
    ))
}

/// Full characteristic-front solution through `(0, u⋆)`.
pub fn characteristic_front_solution(
    model: &ModelSpec,
    u_star: f64,
    sigma: f64,
    opts: &ProfileOptions,
) -> Result<SmoothSegment> {
    let f2 = model.ddf(u_star);
    if f2.abs() < DEGENERACY_TOL {
        return Err(Error::DegenerateCharacteristic { u_star, f2 });
    }
    if (model.df(u_star) - sigma).abs() > 1e-9 * (1.0 + sigma.abs()) {
        return Err(Error::Degenerate(format!(
            "f'({u_star}) differs from sigma = {sigma}"
        )));
    }
    if model.g(u_star).abs() > zero_tolerance(model) || model.dg(u_star).abs() < DEGENERACY_TOL {
        return Err(Error::NotAZero(u_star));
    }
    let num = model.source().deflate(u_star);
    let den = model.flux_prime().add_constant(-sigma).deflate(u_star);
    let slope = DeflatedSlope {
        dnum: num.derivative(),
        dden: den.derivative(),
        num,
        den,
    };
    let s0 = slope.s(u_star);
    let dir_u = s0.signum();
    let zeros = model.source_zeros();
    let below = zeros
        .iter()
        .rev()
        .find(|z| z.u < u_star - 1e-9)
        .map(|z| z.u);
    let above = zeros.iter().find(|z| z.u > u_star + 1e-9).map(|z| z.u);
    let (below, above) = match (below, above) {
        (Some(b), Some(a)) => (b, a),
        _ => return Err(Error::NoAdjacentZero),
    };
    let den_roots = slope.den.roots_in(below, above);
    if let Some(r) = den_roots.first() {
        return Err(Error::CharacteristicInRange { u: r.value, sigma });
    }
    let (t_minus, t_plus) = if dir_u > 0.0 {
        (below, above)
    } else {
        (above, below)
    };
    // one explicit second-order Taylor step off the characteristic point
    let h0 = opts.h0;
    let curv = slope.ds(u_star) * s0;
    let u_right = u_star + h0 * s0 + 0.5 * h0 * h0 * curv;
    let u_left = u_star - h0 * s0 + 0.5 * h0 * h0 * curv;
    let s = |u: f64| slope.s(u);
    let ur = model.u_range();
    let mut right = vec![(h0, u_right)];
    right.extend(integrate_branch(&s, h0, u_right, 1.0, t_plus, ur, opts)?);
    let mut left = vec![(-h0, u_left)];
    left.extend(integrate_branch(&s, -h0, u_left, -1.0, t_minus, ur, opts)?);
    Ok(assemble_segment(
        &slope,
        left,
        (0.0, u_star),
        right,
        (t_minus, t_plus),
        Some(0.0),
    ))
}

fn finish_smooth(seg: SmoothSegment, sigma: f64, cp: Vec<(f64, f64)>) -> WaveProfile {
    let halfwidth = seg.x[0].abs().max(seg.x[seg.x.len() - 1].abs());
    WaveProfile {
        sigma,
        endstate_minus: seg.limits.0,
        endstate_plus: seg.limits.1,
        segments: vec![seg],
        discontinuities: Vec::new(),
        characteristic_points: cp,
        halfwidth,
    }
}

/// Non-characteristic front from `u_minus` to `u_plus` with `ů(0)` at the midpoint.
pub fn build_smooth_front(
    model: &ModelSpec,
    u_minus: f64,
    u_plus: f64,
    sigma: f64,
    halfwidth: f64,
) -> Result<WaveProfile> {
    let opts = ProfileOptions {
        max_halfwidth: halfwidth,
        ..ProfileOptions::default()
    };
    build_smooth_front_with(model, u_minus, u_plus, sigma, &opts)
}

pub fn build_smooth_front_with(
    model: &ModelSpec,
    u_minus: f64,
    u_plus: f64,
    sigma: f64,
    opts: &ProfileOptions,
) -> Result<WaveProfile> {
    let seg = smooth_front_solution(model, u_minus, u_plus, sigma, opts)?;
    Ok(finish_smooth(seg, sigma, Vec::new()))
}

/// Smooth front crossing the characteristic value `u⋆` at `x = 0`.
pub fn build_characteristic_front(
    model: &ModelSpec,
    u_star: f64,
    sigma: f64,
    halfwidth: f64,
) -> Result<WaveProfile> {
    let opts = ProfileOptions {
        max_halfwidth: halfwidth,
        ..ProfileOptions::default()
    };
    build_characteristic_front_with(model, u_star, sigma, &opts)
}

pub fn build_characteristic_front_with(
    model: &ModelSpec,
    u_star: f64,
    sigma: f64,
    opts: &ProfileOptions,
) -> Result<WaveProfile> {
    let seg = characteristic_front_solution(model, u_star, sigma, opts)?;
    Ok(finish_smooth(seg, sigma, vec![(0.0, u_star)]))
}

/// Outcome of the strict Oleinik test at one jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OleinikCheck {
    /// `f'(ů(d⁻)) - σ`
    pub left_gap: f64,
    /// `σ - f'(ů(d⁺))`
    pub right_gap: f64,
    /// Minimum over sampled interior `v` of the two chord gaps.
    pub chord_margin: f64,
    pub ok: bool,
}

pub const OLEINIK_SAMPLES: usize = 200;
pub const OLEINIK_MARGIN: f64 = 1e-8;

/// Strict Oleinik test for the jump `ul | ur` at speed `sigma`:
/// `F(ul, v) > σ > F(v, ur)` for `v` strictly between, with `F` the chord slope.
pub fn oleinik(model: &ModelSpec, sigma: f64, ul: f64, ur: f64) -> OleinikCheck {
    let left_gap = model.df(ul) - sigma;
    let right_gap = sigma - model.df(ur);
    let mut chord_margin = f64::INFINITY;
    for k in 1..=OLEINIK_SAMPLES {
        let v = ul + (ur - ul) * k as f64 / (OLEINIK_SAMPLES + 1) as f64;
        let a = model.averaged_flux(ul, v) - sigma;
        let b = sigma - model.averaged_flux(v, ur);
        chord_margin = chord_margin.min(a).min(b);
    }
    let ok =
        left_gap > OLEINIK_MARGIN && right_gap > OLEINIK_MARGIN && chord_margin > OLEINIK_MARGIN;
    OleinikCheck {
        left_gap,
        right_gap,
        chord_margin,
        ok,
    }
}

fn jump_ratio(model: &ModelSpec, ul: f64, ur: f64) -> f64 {
    (model.g(ur) - model.g(ul)) / (ur - ul)
}

/// Piecewise-constant shock `u_left | u_right` at `x = 0`; returns its speed.
pub fn build_riemann_shock(
    model: &ModelSpec,
    u_left: f64,
    u_right: f64,
) -> Result<(f64, WaveProfile)> {
    let tol = zero_tolerance(model);
    for &z in &[u_left, u_right] {
        if model.g(z).abs() > tol {
            return Err(Error::NotAZero(z));
        }
    }
    if u_left == u_right {
        return Err(Error::InvalidModel("Riemann states coincide".into()));
    }
    let sigma = model.averaged_flux(u_left, u_right);
    let check = oleinik(model, sigma, u_left, u_right);
    if !check.ok {
        return Err(Error::OleinikViolation {
            position: 0.0,
            detail: format!(
                "f'(ul)-σ = {:.3e}, σ-f'(ur) = {:.3e}, chord margin {:.3e}",
                check.left_gap, check.right_gap, check.chord_margin
            ),
        });
    }
    let mut left = SmoothSegment::constant(u_left);
    left.hi = 0.0;
    let mut right = SmoothSegment::constant(u_right);
    right.lo = 0.0;
    Ok((
        sigma,
        WaveProfile {
            sigma,
            segments: vec![left, right],
            discontinuities: vec![Discontinuity {
                position: 0.0,
                left: u_left,
                right: u_right,
                jump_ratio: jump_ratio(model, u_left, u_right),
            }],
            endstate_minus: u_left,
            endstate_plus: u_right,
            characteristic_points: Vec::new(),
            halfwidth: 0.0,
        },
    ))
}

/// A point `(x, u)` the piece is translated to pass through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub x: f64,
    pub u: f64,
}

/// One smooth piece of a composite wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceSpec {
    Constant {
        value: f64,
    },
    /// Non-characteristic front between two consecutive zeros.
    Front {
        u_minus: f64,
        u_plus: f64,
        anchor: Anchor,
    },
    /// Front through the characteristic value `u_star`; by default `ů(0) = u⋆`.
    Characteristic {
        u_star: f64,
        #[serde(default)]
        anchor: Option<Anchor>,
    },
}

/// Where a jump between two adjacent pieces sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum JumpSpec {
    Position {
        x: f64,
    },
    /// Located where the non-constant neighbour satisfies Rankine–Hugoniot
    /// with the constant neighbour and the jump is admissible.
    RankineHugoniot,
}

fn build_piece(
    model: &ModelSpec,
    sigma: f64,
    spec: &PieceSpec,
    opts: &ProfileOptions,
) -> Result<SmoothSegment> {
    match *spec {
        PieceSpec::Constant { value } => {
            if model.g(value).abs() > zero_tolerance(model) {
                return Err(Error::NotAZero(value));
            }
            Ok(SmoothSegment::constant(value))
        }
        PieceSpec::Front {
            u_minus,
            u_plus,
            anchor,
        } => {
            let mut seg = smooth_front_solution(model, u_minus, u_plus, sigma, opts)?;
            let x = seg.position_of(anchor.u).ok_or_else(|| {
                Error::Degenerate(format!("anchor value {} outside the front range", anchor.u))
            })?;
            seg.translate(anchor.x - x);
            Ok(seg)
        }
        PieceSpec::Characteristic { u_star, anchor } => {
            let mut seg = characteristic_front_solution(model, u_star, sigma, opts)?;
            if let Some(a) = anchor {
                let x = seg.position_of(a.u).ok_or_else(|| {
                    Error::Degenerate(format!("anchor value {} outside the front range", a.u))
                })?;
                seg.translate(a.x - x);
            }
            Ok(seg)
        }
    }
}

/// Positions in `seg` where `h(ů) = level`, `h = f - σu`, found from sample sign changes.
fn rh_candidates(model: &ModelSpec, sigma: f64, seg: &SmoothSegment, level: f64) -> Vec<f64> {
    let h = |x: f64| {
        let u = seg.value(x);
        model.f(u) - sigma * u - level
    };
    let mut out = Vec::new();
    for w in seg.x.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ha, hb) = (h(a), h(b));
        if ha == 0.0 {
            out.push(a);
        } else if ha * hb < 0.0 {
            out.push(bisect(h, a, b, ha));
        }
    }
    out
}

/// Glues the pieces along the jumps at speed `sigma`.
pub fn build_composite(
    model: &ModelSpec,
    sigma: f64,
    pieces: &[PieceSpec],
    jumps: &[JumpSpec],
) -> Result<WaveProfile> {
    build_composite_with(model, sigma, pieces, jumps, &ProfileOptions::default())
}

pub fn build_composite_with(
    model: &ModelSpec,
    sigma: f64,
    pieces: &[PieceSpec],
    jumps: &[JumpSpec],
    opts: &ProfileOptions,
) -> Result<WaveProfile> {
    if pieces.is_empty() || jumps.len() + 1 != pieces.len() {
        return Err(Error::Config(format!(
            "{} pieces need {} jumps, got {}",
            pieces.len(),
            pieces.len().saturating_sub(1),
            jumps.len()
        )));
    }
    let mut segs = pieces
        .iter()
        .map(|p| build_piece(model, sigma, p, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut positions = Vec::with_capacity(jumps.len());
    for (i, j) in jumps.iter().enumerate() {
        let d = match *j {
            JumpSpec::Position { x } => x,
            JumpSpec::RankineHugoniot => {
                let (l, r) = (&segs[i], &segs[i + 1]);
                let (cst, other, other_is_right) = match (l.is_constant(), r.is_constant()) {
                    (true, false) => (l.u[0], r, true),
                    (false, true) => (r.u[0], l, false),
                    _ => {
                        return Err(Error::Unsupported(
                            "Rankine-Hugoniot placement needs exactly one constant neighbour"
                                .into(),
                        ))
                    }
                };
                let level = model.f(cst) - sigma * cst;
                let prev = positions.last().copied().unwrap_or(f64::NEG_INFINITY);
                let admissible: Vec<f64> = rh_candidates(model, sigma, other, level)
                    .into_iter()
                    .filter(|&x| x > prev)
                    .filter(|&x| {
                        let v = other.value(x);
                        let (ul, ur) = if other_is_right { (cst, v) } else { (v, cst) };
                        oleinik(model, sigma, ul, ur).ok
                    })
                    .collect();
                match admissible.as_slice() {
                    [x] => *x,
                    [] => {
                        return Err(Error::OleinikViolation {
                            position: f64::NAN,
                            detail: format!("no admissible Rankine-Hugoniot position for jump {i}"),
                        })
                    }
                    _ => {
                        return Err(Error::Unsupported(format!(
                            "jump {i}: several admissible Rankine-Hugoniot positions"
                        )))
                    }
                }
            }
        };
        if let Some(&p) = positions.last() {
            if d <= p {
                return Err(Error::Config("jump positions must increase".into()));
            }
        }
        positions.push(d);
    }
    let mut discontinuities = Vec::with_capacity(positions.len());
    for (i, &d) in positions.iter().enumerate() {
        let ul = segs[i].value(d);
        let ur = segs[i + 1].value(d);
        let residual = sigma * (ur - ul) - (model.f(ur) - model.f(ul));
        if residual.abs() > 1e-8 {
            return Err(Error::RhMismatch {
                position: d,
                residual,
            });
        }
        for v in [ul, ur] {
            if (model.df(v) - sigma).abs() <= 1e-9 {
                return Err(Error::CharacteristicLimit {
                    position: d,
                    value: v,
                });
            }
        }
        let check = oleinik(model, sigma, ul, ur);
        if !check.ok {
            return Err(Error::OleinikViolation {
                position: d,
                detail: format!(
                    "f'(ul)-σ = {:.3e}, σ-f'(ur) = {:.3e}, chord margin {:.3e}",
                    check.left_gap, check.right_gap, check.chord_margin
                ),
            });
        }
        discontinuities.push(Discontinuity {
            position: d,
            left: ul,
            right: ur,
            jump_ratio: jump_ratio(model, ul, ur),
        });
    }
    let n = segs.len();
    for (i, seg) in segs.iter_mut().enumerate() {
        seg.lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            positions[i - 1]
        };
        seg.hi = if i + 1 == n {
            f64::INFINITY
        } else {
            positions[i]
        };
        if seg.kind == SegmentKind::CharacteristicCrossing {
            let inside = seg.x_star.is_some_and(|xs| xs > seg.lo && xs < seg.hi);
            if !inside {
                seg.kind = SegmentKind::Monotone;
            }
        }
    }
    let mut characteristic_points = Vec::new();
    for seg in &segs {
        if seg.kind == SegmentKind::CharacteristicCrossing {
            let xs = seg
                .x_star
                .expect("crossing segment has a characteristic point");
            characteristic_points.push((xs, seg.value(xs)));
        }
    }
    // a non-constant outer piece must reach its endstate on the outer side
    let endstate_minus = segs[0].limits.0;
    let endstate_plus = segs[n - 1].limits.1;
    let halfwidth = segs
        .iter()
        .filter(|s| !s.is_constant())
        .flat_map(|s| [s.x[0].abs(), s.x[s.x.len() - 1].abs()])
        .chain(positions.iter().map(|p| p.abs()))
        .fold(0.0, f64::max);
    Ok(WaveProfile {
        sigma,
        segments: segs,
        discontinuities,
        endstate_minus,
        endstate_plus,
        characteristic_points,
        halfwidth,
    })
}

/// One clause of the non-degeneracy test with its witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseResult {
    pub clause: &'static str,
    pub location: f64,
    pub value: f64,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NondegeneracyReport {
    pub characteristic: Vec<ClauseResult>,
    pub discontinuities: Vec<ClauseResult>,
    pub endstates: Vec<ClauseResult>,
    /// Smallest strict Oleinik gap over all jumps (`+∞` without jumps).
    pub chord_margin: f64,
}

impl NondegeneracyReport {
    pub fn pass(&self) -> bool {
        self.characteristic
            .iter()
            .chain(&self.discontinuities)
            .chain(&self.endstates)
            .all(|c| c.ok)
    }

    pub fn failures(&self) -> Vec<&ClauseResult> {
        self.characteristic
            .iter()
            .chain(&self.discontinuities)
            .chain(&self.endstates)
            .filter(|c| !c.ok)
            .collect()
    }
}

/// Checks the non-degeneracy clauses; failures are reported, not raised.
pub fn check_nondegenerate(model: &ModelSpec, profile: &WaveProfile) -> NondegeneracyReport {
    let sigma = profile.sigma;
    let characteristic = profile
        .characteristic_points
        .iter()
        .map(|&(x, u)| {
            let f2 = model.ddf(u);
            ClauseResult {
                clause: "characteristic_curvature",
                location: x,
                value: f2,
                ok: f2.abs() >= DEGENERACY_TOL,
                detail: format!("f''({u}) = {f2}"),
            }
        })
        .collect();
    let mut chord_margin = f64::INFINITY;
    let discontinuities = profile
        .discontinuities
        .iter()
        .map(|d| {
            let c = oleinik(model, sigma, d.left, d.right);
            let limits_ok =
                (model.df(d.left) - sigma).abs() > 1e-9 && (model.df(d.right) - sigma).abs() > 1e-9;
            let margin = c.left_gap.min(c.right_gap).min(c.chord_margin);
            chord_margin = chord_margin.min(margin);
            ClauseResult {
                clause: "strict_oleinik",
                location: d.position,
                value: margin,
                ok: c.ok && limits_ok,
                detail: format!(
                    "f'(ul)-σ = {:.3e}, σ-f'(ur) = {:.3e}, chord margin {:.3e}",
                    c.left_gap, c.right_gap, c.chord_margin
                ),
            }
        })
        .collect();
    let mut endstates = Vec::new();
    let ends: Vec<(f64, f64)> =
        if profile.endstate_minus == profile.endstate_plus && profile.is_constant() {
            vec![(0.0, profile.endstate_minus)]
        } else {
            vec![
                (f64::NEG_INFINITY, profile.endstate_minus),
                (f64::INFINITY, profile.endstate_plus),
            ]
        };
    for (loc, u) in ends {
        let dg = model.dg(u);
        let a = model.df(u) - sigma;
        // the speed of a constant state is a free parameter, so only g' matters there
        let char_ok = profile.is_constant() || a.abs() > 1e-9;
        endstates.push(ClauseResult {
            clause: "endstate",
            location: loc,
            value: dg,
            ok: dg.abs() >= DEGENERACY_TOL && char_ok && model.g(u).abs() <= zero_tolerance(model),
            detail: format!("g'({u}) = {dg}, f'({u}) - σ = {a}"),
        });
    }
    NondegeneracyReport {
        characteristic,
        discontinuities,
        endstates,
        chord_margin,
    }
}

/// Default radius of the nearby-profile family.
pub const INVERTIBILITY_RADIUS: f64 = 0.1;

/// Solves `(f - σ·)(ů_r(d + ψ)) = (f - σ·)(ů_l(d + ψ - φ_l))` for the shift `ψ`
/// of the jump at `d` after the left piece is translated by `φ_l`.
pub fn nearby_profile_shift(
    model: &ModelSpec,
    profile: &WaveProfile,
    phi_left: f64,
    radius: f64,
) -> Result<f64> {
    let jump = *profile
        .discontinuities
        .first()
        .ok_or_else(|| Error::Unsupported("profile has no discontinuity".into()))?;
    if profile.discontinuities.len() != 1 {
        return Err(Error::Unsupported(
            "nearby-profile shift needs exactly one jump".into(),
        ));
    }
    if jump.jump_ratio >= -1e-9 {
        return Err(Error::Invertibility(format!(
            "jump ratio {} is not negative",
            jump.jump_ratio
        )));
    }
    if !(phi_left.abs() <= radius) {
        return Err(Error::NoConvergence(format!(
            "|phi_left| = {} exceeds the invertibility radius {radius}",
            phi_left.abs()
        )));
    }
    if phi_left == 0.0 {
        return Ok(0.0);
    }
    let (l, r) = (&profile.segments[0], &profile.segments[1]);
    let sigma = profile.sigma;
    let d = jump.position;
    let h = |u: f64| model.f(u) - sigma * u;
    let res = |psi: f64| h(r.value(d + psi)) - h(l.value(d + psi - phi_left));
    let dres = |psi: f64| model.g(r.value(d + psi)) - model.g(l.value(d + psi - phi_left));
    // bracket around the linear prediction
    let guess = {
        let gl = model.g(jump.left);
        gl * phi_left / (gl - model.g(jump.right))
    };
    let width = 4.0 * phi_left.abs() + 1e-12;
    let (mut a, mut b) = (guess - width, guess + width);
    let (mut fa, fb) = (res(a), res(b));
    if fa * fb > 0.0 {
        return Err(Error::NoConvergence("shift equation not bracketed".into()));
    }
    let mut psi = guess;
    for _ in 0..100 {
        let fp = res(psi);
        if fp == 0.0 {
            return Ok(psi);
        }
        if (fp < 0.0) == (fa < 0.0) {
            a = psi;
            fa = fp;
        } else {
            b = psi;
        }
        let newton = psi - fp / dres(psi);
        psi = if newton > a.min(b) && newton < a.max(b) {
            newton
        } else {
            0.5 * (a + b)
        };
        if (b - a).abs() < 1e-15 || fp.abs() < 1e-16 {
            return Ok(psi);
        }
    }
    Ok(psi)
}

/// Characteristic piece through `u⋆ = 0` glued at `x = 0` to the front from
/// `-3/4` to `-3`, for [`crate::model::catalog::burgers_damped_jump`] at `σ = 0`.
pub fn damped_jump_wave(model: &ModelSpec) -> Result<WaveProfile> {
    build_composite(
        model,
        0.0,
        &[
            PieceSpec::Characteristic {
                u_star: 0.0,
                anchor: Some(Anchor { x: 0.0, u: 0.97 }),
            },
            PieceSpec::Front {
                u_minus: -0.75,
                u_plus: -3.0,
                anchor: Anchor { x: 0.0, u: -0.97 },
            },
        ],
        &[JumpSpec::Position { x: 0.0 }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;

    fn residual(model: &ModelSpec, sigma: f64, u: f64, du: f64) -> f64 {
        ((model.df(u) - sigma) * du - model.g(u)).abs()
    }

    #[test]
    fn monostable_front_is_monotone_with_small_residual() {
        let m = catalog::burgers_monostable();
        let p = build_smooth_front(&m, 0.0, 1.0, 2.0, 60.0).unwrap();
        let s = &p.segments[0];
        assert!(s.u.windows(2).all(|w| w[1] > w[0]));
        for (&u, &du) in s.u.iter().zip(&s.du) {
            assert!(residual(&m, 2.0, u, du) <= 1e-7);
        }
        assert!(
            (p.value(p.halfwidth) - 1.0).abs() <= 1e-8 || (p.value(-p.halfwidth)).abs() <= 1e-8
        );
        assert_eq!(p.value(0.0), 0.5);
    }

    #[test]
    fn exact_monostable_profile() {
        // x = 2 ln u - ln(1-u) + ln 2 solves (u - 2) u' = u(u - 1) with u(0) = 1/2
        let m = catalog::burgers_monostable();
        let p = build_smooth_front(&m, 0.0, 1.0, 2.0, 60.0).unwrap();
        for &u in &[1e-6, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-7] {
            let x = 2.0 * f64::ln(u) - f64::ln(1.0 - u) + f64::ln(2.0);
            let got = p.value(x);
            assert!((got - u).abs() <= 1e-9, "u = {u}: got {got}");
        }
    }

    #[test]
    fn tails_keep_relative_accuracy() {
        let m = catalog::burgers_monostable();
        let p = build_smooth_front(&m, 0.0, 1.0, 2.0, 60.0).unwrap();
        for &x in &[30.0, 45.0, 80.0] {
            // 1 - u = 2 u² e^{-x} by fixed point
            let mut w: f64 = 0.0;
            for _ in 0..50 {
                w = 2.0 * (1.0 - w).powi(2) * f64::exp(-x);
            }
            // u' = u(u-1)/(u-2) = u w / (1 + w) keeps relative precision where u ≈ 1
            let want = (1.0 - w) * w / (1.0 + w);
            let got = p.eval(x)[1];
            // the last sample sits ~1e-12 below 1, where f64 spacing limits it to ~1e-4 relative
            assert!(
                ((got - want) / want).abs() < 2e-4,
                "x = {x}: {got} vs {want}"
            );
        }
        for &x in &[-40.0, -70.0] {
            let mut u: f64 = 0.0;
            for _ in 0..50 {
                u = (f64::exp(x) * (1.0 - u) / 2.0).sqrt();
            }
            let got = p.value(x);
            assert!(((got - u) / u).abs() < 1e-6, "x = {x}: {got} vs {u}");
        }
    }

    #[test]
    fn blocked_speed_is_rejected() {
        let m = catalog::burgers_monostable();
        assert!(matches!(
            build_smooth_front(&m, 0.0, 1.0, 0.5, 60.0),
            Err(Error::CharacteristicInRange { .. })
        ));
        let m = catalog::burgers_tristable();
        assert!(matches!(
            build_smooth_front(&m, 0.0, 2.0, -5.0, 60.0),
            Err(Error::NonConsecutiveZeros(_))
        ));
    }

    #[test]
    fn tanh_front() {
        let m = catalog::burgers_bistable();
        let p = build_characteristic_front(&m, 0.0, 0.0, 60.0).unwrap();
        let s = &p.segments[0];
        assert_eq!(s.kind, SegmentKind::CharacteristicCrossing);
        assert!((s.eval(0.0)[1] - 1.0).abs() < 1e-14);
        let mut worst = 0.0f64;
        for i in 0..=4000 {
            let x = -10.0 + 20.0 * i as f64 / 4000.0;
            let [u, du, ddu] = p.eval(x);
            let t = x.tanh();
            worst = worst.max((u - t).abs());
            assert!((du - (1.0 - t * t)).abs() < 1e-6);
            assert!((ddu + 2.0 * t * (1.0 - t * t)).abs() < 1e-5);
        }
        assert!(worst <= 1e-6, "max |u - tanh| = {worst}");
        assert_eq!(p.characteristic_points, vec![(0.0, 0.0)]);
        assert!((p.endstate_minus + 1.0).abs() < 1e-12 && (p.endstate_plus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_characteristic() {
        let m = ModelSpec::new(
            vec![0.0, 0.0, 0.0, 0.0, 0.25],
            vec![0.0, 1.0, 0.0, -1.0],
            None,
            (-2.0, 2.0),
        )
        .unwrap();
        assert!(matches!(
            build_characteristic_front(&m, 0.0, 0.0, 60.0),
            Err(Error::DegenerateCharacteristic { .. })
        ));
    }

    #[test]
    fn riemann_shocks() {
        let m = catalog::burgers_bistable();
        let (s, p) = build_riemann_shock(&m, 1.0, -1.0).unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(p.value(-1.0), 1.0);
        assert_eq!(p.value(1.0), -1.0);
        assert_eq!(p.discontinuities[0].jump_ratio, 0.0);
        let m3 = catalog::burgers_tristable();
        let (s, _) = build_riemann_shock(&m3, 1.0, 0.0).unwrap();
        assert_eq!(s, 0.5);
        assert!(matches!(
            build_riemann_shock(&m, -1.0, 1.0),
            Err(Error::OleinikViolation { .. })
        ));
    }

    #[test]
    fn composite_rh_mismatch() {
        let m = catalog::burgers_bistable();
        let pieces = [
            PieceSpec::Constant { value: 1.0 },
            PieceSpec::Constant { value: -1.0 },
        ];
        let err = build_composite(&m, 0.3, &pieces, &[JumpSpec::Position { x: 0.0 }]).unwrap_err();
        assert!(matches!(err, Error::RhMismatch { .. }));
        let ok = build_composite(&m, 0.0, &pieces, &[JumpSpec::Position { x: 0.0 }]).unwrap();
        assert_eq!(ok.discontinuities.len(), 1);
    }

    #[test]
    fn nearby_shift_examples() {
        let m = catalog::burgers_damped_jump();
        let p = damped_jump_wave(&m).unwrap();
        assert_eq!(
            nearby_profile_shift(&m, &p, 0.0, INVERTIBILITY_RADIUS).unwrap(),
            0.0
        );
        let d = p.discontinuities[0];
        let slope = m.g(d.left) / (m.g(d.left) - m.g(d.right));
        let e = 1e-5;
        let fd = (nearby_profile_shift(&m, &p, e, 0.1).unwrap()
            - nearby_profile_shift(&m, &p, -e, 0.1).unwrap())
            / (2.0 * e);
        assert!((fd - slope).abs() < 1e-6, "{fd} vs {slope}");
        assert!(matches!(
            nearby_profile_shift(&m, &p, 0.5, 0.1),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn two_jump_composite() {
        let m = catalog::quartic_two_jump();
        let pieces = [
            PieceSpec::Constant { value: -1.2 },
            PieceSpec::Characteristic {
                u_star: 0.0,
                anchor: None,
            },
            PieceSpec::Constant { value: 1.2 },
        ];
        let rh = [JumpSpec::RankineHugoniot, JumpSpec::RankineHugoniot];
        let p = build_composite(&m, 0.0, &pieces, &rh).unwrap();
        let b = 0.56f64.sqrt();
        let [d1, d2] = [p.discontinuities[0], p.discontinuities[1]];
        assert!((d1.right + b).abs() < 1e-9 && (d2.left - b).abs() < 1e-9);
        assert!((d1.position + d2.position).abs() < 1e-8);
        assert!(d1.jump_ratio < 0.0 && d2.jump_ratio < 0.0);
        assert_eq!(p.characteristic_points.len(), 1);
        let report = check_nondegenerate(&m, &p);
        assert!(report.pass(), "{:?}", report.failures());
        assert!(report.chord_margin > 0.0);
        // explicit positions away from the RH points are rejected
        let pos = [
            JumpSpec::Position { x: -0.3 },
            JumpSpec::Position { x: 0.3 },
        ];
        assert!(matches!(
            build_composite(&m, 0.0, &pieces, &pos),
            Err(Error::RhMismatch { .. })
        ));
    }
}
