//! Planar waves in two space dimensions with periodic `y`.
//!
//! For `∂t u + ∂x f(u) + ∂y F⊥(u) = g(u)` a planar profile `ů(x)` has nearby
//! genuinely two-dimensional waves `𝒰 = ů(Φ)` where `Φ + ψ₀(y - Z(Φ)) = x` and
//! `(f'(ů) - σ) Z' = F⊥'(ů) - σ⊥`. Perturbations are evolved through the
//! splitting `u(t, x, Y(t, x, η)) = v(t, x, η)`: `v` solves the one-dimensional
//! equation on each line `η` and `Y` is transported along the same
//! characteristics with source `F⊥'(v) - σ⊥`.

use std::io::Write;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::characteristics::{Bundle, Dynamics, Reference, SpeedRatio, State, Transverse};
use crate::model::ModelSpec;
use crate::poly::{bisect, Poly};
use crate::profile::{SegmentKind, SmoothSegment, WaveProfile};

/// Samples on a uniform `x` grid times a periodic `y` grid, stored row by row in `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field2D {
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub period: f64,
    pub ny: usize,
    pub values: Vec<f64>,
    /// Transverse positions `Y` paired with `values`, when known.
    pub y_pos: Option<Vec<f64>>,
}

impl Field2D {
    pub fn from_fn(
        x_domain: (f64, f64),
        nx: usize,
        period: f64,
        ny: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let dx = (x_domain.1 - x_domain.0) / (nx - 1) as f64;
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = j as f64 * period / ny as f64;
            for i in 0..nx {
                values.push(f(x_domain.0 + i as f64 * dx, y));
            }
        }
        Field2D {
            x0: x_domain.0,
            dx,
            nx,
            period,
            ny,
            values,
            y_pos: None,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.period / self.ny as f64
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// CSV with columns `x,y,u,Y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,u,Y")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                let yy = self.y_pos.as_ref().map_or(self.y(j), |p| p[k]);
                writeln!(w, "{},{},{},{}", self.x(i), self.y(j), self.values[k], yy)?;
            }
        }
        Ok(())
    }
}

/// Transverse flux `F⊥` from the model, zero when absent.
fn transverse_flux(model: &ModelSpec) -> (Poly, Poly) {
    match model.fperp_prime() {
        Some(p) => (p.integral(), p.clone()),
        None => (Poly::zero(), Poly::zero()),
    }
}

fn single_smooth_segment(profile: &WaveProfile) -> Result<&SmoothSegment> {
    match profile.segments.as_slice() {
        [s] if s.kind != SegmentKind::Constant => Ok(s),
        _ => Err(Error::Unsupported(
            "needs a single smooth non-constant profile".into(),
        )),
    }
}

/// Value where `Z` is anchored: the characteristic value, else the unstable endstate.
fn anchor_value(model: &ModelSpec, profile: &WaveProfile) -> Result<(f64, f64)> {
    if let [(x, u)] = profile.characteristic_points.as_slice() {
        return Ok((*x, *u));
    }
    let (um, up) = (profile.endstate_minus, profile.endstate_plus);
    match (model.dg(um) > 0.0, model.dg(up) > 0.0) {
        (false, true) => Ok((f64::INFINITY, up)),
        (true, false) => Ok((f64::NEG_INFINITY, um)),
        _ => Err(Error::Unsupported(
            "needs a characteristic point or exactly one unstable endstate".into(),
        )),
    }
}

/// Transverse speed selecting the planar wave family.
pub fn transverse_speed(model: &ModelSpec, profile: &WaveProfile) -> Result<f64> {
    let (fperp, dfperp) = transverse_flux(model);
    if profile.discontinuities.len() == 1 && profile.segments.iter().all(|s| s.is_constant()) {
        let d = profile.discontinuities[0];
        return Ok((fperp.eval(d.right) - fperp.eval(d.left)) / (d.right - d.left));
    }
    single_smooth_segment(profile)?;
    let (_, u) = anchor_value(model, profile)?;
    Ok(dfperp.eval(u))
}

/// Sampled `Z` with slopes, extended linearly beyond the samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZProfile {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub dz: Vec<f64>,
    #[serde(skip)]
    ratio: Option<SpeedRatio>,
}

impl ZProfile {
    /// `(Z, Z')` at `x`.
    pub fn eval(&self, x: f64) -> [f64; 2] {
        let n = self.x.len();
        if x <= self.x[0] {
            return [self.z[0] + self.dz[0] * (x - self.x[0]), self.dz[0]];
        }
        if x >= self.x[n - 1] {
            return [
                self.z[n - 1] + self.dz[n - 1] * (x - self.x[n - 1]),
                self.dz[n - 1],
            ];
        }
        let h = self.x[1] - self.x[0];
        let k = (((x - self.x[0]) / h) as usize).min(n - 2);
        let t = (x - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (p0, p1, m0, m1) = (self.z[k], self.z[k + 1], h * self.dz[k], h * self.dz[k + 1]);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let d = ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        [v, d]
    }

    /// `K(u) = (F⊥'(u) - σ⊥)/(f'(u) - σ)`.
    pub fn ratio(&self) -> Option<&SpeedRatio> {
        self.ratio.as_ref()
    }
}

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn gauss5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    GL5.iter().map(|(s, w)| w * f(c + r * s)).sum::<f64>() * r
}

/// Adaptive Gauss–Legendre quadrature with absolute tolerance `tol`.
fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (gauss5(f, a, m), gauss5(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= tol {
            return l + r;
        }
        rec(f, a, m, l, 0.5 * tol, depth - 1) + rec(f, m, b, r, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, gauss5(f, a, b), tol, 40)
}

/// Spacing of the `Z` samples.
pub const Z_SPACING: f64 = 0.02;

fn ratio_for(
    model: &ModelSpec,
    profile: &WaveProfile,
    sigma_perp: f64,
) -> Result<(SpeedRatio, f64)> {
    let (_, dfperp) = transverse_flux(model);
    let (x_anchor, u_anchor) = anchor_value(model, profile)?;
    let mismatch = dfperp.eval(u_anchor) - sigma_perp;
    if mismatch.abs() > 1e-9 {
        return Err(Error::SingularIntegrand(format!(
            "F⊥'({u_anchor}) - σ⊥ = {mismatch:e} does not vanish at the anchor"
        )));
    }
    let u_star = x_anchor.is_finite().then_some(u_anchor);
    Ok((
        SpeedRatio::new(model, profile.sigma, &dfperp, sigma_perp, u_star),
        x_anchor,
    ))
}

/// `Z(x) = ∫ K(ů)` from the characteristic point, or from the unstable infinity.
pub fn compute_z(model: &ModelSpec, profile: &WaveProfile, sigma_perp: f64) -> Result<ZProfile> {
    let seg = single_smooth_segment(profile)?;
    let (ratio, x_anchor) = ratio_for(model, profile, sigma_perp)?;
    let k = |x: f64| ratio.eval(seg.value(x));
    let (a, b) = (seg.x[0], seg.x[seg.x.len() - 1]);
    let n = ((b - a) / Z_SPACING).ceil() as usize;
    let h = (b - a) / n as f64;
    let x: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
    let dz: Vec<f64> = x.iter().map(|&x| k(x)).collect();
    let mut z = vec![0.0; n + 1];
    for i in 0..n {
        z[i + 1] = z[i] + adaptive(&k, x[i], x[i + 1], 1e-14);
    }
    let offset = if x_anchor.is_finite() {
        let i = (((x_anchor - a) / h) as usize).min(n - 1);
        z[i] + adaptive(&k, x[i], x_anchor, 1e-14)
    } else if x_anchor > 0.0 {
        z[n]
    } else {
        z[0]
    };
    for v in &mut z {
        *v -= offset;
    }
    if z.iter().chain(&dz).any(|v| !v.is_finite()) {
        return Err(Error::SingularIntegrand("non-finite Z".into()));
    }
    Ok(ZProfile {
        x,
        z,
        dz,
        ratio: Some(ratio),
    })
}

/// `∫ (F⊥' - σ⊥)/g` from the anchor value to `ů(x)`.
pub fn z_u_form(model: &ModelSpec, profile: &WaveProfile, sigma_perp: f64, x: f64) -> Result<f64> {
    let seg = single_smooth_segment(profile)?;
    let (_, dfperp) = transverse_flux(model);
    let (_, u0) = anchor_value(model, profile)?;
    // both vanish at the anchor value
    let num = dfperp.add_constant(-sigma_perp).deflate(u0);
    let den = model.source().deflate(u0);
    Ok(adaptive(
        &|u| num.eval(u) / den.eval(u),
        u0,
        seg.value(x),
        1e-12,
    ))
}

/// Periodic curve from uniform samples, interpolated by cubic Hermite with spectral slopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicCurve {
    pub period: f64,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

/// Spectral derivative of a periodic sample vector.
pub fn spectral_derivative(v: &[f64], period: f64) -> Vec<f64> {
    let n = v.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    let w = 2.0 * std::f64::consts::PI / period;
    for (k, c) in buf.iter_mut().enumerate() {
        let m = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        // the Nyquist mode has no real derivative
        let m = if n % 2 == 0 && k == n / 2 { 0.0 } else { m };
        *c *= Complex::new(0.0, w * m);
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

impl PeriodicCurve {
    pub fn new(values: Vec<f64>, period: f64) -> Self {
        let slopes = spectral_derivative(&values, period);
        PeriodicCurve {
            period,
            values,
            slopes,
        }
    }

    pub fn constant(c: f64, period: f64) -> Self {
        PeriodicCurve {
            period,
            values: vec![c; 4],
            slopes: vec![0.0; 4],
        }
    }

    pub fn from_fn(f: impl Fn(f64) -> f64, period: f64, n: usize) -> Self {
        Self::new(
            (0..n).map(|j| f(j as f64 * period / n as f64)).collect(),
            period,
        )
    }

    pub fn eval(&self, y: f64) -> [f64; 2] {
        let n = self.values.len();
        let h = self.period / n as f64;
        let s = (y / h).rem_euclid(n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let t = s - k as f64;
        let k1 = (k + 1) % n;
        let (t2, t3) = (t * t, t * t * t);
        let (p0, p1, m0, m1) = (
            self.values[k],
            self.values[k1],
            h * self.slopes[k],
            h * self.slopes[k1],
        );
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let d = ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        [v, d]
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.slopes.iter().fold(0.0, |a, s| a.max(s.abs()))
    }
}

/// A planar wave with its transverse data and a shift curve `ψ₀`.
#[derive(Debug, Clone)]
pub struct PlanarWave2D {
    pub profile: WaveProfile,
    pub sigma: f64,
    pub sigma_perp: f64,
    pub z: ZProfile,
    pub psi0: PeriodicCurve,
}

/// Bound on `|∂ₓψ|` for the inversion defining `Φ`.
pub const INVERSION_BOUND: f64 = 0.5;

impl PlanarWave2D {
    pub fn new(model: &ModelSpec, profile: &WaveProfile, psi0: PeriodicCurve) -> Result<Self> {
        let sigma_perp = transverse_speed(model, profile)?;
        let z = compute_z(model, profile, sigma_perp)?;
        let bound = psi0.max_abs_slope() * z.dz.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        if bound >= INVERSION_BOUND {
            return Err(Error::Invertibility(format!("|∂ₓψ| reaches {bound}")));
        }
        Ok(PlanarWave2D {
            profile: profile.clone(),
            sigma: profile.sigma,
            sigma_perp,
            z,
            psi0,
        })
    }

    /// `[Φ, Φ_x, Φ_y]` solving `Φ + ψ₀(y - Z(Φ)) = x`.
    pub fn phi(&self, x: f64, y: f64) -> [f64; 3] {
        let mut p = x - self.psi0.eval(y - self.z.eval(x)[0])[0];
        for _ in 0..50 {
            let [z, dz] = self.z.eval(p);
            let [s, ds] = self.psi0.eval(y - z);
            let r = p + s - x;
            let step = r / (1.0 - ds * dz);
            p -= step;
            if step.abs() <= 1e-15 * (1.0 + p.abs()) {
                break;
            }
        }
        let [z, dz] = self.z.eval(p);
        let ds = self.psi0.eval(y - z)[1];
        let den = 1.0 - ds * dz;
        [p, 1.0 / den, -ds / den]
    }

    /// `[𝒰, 𝒰_x, 𝒰_y]`.
    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        let [p, px, py] = self.phi(x, y);
        let [u, du, _] = self.profile.segments[0].eval(p);
        [u, du * px, du * py]
    }

    /// `(f'(𝒰) - σ)𝒰_x + (F⊥'(𝒰) - σ⊥)𝒰_y - g(𝒰)` by central differences of step `h`.
    pub fn residual(&self, model: &ModelSpec, x: f64, y: f64, h: f64) -> f64 {
        let u = self.eval(x, y)[0];
        let ux = (self.eval(x + h, y)[0] - self.eval(x - h, y)[0]) / (2.0 * h);
        let uy = (self.eval(x, y + h)[0] - self.eval(x, y - h)[0]) / (2.0 * h);
        let fp = model.fperp_prime().map_or(0.0, |p| p.eval(u));
        (model.df(u) - self.sigma) * ux + (fp - self.sigma_perp) * uy - model.g(u)
    }
}

/// `𝒰` on a grid with the largest traveling-wave residual over the nodes.
pub fn build_multid_profile(
    model: &ModelSpec,
    wave: &PlanarWave2D,
    x_domain: (f64, f64),
    nx: usize,
    ny: usize,
) -> (Field2D, f64) {
    let period = wave.psi0.period;
    let field = Field2D::from_fn(x_domain, nx, period, ny, |x, y| wave.eval(x, y)[0]);
    let residual = (0..ny)
        .into_par_iter()
        .map(|j| {
            (0..nx)
                .map(|i| wave.residual(model, field.x(i), field.y(j), 1e-4).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    (field, residual)
}

/// Index of the single sample interval where `vals` changes sign.
fn sign_change(vals: &[f64], a: f64, h: f64) -> Result<usize> {
    let mut found = None;
    for i in 0..vals.len() - 1 {
        let (p, q) = (vals[i], vals[i + 1]);
        if p == 0.0 && q == 0.0 {
            return Err(Error::LevelSet(format!(
                "plateau at the level near x = {}",
                a + i as f64 * h
            )));
        }
        if (p < 0.0 && q >= 0.0) || (p > 0.0 && q <= 0.0) {
            if found.is_some() {
                return Err(Error::LevelSet("several crossings".into()));
            }
            found = Some(i);
        }
    }
    found.ok_or_else(|| Error::LevelSet("no crossing".into()))
}

/// Single transversal crossing of `level` by `f` on `[a, b]` sampled at `n` points.
pub fn crossing(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize, level: f64) -> Result<f64> {
    let h = (b - a) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|i| f(a + i as f64 * h) - level).collect();
    let i = sign_change(&vals, a, h)?;
    let (xa, xb) = (a + i as f64 * h, a + (i + 1) as f64 * h);
    Ok(bisect(|x| f(x) - level, xa, xb, vals[i]))
}

/// Crossing of `level` by uniform samples, located on the local six-point interpolant.
pub fn sampled_crossing(values: &[f64], x0: f64, dx: f64, level: f64) -> Result<f64> {
    let n = values.len();
    if n < 6 {
        return Err(Error::LevelSet("need at least six samples".into()));
    }
    let vals: Vec<f64> = values.iter().map(|v| v - level).collect();
    let i = sign_change(&vals, x0, dx)?;
    let lo = i.saturating_sub(2).min(n - 6);
    let nodes: Vec<(f64, f64)> = (lo..lo + 6)
        .map(|k| (x0 + k as f64 * dx, vals[k]))
        .collect();
    let lagrange = |x: f64| {
        nodes
            .iter()
            .enumerate()
            .map(|(k, &(xk, vk))| {
                vk * nodes
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != k)
                    .map(|(_, &(xm, _))| (x - xm) / (xk - xm))
                    .product::<f64>()
            })
            .sum::<f64>()
    };
    let (xa, xb) = (x0 + i as f64 * dx, x0 + (i + 1) as f64 * dx);
    Ok(bisect(lagrange, xa, xb, vals[i]))
}

/// Position of the `u_star` level set on every row of `u0`.
pub fn characteristic_levelset(u0: &Field2D, u_star: f64) -> Result<Vec<f64>> {
    (0..u0.ny)
        .map(|j| sampled_crossing(u0.row(j), u0.x0, u0.dx, u_star))
        .collect()
}

/// Grid and step controls of the split evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub x_domain: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub period: f64,
    pub dt: f64,
    pub output_dt: f64,
}

impl SplitOptions {
    pub fn dx(&self) -> f64 {
        (self.x_domain.1 - self.x_domain.0) / (self.nx - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx)
            .map(|i| self.x_domain.0 + i as f64 * self.dx())
            .collect()
    }

    pub fn eta(&self, j: usize) -> f64 {
        j as f64 * self.period / self.ny as f64
    }
}

/// Label-grid data at one output time, row-major in `η`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSnapshot {
    pub t: f64,
    pub v: Vec<f64>,
    pub vx: Vec<f64>,
    pub y: Vec<f64>,
    pub yx: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitRun {
    pub opts: SplitOptions,
    pub sigma: f64,
    pub sigma_perp: f64,
    /// Level set of the datum on each line, the shift of its reference.
    pub psi_char: Vec<f64>,
    pub snapshots: Vec<LabelSnapshot>,
}

/// Evolves `u0(x, y) = [u, ∂ₓu]` near the planar wave `profile` up to `horizon`.
pub fn evolve_planar_split(
    model: &ModelSpec,
    profile: &WaveProfile,
    u0: &(dyn Fn(f64, f64) -> [f64; 2] + Sync),
    horizon: f64,
    opts: &SplitOptions,
) -> Result<SplitRun> {
    let seg = single_smooth_segment(profile)?;
    let sigma = profile.sigma;
    let sigma_perp = transverse_speed(model, profile)?;
    let z = compute_z(model, profile, sigma_perp)?;
    let (_, dfperp) = transverse_flux(model);
    let transverse = Transverse {
        fperp: dfperp.clone(),
        dfperp: dfperp.derivative(),
        sigma_perp,
        ratio: z.ratio().cloned().expect("Z carries its ratio"),
    };
    let (x_anchor, u_anchor) = anchor_value(model, profile)?;
    let (a, b) = opts.x_domain;
    let psi_char: Vec<f64> = (0..opts.ny)
        .map(|j| {
            if x_anchor.is_finite() {
                let eta = opts.eta(j);
                crossing(|x| u0(x, eta)[0], a, b, opts.nx, u_anchor).map(|x| x - x_anchor)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_>>()?;
    let steps = (horizon / opts.dt).round().max(1.0) as usize;
    let every = (opts.output_dt / opts.dt).round().max(1.0) as usize;
    let xs = opts.xs();
    let lines: Vec<Vec<(f64, Vec<[f64; 4]>)>> = (0..opts.ny)
        .into_par_iter()
        .map(|j| -> Result<Vec<(f64, Vec<[f64; 4]>)>> {
            let eta = opts.eta(j);
            let shift = psi_char[j];
            let reference = Reference::Segment {
                segment: seg.clone(),
                shift,
            };
            let dynamics =
                Dynamics::new(model, sigma, reference.clone()).with_transverse(&transverse);
            let zr = &z;
            let seed = Box::new(move |x0: f64| -> State {
                let [u, ux] = u0(x0, eta);
                let [ub, dub, _] = seg.eval(x0 - shift);
                [x0, u - ub, ux - dub, 0.0, eta - zr.eval(x0 - shift)[0], 0.0]
            });
            let mut bundle =
                Bundle::new(dynamics, seed, opts.x_domain, opts.dx(), opts.dt, horizon)?;
            let sample = |bundle: &Bundle| -> Result<(f64, Vec<[f64; 4]>)> {
                let s = bundle.sample_sorted(&xs)?;
                let tr = &transverse;
                Ok((
                    bundle.time(),
                    xs.iter()
                        .zip(s)
                        .map(|(&x, s)| {
                            let [ub, dub, _] = reference.eval(x);
                            [
                                ub + s.d,
                                dub + s.dx,
                                zr.eval(x - shift)[0] + s.e,
                                tr.ratio.eval(ub) + s.ex,
                            ]
                        })
                        .collect(),
                ))
            };
            let mut out = vec![sample(&bundle)?];
            for k in 1..=steps {
                bundle.step()?;
                if k % every == 0 || k == steps {
                    out.push(sample(&bundle)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let (nx, ny) = (opts.nx, opts.ny);
    let snapshots = (0..lines[0].len())
        .map(|k| {
            let mut s = LabelSnapshot {
                t: lines[0][k].0,
                v: Vec::with_capacity(nx * ny),
                vx: Vec::with_capacity(nx * ny),
                y: Vec::with_capacity(nx * ny),
                yx: Vec::with_capacity(nx * ny),
            };
            for line in &lines {
                for q in &line[k].1 {
                    s.v.push(q[0]);
                    s.vx.push(q[1]);
                    s.y.push(q[2]);
                    s.yx.push(q[3]);
                }
            }
            s
        })
        .collect();
    Ok(SplitRun {
        opts: *opts,
        sigma,
        sigma_perp,
        psi_char,
        snapshots,
    })
}

impl SplitRun {
    /// `u` on the regular `(x, y)` grid by monotone linear inversion of `η ↦ Y`.
    pub fn reconstruct(&self, k: usize) -> Result<Field2D> {
        let o = &self.opts;
        let s = &self.snapshots[k];
        let (nx, ny, p) = (o.nx, o.ny, o.period);
        let mut values = vec![0.0; nx * ny];
        for i in 0..nx {
            // one period of (Y, v) along η, extended by a neighbour on each side
            let col: Vec<(f64, f64)> = (0..ny)
                .map(|j| (s.y[j * nx + i], s.v[j * nx + i]))
                .collect();
            for j in 0..ny {
                let (a, b) = (
                    col[j].0,
                    if j + 1 < ny {
                        col[j + 1].0
                    } else {
                        col[0].0 + p
                    },
                );
                if b <= a {
                    return Err(Error::Invertibility(format!(
                        "Y not increasing in η at x = {}, t = {}",
                        o.x_domain.0 + i as f64 * o.dx(),
                        s.t
                    )));
                }
            }
            let at = |m: isize| -> (f64, f64) {
                let q = m.rem_euclid(ny as isize) as usize;
                let wraps = (m - q as isize) / ny as isize;
                (col[q].0 + wraps as f64 * p, col[q].1)
            };
            let mut m = -(ny as isize);
            for j in 0..ny {
                let target = o.eta(j);
                while at(m + 1).0 <= target {
                    m += 1;
                }
                while at(m).0 > target {
                    m -= 1;
                }
                let (y0, v0) = at(m);
                let (y1, v1) = at(m + 1);
                values[j * nx + i] = v0 + (v1 - v0) * (target - y0) / (y1 - y0);
            }
        }
        Ok(Field2D {
            x0: o.x_domain.0,
            dx: o.dx(),
            nx,
            period: p,
            ny,
            values,
            y_pos: None,
        })
    }

    /// `sup max(|u - 𝒰|, |∂ₓ(u - 𝒰)|)` evaluated at the label nodes.
    pub fn distance_to(&self, wave: &PlanarWave2D, k: usize) -> f64 {
        let o = &self.opts;
        let s = &self.snapshots[k];
        let (nx, ny, p) = (o.nx, o.ny, o.period);
        let mut w = vec![0.0; nx * ny];
        let mut wx_label = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let q = j * nx + i;
                let x = o.x_domain.0 + i as f64 * o.dx();
                let [u, ux, uy] = wave.eval(x, s.y[q]);
                w[q] = s.v[q] - u;
                wx_label[q] = s.vx[q] - (ux + uy * s.yx[q]);
            }
        }
        let mut sup: f64 = 0.0;
        for i in 0..nx {
            let col_w: Vec<f64> = (0..ny).map(|j| w[j * nx + i]).collect();
            let col_y: Vec<f64> = (0..ny).map(|j| s.y[j * nx + i] - o.eta(j)).collect();
            let w_eta = spectral_derivative(&col_w, p);
            let y_eta = spectral_derivative(&col_y, p);
            for j in 0..ny {
                let q = j * nx + i;
                let wx = wx_label[q] - w_eta[j] * s.yx[q] / (1.0 + y_eta[j]);
                sup = sup.max(w[q].abs()).max(wx.abs());
            }
        }
        sup
    }

    /// Level set of `u_star` on every row of the reconstruction at output `k`.
    pub fn levelset(&self, k: usize, u_star: f64) -> Result<Vec<f64>> {
        characteristic_levelset(&self.reconstruct(k)?, u_star)
    }
}

/// Steady shift surface of a planar jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhSurface {
    pub psi: Vec<f64>,
    pub steps: usize,
    /// Largest difference from the run restarted at a second datum.
    pub restart_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhSurfaceOptions {
    pub ny: usize,
    pub period: f64,
    pub dt: f64,
    pub max_time: f64,
    pub tol: f64,
    /// Amplitude of the second datum `a cos(2πy/P)`.
    pub restart_amplitude: f64,
}

impl Default for RhSurfaceOptions {
    fn default() -> Self {
        RhSurfaceOptions {
            ny: 64,
            period: 2.0 * std::f64::consts::PI,
            dt: 0.01,
            max_time: 200.0,
            tol: 1e-9,
            restart_amplitude: 0.01,
        }
    }
}

/// Relaxes `[ů] ∂t ψ + [F⊥(𝒰) - σ⊥𝒰] ∂y ψ = [f(𝒰) - σ𝒰]` to its steady state, where the
/// brackets compare `right` and `left` at `(d + ψ(y), y)`.
pub fn solve_rh_surface(
    model: &ModelSpec,
    profile: &WaveProfile,
    left: &(dyn Fn(f64, f64) -> f64 + Sync),
    right: &(dyn Fn(f64, f64) -> f64 + Sync),
    opts: &RhSurfaceOptions,
) -> Result<RhSurface> {
    let jump = match profile.discontinuities.as_slice() {
        [d] => *d,
        _ => return Err(Error::Unsupported("needs exactly one discontinuity".into())),
    };
    let sigma = profile.sigma;
    let (fperp, _) = transverse_flux(model);
    let sigma_perp = (fperp.eval(jump.right) - fperp.eval(jump.left)) / (jump.right - jump.left);
    let bracket = jump.right - jump.left;
    let h = |u: f64| model.f(u) - sigma * u;
    let hp = |u: f64| fperp.eval(u) - sigma_perp * u;
    let dy = opts.period / opts.ny as f64;
    let n = opts.ny;
    let rhs = |psi: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let y = j as f64 * dy;
                let x = jump.position + psi[j];
                let (ul, ur) = (left(x, y), right(x, y));
                let c = (hp(ur) - hp(ul)) / bracket;
                let (jm, jp) = ((j + n - 1) % n, (j + 1) % n);
                let dpsi = if c > 0.0 {
                    (psi[j] - psi[jm]) / dy
                } else {
                    (psi[jp] - psi[j]) / dy
                };
                (h(ur) - h(ul)) / bracket - c * dpsi
            })
            .collect()
    };
    let relax = |mut psi: Vec<f64>| -> Result<(Vec<f64>, usize)> {
        let steps = (opts.max_time / opts.dt).ceil() as usize;
        for step in 1..=steps {
            let k1 = rhs(&psi);
            let mid: Vec<f64> = psi
                .iter()
                .zip(&k1)
                .map(|(p, k)| p + 0.5 * opts.dt * k)
                .collect();
            let k2 = rhs(&mid);
            for (p, k) in psi.iter_mut().zip(&k2) {
                *p += opts.dt * k;
            }
            let rate = k2.iter().fold(0.0f64, |a, k| a.max(k.abs()));
            if !rate.is_finite() {
                return Err(Error::NoConvergence("shift surface blew up".into()));
            }
            if rate < opts.tol {
                return Ok((psi, step));
            }
        }
        Err(Error::NoConvergence(format!(
            "shift surface not steady by t = {}",
            opts.max_time
        )))
    };
    let (psi, steps) = relax(vec![0.0; n])?;
    let second = (0..n)
        .map(|j| {
            opts.restart_amplitude
                * (2.0 * std::f64::consts::PI * j as f64 * dy / opts.period).cos()
        })
        .collect();
    let (psi2, _) = relax(second)?;
    let restart_gap = psi
        .iter()
        .zip(&psi2)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    Ok(RhSurface {
        psi,
        steps,
        restart_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::characteristics::{evolve_perturbed, GridOptions};
    use crate::model::catalog;
    use crate::profile::{
        build_characteristic_front, build_riemann_shock, build_smooth_front, nearby_profile_shift,
    };
    use std::f64::consts::PI;

    fn tanh_model(b: f64) -> ModelSpec {
        catalog::burgers_bistable()
            .with_fperp_prime(vec![0.0, b])
            .unwrap()
    }

    fn tanh_profile(m: &ModelSpec) -> WaveProfile {
        build_characteristic_front(m, 0.0, 0.0, 60.0).unwrap()
    }

    #[test]
    fn transverse_speed_examples() {
        let m = tanh_model(0.7);
        assert_eq!(transverse_speed(&m, &tanh_profile(&m)).unwrap(), 0.0);
        let (_, shock) = build_riemann_shock(&m, 1.0, -1.0).unwrap();
        assert_eq!(transverse_speed(&m, &shock).unwrap(), 0.0);
        let mono = catalog::burgers_monostable()
            .with_fperp_prime(vec![0.0, 0.7])
            .unwrap();
        let p = build_smooth_front(&mono, 0.0, 1.0, 2.0, 60.0).unwrap();
        assert!((transverse_speed(&mono, &p).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn z_is_linear_on_the_tanh_front() {
        let m = tanh_model(0.5);
        let p = tanh_profile(&m);
        let z = compute_z(&m, &p, 0.0).unwrap();
        for x in [-30.0, -3.0, -0.2, 0.0, 1.0, 7.5, 40.0] {
            let [v, d] = z.eval(x);
            assert!(
                (v - 0.5 * x).abs() < 1e-9 && (d - 0.5).abs() < 1e-9,
                "{x}: {v} {d}"
            );
        }
        let zero = compute_z(&tanh_model(0.0), &p, 0.0).unwrap();
        assert!(zero.z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn z_forms_agree() {
        for (m, p) in [
            (
                tanh_model(0.5)
                    .with_fperp_prime(vec![0.0, 0.5, 0.3])
                    .unwrap(),
                None,
            ),
            (
                catalog::burgers_monostable()
                    .with_fperp_prime(vec![0.1, 0.4, -0.2])
                    .unwrap(),
                Some(
                    build_smooth_front(&catalog::burgers_monostable(), 0.0, 1.0, 2.0, 60.0)
                        .unwrap(),
                ),
            ),
        ] {
            let p = p.unwrap_or_else(|| tanh_profile(&m));
            let sp = transverse_speed(&m, &p).unwrap();
            let z = compute_z(&m, &p, sp).unwrap();
            for x in [-4.0, -1.0, 0.3, 2.0, 5.0] {
                let u = z_u_form(&m, &p, sp, x).unwrap();
                assert!(
                    (z.eval(x)[0] - u).abs() <= 1e-6,
                    "{x}: {} vs {u}",
                    z.eval(x)[0]
                );
            }
        }
    }

    #[test]
    fn z_rejects_inconsistent_speed() {
        let m = tanh_model(0.5);
        assert!(matches!(
            compute_z(&m, &tanh_profile(&m), 0.3),
            Err(Error::SingularIntegrand(_))
        ));
    }

    #[test]
    fn multid_profile_examples() {
        let m = tanh_model(0.0);
        let p = tanh_profile(&m);
        let flat = PlanarWave2D::new(&m, &p, PeriodicCurve::constant(0.0, 2.0 * PI)).unwrap();
        assert_eq!(flat.eval(0.7, 1.0)[0], p.value(0.7));
        let shifted = PlanarWave2D::new(&m, &p, PeriodicCurve::constant(0.4, 2.0 * PI)).unwrap();
        assert!((shifted.eval(0.7, 1.0)[0] - p.value(0.3)).abs() < 1e-14);
        let psi0 = PeriodicCurve::from_fn(|y| 0.05 * y.cos(), 2.0 * PI, 32);
        let wave = PlanarWave2D::new(&m, &p, psi0).unwrap();
        let (field, residual) = build_multid_profile(&m, &wave, (-6.0, 6.0), 121, 16);
        assert!(residual <= 1e-5, "{residual}");
        for j in 0..16 {
            for i in (0..121).step_by(10) {
                let (x, y) = (field.x(i), field.y(j));
                assert!((field.get(i, j) - (x - 0.05 * y.cos()).tanh()).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn multid_profile_with_transverse_flux_solves_the_wave_equation() {
        let m = tanh_model(0.5);
        let p = tanh_profile(&m);
        let wave = PlanarWave2D::new(
            &m,
            &p,
            PeriodicCurve::from_fn(|y| 0.05 * y.cos(), 2.0 * PI, 32),
        )
        .unwrap();
        let (_, residual) = build_multid_profile(&m, &wave, (-6.0, 6.0), 61, 16);
        assert!(residual <= 1e-5, "{residual}");
        // the u⋆ level set is the shift curve itself
        for y in [0.0, 1.0, 2.5] {
            assert!(wave.eval(wave.psi0.eval(y)[0], y)[0].abs() < 1e-12);
        }
    }

    #[test]
    fn steep_shift_is_not_invertible() {
        let m = tanh_model(0.5);
        let p = tanh_profile(&m);
        let psi0 = PeriodicCurve::from_fn(|y| 2.0 * y.cos(), 2.0 * PI, 32);
        assert!(matches!(
            PlanarWave2D::new(&m, &p, psi0),
            Err(Error::Invertibility(_))
        ));
    }

    #[test]
    fn levelset_examples() {
        let f = Field2D::from_fn((-5.0, 5.0), 201, 2.0 * PI, 8, |x, y| {
            (x - 0.05 * y.cos()).tanh()
        });
        let ls = characteristic_levelset(&f, 0.0).unwrap();
        for (j, v) in ls.iter().enumerate() {
            assert!((v - 0.05 * f.y(j).cos()).abs() < 1e-8, "{v}");
        }
        let flat = Field2D::from_fn((-5.0, 5.0), 201, 2.0 * PI, 4, |x, _| x.tanh());
        assert!(characteristic_levelset(&flat, 0.0)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-12));
        let plateau = Field2D::from_fn((-5.0, 5.0), 201, 2.0 * PI, 4, |x: f64, _| x.max(0.0));
        assert!(matches!(
            characteristic_levelset(&plateau, 0.0),
            Err(Error::LevelSet(_))
        ));
    }

    #[test]
    fn spectral_derivative_of_cosine() {
        let v: Vec<f64> = (0..16)
            .map(|j| (j as f64 * 2.0 * PI / 16.0).cos())
            .collect();
        let d = spectral_derivative(&v, 2.0 * PI);
        for (j, x) in d.iter().enumerate() {
            assert!((x + (j as f64 * 2.0 * PI / 16.0).sin()).abs() < 1e-12);
        }
    }

    fn split_opts() -> SplitOptions {
        SplitOptions {
            x_domain: (-6.0, 6.0),
            nx: 241,
            ny: 8,
            period: 2.0 * PI,
            dt: 0.02,
            output_dt: 0.5,
        }
    }

    #[test]
    fn y_independent_datum_matches_one_dimensional_run() {
        let m = tanh_model(0.5);
        let p = tanh_profile(&m);
        let seg = p.segments[0].clone();
        let dev = |x: f64| [0.02 / x.cosh(), -0.02 * x.tanh() / x.cosh()];
        let u0 = move |x: f64, _y: f64| {
            let [u, du, _] = seg.eval(x);
            let [d, dd] = dev(x);
            [u + d, du + dd]
        };
        let o = split_opts();
        let run = evolve_planar_split(&m, &p, &u0, 2.0, &o).unwrap();
        // the reference of the 1-D run is shifted to the datum's level set like the split run
        let shift = run.psi_char[0];
        let seg = p.segments[0].clone();
        let dev1 = move |x: f64| {
            let [u, du] = u0(x, 0.0);
            let [ub, dub, _] = seg.eval(x - shift);
            [u - ub, du - dub]
        };
        let g = GridOptions {
            domain: o.x_domain,
            n: o.nx,
            dt: o.dt,
            output_dt: o.output_dt,
        };
        let one = evolve_perturbed(
            &m,
            0.0,
            Reference::Segment {
                segment: p.segments[0].clone(),
                shift,
            },
            dev1,
            2.0,
            &g,
        )
        .unwrap();
        let rec = run.reconstruct(run.snapshots.len() - 1).unwrap();
        let last = one.last();
        for j in 0..o.ny {
            for i in 0..o.nx {
                assert!((rec.get(i, j) - last.u.values[i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn exact_wave_is_stationary_and_levelset_is_kept() {
        let m = tanh_model(0.5);
        let p = tanh_profile(&m);
        let psi0 = PeriodicCurve::from_fn(|y| 0.05 * y.cos(), 2.0 * PI, 8);
        let wave = PlanarWave2D::new(&m, &p, psi0).unwrap();
        let w = wave.clone();
        let u0 = move |x: f64, y: f64| {
            let [u, ux, _] = w.eval(x, y);
            [u, ux]
        };
        let o = split_opts();
        let run = evolve_planar_split(&m, &p, &u0, 2.0, &o).unwrap();
        let k = run.snapshots.len() - 1;
        assert!(
            run.distance_to(&wave, k) < 1e-5,
            "{}",
            run.distance_to(&wave, k)
        );
        let ls = run.levelset(k, 0.0).unwrap();
        for (j, v) in ls.iter().enumerate() {
            assert!((v - 0.05 * o.eta(j).cos()).abs() < 2.0 * o.dx());
        }
    }

    #[test]
    fn rh_surface_examples() {
        let m = catalog::burgers_damped_jump();
        let p = crate::profile::damped_jump_wave(&m).unwrap();
        let (l, r) = (p.segments[0].clone(), p.segments[1].clone());
        let (l2, r2) = (l.clone(), r.clone());
        let opts = RhSurfaceOptions {
            ny: 16,
            ..Default::default()
        };
        let flat = solve_rh_surface(
            &m,
            &p,
            &move |x, _| l2.value(x),
            &move |x, _| r2.value(x),
            &opts,
        )
        .unwrap();
        assert!(flat.psi.iter().all(|v| v.abs() < 1e-7));
        let phi = 0.02;
        let (l3, r3) = (l.clone(), r.clone());
        let s = solve_rh_surface(
            &m,
            &p,
            &move |x, _| l3.value(x - phi),
            &move |x, _| r3.value(x),
            &opts,
        )
        .unwrap();
        let want = nearby_profile_shift(&m, &p, phi, 0.1).unwrap();
        assert!(
            s.psi.iter().all(|v| (v - want).abs() < 1e-6),
            "{:?} vs {want}",
            &s.psi[..2]
        );
        assert!(s.restart_gap <= 1e-7);
    }
}
