//! Real polynomials with exact derivatives and robust real-root isolation.
//!
//! Roots are isolated recursively: the real roots of `p'` split an interval
//! into pieces on which `p` is monotone, and each piece holds at most one root
//! which bisection then pins down. Roots of even multiplicity show up as
//! critical points where `|p|` is below tolerance and are flagged as such.

use serde::{Deserialize, Serialize};

/// Absolute tolerance on polished roots.
pub const ROOT_TOL: f64 = 1e-10;

/// Polynomial stored lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly {
    coeffs: Vec<f64>,
}

/// A real root together with the value of the derivative there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub value: f64,
    pub slope: f64,
    /// True when the root is a critical point of the polynomial as well.
    pub multiple: bool,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn integral(&self) -> Poly {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(0.0);
        for (k, &a) in self.coeffs.iter().enumerate() {
            c.push(a / (k as f64 + 1.0));
        }
        Poly::new(c)
    }

    pub fn add_constant(&self, c: f64) -> Poly {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += c;
        Poly::new(coeffs)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(0.0)
                        + other.coeffs.get(k).copied().unwrap_or(0.0)
                })
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// `x ↦ p(a·x)`.
    pub fn compose_scale(&self, a: f64) -> Poly {
        let mut pow = 1.0;
        Poly::new(
            self.coeffs
                .iter()
                .map(|&c| {
                    let v = c * pow;
                    pow *= a;
                    v
                })
                .collect(),
        )
    }

    /// Taylor coefficients at `a`, so that `p(a + d) = Σ t_k d^k`.
    pub fn taylor_at(&self, a: f64) -> Vec<f64> {
        // repeated synthetic division
        let mut work = self.coeffs.clone();
        let n = work.len();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            // divide work[k..] by (x - a), remainder is the k-th coefficient
            let mut acc = 0.0;
            for j in (k..n).rev() {
                acc = acc * a + work[j];
                work[j] = acc;
            }
            out.push(work[k]);
        }
        out
    }

    /// `p(a + d) - p(a)` without cancellation when `d` is small.
    pub fn increment(&self, a: f64, d: f64) -> f64 {
        // (a+d)^k - a^k = (a+d)((a+d)^{k-1} - a^{k-1}) + d a^{k-1}
        let b = a + d;
        let mut diff = 0.0;
        let mut apow = 1.0;
        let mut acc = 0.0;
        for &c in self.coeffs.iter().skip(1) {
            diff = b * diff + d * apow;
            apow *= a;
            acc += c * diff;
        }
        acc
    }

    /// Quotient of synthetic division by `(x - r)`; the remainder is dropped.
    pub fn deflate(&self, r: f64) -> Poly {
        let n = self.coeffs.len();
        if n <= 1 {
            return Poly::zero();
        }
        let mut q = vec![0.0; n - 1];
        let mut acc = 0.0;
        for j in (1..n).rev() {
            acc = acc * r + self.coeffs[j];
            q[j - 1] = acc;
        }
        Poly::new(q)
    }

    /// All real roots in `[lo, hi]`, sorted and deduplicated.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Vec<Root> {
        let d = self.derivative();
        let mut out: Vec<Root> = Vec::new();
        if self.is_zero() || lo > hi {
            return out;
        }
        let scale = self
            .coeffs
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
            .max(1e-300);
        let crit: Vec<f64> = if self.degree() >= 2 {
            d.roots_in(lo, hi).into_iter().map(|r| r.value).collect()
        } else {
            Vec::new()
        };
        let mut knots = Vec::with_capacity(crit.len() + 2);
        knots.push(lo);
        knots.extend(crit.iter().copied().filter(|&c| c > lo && c < hi));
        knots.push(hi);
        let vanish = |x: f64| self.eval(x).abs() <= 1e-12 * scale;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if vanish(a) {
                push_root(&mut out, &d, a);
            }
            if fa * fb < 0.0 && !vanish(a) && !vanish(b) {
                let r = bisect(|x| self.eval(x), a, b, fa);
                push_root(&mut out, &d, r);
            }
        }
        if vanish(hi) {
            push_root(&mut out, &d, hi);
        }
        out
    }
}

fn push_root(out: &mut Vec<Root>, d: &Poly, x: f64) {
    if out.iter().any(|r| (r.value - x).abs() <= ROOT_TOL) {
        return;
    }
    let slope = d.eval(x);
    let dscale = d
        .coeffs
        .iter()
        .fold(0.0f64, |m, c| m.max(c.abs()))
        .max(1e-300);
    out.push(Root {
        value: x,
        slope,
        multiple: slope.abs() <= 1e-8 * dscale,
    });
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
}

/// Bisection on a bracketing interval down to adjacent floats.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derivative_matches_hand_expansion() {
        // (1 + 2u - 3u^2 + u^4)' = 2 - 6u + 4u^3
        let p = Poly::new(vec![1.0, 2.0, -3.0, 0.0, 1.0]);
        assert_eq!(p.derivative().coeffs(), &[2.0, -6.0, 0.0, 4.0]);
        assert_eq!(Poly::constant(3.0).derivative().coeffs(), &[0.0]);
    }

    #[test]
    fn roots_of_cubic_source() {
        let g = Poly::new(vec![0.0, 1.0, 0.0, -1.0]);
        let r = g.roots_in(-2.0, 2.0);
        let v: Vec<f64> = r.iter().map(|r| r.value).collect();
        assert_eq!(v.len(), 3);
        for (got, want) in v.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((r[1].slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_root_flagged() {
        // (u-1)^2 (u+1)
        let p = Poly::new(vec![1.0, -1.0, -1.0, 1.0]);
        let r = p.roots_in(-3.0, 3.0);
        assert_eq!(r.len(), 2);
        assert!(r[1].multiple);
        assert!(!r[0].multiple);
    }

    #[test]
    fn deflate_and_increment() {
        let p = Poly::new(vec![0.0, 2.0, -3.0, 1.0]); // u(u-1)(u-2)
        let q = p.deflate(1.0); // u(u-2)
        assert_eq!(q.coeffs(), &[0.0, -2.0, 1.0]);
        let a = 0.999_999;
        let d = 1e-9;
        let exact = p.eval(a + d) - p.eval(a);
        assert!((p.increment(a, d) - exact).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn derivative_matches_centered_difference(
            coeffs in prop::collection::vec(-3.0f64..3.0, 1..7),
            u in -2.0f64..2.0,
        ) {
            let p = Poly::new(coeffs);
            let h = 1e-5;
            let fd = (p.eval(u + h) - p.eval(u - h)) / (2.0 * h);
            let exact = p.derivative().eval(u);
            let scale = 1.0 + exact.abs() + p.coeffs().iter().map(|c| c.abs()).sum::<f64>();
            prop_assert!((fd - exact).abs() <= 1e-6 * scale);
        }

        #[test]
        fn roots_agree_with_sign_change_oracle(
            zs in prop::collection::btree_set(-40i32..40, 1..5),
            lead in prop::sample::select(vec![-2.0, -1.0, 0.5, 1.0, 3.0]),
        ) {
            // distinct roots on a 0.05 lattice
            let zs: Vec<f64> = zs.into_iter().map(|z| z as f64 * 0.05 + 0.013).collect();
            let mut p = Poly::constant(lead);
            for &z in &zs {
                p = Poly::new(
                    (0..=p.degree() + 1)
                        .map(|k| {
                            let lo = if k > 0 { p.coeffs().get(k - 1).copied().unwrap_or(0.0) } else { 0.0 };
                            let hi = p.coeffs().get(k).copied().unwrap_or(0.0);
                            lo - z * hi
                        })
                        .collect(),
                );
            }
            let found: Vec<f64> = p.roots_in(-2.5 + 0.318 * 1e-4, 2.5 + 0.318 * 1e-4).iter().map(|r| r.value).collect();
            // oracle: dense sign-change scan + bisection
            let n = 50_000;
            let mut oracle = Vec::new();
            let h = 5.0 / n as f64;
            // offset keeps the scan nodes off the root lattice
            for i in 0..n {
                let a = -2.5 + (i as f64 + 0.318) * h;
                let b = a + h;
                let (fa, fb) = (p.eval(a), p.eval(b));
                if fa == 0.0 { oracle.push(a); }
                else if fa * fb < 0.0 { oracle.push(bisect(|x| p.eval(x), a, b, fa)); }
            }
            prop_assert_eq!(found.len(), oracle.len());
            for (a, b) in found.iter().zip(oracle.iter()) {
                prop_assert!((a - b).abs() < 1e-4);
            }
            for w in found.windows(2) {
                prop_assert!(w[1] - w[0] > 1e-10);
            }
        }
    }
}
