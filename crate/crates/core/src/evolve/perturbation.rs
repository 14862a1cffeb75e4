use serde::{Deserialize, Serialize};

/// Quintic smoothstep `6t⁵ - 15t⁴ + 10t³` clamped to `[0, 1]`, with its derivative.
pub fn smoothstep(t: f64) -> [f64; 2] {
    if t <= 0.0 {
        return [0.0, 0.0];
    }
    if t >= 1.0 {
        return [1.0, 0.0];
    }
    let t2 = t * t;
    [
        t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
    ]
}

fn one() -> f64 {
    1.0
}

/// Closed-form initial deviations `d(x)` with exact derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Zero,
    /// `a sech^p((x - c)/w)`
    Sech {
        amplitude: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        power: f64,
    },
    /// `a e^{-((x - c)/w)²}`
    Gaussian {
        amplitude: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// `a (1 - s²)³` with `s = (2x - lo - hi)/(hi - lo)`, zero outside `(lo, hi)`.
    Bump {
        amplitude: f64,
        lo: f64,
        hi: f64,
    },
    /// `a e^{-r x} (1 + x₊)^{-p} S((x - onset)/ramp)`
    Tail {
        amplitude: f64,
        rate: f64,
        #[serde(default)]
        power: f64,
        #[serde(default)]
        onset: f64,
        #[serde(default = "one")]
        ramp: f64,
    },
    Sum {
        terms: Vec<Perturbation>,
    },
}

impl Perturbation {
    /// `(d, d')` at `x`.
    pub fn eval(&self, x: f64) -> [f64; 2] {
        match *self {
            Perturbation::Zero => [0.0, 0.0],
            Perturbation::Sech {
                amplitude,
                center,
                width,
                power,
            } => {
                let z = (x - center) / width;
                if z.abs() > 700.0 {
                    return [0.0, 0.0];
                }
                let s = 1.0 / z.cosh();
                let v = amplitude * s.powf(power);
                [v, -power * v * z.tanh() / width]
            }
            Perturbation::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let z = (x - center) / width;
                let v = amplitude * (-z * z).exp();
                [v, -2.0 * z * v / width]
            }
            Perturbation::Bump { amplitude, lo, hi } => {
                if x <= lo || x >= hi {
                    return [0.0, 0.0];
                }
                let s = (2.0 * x - lo - hi) / (hi - lo);
                let q = 1.0 - s * s;
                [
                    amplitude * q.powi(3),
                    amplitude * 3.0 * q * q * (-2.0 * s) * 2.0 / (hi - lo),
                ]
            }
            Perturbation::Tail {
                amplitude,
                rate,
                power,
                onset,
                ramp,
            } => {
                let [c, dc] = smoothstep((x - onset) / ramp);
                if c == 0.0 {
                    return [0.0, 0.0];
                }
                let xp = x.max(0.0);
                let alg = (1.0 + xp).powf(-power);
                let dalg = if x > 0.0 {
                    -power * alg / (1.0 + xp)
                } else {
                    0.0
                };
                let e = amplitude * (-rate * x).exp();
                let base = e * alg;
                let dbase = e * (dalg - rate * alg);
                [base * c, dbase * c + base * dc / ramp]
            }
            Perturbation::Sum { ref terms } => terms.iter().fold([0.0, 0.0], |acc, t| {
                let v = t.eval(x);
                [acc[0] + v[0], acc[1] + v[1]]
            }),
        }
    }

    pub fn scaled(&self, c: f64) -> Perturbation {
        match self.clone() {
            Perturbation::Zero => Perturbation::Zero,
            Perturbation::Sech {
                amplitude,
                center,
                width,
                power,
            } => Perturbation::Sech {
                amplitude: c * amplitude,
                center,
                width,
                power,
            },
            Perturbation::Gaussian {
                amplitude,
                center,
                width,
            } => Perturbation::Gaussian {
                amplitude: c * amplitude,
                center,
                width,
            },
            Perturbation::Bump { amplitude, lo, hi } => Perturbation::Bump {
                amplitude: c * amplitude,
                lo,
                hi,
            },
            Perturbation::Tail {
                amplitude,
                rate,
                power,
                onset,
                ramp,
            } => Perturbation::Tail {
                amplitude: c * amplitude,
                rate,
                power,
                onset,
                ramp,
            },
            Perturbation::Sum { terms } => Perturbation::Sum {
                terms: terms.iter().map(|t| t.scaled(c)).collect(),
            },
        }
    }
}
