//! Balance-law data `∂t u + ∂x f(u) = g(u)` with polynomial flux and source.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Poly, Root};

/// Which piece of model data to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    F,
    DF,
    DDF,
    G,
    DG,
    FPerpPrime,
}

/// Flux, source and (optionally) transverse flux derivative of one balance law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecRaw", into = "ModelSpecRaw")]
pub struct ModelSpec {
    f: Poly,
    g: Poly,
    fperp_prime: Option<Poly>,
    u_range: (f64, f64),
    df: Poly,
    ddf: Poly,
    dg: Poly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelSpecRaw {
    f: Vec<f64>,
    g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fperp_prime: Option<Vec<f64>>,
    u_range: [f64; 2],
}

impl TryFrom<ModelSpecRaw> for ModelSpec {
    type Error = Error;
    fn try_from(raw: ModelSpecRaw) -> Result<Self> {
        ModelSpec::new(
            raw.f,
            raw.g,
            raw.fperp_prime,
            (raw.u_range[0], raw.u_range[1]),
        )
    }
}

impl From<ModelSpec> for ModelSpecRaw {
    fn from(m: ModelSpec) -> Self {
        ModelSpecRaw {
            f: m.f.coeffs().to_vec(),
            g: m.g.coeffs().to_vec(),
            fperp_prime: m.fperp_prime.map(|p| p.coeffs().to_vec()),
            u_range: [m.u_range.0, m.u_range.1],
        }
    }
}

/// A zero of the source with its linearization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceZero {
    pub u: f64,
    pub dg: f64,
    pub degenerate: bool,
}

/// A root of `f' - σ` with the curvature `f''` there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicValue {
    pub u: f64,
    pub ddf: f64,
    pub degenerate: bool,
}

/// Tolerance below which `|g'|` or `|f''|` counts as vanishing.
pub const DEGENERACY_TOL: f64 = 1e-10;

impl ModelSpec {
    /// Coefficients are lowest degree first.
    pub fn new(
        f: Vec<f64>,
        g: Vec<f64>,
        fperp_prime: Option<Vec<f64>>,
        u_range: (f64, f64),
    ) -> Result<Self> {
        if f.is_empty() || g.is_empty() || fperp_prime.as_ref().is_some_and(|p| p.is_empty()) {
            return Err(Error::InvalidModel("empty coefficient list".into()));
        }
        let all_finite = f.iter().chain(g.iter()).all(|c| c.is_finite())
            && fperp_prime.iter().flatten().all(|c| c.is_finite());
        if !all_finite {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        if !(u_range.0.is_finite() && u_range.1.is_finite() && u_range.1 > u_range.0) {
            return Err(Error::InvalidModel(format!(
                "u_range [{}, {}] must have positive length",
                u_range.0, u_range.1
            )));
        }
        let f = Poly::new(f);
        let g = Poly::new(g);
        let df = f.derivative();
        let ddf = df.derivative();
        let dg = g.derivative();
        Ok(ModelSpec {
            f,
            g,
            fperp_prime: fperp_prime.map(Poly::new),
            u_range,
            df,
            ddf,
            dg,
        })
    }

    pub fn with_fperp_prime(mut self, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel(
                "bad transverse flux coefficients".into(),
            ));
        }
        self.fperp_prime = Some(Poly::new(coeffs));
        Ok(self)
    }

    pub fn evaluate(&self, which: Component, u: f64) -> Result<f64> {
        Ok(match which {
            Component::F => self.f.eval(u),
            Component::DF => self.df.eval(u),
            Component::DDF => self.ddf.eval(u),
            Component::G => self.g.eval(u),
            Component::DG => self.dg.eval(u),
            Component::FPerpPrime => self
                .fperp_prime
                .as_ref()
                .ok_or(Error::ComponentAbsent("F_perp'"))?
                .eval(u),
        })
    }

    pub fn f(&self, u: f64) -> f64 {
        self.f.eval(u)
    }
    pub fn df(&self, u: f64) -> f64 {
        self.df.eval(u)
    }
    pub fn ddf(&self, u: f64) -> f64 {
        self.ddf.eval(u)
    }
    pub fn g(&self, u: f64) -> f64 {
        self.g.eval(u)
    }
    pub fn dg(&self, u: f64) -> f64 {
        self.dg.eval(u)
    }

    pub fn flux(&self) -> &Poly {
        &self.f
    }
    pub fn flux_prime(&self) -> &Poly {
        &self.df
    }
    pub fn flux_second(&self) -> &Poly {
        &self.ddf
    }
    pub fn source(&self) -> &Poly {
        &self.g
    }
    pub fn source_prime(&self) -> &Poly {
        &self.dg
    }
    pub fn fperp_prime(&self) -> Option<&Poly> {
        self.fperp_prime.as_ref()
    }
    pub fn u_range(&self) -> (f64, f64) {
        self.u_range
    }

    /// Real zeros of `g` in the model range, ascending.
    pub fn source_zeros(&self) -> Vec<SourceZero> {
        if self.g.is_zero() {
            return Vec::new();
        }
        self.g
            .roots_in(self.u_range.0, self.u_range.1)
            .into_iter()
            .map(
                |Root {
                     value,
                     slope,
                     multiple,
                 }| {
                    let degenerate = multiple || slope.abs() < DEGENERACY_TOL;
                    if degenerate {
                        log::warn!("degenerate zero of g at u = {value}: g' = {slope:e}");
                    }
                    SourceZero {
                        u: value,
                        dg: slope,
                        degenerate,
                    }
                },
            )
            .collect()
    }

    /// Roots of `f' - σ` in the model range.
    pub fn characteristic_values(&self, sigma: f64) -> Vec<CharacteristicValue> {
        let shifted = self.df.add_constant(-sigma);
        if shifted.is_zero() {
            return Vec::new();
        }
        shifted
            .roots_in(self.u_range.0, self.u_range.1)
            .into_iter()
            .map(|r| CharacteristicValue {
                u: r.value,
                ddf: self.ddf.eval(r.value),
                degenerate: self.ddf.eval(r.value).abs() < DEGENERACY_TOL,
            })
            .collect()
    }

    /// Averaged flux `∫₀¹ f'(τ v1 + (1-τ) v2) dτ`: the chord slope of `f`.
    pub fn averaged_flux(&self, v1: f64, v2: f64) -> f64 {
        if v1 == v2 {
            return self.df.eval(v1);
        }
        // chord slope through the Taylor expansion keeps nearby arguments accurate
        self.f.increment(v2, v1 - v2) / (v1 - v2)
    }

    /// Image under `u ↦ ε u(ε' x)`: flux `ε ε' f(ε ·)`, source `ε g(ε ·)`.
    pub fn reflect(&self, eps: f64, eps_x: f64) -> ModelSpec {
        let f = self.f.compose_scale(eps).scale(eps * eps_x);
        let g = self.g.compose_scale(eps).scale(eps);
        let (a, b) = (eps * self.u_range.0, eps * self.u_range.1);
        let mut m = ModelSpec::new(
            f.coeffs().to_vec(),
            g.coeffs().to_vec(),
            None,
            (a.min(b), a.max(b)),
        )
        .expect("reflection of a valid model is valid");
        if let Some(p) = &self.fperp_prime {
            // F⊥(u) ↦ ε F⊥(ε u) so F⊥' ↦ ε² F⊥'(ε u)
            m.fperp_prime = Some(p.compose_scale(eps).scale(eps * eps));
        }
        m
    }
}

/// Built-in models.
pub mod catalog {
    use super::ModelSpec;

    /// Burgers flux `u²/2`.
    pub const BURGERS: [f64; 3] = [0.0, 0.0, 0.5];

    /// `f = u²/2`, `g = u(u-1)`: monostable fronts between 0 and 1.
    pub fn burgers_monostable() -> ModelSpec {
        ModelSpec::new(BURGERS.to_vec(), vec![0.0, -1.0, 1.0], None, (-1.0, 2.0)).unwrap()
    }

    /// `f = u²/2`, `g = u(1-u²)`: the bistable tanh front and the 1|-1 shock.
    pub fn burgers_bistable() -> ModelSpec {
        ModelSpec::new(
            BURGERS.to_vec(),
            vec![0.0, 1.0, 0.0, -1.0],
            None,
            (-2.0, 2.0),
        )
        .unwrap()
    }

    /// `f = u²/2`, `g = u(u-1)(u-2)`: zeros {0, 1, 2}, the 1|0 shock at σ = 1/2.
    pub fn burgers_tristable() -> ModelSpec {
        ModelSpec::new(
            BURGERS.to_vec(),
            vec![0.0, 2.0, -3.0, 1.0],
            None,
            (-1.0, 3.0),
        )
        .unwrap()
    }

    /// `f = u²/2`, `g = -(u+3)(u+3/4)u(u-1)`: carries a damped jump between a
    /// characteristic piece and a monostable tail.
    pub fn burgers_damped_jump() -> ModelSpec {
        ModelSpec::new(
            BURGERS.to_vec(),
            vec![0.0, 2.25, 1.5, -2.75, -1.0],
            None,
            (-3.5, 1.5),
        )
        .unwrap()
    }

    /// `f = u²/2 - u⁴/4`, `g = u(u² - 0.64)(u² - 1.44)`: at `σ = 0` the constants
    /// ∓1.2 glue to a characteristic middle piece through two admissible jumps
    /// at `u = ∓√0.56`.
    pub fn quartic_two_jump() -> ModelSpec {
        ModelSpec::new(
            vec![0.0, 0.0, 0.5, 0.0, -0.25],
            vec![0.0, 0.9216, 0.0, -2.08, 0.0, 1.0],
            None,
            (-1.5, 1.5),
        )
        .unwrap()
    }

    /// `f = u²/2`, `g ≡ 0`.
    pub fn burgers_inviscid() -> ModelSpec {
        ModelSpec::new(BURGERS.to_vec(), vec![0.0], None, (-3.0, 3.0)).unwrap()
    }
}
