//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{CaseId, Verdict};
use crate::error::{Error, Result};
use crate::evolve::Perturbation;
use crate::model::{catalog, ModelSpec};
use crate::norms::WeightSpec;
use crate::profile::{
    build_characteristic_front, build_composite, build_riemann_shock, build_smooth_front,
    damped_jump_wave, JumpSpec, PieceSpec, WaveProfile,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Catalog model ids accepted in `model.catalog`.
pub const MODEL_IDS: [&str; 6] = [
    "burgers_monostable",
    "burgers_bistable",
    "burgers_tristable",
    "burgers_damped_jump",
    "quartic_two_jump",
    "burgers_inviscid",
];

/// Catalog wave ids accepted in `wave.id`.
pub const WAVE_IDS: [&str; 1] = ["damped_jump"];

pub fn catalog_model(id: &str) -> Result<ModelSpec> {
    Ok(match id {
        "burgers_monostable" => catalog::burgers_monostable(),
        "burgers_bistable" => catalog::burgers_bistable(),
        "burgers_tristable" => catalog::burgers_tristable(),
        "burgers_damped_jump" => catalog::burgers_damped_jump(),
        "quartic_two_jump" => catalog::quartic_two_jump(),
        "burgers_inviscid" => catalog::burgers_inviscid(),
        _ => return Err(Error::Config(format!("unknown catalog model '{id}'"))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Classify,
    Profile,
    Evolve,
    Decay,
    Multid,
}

/// Either a catalog id or explicit coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fperp_prime: Option<Vec<f64>>,
}

impl ModelBlock {
    pub fn build(&self) -> Result<ModelSpec> {
        let base = match (&self.catalog, &self.flux, &self.source, &self.u_range) {
            (Some(id), None, None, None) => catalog_model(id)?,
            (None, Some(f), Some(g), Some(r)) => {
                ModelSpec::new(f.clone(), g.clone(), None, (r[0], r[1]))?
            }
            _ => {
                return Err(Error::Config(
                    "model needs either `catalog` or all of `flux`, `source` and `u_range`".into(),
                ))
            }
        };
        match &self.fperp_prime {
            Some(c) => base.with_fperp_prime(c.clone()),
            None => Ok(base),
        }
    }
}

fn default_halfwidth() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WaveBlock {
    Constant {
        value: f64,
        #[serde(default)]
        sigma: f64,
    },
    SmoothFront {
        u_minus: f64,
        u_plus: f64,
        sigma: f64,
        #[serde(default = "default_halfwidth")]
        halfwidth: f64,
    },
    CharacteristicFront {
        u_star: f64,
        sigma: f64,
        #[serde(default = "default_halfwidth")]
        halfwidth: f64,
    },
    RiemannShock {
        u_left: f64,
        u_right: f64,
    },
    Composite {
        sigma: f64,
        pieces: Vec<PieceSpec>,
        jumps: Vec<JumpSpec>,
    },
    Catalog {
        id: String,
    },
}

impl WaveBlock {
    pub fn build(&self, model: &ModelSpec) -> Result<WaveProfile> {
        match self {
            WaveBlock::Constant { value, sigma } => {
                if model.g(*value).abs() > 1e-12 {
                    return Err(Error::NotAZero(*value));
                }
                Ok(WaveProfile::constant(*value, *sigma))
            }
            WaveBlock::SmoothFront {
                u_minus,
                u_plus,
                sigma,
                halfwidth,
            } => build_smooth_front(model, *u_minus, *u_plus, *sigma, *halfwidth),
            WaveBlock::CharacteristicFront {
                u_star,
                sigma,
                halfwidth,
            } => build_characteristic_front(model, *u_star, *sigma, *halfwidth),
            WaveBlock::RiemannShock { u_left, u_right } => {
                Ok(build_riemann_shock(model, *u_left, *u_right)?.1)
            }
            WaveBlock::Composite {
                sigma,
                pieces,
                jumps,
            } => build_composite(model, *sigma, pieces, jumps),
            WaveBlock::Catalog { id } => match id.as_str() {
                "damped_jump" => damped_jump_wave(model),
                _ => Err(Error::Config(format!("unknown catalog wave '{id}'"))),
            },
        }
    }
}

/// What the deviation is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// The profile itself.
    #[default]
    Profile,
    /// The translate through the datum's characteristic level set.
    LevelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationBlock {
    #[serde(default)]
    pub align: Alignment,
    pub shape: Perturbation,
}

impl Default for PerturbationBlock {
    fn default() -> Self {
        PerturbationBlock {
            align: Alignment::Profile,
            shape: Perturbation::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Characteristics,
    Tracking,
    FiniteVolume,
}

fn default_domain() -> [f64; 2] {
    [-20.0, 20.0]
}
fn default_n() -> usize {
    2049
}
fn default_dt() -> f64 {
    0.01
}
fn default_cfl() -> f64 {
    0.8
}
fn default_horizon() -> f64 {
    12.0
}
fn default_collar() -> f64 {
    crate::evolve::tracking::DEFAULT_COLLAR
}
fn default_output_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub kind: SolverKind,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    /// Grid nodes, or cells for the finite-volume solver.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_collar")]
    pub collar: f64,
    #[serde(default = "default_output_dt")]
    pub output_dt: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            kind: SolverKind::default(),
            domain: default_domain(),
            n: default_n(),
            dt: default_dt(),
            cfl: default_cfl(),
            horizon: default_horizon(),
            collar: default_collar(),
            output_dt: default_output_dt(),
        }
    }
}

/// Expected classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<CaseId>,
}

/// Expected log-log slope of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeTarget {
    pub slope: f64,
    pub tolerance: f64,
}

fn default_weights() -> Vec<WeightSpec> {
    vec![WeightSpec::weightless()]
}
fn default_rate_tolerance() -> f64 {
    0.15
}
fn default_bounded_factor() -> f64 {
    5.0
}
fn default_max_deviation() -> f64 {
    1e-6
}
fn default_levelset_cells() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementBlock {
    #[serde(default = "default_weights")]
    pub weights: Vec<WeightSpec>,
    /// Fit window; `[0.2 T, 0.9 T]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Relative tolerance on fitted exponential rates.
    #[serde(default = "default_rate_tolerance")]
    pub rate_tolerance: f64,
    /// Allowed growth of the norm when no decay is predicted.
    #[serde(default = "default_bounded_factor")]
    pub bounded_factor: f64,
    /// Allowed deviation for unperturbed runs.
    #[serde(default = "default_max_deviation")]
    pub max_deviation: f64,
    /// Allowed level-set motion in grid cells (multi-D runs).
    #[serde(default = "default_levelset_cells")]
    pub levelset_cells: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglog: Option<SlopeTarget>,
    /// Expected log-log slope of `|ψ'|` for the first tracked jump.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_loglog: Option<SlopeTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

impl Default for MeasurementBlock {
    fn default() -> Self {
        MeasurementBlock {
            weights: default_weights(),
            window: None,
            rate_tolerance: default_rate_tolerance(),
            bounded_factor: default_bounded_factor(),
            max_deviation: default_max_deviation(),
            levelset_cells: default_levelset_cells(),
            loglog: None,
            shift_loglog: None,
            expect: None,
        }
    }
}

fn default_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// Write every `snapshot_every`-th output time to the snapshot CSV.
    #[serde(default = "default_every")]
    pub snapshot_every: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            directory: None,
            snapshot_every: default_every(),
        }
    }
}

fn default_period() -> f64 {
    2.0 * std::f64::consts::PI
}
fn default_ny() -> usize {
    16
}
fn default_mode() -> u32 {
    1
}

/// Initial level set `x = a cos(2π m y / P)` of a planar-wave run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultidBlock {
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_ny")]
    pub ny: usize,
    pub amplitude: f64,
    #[serde(default = "default_mode")]
    pub mode: u32,
    /// Relative tolerance on the fitted rate of `‖u - 𝒰‖`.
    #[serde(default = "default_multid_tolerance")]
    pub rate_tolerance: f64,
}

fn default_multid_tolerance() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub experiment: Experiment,
    pub model: ModelBlock,
    pub wave: WaveBlock,
    #[serde(default)]
    pub perturbation: PerturbationBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub measurement: MeasurementBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multid: Option<MultidBlock>,
}

fn amplitudes(p: &Perturbation, out: &mut Vec<f64>) {
    match p {
        Perturbation::Zero => {}
        Perturbation::Sech { amplitude, .. }
        | Perturbation::Gaussian { amplitude, .. }
        | Perturbation::Bump { amplitude, .. }
        | Perturbation::Tail { amplitude, .. } => out.push(*amplitude),
        Perturbation::Sum { terms } => terms.iter().for_each(|t| amplitudes(t, out)),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        let md = &self.model;
        let explicit = [md.flux.is_some(), md.source.is_some(), md.u_range.is_some()];
        match (&md.catalog, explicit) {
            (Some(_), [false, false, false]) | (None, [true, true, true]) => {}
            _ => {
                return bad(
                    "model needs either `catalog` or all of `flux`, `source` and `u_range`".into(),
                )
            }
        }
        if let Some(id) = &md.catalog {
            if !MODEL_IDS.contains(&id.as_str()) {
                return bad(format!("unknown catalog model '{id}'"));
            }
        }
        if let WaveBlock::Catalog { id } = &self.wave {
            if !WAVE_IDS.contains(&id.as_str()) {
                return bad(format!("unknown catalog wave '{id}'"));
            }
        }
        let mut amps = Vec::new();
        amplitudes(&self.perturbation.shape, &mut amps);
        // signed tails are allowed; the magnitude must be positive
        if let Some(a) = amps.iter().find(|a| !(a.is_finite() && **a != 0.0)) {
            return bad(format!(
                "perturbation amplitude must be nonzero and finite, got {a}"
            ));
        }
        let s = &self.solver;
        if !(s.domain[1] > s.domain[0]) {
            return bad(format!("solver domain {:?} is empty", s.domain));
        }
        let positive = [
            ("dt", s.dt),
            ("horizon", s.horizon),
            ("collar", s.collar),
            ("output_dt", s.output_dt),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return bad(format!("solver.{k} must be positive, got {v}"));
        }
        if !(s.cfl > 0.0 && s.cfl < 1.0) {
            return bad(format!("solver.cfl must lie in (0, 1), got {}", s.cfl));
        }
        if s.n < 64 {
            return bad(format!("solver.n must be at least 64, got {}", s.n));
        }
        let m = &self.measurement;
        if m.weights.is_empty() {
            return bad("measurement.weights must not be empty".into());
        }
        if let Some(w) = m.window {
            if !(w[0] >= 0.0 && w[1] > w[0]) {
                return bad(format!(
                    "measurement.window {w:?} must be increasing and nonnegative"
                ));
            }
        }
        let tolerances = [
            m.rate_tolerance,
            m.bounded_factor,
            m.max_deviation,
            m.levelset_cells,
        ];
        if tolerances.iter().any(|t| !(*t > 0.0)) {
            return bad("measurement tolerances must be positive".into());
        }
        if self.output.snapshot_every == 0 {
            return bad("output.snapshot_every must be positive".into());
        }
        match (&self.multid, self.experiment) {
            (None, Experiment::Multid) => {
                return bad("multid experiments need a [multid] block".into())
            }
            (Some(b), _) if !(b.period > 0.0 && b.ny >= 4 && b.amplitude.is_finite()) => {
                return bad("multid block needs period > 0, ny >= 4 and a finite amplitude".into())
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TANH: &str = r#"
schema_version = 1
name = "tanh"
experiment = "evolve"

[model]
catalog = "burgers_bistable"

[wave]
kind = "characteristic_front"
u_star = 0.0
sigma = 0.0

[perturbation]
align = "level_set"
shape = { kind = "sech", amplitude = 0.01 }

[measurement]
weights = [{ kappa = 0.0 }, { kappa = 1.0, side = "both", rho = { kind = "algebraic", r = 2.0 } }]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(TANH).unwrap();
        assert_eq!(cfg.solver, SolverBlock::default());
        assert_eq!(cfg.measurement.weights.len(), 2);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            TANH.replace("amplitude = 0.01", "amplitude = 0.0"),
            TANH.replace("burgers_bistable", "burgers_nowhere"),
            TANH.replace("schema_version = 1", "schema_version = 7"),
            TANH.replace("[model]", "[model]\nflux = [0.0]"),
            TANH.replace("[wave]", "[solver]\ncfl = 1.5\n\n[wave]"),
            TANH.replace(
                "kind = \"characteristic_front\"",
                "kind = \"catalog\"\nid = \"nothing\"",
            )
            .replace("u_star = 0.0\nsigma = 0.0\n", ""),
            TANH.replace("experiment = \"evolve\"", "experiment = \"multid\""),
            TANH.replace("[model]", "[model]\ncolour = 3"),
        ];
        for text in cases {
            assert!(
                matches!(
                    ExperimentConfig::from_toml_str(&text),
                    Err(Error::Config(_))
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn explicit_model_matches_catalog() {
        let block = ModelBlock {
            flux: Some(vec![0.0, 0.0, 0.5]),
            source: Some(vec![0.0, 1.0, 0.0, -1.0]),
            u_range: Some([-2.0, 2.0]),
            ..Default::default()
        };
        assert_eq!(block.build().unwrap(), catalog::burgers_bistable());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_is_identity(
            amp in 1e-6f64..1.0,
            center in -5.0f64..5.0,
            kappa in 0.0f64..4.0,
            n in 64usize..5000,
            horizon in 0.1f64..100.0,
            lo in 0.0f64..10.0,
            len in 0.1f64..10.0,
        ) {
            let mut cfg = ExperimentConfig::from_toml_str(TANH).unwrap();
            cfg.perturbation.shape = Perturbation::Sum { terms: vec![
                Perturbation::Gaussian { amplitude: amp, center, width: 1.5 },
                Perturbation::Tail { amplitude: -amp, rate: kappa, power: 2.0, onset: center, ramp: 1.0 },
            ] };
            cfg.measurement.weights.push(WeightSpec::exponential(kappa));
            cfg.measurement.window = Some([lo, lo + len]);
            cfg.solver.n = n;
            cfg.solver.horizon = horizon;
            let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            proptest::prop_assert_eq!(&cfg, &again);
            proptest::prop_assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
        }
    }

    #[test]
    fn every_catalog_id_resolves() {
        for id in MODEL_IDS {
            catalog_model(id).unwrap();
        }
        let m = catalog::burgers_damped_jump();
        WaveBlock::Catalog {
            id: WAVE_IDS[0].into(),
        }
        .build(&m)
        .unwrap();
    }
}
