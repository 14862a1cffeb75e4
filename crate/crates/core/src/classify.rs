//! Stability taxonomy: weightless instability triggers, the four stable
//! shapes, critical weights, predicted decay rates and essential-spectrum lines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::profile::{check_nondegenerate, WaveProfile};

/// Sign tests inside this band are refused rather than guessed.
pub const SIGN_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    WeightlessStable,
    ConvectivelyStable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    /// Constant state with `g'(u∞) < 0`.
    StableConstant,
    /// Smooth front without characteristic point.
    NonCharacteristicFront,
    /// Smooth front through one characteristic point with `g'(u⋆) > 0`.
    CharacteristicFront,
    /// One or two discontinuities, at most one characteristic point, non-positive jump ratios.
    Discontinuous,
    /// None of the stable shapes applies.
    Unstable,
}

impl CaseId {
    /// Case number in the stable classification, `None` for unstable waves.
    pub fn number(self) -> Option<u8> {
        match self {
            CaseId::StableConstant => Some(1),
            CaseId::NonCharacteristicFront => Some(2),
            CaseId::CharacteristicFront => Some(3),
            CaseId::Discontinuous => Some(4),
            CaseId::Unstable => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Endstate with `g'(u∞) > 0`.
    UnstableEndstate,
    /// Discontinuity with `[g(ů)]/[ů] > 0`.
    PositiveJumpRatio,
    /// Characteristic value with `g'(u⋆) < 0`.
    DecreasingCharacteristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub trigger: Trigger,
    /// Position (`±∞` for endstates).
    pub location: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Minus,
    Plus,
}

/// Critical weight at an unstable endstate and its essential-spectrum line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalWeight {
    pub side: Side,
    pub endstate: f64,
    pub kappa_plus: f64,
    pub dg: f64,
    /// `|f'(u∞) - σ|`
    pub speed: f64,
}

impl CriticalWeight {
    /// Real part of the spectrum line in the `κ`-weighted space.
    pub fn line(&self, kappa: f64) -> f64 {
        self.dg - kappa * self.speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumLine {
    pub side: Side,
    pub kappa: f64,
    pub re: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub case_id: CaseId,
    pub witnesses: Vec<Witness>,
    pub kappa_plus: Vec<CriticalWeight>,
    /// `(κ, ω)` pairs.
    pub omega: Vec<(f64, f64)>,
    pub spectrum_lines: Vec<SpectrumLine>,
    pub isolated: bool,
    /// Unstable constant states cannot be rescued by any weight.
    pub rescuable: bool,
    /// Failures of the genericity assumption on pairs of zeros (warnings only).
    pub warnings: Vec<String>,
    /// Descriptive sub-shape of discontinuous waves.
    pub shape: String,
}

fn nondegenerate_or_err(model: &ModelSpec, profile: &WaveProfile) -> Result<()> {
    let report = check_nondegenerate(model, profile);
    if report.pass() {
        return Ok(());
    }
    let what: Vec<String> = report
        .failures()
        .iter()
        .map(|c| format!("{} at {}: {}", c.clause, c.location, c.detail))
        .collect();
    Err(Error::Degenerate(what.join("; ")))
}

fn signed(v: f64, what: &str) -> Result<f64> {
    if v.abs() <= SIGN_BAND {
        return Err(Error::Degenerate(format!(
            "{what} = {v:e} is unclassifiable"
        )));
    }
    Ok(v)
}

fn endstates(profile: &WaveProfile) -> Vec<(Side, f64)> {
    if profile.is_constant() {
        vec![(Side::Plus, profile.endstate_plus)]
    } else {
        vec![
            (Side::Minus, profile.endstate_minus),
            (Side::Plus, profile.endstate_plus),
        ]
    }
}

fn side_location(side: Side) -> f64 {
    match side {
        Side::Minus => f64::NEG_INFINITY,
        Side::Plus => f64::INFINITY,
    }
}

/// Instability witnesses in unweighted spaces; empty means weightless stable.
pub fn weightless_triggers(model: &ModelSpec, profile: &WaveProfile) -> Result<Vec<Witness>> {
    nondegenerate_or_err(model, profile)?;
    let mut out = Vec::new();
    for (side, u) in endstates(profile) {
        let dg = signed(model.dg(u), "g'(u∞)")?;
        if dg > 0.0 {
            out.push(Witness {
                trigger: Trigger::UnstableEndstate,
                location: side_location(side),
                value: dg,
            });
        }
    }
    for d in &profile.discontinuities {
        // ratio 0 (both sides at zeros of g) counts as non-positive
        if d.jump_ratio > SIGN_BAND {
            out.push(Witness {
                trigger: Trigger::PositiveJumpRatio,
                location: d.position,
                value: d.jump_ratio,
            });
        }
    }
    for &(x, u) in &profile.characteristic_points {
        let dg = signed(model.dg(u), "g'(u⋆)")?;
        if dg < 0.0 {
            out.push(Witness {
                trigger: Trigger::DecreasingCharacteristic,
                location: x,
                value: dg,
            });
        }
    }
    Ok(out)
}

/// Critical weight `κ⁺ = g'(u∞)/|f'(u∞) - σ|` at the endstate on `side`.
pub fn critical_weight(
    model: &ModelSpec,
    profile: &WaveProfile,
    side: Side,
) -> Result<CriticalWeight> {
    let u = match side {
        Side::Minus => profile.endstate_minus,
        Side::Plus => profile.endstate_plus,
    };
    let dg = model.dg(u);
    if dg <= 0.0 {
        return Err(Error::StableEndstate(u));
    }
    let speed = (model.df(u) - profile.sigma).abs();
    if speed <= SIGN_BAND {
        return Err(Error::CharacteristicEndstate(u));
    }
    Ok(CriticalWeight {
        side,
        endstate: u,
        kappa_plus: dg / speed,
        dg,
        speed,
    })
}

/// Unstable endstates whose characteristics point toward the wave.
fn inward(model: &ModelSpec, profile: &WaveProfile, side: Side, u: f64) -> bool {
    let a = model.df(u) - profile.sigma;
    match side {
        Side::Minus => a > SIGN_BAND,
        Side::Plus => a < -SIGN_BAND,
    }
}

fn shape_of(profile: &WaveProfile) -> (bool, String) {
    let segs = &profile.segments;
    let isolated = profile
        .discontinuities
        .iter()
        .enumerate()
        .all(|(i, _)| segs[i].is_constant() || segs[i + 1].is_constant());
    let desc = segs
        .iter()
        .map(|s| match s.kind {
            crate::profile::SegmentKind::Constant => "constant",
            crate::profile::SegmentKind::Monotone => "front",
            crate::profile::SegmentKind::CharacteristicCrossing => "characteristic",
        })
        .collect::<Vec<_>>()
        .join("|");
    (isolated, desc)
}

/// Genericity: two zeros with `g' >= 0` should not share the same characteristic speed.
fn genericity_warnings(model: &ModelSpec, sigma: f64) -> Vec<String> {
    let zeros: Vec<_> = model
        .source_zeros()
        .into_iter()
        .filter(|z| z.dg >= 0.0)
        .collect();
    let mut out = Vec::new();
    for (i, a) in zeros.iter().enumerate() {
        for b in &zeros[i + 1..] {
            let (fa, fb) = (model.df(a.u) - sigma, model.df(b.u) - sigma);
            if (fa - fb).abs() <= SIGN_BAND {
                out.push(format!(
                    "zeros {} and {} with g' >= 0 share the characteristic speed {}",
                    a.u, b.u, fa
                ));
            }
        }
    }
    for w in &out {
        log::warn!("genericity assumption fails: {w}");
    }
    out
}

/// Assigns verdict and stable case.
pub fn classify_wave(model: &ModelSpec, profile: &WaveProfile) -> Result<Classification> {
    let witnesses = weightless_triggers(model, profile)?;
    let (isolated, shape) = shape_of(profile);
    let n_char = profile.characteristic_points.len();
    let n_jump = profile.discontinuities.len();
    let warnings = genericity_warnings(model, profile.sigma);

    let stable_shape = if profile.is_constant() {
        Some(CaseId::StableConstant)
    } else if n_jump == 0 && n_char == 0 {
        Some(CaseId::NonCharacteristicFront)
    } else if n_jump == 0 && n_char == 1 {
        Some(CaseId::CharacteristicFront)
    } else if (1..=2).contains(&n_jump) && n_char <= 1 {
        Some(CaseId::Discontinuous)
    } else {
        None
    };

    let mut kappa_plus = Vec::new();
    let mut rescuable = true;
    for (side, u) in endstates(profile) {
        if model.dg(u) > 0.0 {
            if profile.is_constant() || !inward(model, profile, side, u) {
                rescuable = false;
            } else {
                kappa_plus.push(critical_weight(model, profile, side)?);
            }
        }
    }
    let only_endstates = witnesses
        .iter()
        .all(|w| w.trigger == Trigger::UnstableEndstate);

    let (verdict, case_id) = match stable_shape {
        Some(case) if witnesses.is_empty() => (Verdict::WeightlessStable, case),
        Some(case) if only_endstates && rescuable && case != CaseId::StableConstant => {
            (Verdict::ConvectivelyStable, case)
        }
        _ => (Verdict::Unstable, CaseId::Unstable),
    };
    if verdict == Verdict::Unstable && profile.is_constant() {
        rescuable = false;
    }

    let mut c = Classification {
        verdict,
        case_id,
        witnesses,
        kappa_plus,
        omega: Vec::new(),
        spectrum_lines: Vec::new(),
        isolated,
        rescuable: rescuable && verdict != Verdict::Unstable,
        warnings,
        shape,
    };
    if verdict != Verdict::Unstable {
        let base = c
            .kappa_plus
            .iter()
            .map(|k| k.kappa_plus)
            .fold(0.0, f64::max);
        let kappas: Vec<f64> = if c.kappa_plus.is_empty() {
            vec![0.0]
        } else {
            vec![base, base + 0.5, 2.0 * base]
        };
        for &k in &kappas {
            c.omega.push((k, decay_rate_prediction(model, profile, k)?));
        }
        for cw in &c.kappa_plus {
            for &k in &kappas {
                c.spectrum_lines.push(SpectrumLine {
                    side: cw.side,
                    kappa: k,
                    re: cw.line(k),
                });
            }
        }
    }
    Ok(c)
}

/// Predicted exponential decay rate in the `κ`-weighted space.
///
/// The rate is the smallest of: `|g'|` at stable endstates, `g'(u⋆)` at
/// characteristic points, `|[g]/[u]|` at jumps with non-zero ratio, and
/// `(κ - κ⁺)|f'(u∞) - σ|` at unstable endstates.
pub fn decay_rate_prediction(model: &ModelSpec, profile: &WaveProfile, kappa: f64) -> Result<f64> {
    let mut omega = f64::INFINITY;
    for (side, u) in endstates(profile) {
        let dg = model.dg(u);
        if dg < 0.0 {
            omega = omega.min(-dg);
        } else {
            if profile.is_constant() || !inward(model, profile, side, u) {
                return Err(Error::Unsupported("unstable wave has no decay rate".into()));
            }
            let cw = critical_weight(model, profile, side)?;
            if kappa < cw.kappa_plus {
                return Err(Error::SubcriticalWeight {
                    kappa,
                    kappa_plus: cw.kappa_plus,
                });
            }
            omega = omega.min((kappa - cw.kappa_plus) * cw.speed);
        }
    }
    for &(_, u) in &profile.characteristic_points {
        let dg = model.dg(u);
        if dg <= 0.0 {
            return Err(Error::Unsupported("unstable wave has no decay rate".into()));
        }
        omega = omega.min(dg);
    }
    for d in &profile.discontinuities {
        if d.jump_ratio > SIGN_BAND {
            return Err(Error::Unsupported("unstable wave has no decay rate".into()));
        }
        if d.jump_ratio < -SIGN_BAND {
            omega = omega.min(-d.jump_ratio);
        }
    }
    Ok(omega)
}
