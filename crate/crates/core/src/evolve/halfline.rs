//! Half-line evolution near an endstate whose characteristics all move left.
//!
//! Curves leave through `x = 0` and enter through `x = X`; no boundary
//! condition is imposed at `0`. Beyond `X` the datum is replaced by the
//! endstate unless the caller keeps it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

use super::characteristics::{
    bundle_snapshot, scalar_seed, Bundle, Dynamics, GridOptions, Reference,
};
use super::trajectory::{SolverId, Trajectory};

/// What enters through the right end of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Inflow {
    /// The endstate itself.
    #[default]
    Endstate,
    /// The datum continued beyond the window.
    Datum,
}

/// Evolves `u∞ + d` on `[0, X]`, `X = opts.domain.1`, with `opts.domain.0 = 0`.
pub fn evolve_halfline(
    model: &ModelSpec,
    sigma: f64,
    u_inf: f64,
    deviation: impl Fn(f64) -> [f64; 2] + Send + Sync,
    horizon: f64,
    opts: &GridOptions,
    inflow: Inflow,
) -> Result<Trajectory> {
    let end = opts.domain.1;
    if opts.domain.0 != 0.0 || end <= 0.0 {
        return Err(Error::Config(format!(
            "half-line window must be [0, X], got {:?}",
            opts.domain
        )));
    }
    let seed = move |x: f64| {
        if inflow == Inflow::Endstate && x >= end {
            [0.0, 0.0]
        } else {
            deviation(x)
        }
    };
    let dynamics = Dynamics::new(model, sigma, Reference::Constant(u_inf));
    let mut bundle = Bundle::new(
        dynamics,
        scalar_seed(seed),
        opts.domain,
        opts.dx(),
        opts.dt,
        horizon,
    )?;
    check_sign(&bundle)?;
    let (steps, every) = opts.schedule(horizon);
    let mut snapshots = vec![bundle_snapshot(&bundle, opts)?];
    for k in 1..=steps {
        bundle.step()?;
        check_sign(&bundle)?;
        if k % every == 0 || k == steps {
            snapshots.push(bundle_snapshot(&bundle, opts)?);
        }
    }
    Ok(Trajectory {
        solver: SolverId::HalfLine,
        sigma,
        dx: opts.dx(),
        dt: opts.dt,
        snapshots,
        shifts: Vec::new(),
    })
}

fn check_sign(bundle: &Bundle) -> Result<()> {
    let dyn_ = bundle.dynamics();
    for (_, s) in bundle.curves() {
        if dyn_.speed(s) >= 0.0 {
            let u = dyn_.reference().eval(s[0])[0] + s[1];
            return Err(Error::SignViolation { u });
        }
    }
    Ok(())
}
