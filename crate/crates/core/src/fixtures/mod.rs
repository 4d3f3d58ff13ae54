//! Flows with closed-form pressure, used to calibrate the estimators.

mod cat;
mod toy;

pub use cat::{cat_entropy, make_cat_suspension, CatSuspension};
pub use toy::{make_toy, ToyNHFlow};

use crate::error::{Error, Result};
use crate::flow::FlowSystem;

/// `−sν` for the toy flow, `(1 − s)·log((3+√5)/2)` for the cat suspension.
pub fn analytic_pressure(system: &dyn FlowSystem, s: f64) -> Result<f64> {
    system
        .analytic_pressure(s)
        .ok_or_else(|| Error::UnsupportedFixture(system.name()))
}
