//! Named numerical checks with measured values, shared by the command line
//! front end.

use serde::Serialize;

use crate::convex::{yosida_conjugate_check, ConvexScalarFn};
use crate::dde::simulate;
use crate::error::Result;
use crate::hjb::{closed_loop_rollout, hjb_residual};
use crate::model::{ControlGrid, Grid, InitialTriple, ModelSpec};
use crate::structural::{build_x1, evolve_abstract, M2Point};
use crate::value::{dpp_check, ObjectiveSpec};

pub const CHECK_NAMES: [&str; 5] = ["equivalence", "legendre", "dpp", "hjb", "rollout"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    /// Advisory checks never fail a run.
    pub hard: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn bounded(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass: measured <= threshold,
            hard: true,
            measured,
            threshold,
            detail,
        }
    }
}

/// Max node gap between the abstract evolution of the structural state and
/// the direct simulation.
pub fn equivalence(model: &ModelSpec, grid: &Grid, init: &InitialTriple, control: &ControlGrid) -> Result<CheckOutcome> {
    let direct = simulate(model, grid, init, control)?;
    let x = build_x1(model, init, grid.delta())?;
    let abstract_path = evolve_abstract(model, grid, &x, control)?.scalar();
    let gap = direct
        .k
        .iter()
        .zip(&abstract_path)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(CheckOutcome::bounded("equivalence", gap, 1e-10, format!("{} nodes", direct.k.len())))
}

/// Yosida conjugation identity for `f` on `[-3, 3]` (only where finite).
pub fn legendre(f: &ConvexScalarFn, ns: &[f64]) -> CheckOutcome {
    let ps: Vec<f64> = (0..=60).map(|i| -3.0 + 0.1 * i as f64).collect();
    let err = ns
        .iter()
        .map(|&n| yosida_conjugate_check(f, n, &ps))
        .fold(0.0, f64::max);
    CheckOutcome::bounded("legendre", err, 1e-5, format!("n in {ns:?}"))
}

pub fn dpp(spec: &ObjectiveSpec, x: &M2Point, splits: &[usize]) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for &s in splits {
        worst = worst.max(dpp_check(spec, x, s)?);
    }
    Ok(CheckOutcome::bounded("dpp", worst, 5.0 * spec.tol.max(1e-9), format!("splits {splits:?}")))
}

pub fn hjb(spec: &ObjectiveSpec, x: &M2Point, bump: Option<f64>) -> Result<CheckOutcome> {
    let r = hjb_residual(spec, x, bump)?;
    Ok(CheckOutcome {
        name: "hjb".into(),
        pass: r.residual.is_finite() && !r.low_confidence,
        hard: false,
        measured: r.residual,
        threshold: f64::INFINITY,
        detail: format!(
            "dt {:.6e}, transport {:.6e}, hamiltonian {:.6e}, low confidence {}",
            r.dt, r.transport, r.hamiltonian, r.low_confidence
        ),
    })
}

pub fn rollout(spec: &ObjectiveSpec, x: &M2Point, bump: Option<f64>, upper: f64) -> Result<CheckOutcome> {
    let r = closed_loop_rollout(spec, x, bump)?;
    let lower = -spec.tol.max(1e-9);
    Ok(CheckOutcome {
        name: "rollout".into(),
        pass: r.gap >= lower && r.gap <= upper,
        hard: true,
        measured: r.gap,
        threshold: upper,
        detail: format!("J_closed {:.6e}, W_n {:.6e}", r.j_closed, r.w_n),
    })
}
