//! Finite-difference gradients of `W_n` on `M2`, the HJB residual and
//! closed-loop rollouts driven by the feedback map.

use serde::{Deserialize, Serialize};

use crate::convex::{feedback, hamiltonian, HamiltonianSpec};
use crate::dde::Dynamics;
use crate::error::{Error, Result};
use crate::model::{ControlGrid, Grid};
use crate::quadrature::{inner, trapezoid_weights};
use crate::structural::{evolve_with, M2Point};
use crate::value::{evaluate_j, solve_penalized, ObjectiveSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub p0: f64,
    /// Node values of the `x1` partial, normalized so that
    /// `<p, dx>_{M2}` approximates the directional derivative.
    pub p1: Vec<f64>,
    /// `|p0 - p1(0)|`.
    pub compat: f64,
    pub bump: f64,
    /// Some difference fell back to one side at the feasibility boundary.
    pub one_sided: bool,
}

/// Default bump `1e-3 (1 + |x|)`.
pub fn default_bump(x: &M2Point, delta: f64) -> f64 {
    1e-3 * (1.0 + x.norm(delta))
}

fn value_at(spec: &ObjectiveSpec, x: &M2Point) -> Option<f64> {
    solve_penalized(spec, x)
        .ok()
        .filter(|r| r.converged && r.value.is_finite())
        .map(|r| r.value)
}

/// Central difference along `dir`, one-sided when a bumped point fails.
fn directional(spec: &ObjectiveSpec, x: &M2Point, dir: &M2Point, h: f64, center: f64) -> Result<(f64, bool)> {
    let plus = value_at(spec, &x.axpy(h, dir));
    let minus = value_at(spec, &x.axpy(-h, dir));
    match (plus, minus) {
        (Some(p), Some(m)) => Ok(((p - m) / (2.0 * h), false)),
        (Some(p), None) => Ok(((p - center) / h, true)),
        (None, Some(m)) => Ok(((center - m) / h, true)),
        (None, None) => Err(Error::Solver("value undefined on both sides of the bump".into())),
    }
}

/// Gradient of `W_n(t, .)` at `x`, with `t` and `n` taken from `spec`.
pub fn gradient_fd(spec: &ObjectiveSpec, x: &M2Point, bump: Option<f64>) -> Result<GradientEstimate> {
    let delta = spec.grid.delta();
    let n_r = spec.grid.n_r;
    let h = bump.unwrap_or_else(|| default_bump(x, delta));
    if !(h > 0.0) {
        return Err(Error::IllPosed("bump must be positive".into()));
    }
    let base = solve_penalized(spec, x)?;
    if !base.converged {
        return Err(Error::Solver(format!(
            "base solve did not converge (gap {:e} after {} iterations, violation {:e})",
            base.gap_estimate, base.iterations, base.constraint_violation
        )));
    }
    let center = base.value;
    let mut one_sided = false;
    let (p0, flag) = directional(spec, x, &M2Point::new(1.0, vec![0.0; n_r + 1]), h, center)?;
    one_sided |= flag;
    let w = trapezoid_weights(n_r + 1, delta);
    let mut p1 = Vec::with_capacity(n_r + 1);
    for j in 0..=n_r {
        let mut e = vec![0.0; n_r + 1];
        e[j] = 1.0;
        let (d, flag) = directional(spec, x, &M2Point::new(0.0, e), h, center)?;
        one_sided |= flag;
        p1.push(d / w[j]);
    }
    Ok(GradientEstimate {
        p0,
        compat: (p0 - p1[n_r]).abs(),
        p1,
        bump: h,
        one_sided,
    })
}

/// `p1` with its `theta = -R` node extrapolated from the two interior
/// neighbours. The forcing reads that node on both sides of `t + R`, so its
/// raw normalized partial carries twice the trapezoid weight.
pub fn boundary_corrected(p1: &[f64]) -> Vec<f64> {
    let mut out = p1.to_vec();
    out[0] = 2.0 * p1[1] - p1[2];
    out
}

/// `B* p`: the control functional applied to `p1` with its `theta = 0`
/// value replaced by `p0`.
pub fn control_pairing(dynamics: &Dynamics, p0: f64, p1: &[f64]) -> Result<f64> {
    let mut seg = p1.to_vec();
    *seg.last_mut().expect("nonempty") = p0;
    dynamics.control_functional().apply(&seg, dynamics.grid.delta())
}

fn hamiltonian_spec(spec: &ObjectiveSpec) -> HamiltonianSpec {
    HamiltonianSpec::new(spec.running.clone().nonneg(), spec.model.rho, spec.n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbResidual {
    pub residual: f64,
    pub dt: f64,
    pub transport: f64,
    pub hamiltonian: f64,
    /// The compatibility gap exceeds `10 bump`.
    pub low_confidence: bool,
}

/// `|d_t W + <x, G p> - F_n(t, p)|` at `(t, x)` with `p = grad W_n`.
pub fn hjb_residual(spec: &ObjectiveSpec, x: &M2Point, bump: Option<f64>) -> Result<HjbResidual> {
    let grid = spec.grid;
    if grid.n_t < 1 {
        return Err(Error::InvalidGrid("need at least one step before T".into()));
    }
    let delta = grid.delta();
    let earlier = Grid { t0: grid.t0 - delta, n_t: grid.n_t + 1, ..grid };
    let later = grid.advanced(1);
    let w_minus = solve_penalized(&spec.clone().with_grid(earlier), x)?.value;
    let w_plus = if later.n_t == 0 {
        spec.terminal.eval(x.x0)
    } else {
        solve_penalized(&spec.clone().with_grid(later), x)?.value
    };
    let dt = (w_plus - w_minus) / (2.0 * delta);
    let grad = gradient_fd(spec, x, bump)?;
    let dynamics = Dynamics::new(&spec.model, grid)?;
    let n_r = grid.n_r;
    let p1 = boundary_corrected(&grad.p1);
    let state_part = dynamics.state_functional().apply(&p1, delta)?;
    let dp1: Vec<f64> = (0..=n_r)
        .map(|j| {
            if j < n_r {
                (p1[j + 1] - p1[j]) / delta
            } else {
                (p1[n_r] - p1[n_r - 1]) / delta
            }
        })
        .collect();
    let transport = x.x0 * state_part + inner(&x.x1, &dp1, delta);
    let lp = control_pairing(&dynamics, grad.p0, &p1)?;
    let ham = hamiltonian(&hamiltonian_spec(spec), grid.t0, lp);
    Ok(HjbResidual {
        residual: (dt + transport - ham).abs(),
        dt,
        transport,
        hamiltonian: ham,
        low_confidence: grad.compat > 10.0 * grad.bump,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub j_closed: f64,
    pub w_n: f64,
    pub gap: f64,
    pub control: Vec<f64>,
}

/// Feedback control `c(s) = argmax_c { -e^{rho s} B*p c - h_n(c) }` with `p`
/// re-estimated at every node, applied through the structural state.
pub fn closed_loop_rollout(spec: &ObjectiveSpec, x: &M2Point, bump: Option<f64>) -> Result<Rollout> {
    let grid = spec.grid;
    let ham = hamiltonian_spec(spec);
    let mut state = x.clone();
    let mut control = Vec::with_capacity(grid.n_t);
    for k in 0..grid.n_t {
        let local = spec.advanced(k);
        let grad = gradient_fd(&local, &state, bump)?;
        let dynamics = Dynamics::new(&spec.model, local.grid)?;
        let lp = control_pairing(&dynamics, grad.p0, &boundary_corrected(&grad.p1))?;
        let c = feedback(&ham, grid.time(k), lp)?;
        let one_step = Dynamics::new(&spec.model, Grid { n_t: 1, ..local.grid })?;
        state = evolve_with(&one_step, &state, &ControlGrid::new(vec![c]))?
            .points
            .pop()
            .expect("two points");
        control.push(c);
    }
    let control_grid = ControlGrid::new(control);
    let j_closed = evaluate_j(spec, x, &control_grid)?;
    let w_n = solve_penalized(spec, x)?.value;
    Ok(Rollout {
        j_closed,
        w_n,
        gap: j_closed - w_n,
        control: control_grid.values,
    })
}
