//! Structural-state reformulation on `M2 = R x L2(-R, 0)`.
//!
//! The structural state `y(s) = (k(s), y1(s))` carries in `y1(s)` the whole
//! future forcing that the past (before `s`) exerts on the scalar equation.
//! Node `j` of `y1(s)` (at `theta_j = -R + j delta`) is the forcing read at
//! time `s + R - (R + theta_j)`, i.e. it is a reflected window: values are
//! obtained by applying the barred functionals to zero-extended segments.
//!
//! The abstract equation `y' = G* y + B c` is never discretized as an
//! operator. [`evolve_abstract`] integrates the scalar component with the
//! forcing `(eta(s) x1)(0)` and rebuilds `y1` from its closed form.

use serde::{Deserialize, Serialize};

use crate::dde::{simulate_with, Dynamics, Forcing};
use crate::error::{check_finite, check_len, Result};
use crate::model::{ControlGrid, Grid, HistoryFunctional, InitialTriple, ModelSpec};
use crate::quadrature::{inner, trapezoid_weights};

/// Discretized element `(x0, x1)` of `M2`, `x1` sampled at `n_r + 1` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2Point {
    pub x0: f64,
    pub x1: Vec<f64>,
}

impl M2Point {
    pub fn new(x0: f64, x1: Vec<f64>) -> Self {
        Self { x0, x1 }
    }

    pub fn zero(n_r: usize) -> Self {
        Self::new(0.0, vec![0.0; n_r + 1])
    }

    pub fn inner(&self, other: &M2Point, delta: f64) -> f64 {
        self.x0 * other.x0 + inner(&self.x1, &other.x1, delta)
    }

    pub fn norm(&self, delta: f64) -> f64 {
        self.inner(self, delta).sqrt()
    }

    /// `self + t * (other - self)`.
    pub fn lerp(&self, other: &M2Point, t: f64) -> M2Point {
        M2Point::new(
            self.x0 + t * (other.x0 - self.x0),
            self.x1
                .iter()
                .zip(&other.x1)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }

    pub fn axpy(&self, scale: f64, dir: &M2Point) -> M2Point {
        self.lerp(&self.add(dir), scale)
    }

    fn add(&self, other: &M2Point) -> M2Point {
        M2Point::new(
            self.x0 + other.x0,
            self.x1.iter().zip(&other.x1).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn validate(&self, n_r: usize) -> Result<()> {
        check_len(&self.x1, n_r + 1, "M2 point")?;
        check_finite(&[self.x0], "M2 point")?;
        check_finite(&self.x1, "M2 point")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<M2Point>,
}

impl StructuralTrajectory {
    pub fn scalar(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x0).collect()
    }
}

/// `(f_bar phi1)(alpha) = f(est(phi1)_{-alpha})`, with `est` the zero
/// extension of `phi1` outside `(-R, 0)`.
///
/// The current node of the shifted window is excluded (it belongs to the
/// forward path); the history side `phi1(0)` is kept at the junction. For
/// functionals without density this is the reflection
/// `(f_bar phi1)(alpha) = c_r * phi1(-alpha - R)`.
pub fn lbar(f: &HistoryFunctional, phi1: &[f64], delta: f64) -> Result<Vec<f64>> {
    let n_r = phi1.len().saturating_sub(1);
    if !f.density.is_empty() {
        check_len(phi1, f.density.len(), "history for lbar")?;
    }
    if !f.has_density() {
        return Ok((0..=n_r).map(|m| f.c_r * phi1[n_r - m]).collect());
    }
    let w = trapezoid_weights(n_r + 1, delta);
    Ok((0..=n_r)
        .map(|m| {
            let tail: f64 = (0..=m.min(n_r - 1))
                .map(|i| w[i] * f.density_at(i) * phi1[n_r + i - m])
                .sum();
            f.c_r * phi1[n_r - m] + tail
        })
        .collect())
}

/// `x = (phi0, S_bar phi1 + C_bar omega)`; for AK this is
/// `(phi0, a L_bar phi1 - L_bar omega)`.
pub fn build_x1(model: &ModelSpec, init: &InitialTriple, delta: f64) -> Result<M2Point> {
    let n_r = init.phi1.len().saturating_sub(1);
    init.validate(model, n_r)?;
    let s = lbar(&model.state_functional(), &init.phi1, delta)?;
    let c = lbar(&model.control_functional(), &init.omega, delta)?;
    Ok(M2Point::new(init.phi0, s.iter().zip(&c).map(|(a, b)| a + b).collect()))
}

/// `(eta(s) u)(theta) = u(theta - (s - t))` for `theta >= -R + s - t`, zero
/// below the cutoff. The cutoff node itself keeps the shifted value, so at
/// `s = t + R` only the node `theta = 0` survives and for `s > t + R` the
/// result vanishes.
pub fn eta_shift(grid: &Grid, s: f64, u: &[f64]) -> Result<Vec<f64>> {
    check_len(u, grid.n_r + 1, "eta_shift input")?;
    let d = grid.node_index(s)?;
    Ok(shift_by(u, d))
}

fn shift_by(u: &[f64], d: usize) -> Vec<f64> {
    (0..u.len()).map(|j| if j >= d { u[j - d] } else { 0.0 }).collect()
}

pub(crate) fn abstract_forcing(grid: &Grid, x1: &[f64]) -> Forcing {
    let n_r = grid.n_r;
    let read = |node_offset: usize| if node_offset <= n_r { x1[n_r - node_offset] } else { 0.0 };
    Forcing {
        start: (0..grid.n_t).map(read).collect(),
        end: (0..grid.n_t).map(|k| read(k + 1)).collect(),
    }
}

/// Scalar trajectory of the abstract equation from `x` under `control`.
pub(crate) fn scalar_path(dynamics: &Dynamics, x: &M2Point, control: &[f64]) -> Vec<f64> {
    let n_r = dynamics.grid.n_r;
    let zeros = vec![0.0; n_r + 1];
    let forcing = abstract_forcing(&dynamics.grid, &x.x1);
    dynamics.run(x.x0, &zeros, &zeros, control, Some(&forcing)).0
}

/// `y1` at forward node `k` given the forward state path, the control and `x1`.
pub(crate) fn reassemble(
    dynamics: &Dynamics,
    k_path: &[f64],
    control: &[f64],
    x1: &[f64],
    node: usize,
) -> Vec<f64> {
    let grid = &dynamics.grid;
    let n_r = grid.n_r;
    let delta = grid.delta();
    // window [s - R, s] of the zero-extended forward paths; the junction
    // node t reads zero (its history value lives in x1)
    let seg_state: Vec<f64> = (node..=node + n_r)
        .map(|g| if g > n_r { k_path[g - n_r] } else { 0.0 })
        .collect();
    let seg_control: Vec<f64> = (node..=node + n_r)
        .map(|g| if g > n_r { control[g - n_r - 1] } else { 0.0 })
        .collect();
    let s = lbar(dynamics.state_functional(), &seg_state, delta).expect("window length");
    let c = lbar(dynamics.control_functional(), &seg_control, delta).expect("window length");
    let shifted = shift_by(x1, node);
    (0..=n_r).map(|j| s[j] + c[j] + shifted[j]).collect()
}

fn assemble(dynamics: &Dynamics, k_path: &[f64], control: &[f64], x1: &[f64]) -> StructuralTrajectory {
    let grid = &dynamics.grid;
    let points = (0..=grid.n_t)
        .map(|node| M2Point::new(k_path[node], reassemble(dynamics, k_path, control, x1, node)))
        .collect();
    StructuralTrajectory {
        times: (0..=grid.n_t).map(|j| grid.time(j)).collect(),
        points,
    }
}

/// Structural state along the solution of the original DDE.
pub fn structural_trajectory(
    model: &ModelSpec,
    grid: &Grid,
    init: &InitialTriple,
    control: &ControlGrid,
) -> Result<StructuralTrajectory> {
    let dynamics = Dynamics::new(model, *grid)?;
    let traj = simulate_with(&dynamics, model, init, control)?;
    let x = build_x1(model, init, grid.delta())?;
    let mut out = assemble(&dynamics, &traj.k, &control.values, &x.x1);
    out.points[0] = x;
    Ok(out)
}

/// Evolves an arbitrary `x` in `M2` under the abstract equation.
pub fn evolve_abstract(
    model: &ModelSpec,
    grid: &Grid,
    x: &M2Point,
    control: &ControlGrid,
) -> Result<StructuralTrajectory> {
    let dynamics = Dynamics::new(model, *grid)?;
    evolve_with(&dynamics, x, control)
}

pub fn evolve_with(dynamics: &Dynamics, x: &M2Point, control: &ControlGrid) -> Result<StructuralTrajectory> {
    x.validate(dynamics.grid.n_r)?;
    control.validate(dynamics.grid.n_t)?;
    let k = scalar_path(dynamics, x, &control.values);
    Ok(assemble(dynamics, &k, &control.values, &x.x1))
}

/// `S(s) phi = (z(s), z_s)` for the uncontrolled equation, reading `phi` as
/// `(z(0), z_0)` pointwise on the grid. `steps` is `s / delta`.
pub fn semigroup_apply(model: &ModelSpec, n_r: usize, steps: usize, phi: &M2Point) -> Result<M2Point> {
    phi.validate(n_r)?;
    if steps == 0 {
        return Ok(phi.clone());
    }
    let grid = Grid::new(0.0, model.delay, n_r, steps)?;
    let dynamics = Dynamics::new(model, grid)?;
    let zeros = vec![0.0; n_r + 1];
    let (z, _) = dynamics.run(phi.x0, &phi.x1, &zeros, &vec![0.0; steps], None);
    let mut full = phi.x1[..n_r].to_vec();
    full.extend_from_slice(&z);
    Ok(M2Point::new(z[steps], full[steps..=steps + n_r].to_vec()))
}

/// Semigroup in terms of a duration `s` (must be a multiple of `R / n_r`).
pub fn semigroup_apply_time(model: &ModelSpec, n_r: usize, s: f64, phi: &M2Point) -> Result<M2Point> {
    let grid = Grid::new(0.0, model.delay, n_r, usize::MAX / 4)?;
    let steps = (s / grid.delta()).round();
    if s < 0.0 || (s / grid.delta() - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(crate::Error::OffGrid(s));
    }
    semigroup_apply(model, n_r, steps as usize, phi)
}
