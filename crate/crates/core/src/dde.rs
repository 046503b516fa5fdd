//! Method-of-steps simulation of the controlled linear DDEs.
//!
//! The dynamics are `k'(s) = S(k_s) + C(c_s)` where `S` and `C` are
//! [`HistoryFunctional`]s acting on the state and control windows over
//! `[s - R, s]`. With `delta = R / n_r` every delayed lookup lands on a node.
//!
//! Each step is an explicit trapezoid (Heun) step in which only the value at
//! the current node is predicted; all other window entries are known. The
//! step is linear, so it is compiled once into a [`Stencil`] that the forward
//! pass and its adjoint share.
//!
//! Junction convention at the initial time `t`: the current state there is
//! `phi0`, while delayed lookups of node `t` read the history side
//! (`phi1(0)`, `omega(0)`). Past control nodes carry the value of the cell
//! that ends at them (left-continuous reading of the piecewise-constant
//! control).

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::model::{ControlGrid, Grid, HistoryFunctional, InitialTriple, ModelSpec};
use crate::quadrature::{l2_norm, trapezoid_weights};

/// Source of a known window entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Src {
    StateHist(usize),
    StateFwd(usize),
    ControlHist(usize),
    Control(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub start: Vec<(Src, f64)>,
    pub end: Vec<(Src, f64)>,
}

/// Compiled dynamics of a model on a grid.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub grid: Grid,
    state_fn: HistoryFunctional,
    control_fn: HistoryFunctional,
    /// Coefficient of the current state in the right-hand side.
    kappa_state: f64,
    /// Coefficient of the current control in the right-hand side.
    kappa_control: f64,
    stencils: Vec<Stencil>,
}

/// Exogenous forcing added at the start and end evaluation of each step.
#[derive(Debug, Clone, Default)]
pub(crate) struct Forcing {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

/// Sampled solution of the DDE on the forward nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub k: Vec<f64>,
    pub kdot: Vec<f64>,
    /// `a k` for the AK model, the goodwill itself otherwise.
    pub output: Vec<f64>,
    /// `a k - c` for the AK model; the spending rate for the goodwill model.
    pub investment: Vec<f64>,
    /// Control value read at each node (right-continuous, last node repeats).
    pub control: Vec<f64>,
}

impl Trajectory {
    pub fn min_state(&self) -> f64 {
        self.k.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn terminal(&self) -> f64 {
        *self.k.last().expect("trajectory has at least one node")
    }
}

impl Dynamics {
    pub fn new(model: &ModelSpec, grid: Grid) -> Result<Self> {
        grid.validate()?;
        model.validate(grid.n_r)?;
        if (model.delay - grid.delay).abs() > 1e-12 * model.delay {
            return Err(Error::InvalidGrid(format!(
                "grid delay {} differs from model delay {}",
                grid.delay, model.delay
            )));
        }
        let state_fn = model.state_functional();
        let control_fn = model.control_functional();
        Ok(Self::from_functionals(state_fn, control_fn, grid))
    }

    pub(crate) fn from_functionals(
        state_fn: HistoryFunctional,
        control_fn: HistoryFunctional,
        grid: Grid,
    ) -> Self {
        let n_r = grid.n_r;
        let w = trapezoid_weights(n_r + 1, grid.delta());
        let kappa_state = state_fn.c0 + w[n_r] * state_fn.density_at(n_r);
        let kappa_control = control_fn.c0 + w[n_r] * control_fn.density_at(n_r);
        let stencils = (0..grid.n_t)
            .map(|k| Stencil {
                start: window(&state_fn, &control_fn, &w, n_r, n_r + k),
                end: window(&state_fn, &control_fn, &w, n_r, n_r + k + 1),
            })
            .collect();
        Self {
            grid,
            state_fn,
            control_fn,
            kappa_state,
            kappa_control,
            stencils,
        }
    }

    pub fn state_functional(&self) -> &HistoryFunctional {
        &self.state_fn
    }

    pub fn control_functional(&self) -> &HistoryFunctional {
        &self.control_fn
    }

    /// Runs the recursion. Returns `(k, kdot)` on the forward nodes.
    pub(crate) fn run(
        &self,
        x0: f64,
        state_hist: &[f64],
        control_hist: &[f64],
        control: &[f64],
        forcing: Option<&Forcing>,
    ) -> (Vec<f64>, Vec<f64>) {
        let n_t = self.grid.n_t;
        let delta = self.grid.delta();
        let mut k = vec![0.0; n_t + 1];
        let mut kdot = vec![0.0; n_t + 1];
        k[0] = x0;
        let read = |src: Src, k: &[f64]| match src {
            Src::StateHist(i) => state_hist[i],
            Src::StateFwd(j) => k[j],
            Src::ControlHist(i) => control_hist[i],
            Src::Control(j) => control[j],
        };
        for (step, st) in self.stencils.iter().enumerate() {
            let (fs_extra, fe_extra) = forcing
                .map(|f| (f.start[step], f.end[step]))
                .unwrap_or((0.0, 0.0));
            let drive = self.kappa_control * control[step];
            let f_start = st.start.iter().map(|&(s, w)| w * read(s, &k)).sum::<f64>()
                + self.kappa_state * k[step]
                + drive
                + fs_extra;
            let pred = k[step] + delta * f_start;
            let f_end = st.end.iter().map(|&(s, w)| w * read(s, &k)).sum::<f64>()
                + self.kappa_state * pred
                + drive
                + fe_extra;
            k[step + 1] = k[step] + 0.5 * delta * (f_start + f_end);
            kdot[step] = f_start;
            if step + 1 == n_t {
                kdot[n_t] = f_end;
            }
        }
        (k, kdot)
    }

    /// Reverse pass of [`Dynamics::run`]: given `dJ/dk` at every forward node,
    /// returns `(dJ/dc, dJ/dx0)`. Histories and forcing are constants and get
    /// no adjoint.
    pub fn adjoint(&self, dk: &[f64]) -> (Vec<f64>, f64) {
        let n_t = self.grid.n_t;
        let delta = self.grid.delta();
        assert_eq!(dk.len(), n_t + 1);
        let mut lam = dk.to_vec();
        let mut gc = vec![0.0; n_t];
        let scatter = |refs: &[(Src, f64)], adj: f64, lam: &mut [f64], gc: &mut [f64]| {
            for &(src, w) in refs {
                match src {
                    Src::StateFwd(j) => lam[j] += w * adj,
                    Src::Control(j) => gc[j] += w * adj,
                    Src::StateHist(_) | Src::ControlHist(_) => {}
                }
            }
        };
        for step in (0..n_t).rev() {
            let st = &self.stencils[step];
            let lb = lam[step + 1];
            let d_fe = 0.5 * delta * lb;
            let mut d_fs = 0.5 * delta * lb;
            lam[step] += lb;
            let d_pred = self.kappa_state * d_fe;
            gc[step] += self.kappa_control * d_fe;
            scatter(&st.end, d_fe, &mut lam, &mut gc);
            lam[step] += d_pred;
            d_fs += delta * d_pred;
            lam[step] += self.kappa_state * d_fs;
            gc[step] += self.kappa_control * d_fs;
            scatter(&st.start, d_fs, &mut lam, &mut gc);
        }
        (gc, lam[0])
    }
}

/// Known entries of the window ending at full-path node `current`.
fn window(
    state_fn: &HistoryFunctional,
    control_fn: &HistoryFunctional,
    w: &[f64],
    n_r: usize,
    current: usize,
) -> Vec<(Src, f64)> {
    let first = current - n_r;
    let mut refs = Vec::with_capacity(2 * n_r + 2);
    for (f, is_state) in [(state_fn, true), (control_fn, false)] {
        let src = |g: usize| past_node(g, n_r, is_state);
        if f.c_r != 0.0 {
            refs.push((src(first), f.c_r));
        }
        if f.has_density() {
            for i in 0..n_r {
                let coef = w[i] * f.density_at(i);
                if coef != 0.0 {
                    refs.push((src(first + i), coef));
                }
            }
        }
    }
    refs
}

/// Source of the delayed reading of full-path node `g` (junction at `g = n_r`).
fn past_node(g: usize, n_r: usize, is_state: bool) -> Src {
    match (is_state, g <= n_r) {
        (true, true) => Src::StateHist(g),
        (true, false) => Src::StateFwd(g - n_r),
        (false, true) => Src::ControlHist(g),
        (false, false) => Src::Control(g - n_r - 1),
    }
}

/// Solves the DDE for the given model, grid, initial triple and control.
pub fn simulate(
    model: &ModelSpec,
    grid: &Grid,
    init: &InitialTriple,
    control: &ControlGrid,
) -> Result<Trajectory> {
    let dynamics = Dynamics::new(model, *grid)?;
    simulate_with(&dynamics, model, init, control)
}

pub fn simulate_with(
    dynamics: &Dynamics,
    model: &ModelSpec,
    init: &InitialTriple,
    control: &ControlGrid,
) -> Result<Trajectory> {
    let grid = &dynamics.grid;
    init.validate(model, grid.n_r)?;
    control.validate(grid.n_t)?;
    let (k, kdot) = dynamics.run(init.phi0, &init.phi1, &init.omega, &control.values, None);
    Ok(assemble_trajectory(model, grid, k, kdot, &control.values))
}

pub(crate) fn assemble_trajectory(
    model: &ModelSpec,
    grid: &Grid,
    k: Vec<f64>,
    kdot: Vec<f64>,
    control: &[f64],
) -> Trajectory {
    let n_t = grid.n_t;
    let times = (0..=n_t).map(|j| grid.time(j)).collect();
    let c_nodes: Vec<f64> = (0..=n_t)
        .map(|j| control.get(j.min(n_t.saturating_sub(1))).copied().unwrap_or(0.0))
        .collect();
    let (output, investment) = match &model.kind {
        crate::model::ModelKind::Ak { a } => {
            let out: Vec<f64> = k.iter().map(|v| a * v).collect();
            let inv = out.iter().zip(&c_nodes).map(|(y, c)| y - c).collect();
            (out, inv)
        }
        crate::model::ModelKind::Advertising { .. } => (k.clone(), c_nodes.clone()),
    };
    Trajectory {
        times,
        k,
        kdot,
        output,
        investment,
        control: c_nodes,
    }
}

/// Samples of `path` (on `[t - R, T]`, `n_r + n_t + 1` nodes) on `[s - R, s]`.
pub fn segment_extract(grid: &Grid, path: &[f64], s: f64) -> Result<Vec<f64>> {
    check_len(path, grid.full_len(), "full path")?;
    let k = grid.node_index(s)?;
    Ok(path[k..=k + grid.n_r].to_vec())
}

/// Zero-extends a forward path (`n_t + 1` samples on `[t, T]`) to `[t - R, T]`.
pub fn extend_plus(grid: &Grid, forward: &[f64]) -> Result<Vec<f64>> {
    check_len(forward, grid.n_t + 1, "forward path")?;
    let mut out = vec![0.0; grid.n_r];
    out.extend_from_slice(forward);
    Ok(out)
}

/// Places a history (`n_r + 1` samples on `[-R, 0]`) on `[t - R, t)` and
/// zero on `[t, T]`.
pub fn extend_minus(grid: &Grid, history: &[f64]) -> Result<Vec<f64>> {
    check_len(history, grid.n_r + 1, "history")?;
    let mut out = history[..grid.n_r].to_vec();
    out.resize(grid.full_len(), 0.0);
    Ok(out)
}

/// Splits a full path into its history (`[t - R, t]`) and forward (`[t, T]`) parts.
pub fn split_path(grid: &Grid, path: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(path, grid.full_len(), "full path")?;
    Ok((path[..=grid.n_r].to_vec(), path[grid.n_r..].to_vec()))
}

/// Result of [`estimate_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub sup_norm_k: f64,
    pub data_norm: f64,
    pub ratio: f64,
}

/// Compares `sup |k|` with `|phi0| + |phi1| + |omega| + |c|` (L2 norms).
pub fn estimate_check(
    model: &ModelSpec,
    grid: &Grid,
    init: &InitialTriple,
    control: &ControlGrid,
) -> Result<EstimateReport> {
    let traj = simulate(model, grid, init, control)?;
    let delta = grid.delta();
    let sup_norm_k = traj.k.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let control_norm = (control.values.iter().map(|c| c * c).sum::<f64>() * delta).sqrt();
    let data_norm = init.phi0.abs()
        + l2_norm(&init.phi1, delta)
        + l2_norm(&init.omega, delta)
        + control_norm;
    let ratio = if data_norm == 0.0 { 0.0 } else { sup_norm_k / data_norm };
    check_finite(&[sup_norm_k, data_norm], "estimate")?;
    Ok(EstimateReport {
        sup_norm_k,
        data_norm,
        ratio,
    })
}
