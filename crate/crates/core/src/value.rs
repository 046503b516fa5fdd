//! Discretized cost functionals `J`, `J_n` and the penalized value functions
//! `W_n`, computed by accelerated proximal gradient on the control.
//!
//! The running cost uses the left-endpoint rule `sum_k delta e^{-rho s_k}
//! [h(c_k) + g(k_k)]` on the forward nodes `k < N_T`; the terminal cost is
//! evaluated at `T`. The state constraint `g` is the indicator of `k >= 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::ConvexScalarFn;
use crate::dde::{assemble_trajectory, Dynamics, Trajectory};
use crate::error::{check_finite, check_len, Error, Result};
use crate::model::{ControlGrid, Grid, InitialTriple, ModelSpec};
use crate::structural::{abstract_forcing, build_x1, evolve_with, scalar_path, M2Point};

/// Slack allowed on `k >= 0` before a path counts as infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

pub const DEFAULT_BETAS: [f64; 6] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintMode {
    /// Quadratic penalty `beta max(0, -k)^2`, raised along the schedule.
    Penalty { betas: Vec<f64> },
    /// Infeasible controls get `+inf`; the solver only checks feasibility.
    Reject,
}

impl Default for ConstraintMode {
    fn default() -> Self {
        ConstraintMode::Penalty {
            betas: DEFAULT_BETAS.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    pub model: ModelSpec,
    pub grid: Grid,
    /// Penalization index; `None` stands for `n = inf`.
    pub n: Option<f64>,
    pub constraint_mode: ConstraintMode,
    pub terminal: ConvexScalarFn,
    pub running: ConvexScalarFn,
    /// Stationarity tolerance of the solver (gradient-map sup norm per unit time).
    pub tol: f64,
    pub max_iter: usize,
}

impl ObjectiveSpec {
    pub fn new(model: ModelSpec, grid: Grid, running: ConvexScalarFn, terminal: ConvexScalarFn) -> Self {
        Self {
            model,
            grid,
            n: Some(1.0),
            constraint_mode: ConstraintMode::default(),
            terminal,
            running,
            tol: 1e-8,
            max_iter: 20_000,
        }
    }

    pub fn with_n(mut self, n: Option<f64>) -> Self {
        self.n = n;
        self
    }

    pub fn with_grid(mut self, grid: Grid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_constraint_mode(mut self, mode: ConstraintMode) -> Self {
        self.constraint_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.model.validate(self.grid.n_r)?;
        self.running.validate()?;
        self.terminal.validate()?;
        if let Some(n) = self.n {
            if !(n >= 1.0) {
                return Err(Error::IllPosed(format!("penalization index must be >= 1, got {n}")));
            }
        }
        if let ConstraintMode::Penalty { betas } = &self.constraint_mode {
            if betas.is_empty() || betas.windows(2).any(|w| w[1] <= w[0]) || betas[0] <= 0.0 {
                return Err(Error::IllPosed("beta schedule must be positive and strictly increasing".into()));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::IllPosed("solver tolerance must be positive".into()));
        }
        Ok(())
    }

    fn terminal_is_smooth(&self) -> bool {
        match &self.terminal {
            ConvexScalarFn::Quadratic { .. } | ConvexScalarFn::Linear { .. } => true,
            ConvexScalarFn::Custom(f) => f.lower.is_none(),
            _ => false,
        }
    }

    /// `h_n` restricted to `c >= 0`, the part handled by the prox.
    pub(crate) fn prox_part(&self) -> ConvexScalarFn {
        self.running.clone().nonneg().penalized(self.n)
    }

    /// `delta e^{-rho s_k}` for every forward node `k = 0..=N_T`.
    pub fn weights(&self) -> Vec<f64> {
        let delta = self.grid.delta();
        (0..=self.grid.n_t)
            .map(|k| delta * (-self.model.rho * self.grid.time(k)).exp())
            .collect()
    }

    /// Same objective restarted `steps` nodes later.
    pub fn advanced(&self, steps: usize) -> Self {
        let mut out = self.clone();
        out.grid = self.grid.advanced(steps);
        out
    }
}

/// Outcome of one penalized solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub value: f64,
    pub control: ControlGrid,
    pub trajectory: Trajectory,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gap_estimate: f64,
}

/// A spec bound to a starting point; the control-to-state map is affine.
pub(crate) struct Problem<'a> {
    pub spec: &'a ObjectiveSpec,
    pub dynamics: Dynamics,
    pub x: M2Point,
    pub weights: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(spec: &'a ObjectiveSpec, x: &M2Point) -> Result<Self> {
        spec.validate()?;
        let dynamics = Dynamics::new(&spec.model, spec.grid)?;
        x.validate(spec.grid.n_r)?;
        Ok(Self {
            spec,
            dynamics,
            x: x.clone(),
            weights: spec.weights(),
        })
    }

    fn n_t(&self) -> usize {
        self.spec.grid.n_t
    }

    pub fn path(&self, control: &[f64]) -> Vec<f64> {
        scalar_path(&self.dynamics, &self.x, control)
    }

    /// Linear part `c -> k` with zero data.
    fn linear_path(&self, control: &[f64]) -> Vec<f64> {
        let zeros = vec![0.0; self.spec.grid.n_r + 1];
        self.dynamics.run(0.0, &zeros, &zeros, control, None).0
    }

    pub fn trajectory(&self, control: &[f64]) -> Trajectory {
        let zeros = vec![0.0; self.spec.grid.n_r + 1];
        let forcing = abstract_forcing(&self.spec.grid, &self.x.x1);
        let (k, kdot) = self
            .dynamics
            .run(self.x.x0, &zeros, &zeros, control, Some(&forcing));
        assemble_trajectory(&self.spec.model, &self.spec.grid, k, kdot, control)
    }

    /// Running part `sum_k w_k h_n(c_k)` (including `c >= 0`).
    pub fn running_cost(&self, control: &[f64]) -> f64 {
        let h = self.spec.prox_part();
        control
            .iter()
            .zip(&self.weights)
            .map(|(&c, w)| w * h.eval(c))
            .sum()
    }

    /// Discretized `J_n` with the state constraint as an indicator.
    pub fn objective(&self, control: &[f64]) -> f64 {
        if control.iter().any(|&c| c < 0.0) {
            return f64::INFINITY;
        }
        let k = self.path(control);
        let slack = match self.spec.constraint_mode {
            ConstraintMode::Reject => 0.0,
            ConstraintMode::Penalty { .. } => FEASIBILITY_TOL,
        };
        if k.iter().any(|&v| v < -slack) {
            return f64::INFINITY;
        }
        self.running_cost(control) + self.spec.terminal.eval(k[self.n_t()])
    }

    /// Smooth part for penalty level `beta`: terminal cost plus the state
    /// penalty. Returns the value and, if asked, the gradient in `c`.
    pub fn smooth(&self, control: &[f64], beta: f64, want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let n_t = self.n_t();
        let k = self.path(control);
        let phi = &self.spec.terminal;
        let mut value = phi.eval(k[n_t]);
        let mut dk = vec![0.0; n_t + 1];
        dk[n_t] = phi.right_derivative(k[n_t]);
        for j in 1..=n_t {
            let v = (-k[j]).max(0.0);
            if v > 0.0 {
                value += beta * v * v;
                dk[j] -= 2.0 * beta * v;
            }
        }
        let grad = want_grad.then(|| self.dynamics.adjoint(&dk).0);
        (value, grad)
    }

    fn prox(&self, v: &[f64], step: f64) -> Vec<f64> {
        let h = self.spec.prox_part();
        v.iter()
            .zip(&self.weights)
            .map(|(&vi, w)| h.prox_scaled(step * w, vi))
            .collect()
    }

    /// Largest eigenvalue of the generalized Hessian of the smooth part at `c`.
    fn lipschitz_estimate(&self, control: &[f64], beta: f64) -> f64 {
        let n_t = self.n_t();
        if n_t == 0 {
            return 1.0;
        }
        let k = self.path(control);
        let mut curvature = vec![0.0; n_t + 1];
        for j in 1..=n_t {
            if k[j] < 0.0 {
                curvature[j] = 2.0 * beta;
            }
        }
        curvature[n_t] += terminal_curvature(&self.spec.terminal);
        let mut v = vec![1.0 / (n_t as f64).sqrt(); n_t];
        let mut lambda = 0.0;
        for _ in 0..30 {
            let kv = self.linear_path(&v);
            let weighted: Vec<f64> = kv.iter().zip(&curvature).map(|(a, b)| a * b).collect();
            let hv = self.dynamics.adjoint(&weighted).0;
            let norm = hv.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = hv.iter().map(|a| a / norm).collect();
        }
        lambda
    }
}

fn terminal_curvature(phi: &ConvexScalarFn) -> f64 {
    match phi {
        ConvexScalarFn::Quadratic { curvature, .. } => *curvature,
        _ => 0.0,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discretized `J` (or `J_n` when `spec.n` is finite) at a structural state.
/// Negative controls, and infeasible states, give `+inf`.
pub fn evaluate_j(spec: &ObjectiveSpec, x: &M2Point, control: &ControlGrid) -> Result<f64> {
    check_len(&control.values, spec.grid.n_t, "control")?;
    check_finite(&control.values, "control")?;
    let problem = Problem::new(spec, x)?;
    Ok(problem.objective(&control.values))
}

/// [`evaluate_j`] from an initial triple, through the structural state.
pub fn evaluate_j_triple(spec: &ObjectiveSpec, init: &InitialTriple, control: &ControlGrid) -> Result<f64> {
    let x = build_x1(&spec.model, init, spec.grid.delta())?;
    evaluate_j(spec, &x, control)
}

/// Smooth part of the penalized objective and its adjoint gradient.
pub fn smooth_objective(spec: &ObjectiveSpec, x: &M2Point, beta: f64, control: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(control, spec.grid.n_t, "control")?;
    let problem = Problem::new(spec, x)?;
    let (v, g) = problem.smooth(control, beta, true);
    Ok((v, g.expect("gradient requested")))
}

fn initial_control(spec: &ObjectiveSpec, x: &M2Point) -> Vec<f64> {
    let span = spec.grid.n_t as f64 * spec.grid.delta();
    let c = if x.x0 > 0.0 && span > 0.0 { 0.1 * x.x0 / span } else { 0.1 };
    vec![c; spec.grid.n_t]
}

struct Inner {
    control: Vec<f64>,
    iterations: usize,
    gap: f64,
    converged: bool,
}

/// Accelerated proximal gradient with backtracking and adaptive restart.
fn fista(problem: &Problem, start: Vec<f64>, beta: f64, budget: usize) -> Inner {
    let spec = problem.spec;
    let n_t = problem.n_t();
    let delta = spec.grid.delta();
    if n_t == 0 {
        return Inner {
            control: start,
            iterations: 0,
            gap: 0.0,
            converged: true,
        };
    }
    let mut lip = problem.lipschitz_estimate(&start, beta).max(1e-6 * delta);
    let mut c = start.clone();
    let mut y = start;
    let mut momentum: f64 = 1.0;
    let mut gap = f64::INFINITY;
    for it in 0..budget {
        let (fy, gy) = problem.smooth(&y, beta, true);
        let gy = gy.expect("gradient requested");
        let (cand, d) = loop {
            let trial: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - g / lip).collect();
            let cand = problem.prox(&trial, 1.0 / lip);
            let d: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let (fc, _) = problem.smooth(&cand, beta, false);
            let model = fy + dot(&gy, &d) + 0.5 * lip * dot(&d, &d);
            if fc <= model + 1e-13 * fy.abs().max(1.0) || lip > 1e300 {
                break (cand, d);
            }
            lip *= 2.0;
        };
        gap = d
            .iter()
            .zip(&problem.weights)
            .map(|(di, w)| lip * di.abs() / w)
            .fold(0.0, f64::max);
        if gap <= spec.tol {
            return Inner {
                control: cand,
                iterations: it + 1,
                gap,
                converged: true,
            };
        }
        let step: Vec<f64> = cand.iter().zip(&c).map(|(a, b)| a - b).collect();
        // gradient-based restart: d points from y to cand
        if dot(&d, &step) < 0.0 {
            momentum = 1.0;
            y = cand.clone();
        } else {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let w = (momentum - 1.0) / next;
            y = cand.iter().zip(&step).map(|(a, s)| a + w * s).collect();
            momentum = next;
        }
        c = cand;
    }
    Inner {
        control: c,
        iterations: budget,
        gap,
        converged: false,
    }
}

/// `W_n(t, x)`: minimizes the discretized `J_n` over `c >= 0`.
pub fn solve_penalized(spec: &ObjectiveSpec, x: &M2Point) -> Result<SolveResult> {
    let problem = Problem::new(spec, x)?;
    if spec.n.is_none() && !matches!(spec.running, ConvexScalarFn::Quadratic { curvature, .. } if curvature > 0.0) {
        return Err(Error::IllPosed("solve_penalized needs a finite penalization index".into()));
    }
    if !spec.terminal_is_smooth() {
        return Err(Error::IllPosed("terminal cost must be differentiable".into()));
    }
    let slack = match spec.constraint_mode {
        ConstraintMode::Penalty { .. } => FEASIBILITY_TOL,
        ConstraintMode::Reject => 0.0,
    };
    if x.x0 < -slack {
        return Err(Error::IllPosed(format!("initial state {} violates k >= 0", x.x0)));
    }
    let betas = match &spec.constraint_mode {
        ConstraintMode::Penalty { betas } => betas.clone(),
        ConstraintMode::Reject => vec![0.0],
    };
    let mut control = initial_control(spec, x);
    let mut iterations = 0;
    let mut gap = 0.0;
    let mut converged = false;
    let mut violation = f64::INFINITY;
    for &beta in &betas {
        let budget = spec.max_iter.saturating_sub(iterations).max(1);
        let inner = fista(&problem, control, beta, budget);
        iterations += inner.iterations;
        control = inner.control;
        gap = inner.gap;
        let k = problem.path(&control);
        violation = (-k.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0);
        converged = inner.converged;
        if violation <= FEASIBILITY_TOL || iterations >= spec.max_iter {
            break;
        }
    }
    converged &= violation <= FEASIBILITY_TOL;
    let value = problem.running_cost(&control) + spec.terminal.eval(problem.path(&control)[spec.grid.n_t]);
    if !value.is_finite() || value < -1e15 || control.iter().any(|c| c.abs() > 1e12) {
        return Err(Error::IllPosed("objective is unbounded below on the feasible set".into()));
    }
    let trajectory = problem.trajectory(&control);
    Ok(SolveResult {
        value,
        control: ControlGrid::new(control),
        trajectory,
        constraint_violation: violation,
        iterations,
        converged,
        gap_estimate: gap,
    })
}

/// Solves from an initial triple, through the structural state.
pub fn solve_penalized_triple(spec: &ObjectiveSpec, init: &InitialTriple) -> Result<SolveResult> {
    let x = build_x1(&spec.model, init, spec.grid.delta())?;
    solve_penalized(spec, &x)
}

/// `W_n` over an increasing list of indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTable {
    pub ns: Vec<f64>,
    pub results: Vec<SolveResult>,
    /// `W_{n_max}`.
    pub estimate: f64,
    /// `W_{n_i} - W_{n_{i+1}}`.
    pub differences: Vec<f64>,
    /// Whether the chain is nonincreasing within `10 tol`.
    pub monotone: bool,
}

pub fn value_w(spec: &ObjectiveSpec, x: &M2Point, ns: &[f64]) -> Result<ValueTable> {
    if ns.is_empty() || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::IllPosed("n list must be nonempty and strictly increasing".into()));
    }
    let results = ns
        .iter()
        .map(|&n| solve_penalized(&spec.clone().with_n(Some(n)), x))
        .collect::<Result<Vec<_>>>()?;
    let differences: Vec<f64> = results.windows(2).map(|w| w[0].value - w[1].value).collect();
    let monotone = differences.iter().all(|&d| d >= -10.0 * spec.tol);
    Ok(ValueTable {
        ns: ns.to_vec(),
        estimate: results.last().expect("nonempty").value,
        results,
        differences,
        monotone,
    })
}

/// Largest number of candidate controls [`dp_oracle`] will enumerate.
pub const ORACLE_BUDGET: u128 = 1_000_000;

/// Exhaustive minimum of the discretized `J_n` over controls with values in
/// `levels`. Infeasible paths are skipped.
pub fn dp_oracle(spec: &ObjectiveSpec, x: &M2Point, levels: &[f64]) -> Result<f64> {
    let problem = Problem::new(spec, x)?;
    let n_t = spec.grid.n_t;
    let count = (levels.len() as u128).checked_pow(n_t as u32).unwrap_or(u128::MAX);
    if count > ORACLE_BUDGET {
        return Err(Error::Budget(count));
    }
    check_finite(levels, "levels")?;
    // k = free + A c, so each candidate costs one small mat-vec
    let free = problem.path(&vec![0.0; n_t]);
    let columns: Vec<Vec<f64>> = (0..n_t)
        .map(|j| {
            let mut e = vec![0.0; n_t];
            e[j] = 1.0;
            problem.linear_path(&e)
        })
        .collect();
    let h = spec.prox_part();
    let cost: Vec<Vec<f64>> = (0..n_t)
        .map(|k| levels.iter().map(|&c| problem.weights[k] * h.eval(c)).collect())
        .collect();
    let slack = match spec.constraint_mode {
        ConstraintMode::Reject => 0.0,
        ConstraintMode::Penalty { .. } => FEASIBILITY_TOL,
    };
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n_t];
    let mut k = vec![0.0; n_t + 1];
    'outer: loop {
        k.copy_from_slice(&free);
        let mut running = 0.0;
        for (j, &i) in idx.iter().enumerate() {
            running += cost[j][i];
            let c = levels[i];
            if c != 0.0 {
                for (kv, a) in k.iter_mut().zip(&columns[j]) {
                    *kv += a * c;
                }
            }
        }
        if k.iter().all(|&v| v >= -slack) {
            best = best.min(running + spec.terminal.eval(k[n_t]));
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < levels.len() {
                continue 'outer;
            }
            *slot = 0;
        }
        break;
    }
    Ok(best)
}

/// `|W_n(t, x) - (running cost on [t, t + d] + W_n(t + d, y(t + d)))|` with
/// the first segment taken from the full-horizon optimizer. That segment
/// attains the inner minimum whenever the discrete DPP holds, so the
/// residual measures exactly the DPP defect.
pub fn dpp_check(spec: &ObjectiveSpec, x: &M2Point, delta_steps: usize) -> Result<f64> {
    let n_t = spec.grid.n_t;
    if delta_steps > n_t {
        return Err(Error::InvalidGrid(format!("split {delta_steps} beyond horizon {n_t}")));
    }
    if delta_steps == 0 {
        return Ok(0.0);
    }
    let full = solve_penalized(spec, x)?;
    let problem = Problem::new(spec, x)?;
    let head = &full.control.values[..delta_steps];
    let running = head
        .iter()
        .zip(&problem.weights)
        .map(|(&c, w)| w * spec.prox_part().eval(c))
        .sum::<f64>();
    let states = evolve_with(&problem.dynamics, x, &full.control)?;
    let y = &states.points[delta_steps];
    let tail_spec = spec.advanced(delta_steps);
    let tail = if delta_steps == n_t {
        spec.terminal.eval(y.x0)
    } else {
        solve_penalized(&tail_spec, y)?.value
    };
    Ok((full.value - (running + tail)).abs())
}

/// Random perturbation of `base` with smooth `x1` modes.
pub fn random_point(base: &M2Point, scale: f64, rng: &mut impl Rng) -> M2Point {
    let n_r = base.x1.len() - 1;
    let a0: f64 = rng.gen_range(-1.0..1.0);
    let modes: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let x1 = (0..=n_r)
        .map(|j| {
            let th = j as f64 / n_r as f64;
            let bump: f64 = modes
                .iter()
                .enumerate()
                .map(|(m, a)| a * (std::f64::consts::PI * m as f64 * th).cos() / (m + 1) as f64)
                .sum();
            base.x1[j] + scale * bump
        })
        .collect();
    M2Point::new(base.x0 + scale * a0, x1)
}

/// Largest midpoint-convexity violation `W_n(mid) - (W_n(x) + W_n(x')) / 2`
/// over `segments` random pairs around `base`.
pub fn convexity_check(spec: &ObjectiveSpec, base: &M2Point, scale: f64, segments: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..segments {
        let p = random_point(base, scale, &mut rng);
        let q = random_point(base, scale, &mut rng);
        let mid = p.lerp(&q, 0.5);
        let wp = solve_penalized(spec, &p)?.value;
        let wq = solve_penalized(spec, &q)?.value;
        let wm = solve_penalized(spec, &mid)?.value;
        worst = worst.max(wm - 0.5 * (wp + wq));
    }
    Ok(worst)
}

/// Unconstrained minimizer of a linear-quadratic instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqSolution {
    pub value: f64,
    pub control: Vec<f64>,
    /// `dW/dx0`.
    pub p0: f64,
    /// `dW/dx1` node values, normalized like [`crate::hjb::gradient_fd`].
    pub p1: Vec<f64>,
    /// The minimizer is nonnegative and the path stays in `k >= 0`.
    pub constraints_inactive: bool,
}

/// Normal equations of the LQ problem with quadratic `h` and `phi`,
/// ignoring both constraints.
pub fn lq_reference(spec: &ObjectiveSpec, x: &M2Point) -> Result<LqSolution> {
    use nalgebra::{DMatrix, DVector};

    let (q, m) = match spec.running {
        ConvexScalarFn::Quadratic { curvature, linear } => (curvature, linear),
        _ => return Err(Error::IllPosed("LQ reference needs a quadratic running cost".into())),
    };
    let (qt, mt) = match spec.terminal {
        ConvexScalarFn::Quadratic { curvature, linear } => (curvature, linear),
        ConvexScalarFn::Linear { slope } => (0.0, slope),
        _ => return Err(Error::IllPosed("LQ reference needs a quadratic terminal cost".into())),
    };
    let problem = Problem::new(spec, x)?;
    let n_t = spec.grid.n_t;
    let n_r = spec.grid.n_r;
    let inv_n = spec.n.map_or(0.0, |n| 1.0 / n);
    let free = problem.path(&vec![0.0; n_t]);
    let b = free[n_t];
    let a = DVector::from_iterator(
        n_t,
        (0..n_t).map(|j| {
            let mut e = vec![0.0; n_t];
            e[j] = 1.0;
            problem.linear_path(&e)[n_t]
        }),
    );
    let w = &problem.weights;
    let mut mat = DMatrix::from_diagonal(&DVector::from_iterator(n_t, (0..n_t).map(|k| w[k] * (q + inv_n))));
    mat += qt * &a * a.transpose();
    let rhs = -DVector::from_iterator(n_t, (0..n_t).map(|k| w[k] * m)) - (qt * b + mt) * &a;
    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular LQ normal equations".into()))?;
    let control: Vec<f64> = sol.iter().copied().collect();
    let k = problem.path(&control);
    let kt = k[n_t];
    let value = (0..n_t)
        .map(|j| w[j] * (0.5 * (q + inv_n) * control[j].powi(2) + m * control[j]))
        .sum::<f64>()
        + 0.5 * qt * kt * kt
        + mt * kt;
    // envelope theorem: only the terminal term sees x directly
    let slope = qt * kt + mt;
    let dyn_ = &problem.dynamics;
    let zero_c = vec![0.0; n_t];
    let p0 = slope * scalar_path(dyn_, &M2Point::new(1.0, vec![0.0; n_r + 1]), &zero_c)[n_t];
    let hat = crate::quadrature::trapezoid_weights(n_r + 1, spec.grid.delta());
    let p1 = (0..=n_r)
        .map(|j| {
            let mut e = vec![0.0; n_r + 1];
            e[j] = 1.0;
            slope * scalar_path(dyn_, &M2Point::new(0.0, e), &zero_c)[n_t] / hat[j]
        })
        .collect();
    let constraints_inactive = control.iter().all(|&c| c >= 0.0) && k.iter().all(|&v| v >= 0.0);
    Ok(LqSolution {
        value,
        control,
        p0,
        p1,
        constraints_inactive,
    })
}
