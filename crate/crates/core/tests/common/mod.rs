#![allow(dead_code)]

use dde_hjb::convex::ConvexScalarFn;
use dde_hjb::structural::{build_x1, M2Point};
use dde_hjb::value::ObjectiveSpec;
use dde_hjb::{Grid, InitialTriple, ModelSpec};

/// AK with CRRA(2) running cost and terminal `-k`, `delta = 0.05`.
pub fn ak_reference() -> (ObjectiveSpec, M2Point) {
    let model = ModelSpec::ak(0.3, 1.0, 0.05);
    let grid = Grid::spanning(0.0, 2.0, 1.0, 20).unwrap();
    let spec = ObjectiveSpec::new(model.clone(), grid, ConvexScalarFn::crra(2.0), ConvexScalarFn::Linear { slope: -1.0 })
        .with_tol(1e-8);
    let init = InitialTriple::constant(3.0, 3.0, 0.2, 20);
    let x = build_x1(&model, &init, grid.delta()).unwrap();
    (spec, x)
}

/// Quadratic `h` and `phi` with the optimal control bounded away from zero
/// and the state away from the constraint.
pub fn lq_instance(n_r: usize) -> (ObjectiveSpec, M2Point) {
    let model = ModelSpec::ak(0.3, 1.0, 0.05);
    let grid = Grid::spanning(0.0, 0.8, 1.0, n_r).unwrap();
    let spec = ObjectiveSpec::new(
        model,
        grid,
        ConvexScalarFn::quadratic(1.0, -2.0),
        ConvexScalarFn::quadratic(1.0, -3.0),
    )
    .with_tol(1e-9);
    let x1 = (0..=n_r).map(|j| 0.5 + 0.1 * j as f64 / n_r as f64).collect();
    (spec, M2Point::new(1.0, x1))
}

pub fn advertising_model(n_r: usize) -> ModelSpec {
    ModelSpec::advertising(-0.5, vec![0.1; n_r + 1], 1.0, vec![0.2; n_r + 1], 1.0, 0.05)
}

pub fn advertising_reference() -> (ObjectiveSpec, M2Point) {
    let model = advertising_model(10);
    let grid = Grid::spanning(0.0, 2.0, 1.0, 10).unwrap();
    let spec = ObjectiveSpec::new(model.clone(), grid, ConvexScalarFn::quadratic(1.0, 0.0), ConvexScalarFn::Linear { slope: -1.0 })
        .with_tol(1e-8);
    let init = InitialTriple::constant(1.0, 1.0, 0.3, 10);
    let x = build_x1(&model, &init, grid.delta()).unwrap();
    (spec, x)
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Continuous-time data of a linear DDE
/// `k' = s0 k + sr k(s-R) + int sd k(s+xi) + c0 u + cr u(s-R) + int cd u(s+xi)`
/// with constant densities, started at time 0.
pub struct Continuous<'a> {
    pub delay: f64,
    pub s0: f64,
    pub sr: f64,
    pub sd: f64,
    pub c0: f64,
    pub cr: f64,
    pub cd: f64,
    pub phi0: f64,
    pub phi1: &'a dyn Fn(f64) -> f64,
    pub omega: &'a dyn Fn(f64) -> f64,
    pub control: &'a dyn Fn(f64) -> f64,
}

impl<'a> Continuous<'a> {
    pub fn ak(
        a: f64,
        delay: f64,
        phi0: f64,
        phi1: &'a dyn Fn(f64) -> f64,
        omega: &'a dyn Fn(f64) -> f64,
        control: &'a dyn Fn(f64) -> f64,
    ) -> Self {
        Continuous { delay, s0: a, sr: -a, sd: 0.0, c0: -1.0, cr: 1.0, cd: 0.0, phi0, phi1, omega, control }
    }

    /// Explicit trapezoid (Heun) method of steps with `m_r` steps per delay.
    /// Returns the state at `0, h, ..., horizon`.
    pub fn solve(&self, horizon: f64, m_r: usize) -> Vec<f64> {
        let h = self.delay / m_r as f64;
        let m_t = (horizon / h).round() as usize;
        let mut k: Vec<f64> = Vec::with_capacity(m_t + 1);
        k.push(self.phi0);
        let state = |k: &[f64], m: i64, current: Option<f64>| -> f64 {
            if m < 0 {
                (self.phi1)(m as f64 * h)
            } else if m as usize >= k.len() {
                current.expect("current node")
            } else {
                k[m as usize]
            }
        };
        let ctrl = |m: i64| if m < 0 { (self.omega)(m as f64 * h) } else { (self.control)(m as f64 * h) };
        let rhs = |k: &[f64], j: usize, kj: f64| -> f64 {
            let j = j as i64;
            let lag = j - m_r as i64;
            let mut f = self.s0 * kj + self.sr * state(k, lag, Some(kj)) + self.c0 * ctrl(j) + self.cr * ctrl(lag);
            if self.sd != 0.0 || self.cd != 0.0 {
                let mut si = 0.0;
                let mut ci = 0.0;
                for i in 0..=m_r as i64 {
                    let w = if i == 0 || i == m_r as i64 { 0.5 * h } else { h };
                    let v = if i == m_r as i64 { kj } else { state(k, lag + i, Some(kj)) };
                    si += w * v;
                    ci += w * ctrl(lag + i);
                }
                f += self.sd * si + self.cd * ci;
            }
            f
        };
        for j in 0..m_t {
            let kj = k[j];
            let f0 = rhs(&k, j, kj);
            let pred = kj + h * f0;
            let f1 = rhs(&k, j + 1, pred);
            k.push(kj + 0.5 * h * (f0 + f1));
        }
        k
    }
}

/// `exp(lambda s)` solves the uncontrolled AK equation when
/// `a = lambda / (1 - exp(-lambda R))`.
pub fn exponential_ak(lambda: f64, delay: f64) -> f64 {
    lambda / (1.0 - (-lambda * delay).exp())
}

/// AK with a strongly convex running cost `2 c^2 - 4 c`.
pub fn coercive_instance() -> (ObjectiveSpec, M2Point) {
    let (spec, x) = ak_reference();
    let spec = ObjectiveSpec { running: ConvexScalarFn::quadratic(4.0, -4.0), ..spec };
    (spec, x)
}
