//! Domain types shared by every module: model parameters, the delay-aligned
//! grid, initial data and piecewise-constant controls.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::quadrature::trapezoid_weights;

/// A continuous linear functional on histories over `[-R, 0]`:
/// `c0 * phi(0) + c_r * phi(-R) + int density(theta) phi(theta) dtheta`.
///
/// `density` is either empty (identically zero) or sampled at the `n_r + 1`
/// grid nodes of `[-R, 0]`, ordered from `-R` to `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryFunctional {
    pub c0: f64,
    pub c_r: f64,
    pub density: Vec<f64>,
}

impl HistoryFunctional {
    pub fn new(c0: f64, c_r: f64, density: Vec<f64>) -> Self {
        Self { c0, c_r, density }
    }

    /// `phi(0) - phi(-R)`.
    pub fn difference() -> Self {
        Self::new(1.0, -1.0, Vec::new())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c0: factor * self.c0,
            c_r: factor * self.c_r,
            density: self.density.iter().map(|d| factor * d).collect(),
        }
    }

    pub fn has_density(&self) -> bool {
        self.density.iter().any(|&d| d != 0.0)
    }

    /// Density sample at node `i`, zero when no density is stored.
    pub fn density_at(&self, i: usize) -> f64 {
        self.density.get(i).copied().unwrap_or(0.0)
    }

    pub fn validate(&self, n_r: usize) -> Result<()> {
        check_finite(&[self.c0, self.c_r], "functional coefficients")?;
        check_finite(&self.density, "functional density")?;
        if !self.density.is_empty() {
            check_len(&self.density, n_r + 1, "functional density")?;
        }
        Ok(())
    }

    /// Evaluates the functional on `segment` (`n_r + 1` samples on `[-R, 0]`).
    pub fn apply(&self, segment: &[f64], delta: f64) -> Result<f64> {
        let n_r = segment.len().saturating_sub(1);
        if segment.len() < 2 {
            return Err(Error::LengthMismatch {
                what: "history segment",
                expected: 2,
                got: segment.len(),
            });
        }
        if !self.density.is_empty() {
            check_len(segment, self.density.len(), "history segment")?;
        }
        let mut value = self.c0 * segment[n_r] + self.c_r * segment[0];
        if self.has_density() {
            let w = trapezoid_weights(n_r + 1, delta);
            value += w
                .iter()
                .zip(&self.density)
                .zip(segment)
                .map(|((w, d), s)| w * d * s)
                .sum::<f64>();
        }
        Ok(value)
    }
}

/// Evaluates `f` on a sampled history segment.
pub fn apply_history_functional(f: &HistoryFunctional, segment: &[f64], delta: f64) -> Result<f64> {
    f.apply(segment, delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Vintage-capital AK model: `k' = a k(s) - a k(s-R) - c(s) + c(s-R)`.
    Ak { a: f64 },
    /// Goodwill model with distributed lags:
    /// `g' = a0 g(s) + int g(s+xi) a1(xi) dxi + b0 z(s) + int z(s+xi) b1(xi) dxi`.
    Advertising {
        a0: f64,
        a1: Vec<f64>,
        b0: f64,
        b1: Vec<f64>,
    },
}

/// Parameters of a controlled linear DDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Delay length `R`.
    pub delay: f64,
    /// Discount rate.
    pub rho: f64,
}

impl ModelSpec {
    pub fn ak(a: f64, delay: f64, rho: f64) -> Self {
        Self {
            kind: ModelKind::Ak { a },
            delay,
            rho,
        }
    }

    pub fn advertising(a0: f64, a1: Vec<f64>, b0: f64, b1: Vec<f64>, delay: f64, rho: f64) -> Self {
        Self {
            kind: ModelKind::Advertising { a0, a1, b0, b1 },
            delay,
            rho,
        }
    }

    pub fn is_ak(&self) -> bool {
        matches!(self.kind, ModelKind::Ak { .. })
    }

    /// Functional acting on the state history (`a L` or `N`).
    pub fn state_functional(&self) -> HistoryFunctional {
        match &self.kind {
            ModelKind::Ak { a } => HistoryFunctional::difference().scaled(*a),
            ModelKind::Advertising { a0, a1, .. } => HistoryFunctional::new(*a0, 0.0, a1.clone()),
        }
    }

    /// Functional acting on the control history (`-L` or `B`).
    pub fn control_functional(&self) -> HistoryFunctional {
        match &self.kind {
            ModelKind::Ak { .. } => HistoryFunctional::difference().scaled(-1.0),
            ModelKind::Advertising { b0, b1, .. } => HistoryFunctional::new(*b0, 0.0, b1.clone()),
        }
    }

    pub fn validate(&self, n_r: usize) -> Result<()> {
        if !(self.delay.is_finite() && self.delay > 0.0) {
            return Err(Error::InvalidModel(format!("delay must be positive, got {}", self.delay)));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::InvalidModel(format!("rho must be nonnegative, got {}", self.rho)));
        }
        match &self.kind {
            ModelKind::Ak { a } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidModel(format!("AK productivity must be positive, got {a}")));
                }
            }
            ModelKind::Advertising { a0, a1, b0, b1 } => {
                if !(a0.is_finite() && *a0 <= 0.0) {
                    return Err(Error::InvalidModel(format!("a0 must be <= 0, got {a0}")));
                }
                if !(b0.is_finite() && *b0 >= 0.0) {
                    return Err(Error::InvalidModel(format!("b0 must be >= 0, got {b0}")));
                }
                for (name, d) in [("a1", a1), ("b1", b1)] {
                    if !d.is_empty() && d.len() != n_r + 1 {
                        return Err(Error::LengthMismatch {
                            what: if name == "a1" { "a1 density" } else { "b1 density" },
                            expected: n_r + 1,
                            got: d.len(),
                        });
                    }
                    check_finite(d, "model density")?;
                }
                if b1.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidModel("b1 density must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Uniform grid aligned to the delay: `delta = R / n_r`, nodes `t + k delta`
/// for `k = 0..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t0: f64,
    pub delay: f64,
    pub n_r: usize,
    pub n_t: usize,
}

impl Grid {
    pub fn new(t0: f64, delay: f64, n_r: usize, n_t: usize) -> Result<Self> {
        let g = Self { t0, delay, n_r, n_t };
        g.validate()?;
        Ok(g)
    }

    /// Builds the grid covering `[t0, horizon]`; the span must be an integer
    /// number of steps up to one rounding unit.
    pub fn spanning(t0: f64, horizon: f64, delay: f64, n_r: usize) -> Result<Self> {
        if n_r == 0 || !(delay > 0.0) {
            return Err(Error::InvalidGrid("need n_r >= 2 and a positive delay".into()));
        }
        let delta = delay / n_r as f64;
        let steps = (horizon - t0) / delta;
        let n_t = steps.round();
        if !(steps >= -0.5) || (steps - n_t).abs() > 1e-9 * steps.abs().max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon span {} is not a multiple of the step {delta}",
                horizon - t0
            )));
        }
        Self::new(t0, delay, n_r, n_t as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r < 2 {
            return Err(Error::InvalidGrid(format!("n_r must be >= 2, got {}", self.n_r)));
        }
        if !(self.delay.is_finite() && self.delay > 0.0) || !self.t0.is_finite() {
            return Err(Error::InvalidGrid("delay must be positive and t0 finite".into()));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delay / self.n_r as f64
    }

    pub fn horizon(&self) -> f64 {
        self.t0 + self.n_t as f64 * self.delta()
    }

    /// Time of forward node `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.delta()
    }

    /// Number of samples of a full path on `[t0 - R, T]`.
    pub fn full_len(&self) -> usize {
        self.n_r + self.n_t + 1
    }

    /// Index of `s` among the forward nodes, if `s` is a node in `[t0, T]`.
    pub fn node_index(&self, s: f64) -> Result<usize> {
        let x = (s - self.t0) / self.delta();
        let k = x.round();
        if (x - k).abs() > 1e-9 * x.abs().max(1.0) || k < 0.0 || k as usize > self.n_t {
            return Err(Error::OffGrid(s));
        }
        Ok(k as usize)
    }

    /// The same grid started `steps` nodes later (shorter horizon).
    pub fn advanced(&self, steps: usize) -> Self {
        Self {
            t0: self.time(steps),
            n_t: self.n_t - steps,
            ..*self
        }
    }
}

/// Initial datum `(phi0, phi1, omega)`: current state, state history and
/// control history on `[-R, 0]` sampled at `n_r + 1` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialTriple {
    pub phi0: f64,
    pub phi1: Vec<f64>,
    pub omega: Vec<f64>,
}

impl InitialTriple {
    pub fn new(phi0: f64, phi1: Vec<f64>, omega: Vec<f64>) -> Self {
        Self { phi0, phi1, omega }
    }

    pub fn constant(phi0: f64, history: f64, control: f64, n_r: usize) -> Self {
        Self::new(phi0, vec![history; n_r + 1], vec![control; n_r + 1])
    }

    pub fn validate(&self, model: &ModelSpec, n_r: usize) -> Result<()> {
        check_len(&self.phi1, n_r + 1, "state history")?;
        check_len(&self.omega, n_r + 1, "control history")?;
        check_finite(&[self.phi0], "initial state")?;
        check_finite(&self.phi1, "state history")?;
        check_finite(&self.omega, "control history")?;
        if !model.is_ak() {
            if self.phi1.iter().chain(&self.omega).any(|&v| v < 0.0) {
                return Err(Error::InvalidModel("advertising histories must be nonnegative".into()));
            }
            let end = self.phi1[n_r];
            if (end - self.phi0).abs() > 1e-12 * self.phi0.abs().max(1.0) {
                return Err(Error::InvalidModel(format!(
                    "advertising history must end at the initial goodwill ({end} != {})",
                    self.phi0
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            phi0: factor * self.phi0,
            phi1: self.phi1.iter().map(|v| factor * v).collect(),
            omega: self.omega.iter().map(|v| factor * v).collect(),
        }
    }
}

/// Piecewise-constant control: `values[k]` holds on `[t + k delta, t + (k+1) delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    pub values: Vec<f64>,
}

impl ControlGrid {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(value: f64, n_t: usize) -> Self {
        Self::new(vec![value; n_t])
    }

    pub fn zeros(n_t: usize) -> Self {
        Self::constant(0.0, n_t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self, n_t: usize) -> Result<()> {
        check_len(&self.values, n_t, "control")?;
        check_finite(&self.values, "control")
    }

    /// AK admissibility of the control alone (`c >= 0`).
    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&c| c >= 0.0)
    }

    /// Repeats each value `factor` times (lift to a grid refined by `factor`).
    pub fn refined(&self, factor: usize) -> Self {
        Self::new(
            self.values
                .iter()
                .flat_map(|&v| std::iter::repeat(v).take(factor))
                .collect(),
        )
    }
}
