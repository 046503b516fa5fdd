//! Extended-value convex functions on the real line: evaluation, one-sided
//! derivatives, Legendre conjugates, proximal maps, Moreau-Yosida envelopes
//! and the Hamiltonian built from them.
//!
//! Tagged functions use closed forms. Everything else falls back to
//! bisection on the monotone subgradient.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bracket magnitude beyond which a numeric conjugate is declared `+inf`.
pub const CONJUGATE_CAP: f64 = 1e3;

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied convex function with a monotone derivative selection.
#[derive(Clone)]
pub struct CustomFn {
    pub eval: ScalarMap,
    pub derivative: ScalarMap,
    /// Lower end of the domain and whether it belongs to it.
    pub lower: Option<(f64, bool)>,
}

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFn").field("lower", &self.lower).finish()
    }
}

/// Tags usable in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FnTag {
    Crra(f64),
    Log,
    Quadratic(f64, f64),
    Linear(f64),
    Abs,
    IndicatorNonneg,
}

#[derive(Debug, Clone)]
pub enum ConvexScalarFn {
    /// `curvature / 2 * c^2 + linear * c`.
    Quadratic { curvature: f64, linear: f64 },
    Linear { slope: f64 },
    Abs,
    /// `0` on `c >= 0`, `+inf` otherwise.
    IndicatorNonneg,
    /// Minimization-side CRRA utility `-c^(1-sigma) / (1-sigma)` on `c >= 0`.
    Crra { sigma: f64 },
    /// `-log c` on `c > 0`.
    Log,
    /// `f + indicator(c >= 0)`.
    Nonneg(Box<ConvexScalarFn>),
    /// `f + c^2 / (2 n)`.
    Penalized { base: Box<ConvexScalarFn>, n: f64 },
    Custom(CustomFn),
}

impl From<FnTag> for ConvexScalarFn {
    fn from(tag: FnTag) -> Self {
        match tag {
            FnTag::Crra(s) => ConvexScalarFn::crra(s),
            FnTag::Log => ConvexScalarFn::Log,
            FnTag::Quadratic(q, m) => ConvexScalarFn::Quadratic {
                curvature: q,
                linear: m,
            },
            FnTag::Linear(m) => ConvexScalarFn::Linear { slope: m },
            FnTag::Abs => ConvexScalarFn::Abs,
            FnTag::IndicatorNonneg => ConvexScalarFn::IndicatorNonneg,
        }
    }
}

impl ConvexScalarFn {
    /// CRRA with `sigma = 1` maps to the log utility.
    pub fn crra(sigma: f64) -> Self {
        if sigma == 1.0 {
            ConvexScalarFn::Log
        } else {
            ConvexScalarFn::Crra { sigma }
        }
    }

    pub fn quadratic(curvature: f64, linear: f64) -> Self {
        ConvexScalarFn::Quadratic { curvature, linear }
    }

    pub fn nonneg(self) -> Self {
        match self {
            f @ (ConvexScalarFn::Nonneg(_)
            | ConvexScalarFn::IndicatorNonneg
            | ConvexScalarFn::Crra { .. }
            | ConvexScalarFn::Log) => f,
            f => ConvexScalarFn::Nonneg(Box::new(f)),
        }
    }

    /// `h_n = h + |c|^2 / (2n)`; `None` leaves `h` unchanged.
    pub fn penalized(self, n: Option<f64>) -> Self {
        match n {
            Some(n) => ConvexScalarFn::Penalized {
                base: Box::new(self),
                n,
            },
            None => self,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexScalarFn::Quadratic { curvature, linear } => {
                if !(curvature.is_finite() && *curvature >= 0.0 && linear.is_finite()) {
                    return Err(Error::IllPosed("quadratic needs a finite nonnegative curvature".into()));
                }
            }
            ConvexScalarFn::Crra { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0 && *sigma != 1.0) {
                    return Err(Error::IllPosed(format!("CRRA sigma must be positive and != 1, got {sigma}")));
                }
            }
            ConvexScalarFn::Nonneg(f) => f.validate()?,
            ConvexScalarFn::Penalized { base, n } => {
                if !(*n >= 1.0) {
                    return Err(Error::IllPosed(format!("penalization index must be >= 1, got {n}")));
                }
                base.validate()?
            }
            _ => {}
        }
        Ok(())
    }

    /// Lower end of the effective domain and whether it is attained.
    pub fn lower_bound(&self) -> Option<(f64, bool)> {
        match self {
            ConvexScalarFn::IndicatorNonneg | ConvexScalarFn::Nonneg(_) => Some((0.0, true)),
            ConvexScalarFn::Crra { sigma } => Some((0.0, *sigma < 1.0)),
            ConvexScalarFn::Log => Some((0.0, false)),
            ConvexScalarFn::Penalized { base, .. } => base.lower_bound(),
            ConvexScalarFn::Custom(c) => c.lower,
            _ => None,
        }
    }

    fn in_domain(&self, c: f64) -> bool {
        match self.lower_bound() {
            Some((lo, true)) => c >= lo,
            Some((lo, false)) => c > lo,
            None => true,
        }
    }

    /// Value in `R u {+inf}`.
    pub fn eval(&self, c: f64) -> f64 {
        if !self.in_domain(c) {
            return f64::INFINITY;
        }
        match self {
            ConvexScalarFn::Quadratic { curvature, linear } => 0.5 * curvature * c * c + linear * c,
            ConvexScalarFn::Linear { slope } => slope * c,
            ConvexScalarFn::Abs => c.abs(),
            ConvexScalarFn::IndicatorNonneg => 0.0,
            ConvexScalarFn::Crra { sigma } => {
                if c == 0.0 {
                    0.0
                } else {
                    -c.powf(1.0 - sigma) / (1.0 - sigma)
                }
            }
            ConvexScalarFn::Log => -c.ln(),
            ConvexScalarFn::Nonneg(f) => f.eval(c),
            ConvexScalarFn::Penalized { base, n } => base.eval(c) + c * c / (2.0 * n),
            ConvexScalarFn::Custom(f) => (f.eval)(c),
        }
    }

    /// Right derivative at a domain point (`-inf` at an infinite-slope boundary).
    pub fn right_derivative(&self, c: f64) -> f64 {
        match self {
            ConvexScalarFn::Quadratic { curvature, linear } => curvature * c + linear,
            ConvexScalarFn::Linear { slope } => *slope,
            ConvexScalarFn::Abs => {
                if c >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            ConvexScalarFn::IndicatorNonneg => 0.0,
            ConvexScalarFn::Crra { sigma } => {
                if c <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -c.powf(-sigma)
                }
            }
            ConvexScalarFn::Log => {
                if c <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -1.0 / c
                }
            }
            ConvexScalarFn::Nonneg(f) => f.right_derivative(c),
            ConvexScalarFn::Penalized { base, n } => base.right_derivative(c) + c / n,
            ConvexScalarFn::Custom(f) => (f.derivative)(c),
        }
    }

    /// Left derivative at a domain point (`-inf` at a closed lower bound).
    pub fn left_derivative(&self, c: f64) -> f64 {
        if let Some((lo, _)) = self.lower_bound() {
            if c <= lo {
                return f64::NEG_INFINITY;
            }
        }
        match self {
            ConvexScalarFn::Abs => {
                if c > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            ConvexScalarFn::Nonneg(f) => f.left_derivative(c),
            ConvexScalarFn::Penalized { base, n } => base.left_derivative(c) + c / n,
            _ => self.right_derivative(c),
        }
    }

    /// Subdifferential `[left, right]` at `c`, `None` outside the domain.
    pub fn subgradient(&self, c: f64) -> Option<(f64, f64)> {
        self.in_domain(c)
            .then(|| (self.left_derivative(c), self.right_derivative(c)))
    }

    fn strong_convexity(&self) -> f64 {
        match self {
            ConvexScalarFn::Quadratic { curvature, .. } => *curvature,
            ConvexScalarFn::Nonneg(f) => f.strong_convexity(),
            ConvexScalarFn::Penalized { base, n } => base.strong_convexity() + 1.0 / n,
            _ => 0.0,
        }
    }

    fn reference_point(&self) -> f64 {
        match self.lower_bound() {
            Some(_) => 1.0,
            None => 0.0,
        }
    }

    fn bracket_cap(&self, p: f64) -> f64 {
        let mu = self.strong_convexity();
        if mu > 0.0 {
            let r = self.reference_point();
            let bound = r.abs() + (p - self.right_derivative(r)).abs() / mu + 1.0;
            CONJUGATE_CAP.max(bound)
        } else {
            CONJUGATE_CAP
        }
    }

    /// Least maximizer of `p c - f(c)`, or `None` when the supremum is not
    /// attained (diverges or escapes to the boundary at infinity).
    pub fn conjugate_argmax(&self, p: f64) -> Option<f64> {
        match self {
            ConvexScalarFn::Quadratic { curvature, linear } if *curvature > 0.0 => {
                Some((p - linear) / curvature)
            }
            ConvexScalarFn::Quadratic { .. } | ConvexScalarFn::Linear { .. } => None,
            ConvexScalarFn::Abs => {
                if p.abs() < 1.0 || p == 1.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            ConvexScalarFn::IndicatorNonneg => (p <= 0.0).then_some(0.0),
            ConvexScalarFn::Crra { sigma } => (p < 0.0).then(|| (-p).powf(-1.0 / sigma)),
            ConvexScalarFn::Log => (p < 0.0).then(|| -1.0 / p),
            ConvexScalarFn::Nonneg(f) => match f.as_ref() {
                ConvexScalarFn::Quadratic { curvature, linear } if *curvature > 0.0 => {
                    Some(((p - linear) / curvature).max(0.0))
                }
                _ => self.numeric_argmax(p),
            },
            _ => self.numeric_argmax(p),
        }
    }

    fn numeric_argmax(&self, p: f64) -> Option<f64> {
        let cap = self.bracket_cap(p);
        let (mut a, closed_lo) = match self.lower_bound() {
            Some((lo, closed)) => (lo, closed),
            None => (-cap, false),
        };
        if closed_lo && self.right_derivative(a) >= p {
            return Some(a);
        }
        if self.lower_bound().is_none() && self.right_derivative(a) >= p {
            return None;
        }
        let mut b = cap;
        if self.right_derivative(b) < p {
            return None;
        }
        for _ in 0..4000 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.right_derivative(mid) >= p {
                b = mid;
            } else {
                a = mid;
            }
        }
        Some(b)
    }

    /// Legendre conjugate `sup_c { p c - f(c) }` in `R u {+inf}`.
    pub fn conjugate(&self, p: f64) -> f64 {
        match self {
            ConvexScalarFn::Quadratic { curvature, linear } => {
                if *curvature > 0.0 {
                    (p - linear).powi(2) / (2.0 * curvature)
                } else if p == *linear {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexScalarFn::Linear { slope } => {
                if p == *slope {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexScalarFn::Abs => {
                if p.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexScalarFn::IndicatorNonneg => {
                if p <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexScalarFn::Crra { sigma } => {
                if p < 0.0 {
                    (-p).powf((sigma - 1.0) / sigma) * sigma / (1.0 - sigma)
                } else if p == 0.0 && *sigma > 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ConvexScalarFn::Log => {
                if p < 0.0 {
                    -1.0 - (-p).ln()
                } else {
                    f64::INFINITY
                }
            }
            ConvexScalarFn::Nonneg(f) => match f.as_ref() {
                ConvexScalarFn::Quadratic { curvature, linear } if *curvature > 0.0 => {
                    if p <= *linear {
                        0.0
                    } else {
                        (p - linear).powi(2) / (2.0 * curvature)
                    }
                }
                ConvexScalarFn::Linear { slope } => {
                    if p <= *slope {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                }
                ConvexScalarFn::Abs => {
                    if p <= 1.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                }
                _ => self.numeric_conjugate(p),
            },
            _ => self.numeric_conjugate(p),
        }
    }

    fn numeric_conjugate(&self, p: f64) -> f64 {
        match self.numeric_argmax(p) {
            Some(c) => p * c - self.eval(c),
            None => self.unattained_sup(p),
        }
    }

    /// Supremum when no finite maximizer exists inside the bracket: `+inf`
    /// unless the objective tends to a finite limit at the open lower bound
    /// or at infinity with zero slope.
    fn unattained_sup(&self, p: f64) -> f64 {
        // limit as c -> +inf of p c - f(c) when p equals the asymptotic slope
        let far = self.bracket_cap(p);
        let slope = self.right_derivative(far);
        if (slope - p).abs() < 1e-12 && self.strong_convexity() == 0.0 {
            let v = p * far - self.eval(far);
            if v.is_finite() && (p * 2.0 * far - self.eval(2.0 * far) - v).abs() < 1e-6 {
                return v;
            }
        }
        f64::INFINITY
    }

    /// `argmin_y { lambda f(y) + |y - x|^2 / 2 }`.
    pub fn prox_scaled(&self, lambda: f64, x: f64) -> f64 {
        debug_assert!(lambda > 0.0);
        match self {
            ConvexScalarFn::Quadratic { curvature, linear } => (x - lambda * linear) / (1.0 + lambda * curvature),
            ConvexScalarFn::Linear { slope } => x - lambda * slope,
            ConvexScalarFn::Abs => x.signum() * (x.abs() - lambda).max(0.0),
            ConvexScalarFn::IndicatorNonneg => x.max(0.0),
            ConvexScalarFn::Log => 0.5 * (x + (x * x + 4.0 * lambda).sqrt()),
            ConvexScalarFn::Penalized { base, n } => {
                let scale = 1.0 + lambda / n;
                base.prox_scaled(lambda / scale, x / scale)
            }
            ConvexScalarFn::Nonneg(f) => match f.as_ref() {
                ConvexScalarFn::Quadratic { .. } | ConvexScalarFn::Linear { .. } | ConvexScalarFn::Abs => {
                    f.prox_scaled(lambda, x).max(0.0)
                }
                _ => self.numeric_prox(lambda, x),
            },
            _ => self.numeric_prox(lambda, x),
        }
    }

    fn numeric_prox(&self, lambda: f64, x: f64) -> f64 {
        let psi = |y: f64| lambda * self.right_derivative(y) + y - x;
        let mut a = match self.lower_bound() {
            Some((lo, closed)) => {
                if closed && psi(lo) >= 0.0 {
                    return lo;
                }
                lo
            }
            None => {
                let mut a = x - 1.0;
                let mut width = 1.0;
                while psi(a) >= 0.0 {
                    width *= 2.0;
                    a = x - width;
                }
                a
            }
        };
        let mut b = a.max(x) + 1.0;
        let mut width = 1.0;
        while psi(b) < 0.0 {
            width *= 2.0;
            b = a.max(x) + width;
        }
        for _ in 0..4000 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if psi(mid) >= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        b
    }

    /// Proximal point with penalization index `n` (`lambda = 1/n`).
    pub fn prox(&self, n: f64, x: f64) -> f64 {
        self.prox_scaled(1.0 / n, x)
    }

    /// Moreau-Yosida envelope `S_n f(x) = inf_y { f(y) + n/2 |x - y|^2 }`.
    pub fn moreau(&self, n: f64, x: f64) -> f64 {
        let y = self.prox(n, x);
        self.eval(y) + 0.5 * n * (x - y).powi(2)
    }

    /// The envelope as a standalone (differentiable) convex function.
    pub fn moreau_fn(&self, n: f64) -> ConvexScalarFn {
        let f = Arc::new(self.clone());
        let g = f.clone();
        ConvexScalarFn::Custom(CustomFn {
            eval: Arc::new(move |x| f.moreau(n, x)),
            derivative: Arc::new(move |x| n * (x - g.prox(n, x))),
            lower: None,
        })
    }
}

/// Free-function form of [`ConvexScalarFn::conjugate`].
pub fn conjugate(f: &ConvexScalarFn, p: f64) -> f64 {
    f.conjugate(p)
}

pub fn prox(f: &ConvexScalarFn, n: f64, x: f64) -> f64 {
    f.prox(n, x)
}

pub fn moreau(f: &ConvexScalarFn, n: f64, x: f64) -> f64 {
    f.moreau(n, x)
}

/// Max discrepancy between `[S_n f]*(p)` and `f*(p) + p^2 / (2n)` over the
/// points of `ps` where both sides are finite.
pub fn yosida_conjugate_check(f: &ConvexScalarFn, n: f64, ps: &[f64]) -> f64 {
    let envelope = f.moreau_fn(n);
    ps.iter()
        .filter_map(|&p| {
            let lhs = envelope.conjugate(p);
            let rhs = f.conjugate(p) + p * p / (2.0 * n);
            (lhs.is_finite() && rhs.is_finite()).then(|| (lhs - rhs).abs())
        })
        .fold(0.0, f64::max)
}

/// Hamiltonian data: running cost `h`, discount and optional penalization.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub h: ConvexScalarFn,
    pub rho: f64,
    /// `None` is the unpenalized Hamiltonian.
    pub n: Option<f64>,
}

impl HamiltonianSpec {
    pub fn new(h: ConvexScalarFn, rho: f64, n: Option<f64>) -> Self {
        Self { h, rho, n }
    }

    fn effective(&self) -> ConvexScalarFn {
        self.h.clone().penalized(self.n)
    }
}

/// `F_n(t, p) = e^{-rho t} h_n*(-e^{rho t} Lp)`.
pub fn hamiltonian(spec: &HamiltonianSpec, t: f64, lp: f64) -> f64 {
    let growth = (spec.rho * t).exp();
    spec.effective().conjugate(-growth * lp) / growth
}

/// Maximizer `c*` of the supremum defining `F_n(t, p)`.
pub fn feedback(spec: &HamiltonianSpec, t: f64, lp: f64) -> Result<f64> {
    let growth = (spec.rho * t).exp();
    spec.effective()
        .conjugate_argmax(-growth * lp)
        .ok_or(Error::Unbounded)
}
