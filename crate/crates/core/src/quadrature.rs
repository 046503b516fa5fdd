//! Trapezoid quadrature on uniform node grids. Every inner product and norm
//! in the crate goes through these helpers so that they stay consistent.

/// Trapezoid weights for `nodes` equally spaced samples with spacing `step`.
pub fn trapezoid_weights(nodes: usize, step: f64) -> Vec<f64> {
    let mut w = vec![step; nodes];
    if nodes == 1 {
        w[0] = 0.0;
    } else if nodes > 1 {
        w[0] = 0.5 * step;
        w[nodes - 1] = 0.5 * step;
    }
    w
}

pub fn integrate(samples: &[f64], step: f64) -> f64 {
    trapezoid_weights(samples.len(), step)
        .iter()
        .zip(samples)
        .map(|(w, v)| w * v)
        .sum()
}

pub fn inner(a: &[f64], b: &[f64], step: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    trapezoid_weights(a.len(), step)
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

pub fn l2_norm(samples: &[f64], step: f64) -> f64 {
    inner(samples, samples, step).sqrt()
}
