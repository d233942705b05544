//! Gauss-Legendre quadrature and composite rules for weighted integrands.
//!
//! The degenerate weight itself is continuous and bounded, so plain Gauss
//! points suffice element-wise; integrands involving a' (unbounded at 0 in
//! the weakly degenerate case) or 1/a are handled by geometric grading of
//! the leftmost cell toward the degeneracy point.

use nalgebra::{DMatrix, DVector};

/// Gauss-Legendre rule on [-1, 1] computed by the Golub-Welsch eigenvalue method.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        if n == 1 {
            return Self { nodes: vec![0.0], weights: vec![2.0] };
        }
        // Jacobi matrix of the Legendre recurrence; its eigenvalues are the
        // nodes and the squared first eigenvector components give the weights.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let kf = k as f64;
            let b = kf / (4.0 * kf * kf - 1.0).sqrt();
            jac[(k - 1, k)] = b;
            jac[(k, k - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let w = 2.0 * eig.eigenvectors[(0, i)] * eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], w)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * half * f(mid + half * x))
            .sum()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        (
            self.nodes.iter().map(|&x| mid + half * x).collect(),
            self.weights.iter().map(|&w| w * half).collect(),
        )
    }
}

/// Cell boundaries of [0, h] split into `n_sub` geometric cells clustered at 0.
///
/// Returns 0 = b_0 < b_1 < ... < b_{n_sub} = h with b_k = h * ratio^(n_sub - k).
pub fn geometric_cells(h: f64, n_sub: usize, ratio: f64) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio < 1.0);
    let mut cells = Vec::with_capacity(n_sub + 1);
    cells.push(0.0);
    for k in 1..=n_sub {
        cells.push(h * ratio.powi((n_sub - k) as i32));
    }
    cells
}

/// Composite Gauss integral over [a, b] with geometric grading of the left end
/// toward `a` (used when the integrand varies fastest near `a`).
pub fn integrate_graded<F: FnMut(f64) -> f64>(
    rule: &GaussRule,
    a: f64,
    b: f64,
    n_sub: usize,
    mut f: F,
) -> f64 {
    let cells = geometric_cells(b - a, n_sub, 0.5);
    let mut total = 0.0;
    for w in cells.windows(2) {
        total += rule.integrate(a + w[0], a + w[1], &mut f);
    }
    total
}

/// Trapezoid rule over uniformly spaced samples with spacing `dt`.
pub fn trapezoid(samples: &[f64], dt: f64) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let inner: f64 = samples[1..samples.len() - 1].iter().sum();
    dt * (0.5 * samples[0] + inner + 0.5 * samples[samples.len() - 1])
}

/// Trapezoid weights (dt/2, dt, ..., dt, dt/2) for n+1 samples.
pub fn trapezoid_weights(n_steps: usize, dt: f64) -> DVector<f64> {
    let mut w = DVector::from_element(n_steps + 1, dt);
    w[0] = 0.5 * dt;
    w[n_steps] = 0.5 * dt;
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_exact_for_polynomials() {
        let rule = GaussRule::new(4);
        // 4-point Gauss is exact through degree 7
        let val = rule.integrate(0.0, 1.0, |x| x.powi(7));
        assert!((val - 1.0 / 8.0).abs() < 1e-14);
        let val = rule.integrate(-1.0, 2.0, |x| 3.0 * x * x - x);
        assert!((val - (9.0 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn gauss_rule_weights_sum_to_two() {
        for n in [1, 2, 4, 6, 8, 16] {
            let rule = GaussRule::new(n);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}: sum={s}");
        }
    }

    #[test]
    fn graded_handles_sqrt_singularity() {
        // integral of 1/sqrt(x) over (0,1] = 2
        let rule = GaussRule::new(8);
        let val = integrate_graded(&rule, 0.0, 1.0, 60, |x| 1.0 / x.sqrt());
        assert!((val - 2.0).abs() < 1e-8, "got {val}");
    }

    #[test]
    fn trapezoid_matches_linear() {
        let xs: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        assert!((trapezoid(&xs, 0.1) - 0.5).abs() < 1e-14);
        let w = trapezoid_weights(10, 0.1);
        let dot: f64 = (0..=10).map(|k| w[k] * xs[k]).sum();
        assert!((dot - 0.5).abs() < 1e-14);
    }
}
