//! Gauss–Legendre rules for expectations over a bounded interval.

use crate::error::{ModelError, Result};
use crate::scalar::Real;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Roots of `P_n` by Newton iteration from Chebyshev-like guesses,
    /// computed in `f64` and cast.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ModelError::InvalidConfig("quadrature needs at least one node".into()));
        }
        let mut nodes = vec![0.0_f64; n];
        let mut weights = vec![0.0_f64; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(T::lit).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Nodes mapped to `[a, b]` paired with weights normalized to sum to one,
    /// i.e. a rule for the mean under the uniform density on `[a, b]`.
    pub fn uniform_rule(&self, a: T, b: T) -> Vec<(T, T)> {
        let half = T::lit(0.5);
        let mid = half * (a + b);
        let rad = half * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + rad * x, half * w))
            .collect()
    }

    /// `∫_a^b f(x) dx`.
    pub fn integrate(&self, a: T, b: T, mut f: impl FnMut(T) -> T) -> T {
        let rad = T::lit(0.5) * (b - a);
        let mid = T::lit(0.5) * (a + b);
        rad * self
            .nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(mid + rad * x))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 8, 64, 128] {
            let g = GaussLegendre::<f64>::new(n).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let g = GaussLegendre::<f64>::new(8).unwrap();
        for deg in 0..16 {
            let approx = g.integrate(0.0, 2.0, |x| x.powi(deg));
            let exact = 2f64.powi(deg + 1) / (deg + 1) as f64;
            assert!((approx - exact).abs() / exact < 1e-13, "deg {deg}");
        }
    }

    #[test]
    fn known_two_point_rule() {
        let g = GaussLegendre::<f64>::new(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((g.nodes()[0] + r).abs() < 1e-15 && (g.nodes()[1] - r).abs() < 1e-15);
    }

    #[test]
    fn uniform_rule_gives_mean() {
        let g = GaussLegendre::<f64>::new(16).unwrap();
        let m: f64 = g.uniform_rule(0.5, 4.5).iter().map(|(x, w)| w * x.ln()).sum();
        // E[ln X], X ~ U[0.5, 4.5]
        let exact = ((4.5 * 4.5f64.ln() - 4.5) - (0.5 * 0.5f64.ln() - 0.5)) / 4.0;
        assert!((m - exact).abs() < 1e-10);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(GaussLegendre::<f64>::new(0).is_err());
    }
}
