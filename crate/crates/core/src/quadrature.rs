//! Gauss-Legendre rules, single-panel and composite.

use alloc::vec::Vec;
use core::f64::consts::PI;

/// Nodes and weights of the `order`-point Gauss-Legendre rule on [-1, 1].
///
/// Newton iteration on the three-term recurrence, started from the usual
/// asymptotic guesses; accurate to a few ulps for the orders used here.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre rule needs at least one node");
    let n = order;
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
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

/// A composite Gauss-Legendre rule over an interval split into panels.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeRule {
    /// Panel boundaries, increasing; `panels().len() + 1` entries.
    pub breaks: Vec<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Nodes per panel.
    pub order: usize,
}

impl CompositeRule {
    /// `order`-point rule on every sub-interval between consecutive `breaks`.
    pub fn on_breaks(breaks: Vec<f64>, order: usize) -> Self {
        let (ref_nodes, ref_weights) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity(order * breaks.len());
        let mut weights = Vec::with_capacity(order * breaks.len());
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, wt) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + half * x);
                weights.push(half * wt);
            }
        }
        CompositeRule { breaks, nodes, weights, order }
    }

    /// `panels` equal panels on [a, b], further split at every interior point of `extra`.
    pub fn uniform(a: f64, b: f64, panels: usize, order: usize, extra: &[f64]) -> Self {
        let panels = panels.max(1);
        let mut breaks: Vec<f64> = (0..=panels)
            .map(|i| a + (b - a) * i as f64 / panels as f64)
            .collect();
        breaks[panels] = b;
        let scale = (b - a).abs().max(1.0);
        for &x in extra {
            if x > a && x < b && breaks.iter().all(|&y| (y - x).abs() > 1e-12 * scale) {
                breaks.push(x);
            }
        }
        breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Self::on_breaks(breaks, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panel_count(&self) -> usize {
        self.breaks.len().saturating_sub(1)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        for n in 1..40 {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let n = 8;
        let (x, w) = gauss_legendre(n);
        for deg in 0..2 * n {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * libm::pow(*x, deg as f64)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "deg={deg}");
        }
    }

    #[test]
    fn composite_rule_respects_extra_breaks() {
        let r = CompositeRule::uniform(0.0, 1.0, 4, 8, &[0.3, 0.5]);
        assert!(r.breaks.contains(&0.3));
        assert_eq!(r.panel_count(), 5);
        let v = r.integrate(|t| libm::exp(-3.0 * t));
        assert!((v - (1.0 - libm::exp(-3.0)) / 3.0).abs() < 1e-15);
    }
}
