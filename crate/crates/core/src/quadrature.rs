//! Composite Gauss–Legendre quadrature for smooth oscillatory integrands.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

/// Nodes and weights of an `order`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// The shared 16-point rule.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Panel policy for oscillatory integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelPolicy {
    pub nodes_per_oscillation: usize,
    /// Panels used even for non-oscillatory integrands.
    pub base_panels: usize,
    pub rel_tol: f64,
    /// Number of panel doublings allowed after the initial comparison.
    pub max_refinements: usize,
}

impl Default for PanelPolicy {
    fn default() -> Self {
        Self { nodes_per_oscillation: 12, base_panels: 8, rel_tol: 1e-9, max_refinements: 8 }
    }
}

impl PanelPolicy {
    /// Initial panel count for an integrand oscillating at angular frequency
    /// at most `max_frequency` over `[a, b]`.
    pub fn initial_panels(&self, a: f64, b: f64, max_frequency: f64) -> usize {
        let oscillations = max_frequency.abs() * (b - a) / (2.0 * PI);
        let per_panel = gl16().nodes.len() as f64 / self.nodes_per_oscillation as f64;
        self.base_panels + (oscillations / per_panel).ceil() as usize
    }
}

/// Fixed composite rule with `panels` equal panels.
pub fn composite<F>(f: &F, a: f64, b: f64, panels: usize) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let rule = gl16();
    let h = (b - a) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            acc += f(mid + 0.5 * h * x) * *w;
        }
        total += acc * (0.5 * h);
    }
    total
}

/// Outcome of an adaptive oscillatory quadrature.
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: Complex64,
    pub error_estimate: f64,
    pub panels: usize,
    pub converged: bool,
}

/// Compares successive panel doublings until the change falls below
/// `rel_tol · max(|I|, abs_scale)`.
pub fn oscillatory<F>(
    f: &F,
    a: f64,
    b: f64,
    max_frequency: f64,
    abs_scale: f64,
    policy: &PanelPolicy,
) -> QuadOutcome
where
    F: Fn(f64) -> Complex64,
{
    let mut panels = policy.initial_panels(a, b, max_frequency);
    let mut coarse = composite(f, a, b, panels);
    let mut last = QuadOutcome { value: coarse, error_estimate: f64::INFINITY, panels, converged: false };
    for _ in 0..=policy.max_refinements {
        panels *= 2;
        let fine = composite(f, a, b, panels);
        let err = (fine - coarse).norm();
        last = QuadOutcome { value: fine, error_estimate: err, panels, converged: false };
        if err <= policy.rel_tol * fine.norm().max(abs_scale) {
            last.converged = true;
            return last;
        }
        coarse = fine;
    }
    last
}
