//! Smooth curves `γ: I → ℝⁿ` with analytic derivative rules.
//!
//! Every curve exposes exact derivatives up to order `n + 1`; nothing in
//! this module differentiates numerically.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default number of uniform samples used for margins and distances.
pub const DEFAULT_GRID_SAMPLES: usize = 2048;

/// A scalar component function with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComponentFn {
    /// `Σ_i c_i s^i`, coefficients indexed by power.
    Polynomial(Vec<f64>),
    /// `a·sin(ω s + φ)`.
    Sine { amplitude: f64, frequency: f64, phase: f64 },
    /// `a·cos(ω s + φ)`.
    Cosine { amplitude: f64, frequency: f64, phase: f64 },
    /// `a·e^{r s}`.
    Exponential { amplitude: f64, rate: f64 },
}

impl ComponentFn {
    pub fn derivative(&self, s: f64, order: usize) -> f64 {
        match self {
            ComponentFn::Polynomial(coeffs) => poly_derivative(coeffs, s, order),
            ComponentFn::Sine { amplitude, frequency, phase } => {
                let u = frequency * s + phase;
                amplitude * frequency.powi(order as i32) * sin_derivative(u, order)
            }
            ComponentFn::Cosine { amplitude, frequency, phase } => {
                let u = frequency * s + phase;
                amplitude * frequency.powi(order as i32) * sin_derivative(u, order + 1)
            }
            ComponentFn::Exponential { amplitude, rate } => {
                amplitude * rate.powi(order as i32) * (rate * s).exp()
            }
        }
    }
}

// d^k/du^k sin(u) cycles through sin, cos, -sin, -cos.
fn sin_derivative(u: f64, k: usize) -> f64 {
    match k % 4 {
        0 => u.sin(),
        1 => u.cos(),
        2 => -u.sin(),
        _ => -u.cos(),
    }
}

/// `d^order/ds^order Σ_i c_i s^i`, evaluated by Horner on the derived coefficients.
fn poly_derivative(coeffs: &[f64], s: f64, order: usize) -> f64 {
    if order >= coeffs.len() {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in (order..coeffs.len()).rev() {
        acc = acc * s + coeffs[i] * falling_factorial(i, order);
    }
    acc
}

/// `i (i-1) ... (i-k+1)`.
fn falling_factorial(i: usize, k: usize) -> f64 {
    ((i + 1 - k)..=i).fold(1.0, |acc, m| acc * m as f64)
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, m| acc * m as f64)
}

/// Moment-curve component `k` (1-based) differentiated `order` times.
fn moment_component(k: usize, s: f64, order: usize) -> f64 {
    if order > k {
        return 0.0;
    }
    let m = k - order;
    s.powi(m as i32) / factorial(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurveKind {
    /// `γ_∘(s) = (s, s²/2!, …, sⁿ/n!)`.
    Moment,
    /// Moment curve plus one polynomial per component (coefficients by
    /// power; an empty list leaves the component unperturbed).
    PerturbedMoment(Vec<Vec<f64>>),
    /// Arbitrary component functions.
    Table(Vec<ComponentFn>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    n: usize,
    kind: CurveKind,
    domain: (f64, f64),
    grid_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelClassReport {
    pub delta: f64,
    /// `max_{1≤j≤n+1} sup_{[-1,1]} |γ^{(j)} - γ_∘^{(j)}|` on the sample grid.
    pub distance: f64,
    pub anchored: bool,
    pub member_of_g_n_delta: bool,
}

impl CurveSpec {
    pub fn moment(n: usize) -> Result<Self> {
        Self::new(n, CurveKind::Moment, (-1.0, 1.0))
    }

    pub fn perturbed_moment(n: usize, perturbation: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(n, CurveKind::PerturbedMoment(perturbation), (-1.0, 1.0))
    }

    pub fn table(components: Vec<ComponentFn>, domain: (f64, f64)) -> Result<Self> {
        let n = components.len();
        Self::new(n, CurveKind::Table(components), domain)
    }

    pub fn new(n: usize, kind: CurveKind, domain: (f64, f64)) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("curve dimension must be at least 2, got {n}")));
        }
        if !(domain.0 < domain.1) || !domain.0.is_finite() || !domain.1.is_finite() {
            return Err(Error::Domain(format!("invalid parameter interval {domain:?}")));
        }
        match &kind {
            CurveKind::PerturbedMoment(p) if p.len() > n => {
                return Err(Error::Domain(format!(
                    "perturbation has {} components for a curve in R^{n}",
                    p.len()
                )));
            }
            CurveKind::Table(c) if c.len() != n => {
                return Err(Error::Domain(format!("table has {} components, expected {n}", c.len())));
            }
            _ => {}
        }
        Ok(Self { n, kind, domain, grid_samples: DEFAULT_GRID_SAMPLES })
    }

    pub fn with_domain(mut self, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Domain(format!("invalid parameter interval [{a}, {b}]")));
        }
        self.domain = (a, b);
        Ok(self)
    }

    /// Number of uniform samples used by [`Self::model_class_report`].
    pub fn with_grid_samples(mut self, samples: usize) -> Self {
        self.grid_samples = samples.max(2);
        self
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.domain.0 && s <= self.domain.1
    }

    /// Component `k` (0-based) of `γ^{(order)}(s)`. No domain or order checks.
    #[inline]
    pub fn component(&self, k: usize, s: f64, order: usize) -> f64 {
        match &self.kind {
            CurveKind::Moment => moment_component(k + 1, s, order),
            CurveKind::PerturbedMoment(p) => {
                let base = moment_component(k + 1, s, order);
                match p.get(k) {
                    Some(coeffs) => base + poly_derivative(coeffs, s, order),
                    None => base,
                }
            }
            CurveKind::Table(c) => c[k].derivative(s, order),
        }
    }

    /// `γ(s)` without checks.
    pub fn eval_point(&self, s: f64) -> Vec<f64> {
        (0..self.n).map(|k| self.component(k, s, 0)).collect()
    }

    /// `⟨γ^{(order)}(s), ξ⟩` without allocation or checks.
    #[inline]
    pub fn pairing(&self, s: f64, order: usize, xi: &[f64]) -> f64 {
        if let CurveKind::Moment = self.kind {
            // Σ_{k ≥ max(order, 1)} ξ_k s^{k-order}/(k-order)!
            let first = order.max(1);
            let mut term = if order == 0 { s } else { 1.0 };
            let mut acc = 0.0;
            for k in first..=self.n {
                acc += xi[k - 1] * term;
                term *= s / (k + 1 - order) as f64;
            }
            return acc;
        }
        (0..self.n).map(|k| self.component(k, s, order) * xi[k]).sum()
    }

    /// `γ(s), γ'(s), …, γ^{(max_order)}(s)`.
    pub fn eval_derivatives(&self, s: f64, max_order: usize) -> Result<Vec<Vec<f64>>> {
        if !self.contains(s) {
            return Err(Error::Domain(format!(
                "parameter {s} outside [{}, {}]",
                self.domain.0, self.domain.1
            )));
        }
        if max_order > self.n + 1 {
            return Err(Error::UnsupportedOrder { requested: max_order, max: self.n + 1 });
        }
        Ok((0..=max_order)
            .map(|j| (0..self.n).map(|k| self.component(k, s, j)).collect())
            .collect())
    }

    fn wronskian_det(&self, s: f64) -> f64 {
        let n = self.n;
        let m = DMatrix::from_fn(n, n, |row, col| self.component(row, s, col + 1));
        m.determinant()
    }

    /// Minimum of `|det(γ'(s), …, γ^{(n)}(s))|` over `samples` uniform points of `I`.
    pub fn nondegeneracy_margin(&self, samples: usize) -> f64 {
        let samples = samples.max(2);
        let (a, b) = self.domain;
        (0..samples)
            .map(|i| {
                let s = a + (b - a) * i as f64 / (samples - 1) as f64;
                self.wronskian_det(s).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Membership in the model class of anchored perturbations of the moment curve.
    pub fn model_class_report(&self, delta: f64) -> Result<ModelClassReport> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        if self.domain.0 > -1.0 || self.domain.1 < 1.0 {
            return Err(Error::Domain(format!(
                "model class is defined on [-1, 1] but the curve lives on [{}, {}]",
                self.domain.0, self.domain.1
            )));
        }
        let n = self.n;
        let samples = self.grid_samples;
        let mut distance: f64 = 0.0;
        for i in 0..samples {
            let s = -1.0 + 2.0 * i as f64 / (samples - 1) as f64;
            for j in 1..=n + 1 {
                let dev: f64 = (0..n)
                    .map(|k| {
                        let d = self.component(k, s, j) - moment_component(k + 1, s, j);
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                distance = distance.max(dev);
            }
        }
        let anchored = (0..n).all(|k| self.component(k, 0.0, 0) == 0.0)
            && (1..=n).all(|j| (0..n).all(|k| self.component(k, 0.0, j) == if k + 1 == j { 1.0 } else { 0.0 }));
        Ok(ModelClassReport {
            delta,
            distance,
            anchored,
            member_of_g_n_delta: anchored && distance <= delta,
        })
    }

    /// Upper bound for `sup_{[a,b]} |γ'|`, sampled densely with a 5% margin.
    pub fn speed_bound(&self, a: f64, b: f64) -> f64 {
        const SAMPLES: usize = 257;
        let sup = (0..SAMPLES)
            .map(|i| {
                let s = a + (b - a) * i as f64 / (SAMPLES - 1) as f64;
                (0..self.n).map(|k| self.component(k, s, 1).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        1.05 * sup
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn moment_derivatives_at_origin_are_anchored() {
        let c = CurveSpec::moment(3).unwrap();
        let d = c.eval_derivatives(0.0, 3).unwrap();
        assert_eq!(
            d,
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]
        );
    }

    #[test]
    fn moment_value_at_one() {
        let c = CurveSpec::moment(3).unwrap();
        let d = c.eval_derivatives(1.0, 0).unwrap();
        assert_relative_eq!(d[0][0], 1.0);
        assert_relative_eq!(d[0][1], 0.5);
        assert_relative_eq!(d[0][2], 1.0 / 6.0);
    }

    #[test]
    fn perturbed_first_derivative() {
        // +0.01 s^4 on component 1 differentiates to 0.04 s^3.
        let c = CurveSpec::perturbed_moment(3, vec![vec![0.0, 0.0, 0.0, 0.0, 0.01]]).unwrap();
        let d = c.eval_derivatives(1.0, 1).unwrap();
        assert_relative_eq!(d[1][0], 1.04, epsilon = 1e-15);
        assert_relative_eq!(d[1][1], 1.0);
        assert_relative_eq!(d[1][2], 0.5);
    }

    #[test]
    fn domain_and_order_errors() {
        let c = CurveSpec::moment(3).unwrap();
        assert!(matches!(c.eval_derivatives(1.5, 1), Err(Error::Domain(_))));
        assert!(matches!(
            c.eval_derivatives(0.0, 5),
            Err(Error::UnsupportedOrder { requested: 5, max: 4 })
        ));
        assert!(c.eval_derivatives(0.0, 4).is_ok());
    }

    #[test]
    fn pairing_matches_components() {
        let c = CurveSpec::moment(5).unwrap();
        let xi = [0.3, -0.2, 0.7, 1.1, -0.4];
        for order in 0..=6 {
            for &s in &[-0.9, -0.1, 0.0, 0.37, 1.0] {
                let direct: f64 = (0..5).map(|k| c.component(k, s, order) * xi[k]).sum();
                assert_relative_eq!(c.pairing(s, order, &xi), direct, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn moment_margin_is_exactly_one() {
        for n in 2..=6 {
            for samples in [2, 3, 17, 2048] {
                assert_eq!(CurveSpec::moment(n).unwrap().nondegeneracy_margin(samples), 1.0, "n={n}");
            }
        }
    }

    #[test]
    fn planar_curve_is_degenerate() {
        let c = CurveSpec::table(
            vec![
                ComponentFn::Polynomial(vec![0.0, 1.0]),
                ComponentFn::Polynomial(vec![0.0, 0.0, 0.5]),
                ComponentFn::Polynomial(vec![0.0]),
            ],
            (-1.0, 1.0),
        )
        .unwrap();
        assert_eq!(c.nondegeneracy_margin(64), 0.0);
    }

    #[test]
    fn helix_margin_is_one() {
        let c = CurveSpec::table(
            vec![
                ComponentFn::Cosine { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
                ComponentFn::Sine { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
                ComponentFn::Polynomial(vec![0.0, 1.0]),
            ],
            (-3.0, 3.0),
        )
        .unwrap();
        assert_relative_eq!(c.nondegeneracy_margin(2048), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn model_class_membership() {
        let r = CurveSpec::moment(3).unwrap().model_class_report(0.01).unwrap();
        assert!(r.member_of_g_n_delta && r.anchored);
        assert_eq!(r.distance, 0.0);

        // +0.1 s^2 on component 1: second derivative deviates by 0.2.
        let c = CurveSpec::perturbed_moment(3, vec![vec![0.0, 0.0, 0.1]]).unwrap();
        let r = c.model_class_report(0.01).unwrap();
        assert!(!r.member_of_g_n_delta);
        assert_relative_eq!(r.distance, 0.2, epsilon = 1e-15);

        // 1e-4 s^{n+1}: the largest derivative is 1e-4 (n+1)! at order n+1, which
        // stays below 0.01 only for n <= 3.
        for n in 2..=5 {
            let mut p = vec![0.0; n + 2];
            p[n + 1] = 1e-4;
            let c = CurveSpec::perturbed_moment(n, vec![p]).unwrap();
            let r = c.model_class_report(0.01).unwrap();
            assert!(r.anchored);
            assert_eq!(r.member_of_g_n_delta, n <= 3, "n={n}");
            assert_relative_eq!(r.distance, 1e-4 * factorial(n + 1), epsilon = 1e-15);
        }
    }

    #[test]
    fn model_class_domain_mismatch() {
        let c = CurveSpec::moment(3).unwrap().with_domain(-0.5, 0.5).unwrap();
        assert!(matches!(c.model_class_report(0.1), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn derivatives_linear_in_perturbation(
            a in proptest::collection::vec(-1.0f64..1.0, 6),
            b in proptest::collection::vec(-1.0f64..1.0, 6),
            w in -2.0f64..2.0,
            s in -1.0f64..1.0,
        ) {
            let n = 3;
            let base = CurveSpec::moment(n).unwrap();
            let ca = CurveSpec::perturbed_moment(n, vec![a.clone(), vec![], a.clone()]).unwrap();
            let cb = CurveSpec::perturbed_moment(n, vec![b.clone(), vec![], b.clone()]).unwrap();
            let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + w * y).collect();
            let cc = CurveSpec::perturbed_moment(n, vec![comb.clone(), vec![], comb]).unwrap();
            let d0 = base.eval_derivatives(s, n + 1).unwrap();
            let da = ca.eval_derivatives(s, n + 1).unwrap();
            let db = cb.eval_derivatives(s, n + 1).unwrap();
            let dc = cc.eval_derivatives(s, n + 1).unwrap();
            for j in 0..=n + 1 {
                for k in 0..n {
                    let lin = da[j][k] + w * (db[j][k] - d0[j][k]);
                    prop_assert!((dc[j][k] - lin).abs() < 1e-12 * (1.0 + lin.abs()));
                }
            }
        }
    }
}
