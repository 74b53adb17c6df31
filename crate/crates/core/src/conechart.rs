//! The worst-decay cone: `θ(ξ)`, the generator `Γ(τ)`, `φ(ξ)` and `u_n(ξ)`.
//!
//! On `Ξ = {|ξ'| ≤ c|ξ_n|}` the equation `⟨γ^{(n-1)}(s), ξ⟩ = 0` has a unique
//! solution `s = θ(ξ)` near the origin; the cone itself is generated by the
//! frequencies where `⟨γ^{(j)}(s), ξ⟩` vanishes for every `1 ≤ j ≤ n-1`.
//! Both systems are solved by Newton's method with analytic Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curvekit::{factorial, CurveSpec};
use crate::{Error, Result};

pub const DEFAULT_APERTURE: f64 = 0.5;
pub const DEFAULT_NEWTON_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeChart {
    curve: CurveSpec,
    aperture: f64,
    newton_tolerance: f64,
    max_iterations: usize,
}

/// `θ`, `φ` and `u_n` at one frequency, from a single Newton solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint {
    pub theta: f64,
    pub phi: f64,
    pub u_n: f64,
}

impl ConeChart {
    pub fn new(curve: CurveSpec) -> Self {
        Self {
            curve,
            aperture: DEFAULT_APERTURE,
            newton_tolerance: DEFAULT_NEWTON_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn with_aperture(mut self, c: f64) -> Self {
        self.aperture = c;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.newton_tolerance = tol;
        self
    }

    pub fn with_max_iterations(mut self, iterations: usize) -> Self {
        self.max_iterations = iterations;
        self
    }

    pub fn curve(&self) -> &CurveSpec {
        &self.curve
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn tolerance(&self) -> f64 {
        self.newton_tolerance
    }

    pub fn dimension(&self) -> usize {
        self.curve.dimension()
    }

    /// `|ξ'| ≤ c|ξ_n|` and `ξ ≠ 0`.
    pub fn in_aperture(&self, xi: &[f64]) -> bool {
        let n = self.dimension();
        let last = xi[n - 1].abs();
        let head = xi[..n - 1].iter().map(|x| x * x).sum::<f64>().sqrt();
        last > 0.0 && head <= self.aperture * last
    }

    fn check_aperture(&self, xi: &[f64]) -> Result<()> {
        let n = self.dimension();
        if xi.len() != n {
            return Err(Error::Domain(format!("frequency has {} entries, expected {n}", xi.len())));
        }
        if !self.in_aperture(xi) {
            return Err(Error::Aperture(format!("{xi:?} violates |xi'| <= {} |xi_n|", self.aperture)));
        }
        Ok(())
    }

    /// The unique `s` near 0 with `⟨γ^{(n-1)}(s), ξ⟩ = 0`.
    pub fn solve_theta(&self, xi: &[f64]) -> Result<f64> {
        self.check_aperture(xi)?;
        let n = self.dimension();
        let eta: Vec<f64> = xi.iter().map(|x| x / xi[n - 1]).collect();
        let scale = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut s = 0.0;
        let mut residual = f64::INFINITY;
        for _ in 0..=self.max_iterations {
            if !self.curve.contains(s) {
                break;
            }
            residual = self.curve.pairing(s, n - 1, &eta);
            if residual.abs() <= self.newton_tolerance * scale {
                return Ok(s);
            }
            let slope = self.curve.pairing(s, n, &eta);
            if slope == 0.0 || !slope.is_finite() {
                break;
            }
            s -= residual / slope;
        }
        Err(Error::Convergence { iterations: self.max_iterations, residual: residual.abs() })
    }

    /// `Γ(τ)` and `θ(Γ(τ))`: the frequency with `ξ_{n-1} = τ`, `ξ_n = 1` on which
    /// `⟨γ^{(j)}(s), ξ⟩ = 0` for `1 ≤ j ≤ n-1`.
    pub fn solve_gamma(&self, tau: f64) -> Result<(Vec<f64>, f64)> {
        if tau.abs() > self.aperture {
            return Err(Error::Aperture(format!("|tau| = {} exceeds aperture {}", tau.abs(), self.aperture)));
        }
        let n = self.dimension();
        let free = n - 2;
        // Moment-curve closed form: ξ_k = τ^{n-k}/(n-k)!, s = -τ.
        let mut xi: Vec<f64> = (1..=n).map(|k| tau.powi((n - k) as i32) / factorial(n - k)).collect();
        xi[n - 2] = tau;
        xi[n - 1] = 1.0;
        let mut s = -tau;

        let residuals = |xi: &[f64], s: f64| -> DVector<f64> {
            DVector::from_iterator(n - 1, (1..n).map(|j| self.curve.pairing(s, j, xi)))
        };
        let mut r = residuals(&xi, s);
        for _ in 0..=self.max_iterations {
            if !self.curve.contains(s) {
                break;
            }
            if r.amax() <= self.newton_tolerance {
                return Ok((xi, s));
            }
            let jac = DMatrix::from_fn(n - 1, n - 1, |row, col| {
                let j = row + 1;
                if col < free {
                    self.curve.component(col, s, j)
                } else {
                    self.curve.pairing(s, j + 1, &xi)
                }
            });
            let Some(step) = jac.lu().solve(&r) else { break };
            for (k, d) in step.iter().take(free).enumerate() {
                xi[k] -= d;
            }
            s -= step[free];
            r = residuals(&xi, s);
        }
        Err(Error::Convergence { iterations: self.max_iterations, residual: r.amax() })
    }

    /// `θ(ξ)` together with `φ(ξ) = ⟨γ(θ), ξ⟩` and `u_n(ξ) = ⟨γ^{(n)}(θ), ξ⟩`.
    pub fn cone_point(&self, xi: &[f64]) -> Result<ConePoint> {
        let theta = self.solve_theta(xi)?;
        let n = self.dimension();
        Ok(ConePoint {
            theta,
            phi: self.curve.pairing(theta, 0, xi),
            u_n: self.curve.pairing(theta, n, xi),
        })
    }

    pub fn phase_phi(&self, xi: &[f64]) -> Result<f64> {
        Ok(self.cone_point(xi)?.phi)
    }

    pub fn u_n(&self, xi: &[f64]) -> Result<f64> {
        Ok(self.cone_point(xi)?.u_n)
    }
}
