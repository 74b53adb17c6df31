//! The Fourier transform of the curve measure,
//! `μ̂_t(ξ) = ∫ e^{-it⟨γ(s),ξ⟩} χ(s) ds`, its reduced form
//! `m_t = e^{itφ} μ̂_t`, and the stationary-phase reference
//! `α_n χ(θ(ξ)) (t u_n(ξ))^{-1/n}` it is compared against.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::conechart::ConeChart;
use crate::curvekit::CurveSpec;
use crate::quadrature::{self, PanelPolicy};
use crate::{Error, Result};

pub const DEFAULT_CUTOFF_HALF_WIDTH: f64 = 0.5;

/// The bump `χ(s) = exp(1 - 1/(1 - (s/δ)²))` on `(-δ, δ)`, so `χ(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    delta: f64,
    integral: f64,
}

impl CutoffSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Domain(format!("cutoff half-width must be positive, got {delta}")));
        }
        let profile = |s: f64| Complex64::new(bump(s, delta), 0.0);
        let policy = PanelPolicy { rel_tol: 1e-13, ..PanelPolicy::default() };
        let out = quadrature::oscillatory(&profile, -delta, delta, 0.0, 0.0, &policy);
        Ok(Self { delta, integral: out.value.re })
    }

    pub fn half_width(&self) -> f64 {
        self.delta
    }

    /// `∫ χ`.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        bump(s, self.delta)
    }
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self::new(DEFAULT_CUTOFF_HALF_WIDTH).expect("default cutoff")
    }
}

#[inline]
fn bump(s: f64, delta: f64) -> f64 {
    let u = s / delta;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// `α_n = (2/n) Γ(1/n) sin((n-1)π/(2n))` for odd `n`, `(2/n) Γ(1/n) e^{iπ/(2n)}` for even `n`.
pub fn alpha_n(n: usize) -> Result<Complex64> {
    if n < 2 {
        return Err(Error::Domain(format!("alpha_n needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let scale = 2.0 / nf * gamma(1.0 / nf);
    Ok(if n % 2 == 1 {
        Complex64::new(scale * ((nf - 1.0) * PI / (2.0 * nf)).sin(), 0.0)
    } else {
        Complex64::from_polar(scale, PI / (2.0 * nf))
    })
}

/// `β_2 = 1`, `β_n = 0` for `n > 2`.
pub fn beta_n(n: usize) -> f64 {
    if n == 2 {
        1.0
    } else {
        0.0
    }
}

/// Shape of the deficit bound `ρλ^{-1/n} + λ^{-2/n}(1 + β_n log λ)`, constants omitted.
pub fn deficit_rate(n: usize, rho: f64, lambda: f64) -> f64 {
    let nf = n as f64;
    rho * lambda.powf(-1.0 / nf) + lambda.powf(-2.0 / nf) * (1.0 + beta_n(n) * lambda.ln())
}

/// Quadrature engine for `μ̂_t` over a fixed curve and cutoff.
#[derive(Debug, Clone)]
pub struct Oscillator {
    curve: CurveSpec,
    cutoff: CutoffSpec,
    speed: f64,
    policy: PanelPolicy,
}

impl Oscillator {
    pub fn new(curve: CurveSpec, cutoff: CutoffSpec) -> Result<Self> {
        let d = cutoff.half_width();
        if !(curve.contains(-d) && curve.contains(d)) {
            return Err(Error::Domain(format!(
                "cutoff support [-{d}, {d}] not inside the curve interval {:?}",
                curve.domain()
            )));
        }
        let speed = curve.speed_bound(-d, d);
        Ok(Self { curve, cutoff, speed, policy: PanelPolicy::default() })
    }

    pub fn with_policy(mut self, policy: PanelPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn curve(&self) -> &CurveSpec {
        &self.curve
    }

    pub fn cutoff(&self) -> &CutoffSpec {
        &self.cutoff
    }

    pub fn policy(&self) -> &PanelPolicy {
        &self.policy
    }

    /// Angular frequency bound of `s ↦ t⟨γ(s), ξ⟩` on the cutoff support.
    pub fn max_frequency(&self, t: f64, xi: &[f64]) -> f64 {
        t * norm(xi) * self.speed
    }

    fn check(&self, t: f64, xi: &[f64]) -> Result<()> {
        if !(1.0..=2.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [1, 2]")));
        }
        if xi.len() != self.curve.dimension() {
            return Err(Error::Domain(format!(
                "frequency has {} entries, expected {}",
                xi.len(),
                self.curve.dimension()
            )));
        }
        Ok(())
    }

    /// `μ̂_t(ξ)` to relative accuracy `policy.rel_tol` (floored at `10⁻⁴ ∫χ`).
    pub fn mu_hat(&self, t: f64, xi: &[f64]) -> Result<Complex64> {
        self.check(t, xi)?;
        let d = self.cutoff.half_width();
        let f = |s: f64| {
            let phase = -t * self.curve.pairing(s, 0, xi);
            Complex64::from_polar(self.cutoff.eval(s), phase)
        };
        let out = quadrature::oscillatory(
            &f,
            -d,
            d,
            self.max_frequency(t, xi),
            1e-4 * self.cutoff.integral(),
            &self.policy,
        );
        if !out.converged {
            return Err(Error::QuadratureAccuracy { xi: xi.to_vec(), estimate: out.error_estimate });
        }
        Ok(out.value)
    }

    /// `μ̂_t(ξ)` with a fixed panel count; smooth in `ξ`, used for finite differences.
    pub fn mu_hat_fixed(&self, t: f64, xi: &[f64], panels: usize) -> Complex64 {
        let d = self.cutoff.half_width();
        let f = |s: f64| {
            let phase = -t * self.curve.pairing(s, 0, xi);
            Complex64::from_polar(self.cutoff.eval(s), phase)
        };
        quadrature::composite(&f, -d, d, panels)
    }

    /// Panel count at which the adaptive rule converges for `(t, ξ)`.
    pub fn converged_panels(&self, t: f64, xi: &[f64]) -> Result<usize> {
        self.check(t, xi)?;
        let d = self.cutoff.half_width();
        let f = |s: f64| {
            let phase = -t * self.curve.pairing(s, 0, xi);
            Complex64::from_polar(self.cutoff.eval(s), phase)
        };
        let out = quadrature::oscillatory(
            &f,
            -d,
            d,
            self.max_frequency(t, xi),
            1e-4 * self.cutoff.integral(),
            &self.policy,
        );
        if !out.converged {
            return Err(Error::QuadratureAccuracy { xi: xi.to_vec(), estimate: out.error_estimate });
        }
        Ok(out.panels)
    }

    /// Parallel evaluation over a list of frequencies, results in input order.
    pub fn mu_hat_batch(&self, t: f64, xis: &[Vec<f64>]) -> Result<Vec<Complex64>> {
        xis.par_iter().map(|xi| self.mu_hat(t, xi)).collect()
    }

    /// `(λ, |μ̂_t(λ d)| (1+λ)^{1/n})` for each `λ`.
    pub fn decay_profile(&self, t: f64, direction: &[f64], lambdas: &[f64]) -> Result<Vec<(f64, f64)>> {
        if (norm(direction) - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("direction {direction:?} is not a unit vector")));
        }
        let n = self.curve.dimension() as f64;
        lambdas
            .par_iter()
            .map(|&lam| {
                let xi: Vec<f64> = direction.iter().map(|d| d * lam).collect();
                Ok((lam, self.mu_hat(t, &xi)?.norm() * (1.0 + lam).powf(1.0 / n)))
            })
            .collect()
    }

    /// `μ̂_t`, `m_t` and the leading-term reference at `ξ ∈ Ξ`.
    pub fn multiplier_sample(&self, chart: &ConeChart, t: f64, xi: &[f64]) -> Result<MultiplierSample> {
        let point = chart.cone_point(xi)?;
        let mu_hat = self.mu_hat(t, xi)?;
        let m = Complex64::from_polar(1.0, t * point.phi) * mu_hat;
        let reference = self.reference(t, point.theta, point.u_n)?;
        Ok(MultiplierSample { xi: xi.to_vec(), t, mu_hat, m, reference, deficit: (m - reference).norm() })
    }

    /// `α_n χ(θ) (t u_n)^{-1/n}`; for `u_n < 0` (frequencies with `ξ_n < 0`)
    /// the conjugate of the value at `-ξ`.
    pub fn reference(&self, t: f64, theta: f64, u_n: f64) -> Result<Complex64> {
        let n = self.curve.dimension();
        if u_n == 0.0 || !u_n.is_finite() {
            return Err(Error::Domain(format!("u_n = {u_n} admits no reference value")));
        }
        let alpha = alpha_n(n)?;
        let alpha = if u_n > 0.0 { alpha } else { alpha.conj() };
        Ok(alpha * self.cutoff.eval(theta) * (t * u_n.abs()).powf(-1.0 / n as f64))
    }

    /// Central-difference magnitudes of `∂^α m_t(ξ)` for `|α| ≤ max_order`,
    /// with step `ρλ^{1/n}/64`, against the rate `λ^{-1/n-|α|/n}`.
    pub fn derivative_bound_check(
        &self,
        chart: &ConeChart,
        t: f64,
        xi: &[f64],
        max_order: usize,
        rho: f64,
    ) -> Result<Vec<DerivativeRow>> {
        self.check(t, xi)?;
        if max_order > 2 {
            return Err(Error::UnsupportedOrder { requested: max_order, max: 2 });
        }
        let n = self.curve.dimension();
        let nf = n as f64;
        let lambda = norm(xi);
        if lambda < 64.0 {
            return Err(Error::Domain(format!("|xi| = {lambda} below the 2^6 threshold")));
        }
        let h = rho * lambda.powf(1.0 / nf) / 64.0;
        if !(h > 1e-9 * lambda) {
            return Err(Error::Resolution(format!("finite-difference step {h:e} underflows at |xi| = {lambda}")));
        }
        // One panel count for the whole stencil keeps quadrature error smooth in ξ.
        let far: Vec<f64> = xi.iter().map(|x| x.abs() + 2.0 * h).collect();
        let panels = 2 * self.converged_panels(t, &far)?;

        let mut cache: HashMap<Vec<i8>, Complex64> = HashMap::new();
        let mut m_at = |offset: Vec<i8>| -> Result<Complex64> {
            if let Some(v) = cache.get(&offset) {
                return Ok(*v);
            }
            let p: Vec<f64> = xi.iter().zip(&offset).map(|(x, o)| x + h * *o as f64).collect();
            let phi = chart.phase_phi(&p)?;
            let v = Complex64::from_polar(1.0, t * phi) * self.mu_hat_fixed(t, &p, panels);
            cache.insert(offset, v);
            Ok(v)
        };
        let unit = |i: usize, sign: i8| {
            let mut o = vec![0i8; n];
            o[i] = sign;
            o
        };

        let mut rows = Vec::new();
        for alpha in multi_indices(n, max_order) {
            let order: usize = alpha.iter().sum();
            let nonzero: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0).collect();
            let value = match (order, nonzero.as_slice()) {
                (0, _) => m_at(vec![0; n])?,
                (1, [i]) => (m_at(unit(*i, 1))? - m_at(unit(*i, -1))?) / (2.0 * h),
                (2, [i]) => {
                    (m_at(unit(*i, 1))? - 2.0 * m_at(vec![0; n])? + m_at(unit(*i, -1))?) / (h * h)
                }
                (2, [i, j]) => {
                    let corner = |a: i8, b: i8| {
                        let mut o = vec![0i8; n];
                        o[*i] = a;
                        o[*j] = b;
                        o
                    };
                    (m_at(corner(1, 1))? - m_at(corner(1, -1))? - m_at(corner(-1, 1))? + m_at(corner(-1, -1))?)
                        / (4.0 * h * h)
                }
                _ => unreachable!("multi-index of order <= 2"),
            };
            let bound = lambda.powf(-(1.0 + order as f64) / nf);
            let magnitude = value.norm();
            rows.push(DerivativeRow { multi_index: alpha, magnitude, bound, ratio: magnitude / bound });
        }
        Ok(rows)
    }
}

/// All `α ∈ ℕ₀ⁿ` with `|α| ≤ max_order`, ordered by `|α|` then lexicographically (descending).
pub fn multi_indices(n: usize, max_order: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n - 1 {
            let mut a = prefix.clone();
            a.push(remaining);
            out.push(a);
            return;
        }
        for k in (0..=remaining).rev() {
            prefix.push(k);
            rec(n, remaining - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for order in 0..=max_order {
        rec(n, order, &mut Vec::new(), &mut out);
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSample {
    pub xi: Vec<f64>,
    pub t: f64,
    pub mu_hat: Complex64,
    /// `e^{itφ(ξ)} μ̂_t(ξ)`.
    pub m: Complex64,
    /// `α_n χ(θ(ξ)) (t u_n(ξ))^{-1/n}`.
    pub reference: Complex64,
    /// `|m - reference|`.
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRow {
    pub multi_index: Vec<usize>,
    pub magnitude: f64,
    pub bound: f64,
    pub ratio: f64,
}

/// Free-function form of [`Oscillator::mu_hat`].
pub fn mu_hat(curve: &CurveSpec, cutoff: &CutoffSpec, t: f64, xi: &[f64]) -> Result<Complex64> {
    Oscillator::new(curve.clone(), *cutoff)?.mu_hat(t, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn moment_osc(n: usize) -> Oscillator {
        Oscillator::new(CurveSpec::moment(n).unwrap(), CutoffSpec::default()).unwrap()
    }

    /// Brute-force midpoint rule on a very fine grid.
    fn brute_mu_hat(osc: &Oscillator, t: f64, xi: &[f64], points: usize) -> Complex64 {
        let d = osc.cutoff().half_width();
        let h = 2.0 * d / points as f64;
        (0..points)
            .map(|i| {
                let s = -d + (i as f64 + 0.5) * h;
                Complex64::from_polar(osc.cutoff().eval(s), -t * osc.curve().pairing(s, 0, xi))
            })
            .sum::<Complex64>()
            * h
    }

    #[test]
    fn cutoff_profile() {
        let c = CutoffSpec::new(0.25).unwrap();
        assert_eq!(c.eval(0.0), 1.0);
        assert_eq!(c.eval(0.25), 0.0);
        assert_eq!(c.eval(-0.3), 0.0);
        assert!(c.eval(0.2499) >= 0.0);
        // midpoint-rule oracle on 10⁶ points
        let h = 0.5 / 1e6;
        let brute: f64 = (0..1_000_000).map(|i| c.eval(-0.25 + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert_relative_eq!(c.integral(), brute, max_relative = 1e-10);
    }

    #[test]
    fn alpha_values() {
        // Γ(1/3) = 2.678938534707747...
        let a3 = alpha_n(3).unwrap();
        assert_relative_eq!(a3.re, 2.0 / 3.0 * 2.678_938_534_707_747 * (PI / 3.0).sin(), max_relative = 1e-12);
        assert_relative_eq!(a3.re, 1.546_685_884_155_979, max_relative = 1e-12);
        assert_eq!(a3.im, 0.0);
        let a2 = alpha_n(2).unwrap();
        let expect = PI.sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(a2.re, expect, max_relative = 1e-12);
        assert_relative_eq!(a2.im, expect, max_relative = 1e-12);
        // Γ(1/5) = 4.590843711998803...
        let a5 = alpha_n(5).unwrap();
        assert_relative_eq!(a5.re, 0.4 * 4.590_843_711_998_803 * (2.0 * PI / 5.0).sin(), max_relative = 1e-12);
        assert!(a5.re > 0.0 && a5.im == 0.0);
        assert!(alpha_n(1).is_err());
    }

    #[test]
    fn zero_frequency_gives_integral() {
        let osc = moment_osc(3);
        for t in [1.0, 1.3, 2.0] {
            let v = osc.mu_hat(t, &[0.0, 0.0, 0.0]).unwrap();
            assert_relative_eq!(v.re, osc.cutoff().integral(), max_relative = 1e-9);
            assert!(v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let osc = moment_osc(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let xi: Vec<f64> = (0..3).map(|_| rng.gen_range(-500.0..500.0)).collect();
            let t = rng.gen_range(1.0..2.0);
            let neg: Vec<f64> = xi.iter().map(|x| -x).collect();
            let a = osc.mu_hat(t, &xi).unwrap();
            let b = osc.mu_hat(t, &neg).unwrap();
            assert!((a - b.conj()).norm() <= 1e-9 * a.norm().max(1e-4 * osc.cutoff().integral()));
        }
    }

    #[test]
    fn matches_brute_force_at_high_frequency() {
        let osc = moment_osc(3);
        let xi = [0.0, 0.0, 4096.0];
        let v = osc.mu_hat(1.0, &xi).unwrap();
        let b = brute_mu_hat(&osc, 1.0, &xi, 2_000_000);
        assert!((v - b).norm() < 1e-10, "{v} vs {b}");
    }

    #[test]
    fn on_cone_amplitude_at_4096() {
        // The brute-force oracle above gives |μ̂₁(4096 e₃)|·16 = 2.81180; the cubic
        // phase s³/6 makes the limit α₃·6^{1/3}, not α₃.
        let osc = moment_osc(3);
        let v = osc.mu_hat(1.0, &[0.0, 0.0, 4096.0]).unwrap().norm() * 16.0;
        let limit = alpha_n(3).unwrap().re * 6f64.cbrt();
        assert!((v - limit).abs() / limit < 1.0 / 16.0);
        assert_relative_eq!(v, 2.811_804, max_relative = 1e-5);
    }

    #[test]
    fn panel_doubling_is_stable() {
        let osc = moment_osc(3);
        for xi in [[3.0, 100.0, 4096.0], [1000.0, -20.0, 30.0], [0.0, 0.0, 64.0]] {
            let v = osc.mu_hat(1.5, &xi).unwrap();
            let panels = osc.converged_panels(1.5, &xi).unwrap();
            let w = osc.mu_hat_fixed(1.5, &xi, 2 * panels);
            assert!((v - w).norm() < 1e-8 * v.norm().max(1e-4 * osc.cutoff().integral()));
        }
    }

    #[test]
    fn decay_profile_examples() {
        let osc = moment_osc(3);
        let lambdas: Vec<f64> = (6..=12).map(|k| 2f64.powi(k)).collect();
        let prof = osc.decay_profile(1.0, &[1.0, 0.0, 0.0], &lambdas).unwrap();
        // off-cone: the normalized sequence collapses
        assert!(prof.last().unwrap().1 < 1e-3 * prof[0].1);
        let zero = osc.decay_profile(1.0, &[0.0, 0.0, 1.0], &[0.0]).unwrap();
        assert_relative_eq!(zero[0].1, osc.cutoff().integral(), max_relative = 1e-9);
        assert!(osc.decay_profile(1.0, &[0.0, 0.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn multiplier_sample_fields() {
        let osc = moment_osc(3);
        let chart = ConeChart::new(CurveSpec::moment(3).unwrap());
        let s = osc.multiplier_sample(&chart, 1.0, &[0.0, 0.0, 4096.0]).unwrap();
        let on_cone = s.m.norm();
        assert_relative_eq!(s.m.norm(), s.mu_hat.norm(), max_relative = 1e-14);
        assert_eq!(s.deficit, (s.m - s.reference).norm());
        assert_relative_eq!(s.reference.re, alpha_n(3).unwrap().re / 16.0, max_relative = 1e-12);
        // ξ = λΓ(0.7): θ = -0.7 lies outside supp χ and the phase has no
        // stationary point on the support.
        let wide = ConeChart::new(CurveSpec::moment(3).unwrap()).with_aperture(0.8);
        let s = osc.multiplier_sample(&wide, 1.0, &[0.245 * 4096.0, 0.7 * 4096.0, 4096.0]).unwrap();
        assert_eq!(s.reference, Complex64::new(0.0, 0.0));
        assert!(s.m.norm() < 0.02 * on_cone);
    }

    #[test]
    fn negative_half_space_reference_is_conjugate() {
        let osc = moment_osc(4);
        let a = osc.reference(1.0, 0.05, 200.0).unwrap();
        let b = osc.reference(1.0, 0.05, -200.0).unwrap();
        assert_relative_eq!(a.re, b.re);
        assert_relative_eq!(a.im, -b.im);
    }

    #[test]
    fn derivative_check_zero_order_and_bound_scaling() {
        let osc = moment_osc(3);
        let chart = ConeChart::new(CurveSpec::moment(3).unwrap());
        let rows = osc.derivative_bound_check(&chart, 1.0, &[0.0, 0.0, 1024.0], 2, 0.25).unwrap();
        assert_eq!(rows.len(), 1 + 3 + 6);
        assert_eq!(rows[0].multi_index, vec![0, 0, 0]);
        let m = osc.multiplier_sample(&chart, 1.0, &[0.0, 0.0, 1024.0]).unwrap().m.norm();
        assert_relative_eq!(rows[0].magnitude, m, max_relative = 1e-8);
        let rows2 = osc.derivative_bound_check(&chart, 1.0, &[0.0, 0.0, 2048.0], 2, 0.25).unwrap();
        for (a, b) in rows.iter().zip(&rows2) {
            let order: usize = a.multi_index.iter().sum();
            assert_relative_eq!(b.bound / a.bound, 2f64.powf(-(1.0 + order as f64) / 3.0), max_relative = 1e-12);
        }
        assert!(osc.derivative_bound_check(&chart, 1.0, &[0.0, 0.0, 32.0], 1, 0.25).is_err());
    }

    #[test]
    fn multi_index_enumeration() {
        let idx = multi_indices(3, 2);
        assert_eq!(idx.len(), 10);
        assert!(idx.contains(&vec![1, 0, 1]));
        assert!(idx.contains(&vec![0, 0, 2]));
    }
}
