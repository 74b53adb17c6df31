//! `A_t` as the Fourier multiplier `μ̂_t`, a direct quadrature oracle, and
//! `L^p` norms in space and space-time.

use dashmap::DashMap;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvekit::CurveSpec;
use crate::oscillator::{CutoffSpec, Oscillator};
use crate::quadrature;
use crate::synthkit::{SpatialField, SpectralField};
use crate::{Error, Result};

pub const MIN_TIME_NODES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// `[1, 2]`
    Full,
    /// `[1, 1 + λ^{-1/n}]`
    Short,
}

/// Composite trapezoid nodes over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub kind: WindowKind,
    pub start: f64,
    pub end: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TimeWindow {
    pub fn new(kind: WindowKind, n: usize, lambda: f64, m: usize) -> Result<Self> {
        if m < MIN_TIME_NODES {
            return Err(Error::Domain(format!("time window needs at least {MIN_TIME_NODES} nodes, got {m}")));
        }
        let end = match kind {
            WindowKind::Full => 2.0,
            WindowKind::Short => {
                if !(lambda >= 1.0) {
                    return Err(Error::Domain(format!("short window needs lambda ≥ 1, got {lambda}")));
                }
                1.0 + lambda.powf(-1.0 / n as f64)
            }
        };
        let h = (end - 1.0) / (m - 1) as f64;
        let nodes = (0..m).map(|i| if i == m - 1 { end } else { 1.0 + i as f64 * h }).collect();
        let weights = (0..m).map(|i| if i == 0 || i == m - 1 { 0.5 * h } else { h }).collect();
        Ok(Self { kind, start: 1.0, end, nodes, weights })
    }

    pub fn full(m: usize) -> Result<Self> {
        Self::new(WindowKind::Full, 2, 1.0, m)
    }

    pub fn short(n: usize, lambda: f64, m: usize) -> Result<Self> {
        Self::new(WindowKind::Short, n, lambda, m)
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

type CacheKey = (u64, Vec<u64>);

/// Applies `A_t` spectrally. Multiplier samples are cached per `(t, ξ)`.
pub struct Averager {
    osc: Oscillator,
    cache: DashMap<CacheKey, Complex64>,
}

impl Averager {
    pub fn new(curve: CurveSpec, cutoff: CutoffSpec) -> Result<Self> {
        Ok(Self { osc: Oscillator::new(curve, cutoff)?, cache: DashMap::new() })
    }

    pub fn from_oscillator(osc: Oscillator) -> Self {
        Self { osc, cache: DashMap::new() }
    }

    pub fn oscillator(&self) -> &Oscillator {
        &self.osc
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    pub fn clear_cache(&self) {
        self.cache.clear();
    }

    pub fn multiplier(&self, t: f64, xi: &[f64]) -> Result<Complex64> {
        let key = (t.to_bits(), xi.iter().map(|v| v.to_bits()).collect());
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let v = self.osc.mu_hat(t, xi)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    /// `(A_t f)^ = μ̂_t f̂` on the stored coefficients; support unchanged.
    pub fn apply_averaging(&self, field: &SpectralField, t: f64) -> Result<SpectralField> {
        let grid = field.grid();
        let coeffs = field
            .indices()
            .par_iter()
            .zip(field.coefficients().par_iter())
            .map(|(&i, c)| Ok(self.multiplier(t, &grid.frequency(i))? * c))
            .collect::<Result<Vec<_>>>()?;
        Ok(field.with_coefficients(coeffs))
    }

    /// `∫ f(x - tγ(s)) χ(s) ds` at each point, with `f` summed exactly from its coefficients.
    pub fn direct_oracle(&self, field: &SpectralField, t: f64, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
        if !(1.0..=2.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [1, 2]")));
        }
        let curve = self.osc.curve();
        let cutoff = self.osc.cutoff();
        let d = cutoff.half_width();
        let max_xi = field.frequencies().map(|xi| xi.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let omega = t * max_xi * curve.speed_bound(-d, d);
        let amplitude = field.coefficients().iter().map(|c| c.norm()).sum::<f64>() / field.grid().volume();
        let scale = 1e-4 * cutoff.integral() * amplitude;
        let policy = *self.osc.policy();
        points
            .par_iter()
            .map(|x| {
                let integrand = |s: f64| {
                    let w = cutoff.eval(s);
                    if w == 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let g = curve.eval_point(s);
                    let shifted: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
                    field.eval(&shifted) * w
                };
                let out = quadrature::oscillatory(&integrand, -d, d, omega, scale, &policy);
                if !out.converged {
                    return Err(Error::QuadratureAccuracy { xi: x.clone(), estimate: out.error_estimate });
                }
                Ok(out.value)
            })
            .collect()
    }
}

/// `(Σ |f(x_k)|^p · cell)^{1/p}`, or `max |f|` for `p = ∞`.
pub fn lp_norm_space(field: &SpatialField, p: f64) -> Result<f64> {
    Ok(lp_norms_space(field, &[p])?[0])
}

pub fn lp_norms_space(field: &SpatialField, ps: &[f64]) -> Result<Vec<f64>> {
    check_exponents(ps)?;
    Ok(field
        .power_sums(ps)
        .into_iter()
        .zip(ps)
        .map(|(s, &p)| if p.is_infinite() { s } else { s.powf(1.0 / p) })
        .collect())
}

/// `(Σ_i w_i ‖A_{t_i} f‖_p^p)^{1/p}` over the window nodes.
pub fn lp_norm_spacetime(fields: &[SpatialField], window: &TimeWindow, p: f64) -> Result<f64> {
    let norms = fields.iter().map(|f| lp_norm_space(f, p)).collect::<Result<Vec<_>>>()?;
    spacetime_from_space_norms(&norms, window, p)
}

/// The same trapezoid rule applied to precomputed space norms.
pub fn spacetime_from_space_norms(norms: &[f64], window: &TimeWindow, p: f64) -> Result<f64> {
    check_exponents(&[p])?;
    if norms.len() != window.len() {
        return Err(Error::Domain(format!("{} norms for {} time nodes", norms.len(), window.len())));
    }
    if norms.len() < MIN_TIME_NODES {
        return Err(Error::Domain(format!("space-time norm needs at least {MIN_TIME_NODES} nodes")));
    }
    if p.is_infinite() {
        return Ok(norms.iter().copied().fold(0.0, f64::max));
    }
    let total: f64 = norms.iter().zip(&window.weights).map(|(a, w)| w * a.powf(p)).sum();
    Ok(total.powf(1.0 / p))
}

fn check_exponents(ps: &[f64]) -> Result<()> {
    match ps.iter().find(|p| !(**p >= 1.0)) {
        Some(p) => Err(Error::Domain(format!("L^p exponent must be ≥ 1, got {p}"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::{Ball, GridSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn averager(n: usize) -> Averager {
        Averager::new(CurveSpec::moment(n).unwrap(), CutoffSpec::default()).unwrap()
    }

    #[test]
    fn windows() {
        let w = TimeWindow::short(3, 64.0, 9).unwrap();
        assert_eq!(w.nodes[0], 1.0);
        assert_eq!(*w.nodes.last().unwrap(), 1.25);
        assert_relative_eq!(w.weights.iter().sum::<f64>(), 0.25, max_relative = 1e-14);
        assert!(w.nodes.iter().all(|t| (1.0..=1.25).contains(t)));
        let f = TimeWindow::full(5).unwrap();
        assert_eq!(f.nodes, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert!(TimeWindow::full(4).is_err());
    }

    #[test]
    fn single_mode_is_an_eigenfunction() {
        let avg = averager(3);
        let grid = GridSpec::centered(3, 2.0, 16).unwrap();
        let m = [1, -2, 5];
        let f = SpectralField::single_mode(grid.clone(), &m, Complex64::new(1.0, 0.0)).unwrap();
        let t = 1.3;
        let af = avg.apply_averaging(&f, t).unwrap();
        let xi: Vec<f64> = m.iter().map(|&v| v as f64 * PI).collect();
        let mu = avg.oscillator().mu_hat(t, &xi).unwrap();
        let sp = af.to_spatial();
        let orig = f.to_spatial();
        for flat in [0, 333, 4095] {
            assert!((sp.value(flat) - mu * orig.value(flat)).norm() < 1e-12);
        }
        // the oracle reproduces the same eigenvalue
        let points = vec![vec![0.1, -0.2, 0.3], vec![0.0, 0.0, 0.0]];
        let direct = avg.direct_oracle(&f, t, &points).unwrap();
        for (x, d) in points.iter().zip(&direct) {
            assert!((d - mu * f.eval(x)).norm() < 1e-8 * mu.norm().max(1e-3));
        }
        assert_eq!(af.support(), f.support());
    }

    #[test]
    fn constant_field_scales_by_integral() {
        let avg = averager(3);
        let grid = GridSpec::centered(3, 2.0, 8).unwrap();
        let f = SpectralField::constant(grid, Complex64::new(1.0, 0.0)).unwrap();
        let af = avg.apply_averaging(&f, 1.7).unwrap();
        let sp = af.to_spatial();
        let chi = avg.oscillator().cutoff().integral();
        assert!((0..sp.grid().len()).all(|i| (sp.value(i) - Complex64::new(chi, 0.0)).norm() < 1e-12));
        let d = avg.direct_oracle(&f, 1.7, &[vec![0.3, 0.3, -0.9]]).unwrap();
        assert_relative_eq!(d[0].re, chi, max_relative = 1e-9);
    }

    fn random_band_limited(lambda: f64, points: usize, seed: u64) -> SpectralField {
        let grid = GridSpec::centered(3, 2.0, points).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<(usize, Complex64)> = (0..grid.len())
            .filter_map(|i| {
                let xi = grid.frequency(i);
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                (r >= lambda / 2.0 && r <= 2.0 * lambda)
                    .then(|| (i, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            })
            .collect();
        let support = vec![Ball { center: vec![0.0; 3], radius: 2.0 * lambda }];
        SpectralField::new(grid, entries, support).unwrap()
    }

    #[test]
    fn spectral_application_matches_direct_quadrature() {
        let avg = averager(3);
        let f = random_band_limited(8.0, 32, 5);
        let t = 1.4;
        let af = avg.apply_averaging(&f, t).unwrap().to_spatial();
        let grid = f.grid().clone();
        // every 4th grid point per axis
        let flats: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                let x = grid.lattice(i);
                x.iter().zip(grid.origin()).all(|(m, o)| (m - o) % 4 == 0)
            })
            .collect();
        let points: Vec<Vec<f64>> = flats.iter().map(|&i| grid.sample_point(i)).collect();
        let direct = avg.direct_oracle(&f, t, &points).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for (&i, d) in flats.iter().zip(&direct) {
            num += (af.value(i) - d).norm_sqr();
            den += d.norm_sqr();
        }
        assert!((num / den).sqrt() <= 1e-3, "relative L2 error {}", (num / den).sqrt());
    }

    #[test]
    fn multiplier_contraction_and_support() {
        let avg = averager(3);
        let f = random_band_limited(8.0, 32, 9);
        for t in [1.0, 1.5, 2.0] {
            let af = avg.apply_averaging(&f, t).unwrap();
            let sup = f
                .frequencies()
                .map(|xi| avg.multiplier(t, &xi).unwrap().norm())
                .fold(0.0, f64::max);
            assert!(af.l2_norm() <= sup * f.l2_norm() * (1.0 + 1e-14));
            assert_eq!(af.indices(), f.indices());
        }
        assert!(avg.cache_len() > 0);
    }

    #[test]
    fn space_norms() {
        // |e^{i⟨x,ξ⟩}/L^n|² integrates to L^{-n}
        let grid = GridSpec::centered(3, 2.0, 8).unwrap();
        let f = SpectralField::single_mode(grid.clone(), &[1, 0, 2], Complex64::new(1.0, 0.0)).unwrap();
        let sp = f.to_spatial();
        assert_relative_eq!(lp_norm_space(&sp, 2.0).unwrap(), 8f64.powf(-0.5), max_relative = 1e-13);
        let c = SpectralField::constant(grid, Complex64::new(0.0, 3.0)).unwrap().to_spatial();
        for p in [1.0, 2.0, 4.5, 8.0] {
            assert_relative_eq!(lp_norm_space(&c, p).unwrap(), 3.0 * 8f64.powf(1.0 / p), max_relative = 1e-13);
        }
        assert_relative_eq!(lp_norm_space(&c, f64::INFINITY).unwrap(), 3.0, max_relative = 1e-13);
        assert!(lp_norm_space(&c, 0.5).is_err());
    }

    #[test]
    fn wide_bump_matches_refined_riemann_sum() {
        // A wide bump is smooth on the grid scale; halving the spacing is the reference.
        let grid = GridSpec::centered(2, 2.0, 32).unwrap();
        let entries: Vec<(usize, Complex64)> = (0..grid.len())
            .filter_map(|i| {
                let xi = grid.frequency(i);
                let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() / 20.0;
                let v = crate::synthkit::radial_bump(crate::synthkit::BumpKind::Inner, r);
                (v > 0.0).then(|| (i, Complex64::new(v, 0.0)))
            })
            .collect();
        let f = SpectralField::new(grid.clone(), entries, vec![Ball { center: vec![0.0, 0.0], radius: 20.0 }]).unwrap();
        let fine_entries: Vec<(usize, Complex64)> = f
            .indices()
            .iter()
            .zip(f.coefficients())
            .map(|(&i, &c)| (grid.refined().flat(&grid.lattice(i)).unwrap(), c))
            .collect();
        let g = SpectralField::new(grid.refined(), fine_entries, f.support().to_vec()).unwrap();
        for p in [3.0, 5.0] {
            let a = lp_norm_space(&f.to_spatial(), p).unwrap();
            let b = lp_norm_space(&g.to_spatial(), p).unwrap();
            assert!((a - b).abs() / b < 1e-4, "p={p}: {a} vs {b}");
        }
    }

    #[test]
    fn spacetime_norms() {
        let w = TimeWindow::full(9).unwrap();
        let norms = vec![2.5; 9];
        assert_relative_eq!(spacetime_from_space_norms(&norms, &w, 6.0).unwrap(), 2.5, max_relative = 1e-14);
        let s = TimeWindow::short(3, 64.0, 9).unwrap();
        let v = spacetime_from_space_norms(&norms, &s, 6.0).unwrap();
        assert_relative_eq!(v, 2.5 * 64f64.powf(-1.0 / 18.0), max_relative = 1e-14);
        assert!(spacetime_from_space_norms(&norms[..4], &w, 2.0).is_err());
        let grid = GridSpec::centered(2, 2.0, 8).unwrap();
        let c = SpectralField::constant(grid, Complex64::new(1.0, 0.0)).unwrap().to_spatial();
        let fields = vec![c; 9];
        assert_relative_eq!(lp_norm_spacetime(&fields, &w, 4.0).unwrap(), 4f64.powf(0.25), max_relative = 1e-13);
    }
}
