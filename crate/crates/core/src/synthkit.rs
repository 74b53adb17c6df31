//! Periodic grids, spectral and spatial fields, and the counterexample family
//! `f = Σ_ν f_ν` with `f̂_ν = λ^{1/n} e^{iφ} ĝ_ν`.
//!
//! A field on a torus of side `L` is stored by its lattice coefficients `c_m`
//! at frequencies `ξ_m = 2πm/L` and
//!
//! ```text
//! f(x) = L^{-n} Σ_m c_m e^{i⟨x, ξ_m⟩},
//! ```
//!
//! so `c_m` approximates the continuous transform `f̂(ξ_m)` and
//! `∫_torus |f|² = L^{-n} Σ |c_m|²`. Each axis carries its own window of
//! `N_k` consecutive lattice indices starting at `origin_k`. Spatial samples sit
//! at `x = -L/2 + i L/N_k` and are stored demodulated by the window origin,
//! `f(x) e^{-i⟨x, ξ_origin⟩}`, which leaves `|f|` unchanged.

use std::f64::consts::PI;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conechart::ConeChart;
use crate::fft::{self, Direction};
use crate::oscillator::CutoffSpec;
use crate::{Error, Result};

pub const DEFAULT_WINDOW_WIDTH: f64 = 48.0;
pub const DEFAULT_OVERSAMPLE: usize = 4;
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CSLF";
pub const SNAPSHOT_VERSION: u32 = 1;

const REDUCTION_CHUNK: usize = 1 << 14;

/// How the torus and the per-axis windows are sized for a construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridPolicy {
    /// Side `L` as given, `N` per axis the least power of two with
    /// `Nπ/L ≥ 1.2λ + 2ρλ^{1/n}`, windows centred at the origin.
    Full,
    /// Side `max(L, width/(ρλ^{1/n}))`; each axis window covers the bounding
    /// box of the support balls, `N_k` the least power of two `≥ oversample·W_k`.
    /// `oversample ≥ p/2` makes Riemann sums of `|f|^p` exact for even `p`.
    Windowed { width: f64, oversample: usize },
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::Windowed { width: DEFAULT_WINDOW_WIDTH, oversample: DEFAULT_OVERSAMPLE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, xi: &[f64]) -> bool {
        dist(&self.center, xi) <= self.radius * (1.0 + 1e-12) + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    side: f64,
    dims: Vec<usize>,
    origin: Vec<i64>,
}

impl GridSpec {
    pub fn new(side: f64, dims: Vec<usize>, origin: Vec<i64>) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::Grid(format!("torus side must be positive, got {side}")));
        }
        if dims.is_empty() || dims.len() != origin.len() {
            return Err(Error::Grid(format!("dims {dims:?} and origin {origin:?} disagree")));
        }
        if let Some(bad) = dims.iter().find(|d| !d.is_power_of_two()) {
            return Err(Error::Grid(format!("axis length {bad} is not a power of two")));
        }
        Ok(Self { side, dims, origin })
    }

    /// Windows `[-N/2, N/2)` on every axis.
    pub fn centered(n: usize, side: f64, points: usize) -> Result<Self> {
        let half = (points / 2) as i64;
        Self::new(side, vec![points; n], vec![-half; n])
    }

    /// The isotropic rule: least power of two `N` with `Nπ/L ≥ 1.2λ + 2ρλ^{1/n}`.
    pub fn full_for(n: usize, side: f64, lambda: f64, rho: f64) -> Result<Self> {
        let need = 1.2 * lambda + 2.0 * rho * lambda.powf(1.0 / n as f64);
        let points = ((need * side / PI).ceil().max(2.0) as usize).next_power_of_two();
        Self::centered(n, side, points)
    }

    pub fn windowed_for(balls: &[Ball], min_side: f64, width: f64, oversample: usize) -> Result<Self> {
        let first = balls.first().ok_or_else(|| Error::Grid("no support balls to cover".into()))?;
        if oversample == 0 || width <= 0.0 {
            return Err(Error::Grid(format!("bad window parameters width={width}, oversample={oversample}")));
        }
        let n = first.center.len();
        let radius = balls.iter().map(|b| b.radius).fold(0.0, f64::max);
        let side = if radius > 0.0 { min_side.max(width / radius) } else { min_side };
        let step = 2.0 * PI / side;
        let mut dims = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        for k in 0..n {
            let lo = balls.iter().map(|b| ((b.center[k] - b.radius) / step).floor() as i64).min().unwrap();
            let hi = balls.iter().map(|b| ((b.center[k] + b.radius) / step).ceil() as i64).max().unwrap();
            let width_k = (hi - lo + 1) as usize;
            let points = (oversample * width_k).next_power_of_two().max(8);
            dims.push(points);
            origin.push(lo - ((points - width_k) / 2) as i64);
        }
        Self::new(side, dims, origin)
    }

    pub fn for_counterexample(spec: &CounterexampleSpec, policy: GridPolicy, min_side: f64) -> Result<Self> {
        match policy {
            GridPolicy::Full => Self::full_for(spec.dimension(), min_side, spec.lambda(), spec.rho()),
            GridPolicy::Windowed { width, oversample } => {
                Self::windowed_for(&spec.support_balls()?, min_side, width, oversample)
            }
        }
    }

    /// Same lattice, twice the points per axis, windows kept centred.
    pub fn refined(&self) -> Self {
        let origin = self.origin.iter().zip(&self.dims).map(|(o, d)| o - (*d / 2) as i64).collect();
        Self { side: self.side, dims: self.dims.iter().map(|d| d * 2).collect(), origin }
    }

    pub fn dimension(&self) -> usize {
        self.dims.len()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frequency lattice spacing `2π/L`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dimension() as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dims.iter().map(|&d| self.side / d as f64).product()
    }

    /// Two complex arrays of the full grid, `2·16·ΠN_k` bytes.
    pub fn memory_bytes(&self) -> u128 {
        self.dims.iter().fold(32u128, |acc, &d| acc.saturating_mul(d as u128))
    }

    pub fn lattice(&self, flat: usize) -> Vec<i64> {
        let mut idx = vec![0i64; self.dimension()];
        let mut rest = flat;
        for k in (0..self.dimension()).rev() {
            idx[k] = self.origin[k] + (rest % self.dims[k]) as i64;
            rest /= self.dims[k];
        }
        idx
    }

    pub fn flat(&self, lattice: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for k in 0..self.dimension() {
            let j = lattice[k] - self.origin[k];
            if j < 0 || j >= self.dims[k] as i64 {
                return None;
            }
            flat = flat * self.dims[k] + j as usize;
        }
        Some(flat)
    }

    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.lattice(flat).into_iter().map(|m| m as f64 * h).collect()
    }

    pub fn sample_point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dimension()];
        let mut rest = flat;
        for k in (0..self.dimension()).rev() {
            let i = rest % self.dims[k];
            rest /= self.dims[k];
            x[k] = -0.5 * self.side + i as f64 * self.side / self.dims[k] as f64;
        }
        x
    }

    fn origin_frequency(&self) -> Vec<f64> {
        let h = self.spacing();
        self.origin.iter().map(|&m| m as f64 * h).collect()
    }

    /// Flat indices of the lattice points strictly inside `ball`, in increasing order.
    fn ball_points(&self, ball: &Ball) -> Result<Vec<(usize, Vec<f64>)>> {
        let n = self.dimension();
        let h = self.spacing();
        let mut lo = vec![0i64; n];
        let mut hi = vec![0i64; n];
        for k in 0..n {
            lo[k] = ((ball.center[k] - ball.radius) / h).ceil() as i64;
            hi[k] = ((ball.center[k] + ball.radius) / h).floor() as i64;
            let first = self.origin[k];
            let last = first + self.dims[k] as i64 - 1;
            if lo[k] < first || hi[k] > last {
                return Err(Error::Grid(format!(
                    "ball at {:?} (radius {}) leaves the lattice window on axis {k}: needs [{}, {}], have [{first}, {last}]",
                    ball.center, ball.radius, lo[k], hi[k]
                )));
            }
        }
        let mut out = Vec::new();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Ok(out);
        }
        let mut m = lo.clone();
        loop {
            let xi: Vec<f64> = m.iter().map(|&v| v as f64 * h).collect();
            if dist(&xi, &ball.center) < ball.radius {
                out.push((self.flat(&m).expect("inside window"), xi));
            }
            let mut k = n;
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                if m[k] < hi[k] {
                    m[k] += 1;
                    break;
                }
                m[k] = lo[k];
            }
        }
    }
}

/// Sparse lattice coefficients with declared support balls.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    indices: Vec<usize>,
    coeffs: Vec<Complex64>,
    support: Vec<Ball>,
}

impl SpectralField {
    /// Entries are sorted by flat index; each must lie in some support ball.
    pub fn new(grid: GridSpec, mut entries: Vec<(usize, Complex64)>, support: Vec<Ball>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Grid("duplicate lattice index in spectral field".into()));
        }
        for &(idx, _) in &entries {
            if idx >= grid.len() {
                return Err(Error::Grid(format!("flat index {idx} outside grid of {} points", grid.len())));
            }
            let xi = grid.frequency(idx);
            if !support.iter().any(|b| b.contains(&xi)) {
                return Err(Error::Grid(format!("coefficient at {xi:?} outside the declared support")));
            }
        }
        let (indices, coeffs) = entries.into_iter().unzip();
        Ok(Self { grid, indices, coeffs, support })
    }

    /// `coeff · L^{-n} e^{i⟨x, 2πm/L⟩}`.
    pub fn single_mode(grid: GridSpec, lattice: &[i64], coeff: Complex64) -> Result<Self> {
        let idx = grid
            .flat(lattice)
            .ok_or_else(|| Error::Grid(format!("lattice point {lattice:?} outside the grid window")))?;
        let center = grid.frequency(idx);
        Self::new(grid, vec![(idx, coeff)], vec![Ball { center, radius: 0.0 }])
    }

    /// The field `f ≡ value`.
    pub fn constant(grid: GridSpec, value: Complex64) -> Result<Self> {
        let zero = vec![0i64; grid.dimension()];
        let v = grid.volume();
        Self::single_mode(grid, &zero, value * v)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn support(&self) -> &[Ball] {
        &self.support
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.indices.iter().map(|&i| self.grid.frequency(i))
    }

    /// Same support and grid, coefficients replaced entrywise.
    pub fn with_coefficients(&self, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), self.coeffs.len());
        Self { grid: self.grid.clone(), indices: self.indices.clone(), coeffs, support: self.support.clone() }
    }

    /// Coefficientwise sum on a common grid; supports are concatenated.
    pub fn sum(fields: &[SpectralField]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::Grid("empty sum of fields".into()))?;
        let mut merged: Vec<(usize, Complex64)> = Vec::new();
        let mut support = Vec::new();
        for f in fields {
            if f.grid != first.grid {
                return Err(Error::Grid("fields live on different grids".into()));
            }
            merged.extend(f.indices.iter().copied().zip(f.coeffs.iter().copied()));
            support.extend(f.support.iter().cloned());
        }
        merged.sort_by_key(|e| e.0);
        let mut entries: Vec<(usize, Complex64)> = Vec::with_capacity(merged.len());
        for (i, c) in merged {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => entries.push((i, c)),
            }
        }
        let (indices, coeffs) = entries.into_iter().unzip();
        Ok(Self { grid: first.grid.clone(), indices, coeffs, support })
    }

    /// `∫_torus |f|² = L^{-n} Σ |c|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.grid.volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `(min |ξ|, max |ξ|)` over the stored coefficients.
    pub fn frequency_radius_range(&self) -> Option<(f64, f64)> {
        self.frequencies().map(|xi| norm(&xi)).fold(None, |acc, r| match acc {
            None => Some((r, r)),
            Some((a, b)) => Some((a.min(r), b.max(r))),
        })
    }

    /// `f(x)` by direct trigonometric summation.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let v = self.grid.volume();
        self.indices
            .iter()
            .zip(&self.coeffs)
            .map(|(&i, c)| {
                let xi = self.grid.frequency(i);
                c * Complex64::from_polar(1.0, dot(x, &xi))
            })
            .sum::<Complex64>()
            / v
    }

    /// `f` on the tensor grid `axes[0] × … × axes[n-1]` (row-major), by
    /// separable exact summation over the coefficient bounding box.
    pub fn eval_tensor(&self, axes: &[Vec<f64>]) -> Vec<Complex64> {
        let n = self.grid.dimension();
        assert_eq!(axes.len(), n);
        let out_len: usize = axes.iter().map(|a| a.len()).product();
        if self.is_empty() {
            return vec![Complex64::new(0.0, 0.0); out_len];
        }
        let lattice: Vec<Vec<i64>> = self.indices.iter().map(|&i| self.grid.lattice(i)).collect();
        let lo: Vec<i64> = (0..n).map(|k| lattice.iter().map(|m| m[k]).min().unwrap()).collect();
        let hi: Vec<i64> = (0..n).map(|k| lattice.iter().map(|m| m[k]).max().unwrap()).collect();
        let mut dims: Vec<usize> = (0..n).map(|k| (hi[k] - lo[k] + 1) as usize).collect();
        let mut data = vec![Complex64::new(0.0, 0.0); dims.iter().product()];
        let v = self.grid.volume();
        for (m, c) in lattice.iter().zip(&self.coeffs) {
            let flat = (0..n).fold(0usize, |acc, k| acc * dims[k] + (m[k] - lo[k]) as usize);
            data[flat] = c / v;
        }
        let h = self.grid.spacing();
        for k in 0..n {
            let width = dims[k];
            let lo_k = lo[k];
            let kernel: Vec<Complex64> = axes[k]
                .iter()
                .flat_map(|&x| (0..width).map(move |w| Complex64::from_polar(1.0, x * (lo_k + w as i64) as f64 * h)))
                .collect();
            data = contract_axis(&data, &dims, k, &kernel, axes[k].len());
            dims[k] = axes[k].len();
        }
        data
    }

    /// `∫_{|x|<R} |f|²` by the midpoint rule on a `points^n` tensor grid over `[-R, R]^n`.
    pub fn ball_l2_norm_sq(&self, radius: f64, points: usize) -> f64 {
        let n = self.grid.dimension();
        let h = 2.0 * radius / points as f64;
        let axis: Vec<f64> = (0..points).map(|i| -radius + (i as f64 + 0.5) * h).collect();
        let values = self.eval_tensor(&vec![axis.clone(); n]);
        let cell = h.powi(n as i32);
        let mut total = 0.0;
        for (flat, v) in values.iter().enumerate() {
            let mut rest = flat;
            let mut r2 = 0.0;
            for _ in 0..n {
                let x = axis[rest % points];
                rest /= points;
                r2 += x * x;
            }
            if r2 < radius * radius {
                total += v.norm_sqr();
            }
        }
        total * cell
    }

    pub fn to_spatial(&self) -> SpatialField {
        let grid = &self.grid;
        let mut dense = vec![Complex64::new(0.0, 0.0); grid.len()];
        let v = grid.volume();
        for (&i, c) in self.indices.iter().zip(&self.coeffs) {
            let parity: i64 = grid.lattice(i).iter().zip(&grid.origin).map(|(m, o)| m - o).sum();
            let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
            dense[i] = c * (sign / v);
        }
        fft::fft_nd(&mut dense, &grid.dims, Direction::Inverse);
        SpatialField { grid: grid.clone(), values: dense }
    }
}

fn contract_axis(data: &[Complex64], dims: &[usize], axis: usize, kernel: &[Complex64], out_len: usize) -> Vec<Complex64> {
    let width = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * out_len * stride];
    out.par_chunks_mut(stride).enumerate().for_each(|(row, dst)| {
        let (o, p) = (row / out_len, row % out_len);
        let krow = &kernel[p * width..(p + 1) * width];
        for (w, kv) in krow.iter().enumerate() {
            let src = &data[(o * width + w) * stride..(o * width + w + 1) * stride];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    });
    out
}

/// Grid samples of a field, stored demodulated by the window origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl SpatialField {
    pub fn from_values(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!("{} samples for a grid of {}", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Demodulated samples `f(x) e^{-i⟨x, ξ_origin⟩}`.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `f(x)` at sample `flat`.
    pub fn value(&self, flat: usize) -> Complex64 {
        let x = self.grid.sample_point(flat);
        self.values[flat] * Complex64::from_polar(1.0, dot(&x, &self.grid.origin_frequency()))
    }

    /// `Σ |f|^p · cell` for each finite `p`, `max |f|` for `p = ∞`. Fixed-size
    /// chunks are reduced in order, so the result does not depend on threads.
    pub fn power_sums(&self, ps: &[f64]) -> Vec<f64> {
        let partial: Vec<Vec<f64>> = self
            .values
            .par_chunks(REDUCTION_CHUNK)
            .map(|chunk| {
                let mut acc = vec![0.0f64; ps.len()];
                for v in chunk {
                    let a = v.norm();
                    for (s, &p) in acc.iter_mut().zip(ps) {
                        if p.is_infinite() {
                            *s = s.max(a);
                        } else if p == 2.0 {
                            *s += a * a;
                        } else {
                            *s += a.powf(p);
                        }
                    }
                }
                acc
            })
            .collect();
        let cell = self.grid.cell_volume();
        ps.iter()
            .enumerate()
            .map(|(j, p)| {
                if p.is_infinite() {
                    partial.iter().map(|a| a[j]).fold(0.0, f64::max)
                } else {
                    partial.iter().map(|a| a[j]).sum::<f64>() * cell
                }
            })
            .collect()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.power_sums(&[2.0])[0]
    }
}

/// `|Σ|c|²/L^n - Σ|f(x)|²·cell| / Σ|c|²/L^n`.
pub fn parseval_defect(spectral: &SpectralField, spatial: &SpatialField) -> f64 {
    let a = spectral.l2_norm_sq();
    let b = spatial.l2_norm_sq();
    if a == 0.0 {
        b
    } else {
        (a - b).abs() / a
    }
}

/// Writes `magic, version, n, dims, L, λ, origin, (re, im)…`, little-endian.
pub fn write_snapshot<W: Write>(mut w: W, field: &SpatialField, lambda: f64) -> Result<()> {
    let g = field.grid();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
    w.write_u32::<LittleEndian>(g.dimension() as u32)?;
    for &d in g.dims() {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    w.write_f64::<LittleEndian>(g.side())?;
    w.write_f64::<LittleEndian>(lambda)?;
    for &o in g.origin() {
        w.write_i64::<LittleEndian>(o)?;
    }
    for v in field.values() {
        w.write_f64::<LittleEndian>(v.re)?;
        w.write_f64::<LittleEndian>(v.im)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SpatialField, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Io(format!("bad snapshot magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Io(format!("unsupported snapshot version {version}")));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let dims = (0..n).map(|_| r.read_u64::<LittleEndian>().map(|d| d as usize)).collect::<std::io::Result<Vec<_>>>()?;
    let side = r.read_f64::<LittleEndian>()?;
    let lambda = r.read_f64::<LittleEndian>()?;
    let origin = (0..n).map(|_| r.read_i64::<LittleEndian>()).collect::<std::io::Result<Vec<_>>>()?;
    let grid = GridSpec::new(side, dims, origin)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        values.push(Complex64::new(re, im));
    }
    Ok((SpatialField::from_values(grid, values)?, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BumpKind {
    /// 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
    Inner,
    /// 1 on `[0, 1]`, 0 on `[3/2, ∞)`.
    Outer,
}

fn h(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// `h(x)/(h(x) + h(1-x))` with `h(x) = e^{-1/x}`; satisfies `step(x) + step(1-x) = 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        h(x) / (h(x) + h(1.0 - x))
    }
}

pub fn radial_bump(kind: BumpKind, x: f64) -> f64 {
    match kind {
        BumpKind::Inner => 1.0 - smooth_step(2.0 * (x - 0.5)),
        BumpKind::Outer => 1.0 - smooth_step(2.0 * (x - 1.0)),
    }
}

/// Parameters of the family `f = Σ_{|ν| ≤ c₀λ^{1/n}} f_ν`.
#[derive(Debug, Clone)]
pub struct CounterexampleSpec {
    lambda: f64,
    rho: f64,
    c0: f64,
    chart: ConeChart,
    cutoff: CutoffSpec,
}

impl CounterexampleSpec {
    pub fn new(lambda: f64, rho: f64, c0: f64, chart: ConeChart, cutoff: CutoffSpec) -> Result<Self> {
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(Error::Configuration(format!("lambda must be ≥ 1, got {lambda}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Configuration(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::Configuration(format!("c0 must be positive, got {c0}")));
        }
        Ok(Self { lambda, rho, c0, chart, cutoff })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn chart(&self) -> &ConeChart {
        &self.chart
    }

    pub fn cutoff(&self) -> &CutoffSpec {
        &self.cutoff
    }

    pub fn dimension(&self) -> usize {
        self.chart.dimension()
    }

    /// `λ^{1/n}`, snapped to the nearest integer when it is one up to rounding.
    pub fn root(&self) -> f64 {
        let r = self.lambda.powf(1.0 / self.dimension() as f64);
        let nearest = r.round();
        if (r - nearest).abs() <= 1e-9 * r {
            nearest
        } else {
            r
        }
    }

    /// `ρλ^{1/n}`, the support radius of each `ĝ_ν`.
    pub fn ball_radius(&self) -> f64 {
        self.rho * self.root()
    }

    pub fn nu_range(&self) -> Vec<i64> {
        let k = (self.c0 * self.root() + 1e-12).floor() as i64;
        (-k..=k).collect()
    }

    /// `λ Γ(ν λ^{-1/n})`.
    pub fn center(&self, nu: i64) -> Result<Vec<f64>> {
        let (xi, _) = self.chart.solve_gamma(nu as f64 / self.root())?;
        Ok(xi.into_iter().map(|v| v * self.lambda).collect())
    }

    /// All centres, after checking that the balls of radius `(3/2)ρλ^{1/n}` are disjoint.
    pub fn frequency_centers(&self) -> Result<Vec<Vec<f64>>> {
        let centers = self.nu_range().into_iter().map(|nu| self.center(nu)).collect::<Result<Vec<_>>>()?;
        let min_gap = 3.0 * self.ball_radius();
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let d = dist(&centers[i], &centers[j]);
                if d <= min_gap {
                    return Err(Error::Configuration(format!(
                        "balls of radius 1.5·rho·lambda^(1/n) = {} around centres {i} and {j} overlap (distance {d}); reduce rho or c0",
                        1.5 * self.ball_radius()
                    )));
                }
            }
        }
        Ok(centers)
    }

    pub fn support_balls(&self) -> Result<Vec<Ball>> {
        let r = self.ball_radius();
        Ok(self.frequency_centers()?.into_iter().map(|center| Ball { center, radius: r }).collect())
    }

    /// `c_{t,ν} = χ(θ(ξ^ν)) λ^{1/n} / (t u_n(ξ^ν))^{1/n}`.
    pub fn reference_constant(&self, nu: i64, t: f64) -> Result<f64> {
        let center = self.center(nu)?;
        let p = self.chart.cone_point(&center)?;
        let n = self.dimension() as f64;
        Ok(self.cutoff.eval(p.theta) * self.root() / (t * p.u_n.abs()).powf(1.0 / n))
    }
}

fn piece_with<F>(spec: &CounterexampleSpec, grid: &GridSpec, nu: i64, coeff: F) -> Result<SpectralField>
where
    F: Fn(&[f64], f64) -> Result<Complex64> + Sync,
{
    if grid.dimension() != spec.dimension() {
        return Err(Error::Grid(format!("grid has dimension {}, curve {}", grid.dimension(), spec.dimension())));
    }
    let ball = Ball { center: spec.center(nu)?, radius: spec.ball_radius() };
    let points = grid.ball_points(&ball)?;
    let entries = points
        .par_iter()
        .map(|(idx, xi)| {
            let eta = radial_bump(BumpKind::Inner, dist(xi, &ball.center) / ball.radius);
            Ok((*idx, coeff(xi, eta)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let entries = entries.into_iter().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect();
    SpectralField::new(grid.clone(), entries, vec![ball])
}

/// `f̂_ν(ξ) = λ^{1/n} e^{iφ(ξ)} η((ξ - ξ^ν)/(ρλ^{1/n}))` on the lattice.
pub fn build_piece(spec: &CounterexampleSpec, grid: &GridSpec, nu: i64) -> Result<SpectralField> {
    let amp = spec.root();
    piece_with(spec, grid, nu, |xi, eta| {
        if eta == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let phi = spec.chart.phase_phi(xi)?;
        Ok(Complex64::from_polar(amp * eta, phi))
    })
}

/// `ĝ_ν(ξ) = η((ξ - ξ^ν)/(ρλ^{1/n}))` on the lattice.
pub fn build_bump(spec: &CounterexampleSpec, grid: &GridSpec, nu: i64) -> Result<SpectralField> {
    piece_with(spec, grid, nu, |_, eta| Ok(Complex64::new(eta, 0.0)))
}

/// Pieces in increasing `ν`.
pub fn build_pieces(spec: &CounterexampleSpec, grid: &GridSpec) -> Result<Vec<SpectralField>> {
    spec.frequency_centers()?;
    spec.nu_range().into_par_iter().map(|nu| build_piece(spec, grid, nu)).collect()
}

pub fn build_f(spec: &CounterexampleSpec, grid: &GridSpec) -> Result<SpectralField> {
    SpectralField::sum(&build_pieces(spec, grid)?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvekit::CurveSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec(n: usize, lambda: f64) -> CounterexampleSpec {
        let chart = ConeChart::new(CurveSpec::moment(n).unwrap());
        CounterexampleSpec::new(lambda, 0.25, 0.25, chart, CutoffSpec::default()).unwrap()
    }

    fn windowed(s: &CounterexampleSpec) -> GridSpec {
        GridSpec::for_counterexample(s, GridPolicy::default(), 2.0).unwrap()
    }

    #[test]
    fn centers_at_4096() {
        let s = spec(3, 4096.0);
        assert_eq!(s.root(), 16.0);
        assert_eq!(s.nu_range(), (-4..=4).collect::<Vec<_>>());
        let c0 = s.center(0).unwrap();
        assert_eq!(c0, vec![0.0, 0.0, 4096.0]);
        // Γ(τ) = (τ²/2, τ, 1) at τ = 1/16
        let c1 = s.center(1).unwrap();
        for (a, b) in c1.iter().zip([8.0, 256.0, 4096.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
        assert_eq!(s.frequency_centers().unwrap().len(), 9);
    }

    #[test]
    fn bump_examples() {
        assert_eq!(radial_bump(BumpKind::Inner, 0.3), 1.0);
        assert_eq!(radial_bump(BumpKind::Inner, 0.5), 1.0);
        assert_eq!(radial_bump(BumpKind::Inner, 1.0), 0.0);
        assert_eq!(radial_bump(BumpKind::Outer, 1.0), 1.0);
        assert_eq!(radial_bump(BumpKind::Outer, 1.6), 0.0);
        assert_relative_eq!(radial_bump(BumpKind::Inner, 0.75), 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn inner_bump_glue_symmetry(x in 0.5f64..1.0) {
            let a = radial_bump(BumpKind::Inner, x);
            let b = radial_bump(BumpKind::Inner, 1.5 - x);
            prop_assert!((a - (1.0 - b)).abs() < 1e-14);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn outer_dominates_inner(x in 0.0f64..2.0) {
            prop_assert!(radial_bump(BumpKind::Outer, x) >= radial_bump(BumpKind::Inner, x));
        }
    }

    #[test]
    fn piece_coefficients_on_a_unit_lattice() {
        // side 4π gives lattice spacing 1/2, so ξ^1 = 64·(1/32, 1/4, 1) = (2, 16, 64) is a lattice point.
        let s = spec(3, 64.0);
        let grid = GridSpec::new(4.0 * PI, vec![16, 128, 16], vec![-4, -32, 120]).unwrap();
        let piece = build_piece(&s, &grid, 1).unwrap();
        let center = s.center(1).unwrap();
        let lattice: Vec<i64> = center.iter().map(|c| (c * 2.0).round() as i64).collect();
        let idx = grid.flat(&lattice).unwrap();
        let pos = piece.indices().iter().position(|&i| i == idx).unwrap();
        let c = piece.coefficients()[pos];
        // φ(λΓ(τ)) = -λτ³/6 at τ = 1/4
        let expect = Complex64::from_polar(4.0, -64.0 / 384.0);
        assert!((c - expect).norm() < 1e-12, "{c} vs {expect}");
        for xi in piece.frequencies() {
            assert!(dist(&xi, &center) < s.ball_radius());
        }
    }

    #[test]
    fn parseval_between_representations() {
        let s = spec(3, 64.0);
        let grid = windowed(&s);
        for nu in s.nu_range() {
            let piece = build_piece(&s, &grid, nu).unwrap();
            assert!(!piece.is_empty());
            let spatial = piece.to_spatial();
            assert!(parseval_defect(&piece, &spatial) < 1e-10);
        }
    }

    #[test]
    fn f_is_orthogonal_sum_in_annulus() {
        let s = spec(3, 128.0);
        let grid = windowed(&s);
        let pieces = build_pieces(&s, &grid).unwrap();
        assert_eq!(pieces.len(), 3);
        let f = SpectralField::sum(&pieces).unwrap();
        let sum: f64 = pieces.iter().map(|p| p.l2_norm_sq()).sum();
        assert_relative_eq!(f.l2_norm_sq(), sum, max_relative = 1e-12);
        let (lo, hi) = f.frequency_radius_range().unwrap();
        assert!(lo >= 64.0 && hi <= 256.0);
        let spatial = f.to_spatial();
        assert!(parseval_defect(&f, &spatial) < 1e-10);
    }

    #[test]
    fn centers_are_separated() {
        for lambda in [32.0, 64.0, 128.0, 256.0, 4096.0] {
            let s = spec(3, lambda);
            let c = s.frequency_centers().unwrap();
            for i in 0..c.len() {
                for j in i + 1..c.len() {
                    assert!(dist(&c[i], &c[j]) > 3.0 * s.ball_radius());
                }
            }
        }
    }

    #[test]
    fn overlapping_balls_are_rejected() {
        // For n = 2 the centres are λ^{1/2} apart, so ρ = 0.9 forces overlap.
        let chart = ConeChart::new(CurveSpec::moment(2).unwrap());
        let s = CounterexampleSpec::new(256.0, 0.9, 0.25, chart, CutoffSpec::default()).unwrap();
        assert!(matches!(s.frequency_centers(), Err(Error::Configuration(_))));
        assert!(CounterexampleSpec::new(256.0, 1.5, 0.25, s.chart().clone(), CutoffSpec::default()).is_err());
    }

    #[test]
    fn piece_errors() {
        let s = spec(3, 64.0);
        let tiny = GridSpec::centered(3, 2.0, 8).unwrap();
        assert!(matches!(build_piece(&s, &tiny, 0), Err(Error::Grid(_))));
        let narrow = ConeChart::new(CurveSpec::moment(3).unwrap()).with_aperture(0.1);
        let s = CounterexampleSpec::new(64.0, 0.25, 0.25, narrow, CutoffSpec::default()).unwrap();
        let grid = GridSpec::centered(3, 48.0, 2048).unwrap();
        assert!(matches!(build_piece(&s, &grid, 1), Err(Error::Aperture(_))));
    }

    #[test]
    fn full_rule_sizes() {
        // Nπ/2 ≥ 1.2·64 + 2·0.25·4 = 78.8 → N = 64
        let g = GridSpec::full_for(3, 2.0, 64.0, 0.25).unwrap();
        assert_eq!(g.dims(), &[64, 64, 64]);
        assert_eq!(g.origin(), &[-32, -32, -32]);
        // n = 4, λ = 256: N = 256, 32·256⁴ bytes
        let g = GridSpec::full_for(4, 2.0, 256.0, 0.25).unwrap();
        assert_eq!(g.memory_bytes(), 32 * 256u128.pow(4));
        assert!(g.memory_bytes() > 8 << 30);
    }

    #[test]
    fn single_mode_and_constant_fields() {
        let grid = GridSpec::centered(2, 2.0, 16).unwrap();
        let f = SpectralField::single_mode(grid.clone(), &[3, -2], Complex64::new(4.0, 0.0)).unwrap();
        let sp = f.to_spatial();
        for flat in [0, 17, 100, 255] {
            let x = grid.sample_point(flat);
            let expect = Complex64::from_polar(1.0, PI * (3.0 * x[0] - 2.0 * x[1]));
            assert!((sp.value(flat) - expect).norm() < 1e-12);
            assert!((f.eval(&x) - expect).norm() < 1e-12);
        }
        let c = SpectralField::constant(grid.clone(), Complex64::new(2.5, 0.0)).unwrap();
        let sp = c.to_spatial();
        assert!((0..c.grid().len()).all(|i| (sp.value(i) - Complex64::new(2.5, 0.0)).norm() < 1e-13));
        assert!(SpectralField::single_mode(grid, &[9, 0], Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn tensor_evaluation_matches_direct_sum() {
        let s = spec(3, 64.0);
        let grid = windowed(&s);
        let f = build_f(&s, &grid).unwrap();
        let axes = vec![vec![-0.3, 0.1], vec![0.0, 0.2, -0.05], vec![0.4]];
        let t = f.eval_tensor(&axes);
        let mut k = 0;
        for &a in &axes[0] {
            for &b in &axes[1] {
                for &c in &axes[2] {
                    assert!((t[k] - f.eval(&[a, b, c])).norm() < 1e-10 * f.eval(&[0.0, 0.0, 0.0]).norm());
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn ball_integral_of_constant() {
        let grid = GridSpec::centered(3, 2.0, 8).unwrap();
        let c = SpectralField::constant(grid, Complex64::new(1.0, 0.0)).unwrap();
        let vol = 4.0 / 3.0 * PI * 0.5f64.powi(3);
        assert_relative_eq!(c.ball_l2_norm_sq(0.5, 96), vol, max_relative = 1e-2);
    }

    #[test]
    fn refinement_keeps_norms() {
        // oversample 2 on λ = 64, then twice the points per axis
        let s = spec(3, 64.0);
        let coarse = GridSpec::for_counterexample(&s, GridPolicy::Windowed { width: 48.0, oversample: 2 }, 2.0).unwrap();
        let fine = coarse.refined();
        let a = build_f(&s, &coarse).unwrap().to_spatial().power_sums(&[2.0, 4.0, 6.0]);
        let b = build_f(&s, &fine).unwrap().to_spatial().power_sums(&[2.0, 4.0, 6.0]);
        for ((x, y), p) in a.iter().zip(&b).zip([2.0, 4.0, 6.0]) {
            let (x, y) = (x.powf(1.0 / p), y.powf(1.0 / p));
            assert!((x - y).abs() / y < 1e-3, "p={p}: {x} vs {y}");
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let grid = GridSpec::new(3.0, vec![4, 8], vec![-2, 5]).unwrap();
        let values: Vec<Complex64> = (0..32).map(|i| Complex64::new(i as f64, -0.5 * i as f64)).collect();
        let field = SpatialField::from_values(grid, values).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &field, 64.0).unwrap();
        assert_eq!(&buf[..4], b"CSLF");
        assert_eq!(buf.len(), 4 + 4 + 4 + 16 + 8 + 8 + 16 + 32 * 16);
        let (back, lambda) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(lambda, 64.0);
        assert_eq!(back, field);
        buf[0] = b'X';
        assert!(read_snapshot(buf.as_slice()).is_err());
    }

    #[test]
    fn reference_constant_for_moment_curve() {
        // u_n(ξ^ν) = λ, θ(ξ^ν) = -ν/λ^{1/3}, so c_{t,ν} = χ(-ν/4)/t^{1/3} at λ = 64
        let s = spec(3, 64.0);
        for nu in [-1, 0, 1] {
            let c = s.reference_constant(nu, 1.5).unwrap();
            let expect = s.cutoff().eval(-(nu as f64) / 4.0) / 1.5f64.cbrt();
            assert_relative_eq!(c, expect, max_relative = 1e-10);
        }
    }
}
