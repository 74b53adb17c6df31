//! Unnormalized N-dimensional complex FFT on row-major arrays (last axis fastest).
//!
//! Every line is transformed independently, so results do not depend on the
//! number of worker threads.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `X_k = Σ x_j e^{-2πi jk/N}`
    Forward,
    /// `x_j = Σ X_k e^{+2πi jk/N}`, no `1/N`
    Inverse,
}

impl From<Direction> for FftDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        }
    }
}

const LINES_PER_TASK: usize = 64;

pub fn fft_nd(data: &mut [Complex64], dims: &[usize], direction: Direction) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total, "buffer length does not match dims {dims:?}");
    if total == 0 {
        return;
    }
    let mut planner = FftPlanner::new();
    let mut scratch: Vec<Complex64> = Vec::new();
    for axis in 0..dims.len() {
        let len = dims[axis];
        if len == 1 {
            continue;
        }
        let fft = planner.plan_fft(len, direction.into());
        let stride: usize = dims[axis + 1..].iter().product();
        if stride == 1 {
            transform_lines(data, len, &fft);
            continue;
        }
        if scratch.len() != total {
            scratch = vec![Complex64::new(0.0, 0.0); total];
        }
        // gather: line (o, j) becomes contiguous
        {
            let src: &[Complex64] = data;
            scratch.par_chunks_mut(len).enumerate().for_each(|(line, buf)| {
                let (o, j) = (line / stride, line % stride);
                let base = o * len * stride + j;
                for (i, v) in buf.iter_mut().enumerate() {
                    *v = src[base + i * stride];
                }
            });
        }
        transform_lines(&mut scratch, len, &fft);
        {
            let src: &[Complex64] = &scratch;
            data.par_chunks_mut(stride).enumerate().for_each(|(row, out)| {
                let (o, i) = (row / len, row % len);
                for (j, v) in out.iter_mut().enumerate() {
                    *v = src[(o * stride + j) * len + i];
                }
            });
        }
    }
}

fn transform_lines(buf: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    buf.par_chunks_mut(len * LINES_PER_TASK).for_each(|chunk| {
        let mut work = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut work);
    });
}
