//! Unnormalized forward / 1/N-scaled inverse 2-D FFT over row-major grids.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) struct Fft2 {
    w: usize,
    h: usize,
    row_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    row_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    col_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(w: usize, h: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            w,
            h,
            row_fwd: p.plan_fft_forward(w),
            row_inv: p.plan_fft_inverse(w),
            col_fwd: p.plan_fft_forward(h),
            col_inv: p.plan_fft_inverse(h),
        }
    }

    pub(crate) fn run(&self, data: &mut [Complex64], inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for r in data.chunks_mut(self.w) {
            row.process(r);
        }
        let mut column = vec![Complex64::default(); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                column[y] = data[y * self.w + x];
            }
            col.process(&mut column);
            for y in 0..self.h {
                data[y * self.w + x] = column[y];
            }
        }
        if inverse {
            let s = 1.0 / (self.w * self.h) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub(crate) fn forward_real(&self, src: &[f64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run(&mut d, false);
        d
    }
}
