//! Evaluation of finite Fourier-basis expansions `f = Σ c_i φ_i` on uniform
//! grids (via FFT) and sup-norm estimation with local refinement.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::spectrum::FourierBasis;

/// Grid used for sup-norm estimation of fitted functions.
pub const SUP_GRID: usize = 20_000;

pub fn eval_series(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = coeffs.first().copied().unwrap_or(0.0);
    let mut i = 1;
    let mut k = 1.0;
    while i < coeffs.len() {
        let (s, c) = (2.0 * std::f64::consts::PI * k * x).sin_cos();
        acc += std::f64::consts::SQRT_2 * coeffs[i] * c;
        if i + 1 < coeffs.len() {
            acc += std::f64::consts::SQRT_2 * coeffs[i + 1] * s;
        }
        i += 2;
        k += 1.0;
    }
    acc
}

/// Evaluates expansions on the grid `j / L`, `j = 0..L`.
pub struct GridEvaluator {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl GridEvaluator {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_inverse(len);
        GridEvaluator { len, fft }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Values of `Σ c_i φ_i` on the grid. Frequencies at or above `L / 2`
    /// alias, so `coeffs` must stay below that.
    pub fn eval(&self, coeffs: &[f64]) -> Vec<f64> {
        assert!(
            FourierBasis::frequency(coeffs.len()) * 2 < self.len,
            "grid of {} points cannot resolve {} terms",
            self.len,
            coeffs.len()
        );
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        if let Some(&c0) = coeffs.first() {
            buf[0] = Complex64::new(c0, 0.0);
        }
        let r2 = std::f64::consts::SQRT_2;
        let mut i = 1;
        while i < coeffs.len() {
            let k = FourierBasis::frequency(i);
            let a = coeffs[i];
            let b = coeffs.get(i + 1).copied().unwrap_or(0.0);
            buf[k] = Complex64::new(r2 * a, -r2 * b);
            i += 2;
        }
        self.fft.process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// `sup_x |f(x)|`: grid maximum refined by golden-section search around
    /// the best grid point.
    pub fn sup_norm(&self, coeffs: &[f64]) -> f64 {
        if coeffs.iter().all(|&c| c == 0.0) {
            return 0.0;
        }
        let values = self.eval(coeffs);
        let (best, &peak) = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty grid");
        let h = 1.0 / self.len as f64;
        let centre = best as f64 * h;
        let refined = golden_max(|x| eval_series(coeffs, x).abs(), centre - h, centre + h, 80);
        peak.abs().max(refined)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values_match_direct_sum() {
        let coeffs = [0.3, -0.2, 0.5, 0.0, 0.1, 0.05, -0.07];
        let ev = GridEvaluator::new(64);
        let vals = ev.eval(&coeffs);
        for (j, v) in vals.iter().enumerate() {
            let direct = eval_series(&coeffs, j as f64 / 64.0);
            assert!((v - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn sup_norm_of_single_cosine() {
        let ev = GridEvaluator::new(1000);
        // √2·0.4·cos(2π·3x) peaks at √2·0.4
        let coeffs = [0.0, 0.0, 0.0, 0.0, 0.0, 0.4];
        let sup = ev.sup_norm(&coeffs);
        assert!((sup - 0.4 * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(ev.sup_norm(&[0.0, 0.0]), 0.0);
    }
}
