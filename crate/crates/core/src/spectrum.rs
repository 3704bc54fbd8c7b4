//! Mercer kernels on `[0, 1]` (uniform measure) with a prescribed power-law
//! spectrum, built on the real Fourier basis.
//!
//! Eigenfunction `i` (0-based) is the constant for `i = 0`, and for `i ≥ 1`
//! belongs to frequency `k = (i + 1) / 2`: odd indices carry `√2·cos(2πkx)`,
//! even indices `√2·sin(2πkx)`. Both members of a frequency pair share one
//! eigenvalue, so a spectrum with complete pairs gives a translation-invariant
//! kernel with constant diagonal.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation: the constant plus 100 frequency pairs.
pub const DEFAULT_TERMS: usize = 201;

/// Points used when maximizing the kernel diagonal.
pub const NORMALIZATION_GRID: usize = 10_000;

/// Multiplicative head-room applied on top of the grid maximum of `K(x, x)`.
pub const NORMALIZATION_MARGIN: f64 = 1.1;

const SPEC_FORMAT: &str = "kernreg.eigenspec/1";

/// The real trigonometric basis on `[0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FourierBasis;

impl FourierBasis {
    /// Frequency carried by basis index `i`.
    pub fn frequency(i: usize) -> usize {
        (i + 1) / 2
    }

    pub fn eval(i: usize, x: f64) -> f64 {
        if i == 0 {
            return 1.0;
        }
        let arg = 2.0 * PI * Self::frequency(i) as f64 * x;
        if i % 2 == 1 {
            SQRT_2 * arg.cos()
        } else {
            SQRT_2 * arg.sin()
        }
    }

    /// Writes `φ_0(x), …, φ_{m-1}(x)` into `out` (`m = out.len()`).
    pub fn eval_into(x: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        let mut i = 1;
        let mut k = 1.0;
        while i < out.len() {
            let (s, c) = (2.0 * PI * k * x).sin_cos();
            out[i] = SQRT_2 * c;
            if i + 1 < out.len() {
                out[i + 1] = SQRT_2 * s;
            }
            i += 2;
            k += 1.0;
        }
    }

    /// `sup_x |φ_i(x)|`.
    pub fn sup_norm(i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            SQRT_2
        }
    }
}

/// `sup_i i^{1/p} λ_i` over a nonincreasing, nonnegative sequence (1-based `i`).
///
/// Exponents in `(0, 1]` are accepted; `p = 1` is a diagnostic setting.
pub fn weak_lp_norm(lambdas: &[f64], p: f64) -> Result<f64> {
    check_exponent(p)?;
    check_spectrum(lambdas)?;
    let inv_p = 1.0 / p;
    Ok(lambdas
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0)
        .map(|(i, &l)| ((i + 1) as f64).powf(inv_p) * l)
        .fold(0.0, f64::max))
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("p", format!("decay exponent must lie in (0, 1], got {p}")))
    }
}

pub(crate) fn check_spectrum(lambdas: &[f64]) -> Result<()> {
    for (i, &l) in lambdas.iter().enumerate() {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::Precondition(format!(
                "eigenvalue {i} is {l}, expected a finite nonnegative value"
            )));
        }
        if i > 0 && l > lambdas[i - 1] {
            return Err(Error::Precondition(format!(
                "eigenvalues must be nonincreasing: λ[{}] = {} < λ[{i}] = {l}",
                i - 1,
                lambdas[i - 1]
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_point(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::param(name, format!("point {x} lies outside [0, 1]")))
    }
}

/// Suffix sums of a nonincreasing spectrum, giving `Σ min{x, r²λ_i}` in
/// logarithmic time.
#[derive(Debug, Clone, Default)]
pub struct SpectrumSums {
    suffix: Vec<f64>,
}

impl SpectrumSums {
    fn new(lambdas: &[f64]) -> Self {
        let mut suffix = vec![0.0; lambdas.len() + 1];
        for i in (0..lambdas.len()).rev() {
            suffix[i] = suffix[i + 1] + lambdas[i];
        }
        SpectrumSums { suffix }
    }

    fn total(&self) -> f64 {
        self.suffix[0]
    }

    fn sum_min(&self, lambdas: &[f64], x: f64, r: f64) -> f64 {
        let r2 = r * r;
        if x <= 0.0 || r2 <= 0.0 {
            return 0.0;
        }
        let k = lambdas.partition_point(|&l| r2 * l > x);
        x * k as f64 + r2 * self.suffix[k]
    }
}

/// A truncated Mercer spectrum paired with the Fourier basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecDocument", into = "SpecDocument")]
pub struct EigenSpec {
    p: f64,
    scale: f64,
    basis_bound: f64,
    weak_norm: f64,
    eigenvalues: Vec<f64>,
    sums: SpectrumSums,
}

/// On-disk form of an [`EigenSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecDocument {
    pub format: String,
    pub p: f64,
    pub n_terms: usize,
    pub scale: f64,
    pub basis_bound: f64,
    pub weak_norm: f64,
    pub eigenvalues: Vec<f64>,
}

impl From<EigenSpec> for SpecDocument {
    fn from(spec: EigenSpec) -> Self {
        SpecDocument {
            format: SPEC_FORMAT.to_string(),
            p: spec.p,
            n_terms: spec.eigenvalues.len(),
            scale: spec.scale,
            basis_bound: spec.basis_bound,
            weak_norm: spec.weak_norm,
            eigenvalues: spec.eigenvalues,
        }
    }
}

impl TryFrom<SpecDocument> for EigenSpec {
    type Error = Error;

    fn try_from(doc: SpecDocument) -> Result<Self> {
        if doc.format != SPEC_FORMAT {
            return Err(Error::Malformed(format!(
                "unknown spectrum format `{}`",
                doc.format
            )));
        }
        if doc.n_terms != doc.eigenvalues.len() {
            return Err(Error::Malformed(format!(
                "n_terms = {} but {} eigenvalues listed",
                doc.n_terms,
                doc.eigenvalues.len()
            )));
        }
        let spec = EigenSpec::from_parts(doc.p, doc.eigenvalues, doc.scale, doc.basis_bound)?;
        let rel = (spec.weak_norm - doc.weak_norm).abs() / spec.weak_norm.max(f64::MIN_POSITIVE);
        if rel > 1e-12 {
            return Err(Error::Malformed(format!(
                "stored weak norm {} disagrees with recomputed {}",
                doc.weak_norm, spec.weak_norm
            )));
        }
        Ok(spec)
    }
}

impl EigenSpec {
    /// Power-law spectrum `λ ∝ (k + 1)^{-1/p}` per frequency `k`, scaled so
    /// that the grid maximum of `K(x, x)` is `1 / 1.1`.
    pub fn build(p: f64, n_terms: usize, basis_bound: f64) -> Result<Self> {
        check_exponent(p)?;
        if n_terms == 0 {
            return Err(Error::param("n_terms", "truncation must be at least 1"));
        }
        let raw: Vec<f64> = (0..n_terms)
            .map(|i| raw_eigenvalue(p, FourierBasis::frequency(i) as u64))
            .collect();
        let peak = diagonal_grid_max(&raw, NORMALIZATION_GRID);
        let scale = 1.0 / (NORMALIZATION_MARGIN * peak);
        let eigenvalues = raw.into_iter().map(|l| l * scale).collect();
        Self::from_parts(p, eigenvalues, scale, basis_bound)
    }

    /// A spectrum given explicitly. The kernel-diagonal bound is not enforced,
    /// which makes this suitable for diagnostics on hand-written sequences.
    pub fn with_eigenvalues(p: f64, eigenvalues: Vec<f64>, basis_bound: f64) -> Result<Self> {
        Self::from_parts(p, eigenvalues, 1.0, basis_bound)
    }

    fn from_parts(p: f64, eigenvalues: Vec<f64>, scale: f64, basis_bound: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::param("eigenvalues", "spectrum is empty"));
        }
        let weak_norm = weak_lp_norm(&eigenvalues, p)?;
        let needed = if eigenvalues.len() > 1 { SQRT_2 } else { 1.0 };
        if !(basis_bound >= needed) {
            return Err(Error::param(
                "basis_bound",
                format!("{basis_bound} is below the basis sup-norm {needed}"),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::param("scale", format!("{scale} is not positive")));
        }
        let sums = SpectrumSums::new(&eigenvalues);
        Ok(EigenSpec {
            p,
            scale,
            basis_bound,
            weak_norm,
            eigenvalues,
            sums,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_terms(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn basis_bound(&self) -> f64 {
        self.basis_bound
    }

    /// The stored weak-`ℓ_p` norm `Λ`.
    pub fn weak_norm(&self) -> f64 {
        self.weak_norm
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `p = 1` specs are for diagnostics only; rate predictions are suppressed.
    pub fn is_diagnostic(&self) -> bool {
        self.p >= 1.0
    }

    pub fn trace(&self) -> f64 {
        self.sums.total()
    }

    /// `Σ_i min{x, r²λ_i}` over the stored truncation.
    pub fn sum_min(&self, x: f64, r: f64) -> f64 {
        self.sums.sum_min(&self.eigenvalues, x, r)
    }

    /// Mass of the power-law continuation beyond the truncation,
    /// `Σ_{i > N} λ_i`, assuming the spectrum was produced by [`EigenSpec::build`].
    pub fn tail_mass(&self) -> f64 {
        let a = 1.0 / self.p;
        if a <= 1.0 {
            return f64::INFINITY;
        }
        let n = self.eigenvalues.len();
        // next index n: frequency (n+1)/2, raw value (freq+1)^{-a}
        let next_freq = FourierBasis::frequency(n);
        let mut tail = 0.0;
        let mut first_full = next_freq;
        if n % 2 == 0 {
            // index n is the sine partner of the last cosine
            tail += ((next_freq + 1) as f64).powf(-a);
            first_full = next_freq + 1;
        }
        tail += 2.0 * hurwitz_tail(first_full + 1, a);
        self.scale * tail
    }

    fn check_x(&self, x: f64) -> Result<()> {
        check_point("x", x)
    }

    /// `K(x, y) = Σ_i λ_i φ_i(x) φ_i(y)`.
    pub fn kernel_eval(&self, x: f64, y: f64) -> Result<f64> {
        self.check_x(x)?;
        check_point("y", y)?;
        Ok(self.kernel_unchecked(x, y))
    }

    pub(crate) fn kernel_unchecked(&self, x: f64, y: f64) -> f64 {
        let lam = &self.eigenvalues;
        let mut acc = lam[0];
        let mut i = 1;
        let mut k = 1.0;
        while i < lam.len() {
            let (sx, cx) = (2.0 * PI * k * x).sin_cos();
            let (sy, cy) = (2.0 * PI * k * y).sin_cos();
            acc += 2.0 * lam[i] * cx * cy;
            if i + 1 < lam.len() {
                acc += 2.0 * lam[i + 1] * sx * sy;
            }
            i += 2;
            k += 1.0;
        }
        acc
    }

    /// `Φ(x) = (√λ_i φ_i(x))_i`.
    pub fn feature_vector(&self, x: f64) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut out = vec![0.0; self.n_terms()];
        self.feature_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn feature_into(&self, x: f64, out: &mut [f64]) {
        FourierBasis::eval_into(x, out);
        for (o, l) in out.iter_mut().zip(&self.eigenvalues) {
            *o *= l.sqrt();
        }
    }

    /// Row `i` is `Φ(x_i)`.
    pub fn feature_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        for &x in xs {
            self.check_x(x)?;
        }
        let m = self.n_terms();
        let mut phi = DMatrix::zeros(xs.len(), m);
        let mut row = vec![0.0; m];
        for (i, &x) in xs.iter().enumerate() {
            self.feature_into(x, &mut row);
            for (j, v) in row.iter().enumerate() {
                phi[(i, j)] = *v;
            }
        }
        Ok(phi)
    }

    pub fn gram_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        for &x in xs {
            self.check_x(x)?;
        }
        let n = xs.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.kernel_unchecked(xs[i], xs[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Maximum of `K(x, x)` over `points` equispaced grid points in `[0, 1]`.
    pub fn diagonal_grid_max(&self, points: usize) -> f64 {
        diagonal_grid_max(&self.eigenvalues, points)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Grid maximum of `Σ λ_i φ_i(x)²`. A complete frequency pair with a shared
/// eigenvalue contributes the constant `2λ_k`; everything else is evaluated
/// pointwise on the grid.
fn diagonal_grid_max(lambdas: &[f64], points: usize) -> f64 {
    let n = lambdas.len();
    let mut base = lambdas[0];
    let mut varying = Vec::new();
    let mut i = 1;
    while i < n {
        if i + 1 < n && lambdas[i] == lambdas[i + 1] {
            base += 2.0 * lambdas[i];
        } else {
            varying.push(i);
            if i + 1 < n {
                varying.push(i + 1);
            }
        }
        i += 2;
    }
    if varying.is_empty() {
        return base;
    }
    let points = points.max(2);
    let denom = (points - 1) as f64;
    (0..points)
        .map(|j| {
            let x = j as f64 / denom;
            base + varying
                .iter()
                .map(|&i| {
                    let f = FourierBasis::eval(i, x);
                    lambdas[i] * f * f
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Σ_{m ≥ start} m^{-a}` for `a > 1` via Euler–Maclaurin.
/// Normalization of the untruncated power-law spectrum: the scale `s` with
/// `s · max_x K(x, x) = 1 / 1.1` when every frequency is kept.
pub fn untruncated_scale(p: f64) -> Result<f64> {
    check_exponent(p)?;
    let a = 1.0 / p;
    if a <= 1.0 {
        return Err(Error::param("p", "the untruncated diagonal diverges for p = 1"));
    }
    Ok(1.0 / (NORMALIZATION_MARGIN * (1.0 + 2.0 * hurwitz_tail(2, a))))
}

/// Raw power-law eigenvalue `(k + 1)^{-1/p}` shared by frequency `k`.
pub fn raw_eigenvalue(p: f64, frequency: u64) -> f64 {
    ((frequency + 1) as f64).powf(-1.0 / p)
}

/// The untruncated spectrum `λ_i = i^{-1/p}`, `i ≥ 1`, whose weak-ℓ_p norm
/// is exactly one. Sums over it add the analytic tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    p: f64,
}

impl PowerLaw {
    pub fn new(p: f64) -> Result<Self> {
        check_exponent(p)?;
        if p >= 1.0 {
            return Err(Error::param("p", "the untruncated spectrum is not summable for p = 1"));
        }
        Ok(PowerLaw { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weak_norm(&self) -> f64 {
        1.0
    }

    pub fn eigenvalue(&self, i: u64) -> f64 {
        (i as f64).powf(-1.0 / self.p)
    }

    pub fn trace(&self) -> f64 {
        hurwitz_tail(1, 1.0 / self.p)
    }

    /// Number of indices with `r²λ_i > x`.
    fn count_above(&self, x: f64, r2: f64) -> u64 {
        let mut k = (r2 / x).powf(self.p).floor() as u64;
        while r2 * self.eigenvalue(k + 1) > x {
            k += 1;
        }
        while k > 0 && r2 * self.eigenvalue(k) <= x {
            k -= 1;
        }
        k
    }

    /// `Σ_{i ≥ 1} min{x, r²λ_i}`.
    pub fn sum_min(&self, x: f64, r: f64) -> f64 {
        let r2 = r * r;
        if x <= 0.0 || r2 <= 0.0 {
            return 0.0;
        }
        let k = self.count_above(x, r2);
        x * k as f64 + r2 * hurwitz_tail(k as usize + 1, 1.0 / self.p)
    }
}

fn hurwitz_tail(start: usize, a: f64) -> f64 {
    // sum a few terms exactly, then use the asymptotic expansion
    let exact_terms = 32;
    let mut acc = 0.0;
    for m in start..start + exact_terms {
        acc += (m as f64).powf(-a);
    }
    let m = (start + exact_terms) as f64;
    acc + m.powf(1.0 - a) / (a - 1.0) + 0.5 * m.powf(-a) + a / 12.0 * m.powf(-a - 1.0)
        - a * (a + 1.0) * (a + 2.0) / 720.0 * m.powf(-a - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_diag_max(spec: &EigenSpec, points: usize) -> f64 {
        let mut phi = vec![0.0; spec.n_terms()];
        (0..points)
            .map(|j| {
                let x = j as f64 / (points - 1) as f64;
                FourierBasis::eval_into(x, &mut phi);
                spec.eigenvalues()
                    .iter()
                    .zip(&phi)
                    .map(|(l, f)| l * f * f)
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn weak_norm_examples() {
        for &p in &[0.25, 0.5, 0.9] {
            let lam: Vec<f64> = (1..=50).map(|i| (i as f64).powf(-1.0 / p)).collect();
            assert!((weak_lp_norm(&lam, p).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(weak_lp_norm(&[1.0, 0.0, 0.0], 0.5).unwrap(), 1.0);
        let lam: Vec<f64> = (1..=40).map(|i| 2.0 / (i * i) as f64).collect();
        assert!((weak_lp_norm(&lam, 0.5).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weak_norm_rejects_non_monotone() {
        assert!(matches!(
            weak_lp_norm(&[1.0, 2.0], 0.5),
            Err(Error::Precondition(_))
        ));
        assert!(weak_lp_norm(&[1.0], 1.5).is_err());
    }

    #[test]
    fn single_term_spec_is_constant_kernel() {
        let spec = EigenSpec::build(0.5, 1, 1.0).unwrap();
        let s = spec.scale();
        assert!(s <= 1.0);
        assert_eq!(spec.eigenvalues(), &[s]);
        for &(x, y) in &[(0.0, 0.3), (0.7, 0.1), (1.0, 1.0)] {
            assert!((spec.kernel_eval(x, y).unwrap() - s).abs() < 1e-15);
        }
        assert_eq!(spec.feature_vector(0.4).unwrap(), vec![s.sqrt()]);
        let g = spec.gram_matrix(&[0.1, 0.5, 0.9]).unwrap();
        assert!(g.iter().all(|&v| (v - s).abs() < 1e-15));
        assert_eq!(g.rank(1e-12), 1);
    }

    #[test]
    fn normalization_holds_on_grid() {
        for &(p, n) in &[(0.5, 201), (0.5, 200), (1.0 / 3.0, 51), (0.9, 8), (1.0, 31)] {
            let spec = EigenSpec::build(p, n, SQRT_2).unwrap();
            let fast = spec.diagonal_grid_max(NORMALIZATION_GRID);
            let brute = brute_diag_max(&spec, NORMALIZATION_GRID);
            assert!((fast - brute).abs() < 1e-12, "{fast} vs {brute}");
            assert!(brute <= 1.0 + 1e-12);
            assert!((brute - 1.0 / NORMALIZATION_MARGIN).abs() < 1e-12);
        }
    }

    #[test]
    fn stored_weak_norm_matches_direct_maximization() {
        let spec = EigenSpec::build(0.5, 101, SQRT_2).unwrap();
        let direct = spec
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(i, l)| ((i + 1) as f64).powi(2) * l)
            .fold(0.0, f64::max);
        assert!((spec.weak_norm() - direct).abs() <= 1e-14 * direct);
        // last pair (frequency 50, indices 100 → 1-based 101): (101/51)^2 · s
        let expected = spec.scale() * (101.0f64 / 51.0).powi(2);
        assert!((spec.weak_norm() - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn weak_norm_dominates_every_eigenvalue() {
        let spec = EigenSpec::build(0.4, 301, SQRT_2).unwrap();
        for (i, &l) in spec.eigenvalues().iter().enumerate() {
            let cap = spec.weak_norm() * ((i + 1) as f64).powf(-1.0 / spec.p());
            assert!(l <= cap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn quadrature_orthonormality() {
        let m = 21;
        let grid = 10_000;
        let mut gram = vec![0.0; m * m];
        let mut phi = vec![0.0; m];
        for j in 0..grid {
            // periodic rectangle rule is exact for trigonometric polynomials
            let x = j as f64 / grid as f64;
            FourierBasis::eval_into(x, &mut phi);
            for a in 0..m {
                for b in 0..m {
                    gram[a * m + b] += phi[a] * phi[b] / grid as f64;
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * m + b] - target).abs() < 1e-8);
            }
            assert!(FourierBasis::sup_norm(a) <= SQRT_2);
        }
    }

    #[test]
    fn eval_into_matches_pointwise() {
        let mut phi = vec![0.0; 12];
        FourierBasis::eval_into(0.37, &mut phi);
        for (i, v) in phi.iter().enumerate() {
            assert!((v - FourierBasis::eval(i, 0.37)).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_is_translation_invariant() {
        let spec = EigenSpec::build(0.5, DEFAULT_TERMS, SQRT_2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (x, y, d): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let a = spec.kernel_eval(x, y).unwrap();
            let b = spec.kernel_eval((x + d) % 1.0, (y + d) % 1.0).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_cauchy_schwarz_and_features() {
        let spec = EigenSpec::build(0.5, 41, SQRT_2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (x, y): (f64, f64) = (rng.gen(), rng.gen());
            let kxy = spec.kernel_eval(x, y).unwrap();
            let kxx = spec.kernel_eval(x, x).unwrap();
            let kyy = spec.kernel_eval(y, y).unwrap();
            assert!(kxy * kxy <= kxx * kyy + 1e-14);
            let fx = spec.feature_vector(x).unwrap();
            let fy = spec.feature_vector(y).unwrap();
            let dot: f64 = fx.iter().zip(&fy).map(|(a, b)| a * b).sum();
            assert!((dot - kxy).abs() < 1e-12);
            let sq: f64 = fx.iter().map(|v| v * v).sum();
            assert!((sq - kxx).abs() < 1e-12);
            assert!(sq <= 1.0);
        }
    }

    #[test]
    fn gram_is_psd() {
        let spec = EigenSpec::build(0.5, 7, SQRT_2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..25).map(|_| rng.gen()).collect();
        let g = spec.gram_matrix(&xs).unwrap();
        assert_eq!(g, g.transpose());
        let eig = nalgebra::SymmetricEigen::new(g);
        assert!(eig.eigenvalues.min() >= -1e-10);
        let one = spec.gram_matrix(&[0.2]).unwrap();
        assert!(one[(0, 0)] <= 1.0);
    }

    #[test]
    fn domain_is_checked() {
        let spec = EigenSpec::build(0.5, 5, SQRT_2).unwrap();
        assert!(spec.kernel_eval(-0.1, 0.5).is_err());
        assert!(spec.feature_vector(1.5).is_err());
        assert!(EigenSpec::build(0.0, 5, SQRT_2).is_err());
        assert!(EigenSpec::build(1.2, 5, SQRT_2).is_err());
        assert!(EigenSpec::build(0.5, 0, SQRT_2).is_err());
        assert!(EigenSpec::build(0.5, 5, 1.0).is_err());
    }

    #[test]
    fn power_law_sums_match_long_truncation() {
        let law = PowerLaw::new(0.5).unwrap();
        assert!((law.trace() - PI * PI / 6.0).abs() < 1e-12);
        let direct = |x: f64, r: f64| -> f64 {
            let body: f64 = (1..=2_000_000u64).map(|i| x.min(r * r * law.eigenvalue(i))).sum();
            body + r * r / 2_000_000.5
        };
        for &(x, r) in &[(1.0, 1.0), (1e-3, 1.0), (1e-6, 10.0), (0.3, 0.7)] {
            let d = direct(x, r);
            assert!((law.sum_min(x, r) - d).abs() < 1e-9 * d, "{x} {r}");
        }
        assert_eq!(law.sum_min(0.0, 1.0), 0.0);
        assert!(PowerLaw::new(1.0).is_err());
    }

    #[test]
    fn sum_min_fast_path_matches_direct() {
        let spec = EigenSpec::build(0.5, 301, SQRT_2).unwrap();
        for &(x, r) in &[(0.0f64, 1.0f64), (1e-6, 1.0), (1e-3, 10.0), (0.5, 2.0), (2.0, 0.5), (1e-4, 0.0)] {
            let direct: f64 = spec.eigenvalues().iter().map(|l| x.min(r * r * l)).sum();
            assert!((spec.sum_min(x, r) - direct).abs() <= 1e-12 * direct.max(1e-300));
        }
    }

    #[test]
    fn tail_mass_matches_long_truncation() {
        let short = EigenSpec::build(0.5, 201, SQRT_2).unwrap();
        let long_raw: f64 = (201..400_001)
            .map(|i| ((FourierBasis::frequency(i) + 1) as f64).powi(-2))
            .sum();
        let tail = short.tail_mass() / short.scale();
        // remaining mass past 400k terms is ~1e-5 of the tail
        assert!((tail - long_raw).abs() / tail < 1e-3, "{tail} vs {long_raw}");
        let even = EigenSpec::build(0.5, 200, SQRT_2).unwrap();
        let tail_even = even.tail_mass() / even.scale();
        let expected = long_raw + (FourierBasis::frequency(200) as f64 + 1.0).powi(-2);
        assert!((tail_even - expected).abs() / tail_even < 1e-3);
    }

    #[test]
    fn untruncated_scale_is_the_long_limit() {
        let long = EigenSpec::build(0.5, 40_001, SQRT_2).unwrap();
        let s = untruncated_scale(0.5).unwrap();
        assert!((long.scale() - s).abs() / s < 1e-4);
        assert!(untruncated_scale(1.0).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let spec = EigenSpec::build(0.37, 33, SQRT_2).unwrap();
        let text = spec.to_json().unwrap();
        let back = EigenSpec::from_json(&text).unwrap();
        assert_eq!(back.eigenvalues(), spec.eigenvalues());
        assert_eq!(back.weak_norm(), spec.weak_norm());
        assert_eq!(back.scale(), spec.scale());
        let tampered = text.replace("kernreg.eigenspec/1", "other");
        assert!(EigenSpec::from_json(&tampered).is_err());
    }
}
