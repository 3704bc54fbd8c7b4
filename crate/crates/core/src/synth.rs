//! Regression targets `f = T^σ g` in eigencoordinates, noisy samples, exact
//! population risks and projections onto H-norm balls.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::rng_from_seed;
use crate::spectrum::{check_point, raw_eigenvalue, untruncated_scale, EigenSpec, FourierBasis};

/// Default noise half-width.
pub const DEFAULT_NOISE: f64 = 0.5;

/// `g_i = i^{-q}` for 1-based `i`, the default source coefficients.
pub fn power_coefficients(len: usize, q: f64) -> Vec<f64> {
    (1..=len).map(|i| (i as f64).powf(-q)).collect()
}

/// A regression function `f = Σ a_i φ_i` with `a_i = λ_i^σ g_i`, plus
/// bounded additive noise.
#[derive(Debug, Clone)]
pub struct RegressionTask {
    spec: Arc<EigenSpec>,
    sigma: f64,
    g: Vec<f64>,
    a: Vec<f64>,
    noise: f64,
}

/// Builds `f = T^σ g` for `0 < σ ≤ 1`, with zero noise.
pub fn make_target(spec: Arc<EigenSpec>, sigma: f64, g: &[f64]) -> Result<RegressionTask> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::param("sigma", format!("smoothness must lie in (0, 1], got {sigma}")));
    }
    RegressionTask::with_exponent(spec, sigma, g)
}

/// `f = Σ g_i φ_i`: the exponent-zero limit of [`make_target`], for diagnostics.
pub fn make_unsmoothed_target(spec: Arc<EigenSpec>, g: &[f64]) -> Result<RegressionTask> {
    RegressionTask::with_exponent(spec, 0.0, g)
}

impl RegressionTask {
    fn with_exponent(spec: Arc<EigenSpec>, sigma: f64, g: &[f64]) -> Result<Self> {
        let n = spec.n_terms();
        if g.len() > n {
            return Err(Error::param(
                "g",
                format!("{} coefficients for a spectrum of {n} terms", g.len()),
            ));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("g", format!("non-finite coefficient {bad}")));
        }
        let mut g = g.to_vec();
        g.resize(n, 0.0);
        let a = spec
            .eigenvalues()
            .iter()
            .zip(&g)
            .map(|(&l, &gi)| if sigma == 0.0 { gi } else { l.powf(sigma) * gi })
            .collect();
        Ok(RegressionTask {
            spec,
            sigma,
            g,
            a,
            noise: 0.0,
        })
    }

    /// Sets the half-width `b` of the uniform noise.
    pub fn with_noise(mut self, b: f64) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::param("b", format!("noise half-width must be ≥ 0, got {b}")));
        }
        self.noise = b;
        Ok(self)
    }

    pub fn spec(&self) -> &EigenSpec {
        &self.spec
    }

    pub fn shared_spec(&self) -> Arc<EigenSpec> {
        Arc::clone(&self.spec)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// L₂ coefficients of the regression function.
    pub fn coefficients(&self) -> &[f64] {
        &self.a
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn g_norm(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `A Σ|a_i|`, an upper bound on `‖f‖_∞`.
    pub fn sup_bound(&self) -> f64 {
        self.spec.basis_bound() * self.a.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Bound on `|Y|`.
    pub fn response_bound(&self) -> f64 {
        self.sup_bound() + self.noise
    }

    /// H-norm of the regression function, when it lies in the truncated H.
    pub fn h_norm(&self) -> f64 {
        self.a
            .iter()
            .zip(self.spec.eigenvalues())
            .map(|(&a, &l)| if a == 0.0 { 0.0 } else { a * a / l })
            .sum::<f64>()
            .sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut phi = vec![0.0; self.a.len()];
        self.eval_with(x, &mut phi)
    }

    fn eval_with(&self, x: f64, phi: &mut [f64]) -> f64 {
        FourierBasis::eval_into(x, phi);
        phi.iter().zip(&self.a).map(|(p, a)| p * a).sum()
    }

    /// `n` uniform design points with uniform noise on `[-b, b]`.
    pub fn draw_sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        if n == 0 {
            return Err(Error::param("n", "sample size must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        let mut phi = vec![0.0; self.a.len()];
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.gen();
            let eps = if self.noise > 0.0 {
                rng.gen_range(-self.noise..=self.noise)
            } else {
                0.0
            };
            xs.push(x);
            ys.push(self.eval_with(x, &mut phi) + eps);
        }
        Ok(SampleSet {
            xs,
            ys,
            seed: Some(seed),
        })
    }

    /// `Σ (c_i - a_i)²`, the excess population risk of `f = Σ c_i φ_i`.
    pub fn population_risk_excess(&self, c: &[f64]) -> Result<f64> {
        if c.len() > self.a.len() {
            return Err(Error::param(
                "c",
                format!("{} coefficients for a spectrum of {} terms", c.len(), self.a.len()),
            ));
        }
        let shared: f64 = c.iter().zip(&self.a).map(|(x, y)| (x - y).powi(2)).sum();
        let rest: f64 = self.a[c.len()..].iter().map(|y| y * y).sum();
        Ok(shared + rest)
    }

    /// Projection of `f` onto the ball of H-radius `r`.
    pub fn best_in_ball(&self, r: f64) -> Result<BallProjection> {
        project_onto_ball(self.spec.eigenvalues(), &self.a, r)
    }

    /// `(A(r - 1), r^{-4σ/(1-2σ)} ‖g‖^{2/(1-2σ)})`; fails if the exact
    /// approximation error exceeds the bound.
    pub fn check_approx_bound(&self, r: f64) -> Result<(f64, f64)> {
        approx_bound_sides(self.spec.eigenvalues(), &self.a, self.g_norm(), self.sigma, r)
    }
}

/// `(A(r - 1), bound)` for any target in eigencoordinates.
pub fn approx_bound_sides(lambdas: &[f64], a: &[f64], g_norm: f64, sigma: f64, r: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::NotApplicable(format!(
            "the approximation bound needs 0 < σ < 1/2, got {sigma}"
        )));
    }
    if !(r >= 1.0) {
        return Err(Error::param("r", format!("radius index must be ≥ 1, got {r}")));
    }
    let exact = project_onto_ball(lambdas, a, r - 1.0)?.excess;
    let bound = r.powf(-4.0 * sigma / (1.0 - 2.0 * sigma)) * g_norm.powf(2.0 / (1.0 - 2.0 * sigma));
    if exact > bound * (1.0 + 1e-12) {
        return Err(Error::BoundViolated {
            what: "approximation error",
            lhs: exact,
            rhs: bound,
        });
    }
    Ok((exact, bound))
}

/// Minimizer of `Σ(√λ_i t_i - a_i)²` over `‖t‖ ≤ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallProjection {
    /// Coordinates in the H-orthonormal basis `√λ_i φ_i`.
    pub t: Vec<f64>,
    /// Lagrange multiplier; zero when the unconstrained solution is interior.
    pub eta: f64,
    /// Attained `‖f_t - f‖²_{L₂}`.
    pub excess: f64,
}

impl BallProjection {
    pub fn norm(&self) -> f64 {
        self.t.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn shrunk_norm_sq(lambdas: &[f64], a: &[f64], eta: f64) -> f64 {
    lambdas
        .iter()
        .zip(a)
        .map(|(&l, &ai)| {
            let t = l.sqrt() * ai / (l + eta);
            t * t
        })
        .sum()
}

/// Projects `f = Σ a_i φ_i` onto `r B_H` by bisection on the multiplier.
pub fn project_onto_ball(lambdas: &[f64], a: &[f64], r: f64) -> Result<BallProjection> {
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("radius must be ≥ 0, got {r}")));
    }
    if lambdas.len() != a.len() {
        return Err(Error::Precondition("spectrum and coefficient lengths differ".into()));
    }
    let total: f64 = a.iter().map(|v| v * v).sum();
    let zero = || BallProjection {
        t: vec![0.0; a.len()],
        eta: f64::INFINITY,
        excess: total,
    };
    if r == 0.0 || total == 0.0 {
        return Ok(if total == 0.0 {
            BallProjection { t: vec![0.0; a.len()], eta: 0.0, excess: 0.0 }
        } else {
            zero()
        });
    }
    // coefficients on zero eigenvalues cannot be reached from H
    let unreachable: f64 = lambdas.iter().zip(a).filter(|(l, _)| **l == 0.0).map(|(_, v)| v * v).sum();
    let interior: f64 = lambdas
        .iter()
        .zip(a)
        .filter(|(l, _)| **l > 0.0)
        .map(|(l, v)| v * v / l)
        .sum();
    let r2 = r * r;
    let eta = if interior <= r2 {
        0.0
    } else {
        let weighted: f64 = lambdas.iter().zip(a).map(|(l, v)| l * v * v).sum::<f64>().sqrt();
        let mut hi = weighted / r;
        let mut lo = hi;
        let mut steps = 0;
        while shrunk_norm_sq(lambdas, a, lo) <= r2 {
            lo *= 1e-3;
            steps += 1;
            if lo < 1e-300 || steps > 200 {
                return Err(Error::RootFind {
                    lo,
                    hi,
                    f_lo: shrunk_norm_sq(lambdas, a, lo).sqrt() - r,
                    f_hi: shrunk_norm_sq(lambdas, a, hi).sqrt() - r,
                    iterations: steps,
                });
            }
        }
        let mut iterations = 0;
        while hi / lo - 1.0 > 1e-13 {
            let mid = (lo * hi).sqrt();
            if shrunk_norm_sq(lambdas, a, mid) > r2 {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
            if iterations > 500 {
                return Err(Error::RootFind {
                    lo,
                    hi,
                    f_lo: shrunk_norm_sq(lambdas, a, lo).sqrt() - r,
                    f_hi: shrunk_norm_sq(lambdas, a, hi).sqrt() - r,
                    iterations,
                });
            }
        }
        hi
    };
    let t: Vec<f64> = lambdas
        .iter()
        .zip(a)
        .map(|(&l, &v)| if l + eta > 0.0 { l.sqrt() * v / (l + eta) } else { 0.0 })
        .collect();
    let excess = lambdas
        .iter()
        .zip(a)
        .filter(|(l, _)| **l > 0.0)
        .map(|(&l, &v)| (eta / (l + eta) * v).powi(2))
        .sum::<f64>()
        + unreachable;
    Ok(BallProjection { t, eta, excess })
}

/// A target supported on a sparse, geometrically spaced set of frequencies
/// of the untruncated power-law kernel.
///
/// Each retained frequency carries the `g`-mass of the octave slice it stands
/// for, so the target reaches eigenvalues far below what a dense truncation
/// can hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseTarget {
    pub frequencies: Vec<u64>,
    pub eigenvalues: Vec<f64>,
    pub g: Vec<f64>,
    pub a: Vec<f64>,
    pub sigma: f64,
}

impl SparseTarget {
    /// Frequencies `⌊2^{j/per_octave}⌋` up to `2^{octaves}` (deduplicated),
    /// with `g_k² ∝ Δk · k^{-1}` so the `g`-mass per octave is constant and
    /// the total `‖g‖²` equals `octaves`.
    pub fn geometric(p: f64, sigma: f64, octaves: u32, per_octave: u32) -> Result<Self> {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::param("sigma", format!("smoothness must lie in (0, 1], got {sigma}")));
        }
        if octaves == 0 || octaves > 60 || per_octave == 0 {
            return Err(Error::param("octaves", "need 1 ≤ octaves ≤ 60 and per_octave ≥ 1"));
        }
        let scale = untruncated_scale(p)?;
        let mut frequencies: Vec<u64> = (0..=octaves * per_octave)
            .map(|j| 2f64.powf(j as f64 / per_octave as f64).floor() as u64)
            .collect();
        frequencies.dedup();
        let count = frequencies.len();
        let mut g = Vec::with_capacity(count);
        for (j, &k) in frequencies.iter().enumerate() {
            let next = frequencies.get(j + 1).copied().unwrap_or(2 * k);
            let width = (next - k) as f64;
            g.push((width / k as f64).sqrt());
        }
        let mass: f64 = g.iter().map(|v| v * v).sum();
        let norm = (octaves as f64 / mass).sqrt();
        for v in &mut g {
            *v *= norm;
        }
        let eigenvalues: Vec<f64> = frequencies.iter().map(|&k| scale * raw_eigenvalue(p, k)).collect();
        let a = eigenvalues.iter().zip(&g).map(|(l, v)| l.powf(sigma) * v).collect();
        Ok(SparseTarget {
            frequencies,
            eigenvalues,
            g,
            a,
            sigma,
        })
    }

    pub fn g_norm(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn best_in_ball(&self, r: f64) -> Result<BallProjection> {
        project_onto_ball(&self.eigenvalues, &self.a, r)
    }

    pub fn check_approx_bound(&self, r: f64) -> Result<(f64, f64)> {
        approx_bound_sides(&self.eigenvalues, &self.a, self.g_norm(), self.sigma, r)
    }
}

/// Design points and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Seed the sample was drawn with; absent for imported data.
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    x: String,
    y: String,
}

impl SampleSet {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::param("ys", format!("{} responses for {} points", ys.len(), xs.len())));
        }
        for &x in &xs {
            check_point("x", x)?;
        }
        if let Some(y) = ys.iter().find(|y| !y.is_finite()) {
            return Err(Error::param("ys", format!("non-finite response {y}")));
        }
        Ok(SampleSet { xs, ys, seed: None })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Writes `x,y` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for (x, y) in self.xs.iter().zip(&self.ys) {
            w.serialize(SampleRow {
                x: format!("{x:.16e}"),
                y: format!("{y:.16e}"),
            })?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y"] {
            return Err(Error::Malformed(format!("expected header `x,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for row in r.deserialize::<SampleRow>() {
            let row = row?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Malformed(format!("bad number `{s}`: {e}")));
            xs.push(parse(&row.x)?);
            ys.push(parse(&row.y)?);
        }
        SampleSet::new(xs, ys)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
