//! Ridge frontier and regularized empirical risk minimization.
//!
//! Minimizers of `P_n ℓ_f + R(‖f‖_H)` with `R` nondecreasing lie on the
//! ridge path `η ↦ argmin P_n ℓ_f + η‖f‖²_H`, so the search over radii is a
//! search over `η`. The path starts at the zero function (`η = ∞`).

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, mat_vec, norm, symmetric_eigen, Cholesky};
use crate::regfunc::RegularizerSpec;
use crate::spectrum::{EigenSpec, FourierBasis};
use crate::synth::SampleSet;
use crate::trig::{GridEvaluator, SUP_GRID};

/// Largest and smallest ridge penalties of the default grid.
pub const GRID_TOP: f64 = 1e3;
pub const GRID_BOTTOM: f64 = 1e-9;
pub const GRID_PER_DECADE: usize = 4;
/// Hard limit on the number of frontier points after extension.
pub const GRID_CAP: usize = 10_000;
/// `h` at the largest penalty must fall below this.
pub const TOP_NORM: f64 = 1e-6;
/// Relative loss change that ends the extension at small penalties.
pub const BOTTOM_LOSS_CHANGE: f64 = 1e-6;
/// Bisection steps toward each neighbor when refining the best point.
pub const REFINE_STEPS: usize = 20;

const MONOTONE_SLACK: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-8;
const FIT_FORMAT: &str = "kernreg.fit/1";

/// Log-spaced decreasing grid from `1e3` to `1e-9`, four points per decade.
pub fn default_eta_grid() -> Vec<f64> {
    log_grid(GRID_TOP, GRID_BOTTOM, GRID_PER_DECADE)
}

pub fn log_grid(top: f64, bottom: f64, per_decade: usize) -> Vec<f64> {
    let steps = ((top / bottom).log10() * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|k| top * 10f64.powf(-(k as f64) / per_decade as f64))
        .collect()
}

/// Solution of `(G + nηI) α = y`.
#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub alpha: Vec<f64>,
    /// Diagonal jitter that the factorization needed.
    pub jitter: f64,
    /// Backward error `‖(G + nηI)α - y‖ / (‖G + nηI‖ ‖α‖ + ‖y‖)`.
    pub backward_error: f64,
}

/// `α = (G + nηI)^{-1} y`, minimizing `(1/n)‖y - Gα‖² + η αᵀGα`.
pub fn ridge_solve(gram: &DMatrix<f64>, ys: &[f64], eta: f64) -> Result<RidgeSolution> {
    let n = ys.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::Precondition(format!(
            "Gram matrix is {}×{} for {n} responses",
            gram.nrows(),
            gram.ncols()
        )));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", format!("ridge penalty must be positive, got {eta}")));
    }
    let mut a = gram.clone();
    for i in 0..n {
        a[(i, i)] += n as f64 * eta;
    }
    let chol = Cholesky::new(&a)?;
    let mut alpha = chol.solve(ys);
    let residual = |alpha: &[f64]| -> Vec<f64> {
        mat_vec(&a, alpha).iter().zip(ys).map(|(u, v)| u - v).collect()
    };
    // one refinement step against the unjittered system
    let r = residual(&alpha);
    let dx = chol.solve(&r);
    alpha.iter_mut().zip(&dx).for_each(|(x, d)| *x -= d);
    let r = residual(&alpha);
    let backward_error = norm(&r) / (a.norm() * norm(&alpha) + norm(ys)).max(f64::MIN_POSITIVE);
    if backward_error > RESIDUAL_TOL {
        return Err(Error::Factorization {
            row: n,
            pivot: chol.min_pivot(),
        });
    }
    Ok(RidgeSolution {
        alpha,
        jitter: chol.jitter(),
        backward_error,
    })
}

/// One solved point of the ridge path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    /// Ridge penalty; infinite for the zero function.
    pub eta: f64,
    /// H-norm of the solution.
    pub h: f64,
    /// Mean squared empirical loss.
    pub loss: f64,
}

/// Spectral form of the ridge path. With `d_j` the eigenvalues of the
/// Gram (or feature covariance) matrix and `z_j` the rotated responses,
/// `h² = Σ d z²/(d + nη)²` and
/// `n L̂ = floor + Σ (nη)² z²/(d + nη)²`.
#[derive(Debug, Clone)]
struct Path {
    d: Vec<f64>,
    z: Vec<f64>,
    floor: f64,
    backend: Backend,
}

#[derive(Debug, Clone)]
enum Backend {
    /// `G = U D Uᵀ`, `z = Uᵀy`.
    Gram { basis: DMatrix<f64> },
    /// `ΦᵀΦ = V D Vᵀ`, `z = D^{-1/2} VᵀΦᵀy`.
    Features { phi: DMatrix<f64>, basis: DMatrix<f64> },
}

#[derive(Debug, Clone)]
struct Kernel {
    spec: Arc<EigenSpec>,
    anchors: Vec<f64>,
}

/// The ridge path on a sample, ordered by decreasing `η`.
#[derive(Debug, Clone)]
pub struct Frontier {
    points: Vec<FrontierPoint>,
    ys: Vec<f64>,
    path: Path,
    kernel: Option<Kernel>,
    jitter: f64,
}

struct PathSolution {
    alpha: Vec<f64>,
    weights: Option<Vec<f64>>,
    h: f64,
    loss: f64,
    jitter: f64,
}

impl Frontier {
    /// Frontier from a Gram matrix alone. Fitted functions carry no
    /// eigencoordinates.
    pub fn from_gram(gram: DMatrix<f64>, ys: &[f64], eta_grid: &[f64]) -> Result<Self> {
        if gram.nrows() != ys.len() || gram.ncols() != ys.len() {
            return Err(Error::Precondition("Gram matrix and responses disagree in size".into()));
        }
        Self::assemble(gram_path(gram, ys), ys, eta_grid, None)
    }

    /// Frontier from a feature matrix `Φ` with rows `Φ(x_i)`.
    pub fn from_features(phi: DMatrix<f64>, ys: &[f64], eta_grid: &[f64]) -> Result<Self> {
        if phi.nrows() != ys.len() {
            return Err(Error::Precondition("feature rows and responses disagree in size".into()));
        }
        let path = feature_path(phi, ys);
        Self::assemble(path, ys, eta_grid, None)
    }

    /// Frontier for a kernel and sample, using the Gram backend when
    /// `n ≤ N` and the feature backend otherwise.
    pub fn for_sample(spec: Arc<EigenSpec>, sample: &SampleSet, eta_grid: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::param("sample", "no observations"));
        }
        let path = if sample.len() <= spec.n_terms() {
            gram_path(spec.gram_matrix(&sample.xs)?, &sample.ys)
        } else {
            feature_path(spec.feature_matrix(&sample.xs)?, &sample.ys)
        };
        let kernel = Kernel {
            spec,
            anchors: sample.xs.clone(),
        };
        Self::assemble(path, &sample.ys, eta_grid, Some(kernel))
    }

    fn assemble(path: Path, ys: &[f64], eta_grid: &[f64], kernel: Option<Kernel>) -> Result<Self> {
        check_grid(eta_grid)?;
        let n = ys.len();
        let scale = dot(ys, ys) / n as f64;
        let mut frontier = Frontier {
            points: Vec::new(),
            ys: ys.to_vec(),
            path,
            kernel,
            jitter: 0.0,
        };
        let step = eta_grid[0] / eta_grid[1];
        let mut etas: std::collections::VecDeque<f64> = eta_grid.iter().copied().collect();
        let mut solved: std::collections::VecDeque<FrontierPoint> = std::collections::VecDeque::new();
        for &eta in &etas {
            solved.push_back(frontier.point(eta)?);
        }
        while solved.front().map_or(false, |p| p.h > TOP_NORM) {
            if solved.len() >= GRID_CAP {
                return Err(Error::GridCap(GRID_CAP));
            }
            let eta = etas.front().copied().unwrap() * step;
            etas.push_front(eta);
            solved.push_front(frontier.point(eta)?);
        }
        loop {
            let k = solved.len();
            let change = (solved[k - 2].loss - solved[k - 1].loss).abs();
            if change <= BOTTOM_LOSS_CHANGE * scale {
                break;
            }
            if solved.len() >= GRID_CAP {
                return Err(Error::GridCap(GRID_CAP));
            }
            let eta = etas.back().copied().unwrap() / step;
            if eta < 1e-300 {
                return Err(Error::GridCap(solved.len()));
            }
            etas.push_back(eta);
            solved.push_back(frontier.point(eta)?);
        }
        frontier.points.push(FrontierPoint {
            eta: f64::INFINITY,
            h: 0.0,
            loss: scale,
        });
        frontier.points.extend(solved);
        frontier.check_monotone(scale)?;
        Ok(frontier)
    }

    fn check_monotone(&self, scale: f64) -> Result<()> {
        let h_top = self.points.iter().map(|p| p.h).fold(0.0, f64::max);
        for w in self.points.windows(2) {
            if w[1].h < w[0].h - MONOTONE_SLACK * h_top.max(1.0) {
                return Err(Error::Precondition(format!(
                    "frontier norm decreased from {} to {} at η = {}",
                    w[0].h, w[1].h, w[1].eta
                )));
            }
            if w[1].loss > w[0].loss + MONOTONE_SLACK * scale.max(1.0) {
                return Err(Error::Precondition(format!(
                    "frontier loss increased from {} to {} at η = {}",
                    w[0].loss, w[1].loss, w[1].eta
                )));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> &[FrontierPoint] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    /// Largest diagonal jitter applied along the path.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn point(&mut self, eta: f64) -> Result<FrontierPoint> {
        let (h, loss, jitter) = self.summary(eta)?;
        self.jitter = self.jitter.max(jitter);
        Ok(FrontierPoint { eta, h, loss })
    }

    /// `(h, loss, jitter)` at `eta`.
    fn summary(&self, eta: f64) -> Result<(f64, f64, f64)> {
        let n = self.ys.len() as f64;
        let path = &self.path;
        let ne = n * eta;
        let mut h2 = 0.0;
        let mut excess = 0.0;
        for (&dj, &zj) in path.d.iter().zip(&path.z) {
            let denom = dj + ne;
            h2 += dj * (zj / denom).powi(2);
            excess += (ne * zj / denom).powi(2);
        }
        Ok((h2.sqrt(), (path.floor + excess) / n, 0.0))
    }

    fn solve(&self, eta: f64) -> Result<PathSolution> {
        let n = self.ys.len();
        let path = &self.path;
        if eta.is_infinite() {
            return Ok(PathSolution {
                alpha: vec![0.0; n],
                weights: match &path.backend {
                    Backend::Features { basis, .. } => Some(vec![0.0; basis.nrows()]),
                    Backend::Gram { .. } => None,
                },
                h: 0.0,
                loss: dot(&self.ys, &self.ys) / n as f64,
                jitter: 0.0,
            });
        }
        let nf = n as f64;
        let (h, loss, jitter) = self.summary(eta)?;
        match &path.backend {
            Backend::Gram { basis } => {
                let rotated: Vec<f64> = path.d.iter().zip(&path.z).map(|(&dj, &zj)| zj / (dj + nf * eta)).collect();
                Ok(PathSolution {
                    alpha: mat_vec(basis, &rotated),
                    weights: None,
                    h,
                    loss,
                    jitter,
                })
            }
            Backend::Features { phi, basis } => {
                let rotated: Vec<f64> = path
                    .d
                    .iter()
                    .zip(&path.z)
                    .map(|(&dj, &zj)| dj.sqrt() * zj / (dj + nf * eta))
                    .collect();
                let w = mat_vec(basis, &rotated);
                let fitted = mat_vec(phi, &w);
                let alpha = self.ys.iter().zip(&fitted).map(|(y, f)| (y - f) / (nf * eta)).collect();
                let loss = self.ys.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / nf;
                Ok(PathSolution {
                    alpha,
                    weights: Some(w),
                    h,
                    loss,
                    jitter,
                })
            }
        }
    }

    fn fitted(&self, eta: f64) -> Result<FittedFunction> {
        let sol = self.solve(eta)?;
        let (anchors, coefficients) = match &self.kernel {
            None => (Vec::new(), Vec::new()),
            Some(k) => {
                let coefficients = match &sol.weights {
                    Some(w) => w
                        .iter()
                        .zip(k.spec.eigenvalues())
                        .map(|(wj, l)| wj * l.sqrt())
                        .collect(),
                    None => section_coordinates(&k.spec, &k.anchors, &sol.alpha),
                };
                (k.anchors.clone(), coefficients)
            }
        };
        Ok(FittedFunction {
            alpha: sol.alpha,
            anchors,
            coefficients,
            h: sol.h,
            loss: sol.loss,
            eta: eta.is_finite().then_some(eta),
            jitter: sol.jitter,
            objective: None,
            config_hash: None,
        })
    }

    /// The fitted function at the `i`-th frontier point.
    pub fn fitted_at(&self, i: usize) -> Result<FittedFunction> {
        let p = self
            .points
            .get(i)
            .ok_or_else(|| Error::param("i", format!("frontier has {} points", self.points.len())))?;
        self.fitted(p.eta)
    }

    /// `(h, loss)` of the ridge solution at an arbitrary penalty.
    pub fn evaluate_at(&self, eta: f64) -> Result<(f64, f64)> {
        if !(eta > 0.0) {
            return Err(Error::param("eta", "ridge penalty must be positive"));
        }
        let (h, loss, _) = self.summary(eta)?;
        Ok((h, loss))
    }

    /// Minimizer of `L̂ + κ₁ R(h, u)` along the path: the best grid point,
    /// refined by bisection in `ln η` toward each neighbor. Ties go to the
    /// smaller norm.
    pub fn regularized_erm(&self, reg: &RegularizerSpec, u: f64) -> Result<FittedFunction> {
        let kappa = reg.constants.kappa1;
        let objective = |h: f64, loss: f64| loss + kappa * reg.evaluate(h, u);
        let better = |a: f64, b: f64| a < b - 1e-15 * b.abs();
        let mut best = 0;
        let mut best_obj = objective(self.points[0].h, self.points[0].loss);
        for (i, p) in self.points.iter().enumerate().skip(1) {
            let v = objective(p.h, p.loss);
            if better(v, best_obj) {
                best = i;
                best_obj = v;
            }
        }
        let mut best_eta = self.points[best].eta;
        if best_eta.is_finite() {
            // bracket in ln η between the finite neighbors, then halve it
            // around the incumbent
            let mut hi = self.points.get(best - 1).map_or(best_eta, |p| p.eta);
            if !hi.is_finite() {
                hi = best_eta;
            }
            let lo = self.points.get(best + 1).map_or(best_eta, |p| p.eta);
            let (mut lo, mut hi, mut mid) = (lo.ln(), hi.ln(), best_eta.ln());
            let eval = |le: f64| -> Result<f64> {
                let (h, loss, _) = self.summary(le.exp())?;
                Ok(objective(h, loss))
            };
            for _ in 0..REFINE_STEPS {
                let left = 0.5 * (lo + mid);
                let right = 0.5 * (mid + hi);
                let (vl, vr) = (eval(left)?, eval(right)?);
                // the smaller-η side has the larger norm, so ties favor the right
                if better(vr, best_obj) && !better(vl, vr) {
                    lo = mid;
                    mid = right;
                    best_obj = vr;
                    best_eta = mid.exp();
                } else if better(vl, best_obj) {
                    hi = mid;
                    mid = left;
                    best_obj = vl;
                    best_eta = mid.exp();
                } else {
                    lo = left;
                    hi = right;
                }
            }
        }
        let mut fit = self.fitted(best_eta)?;
        fit.objective = Some(best_obj);
        Ok(fit)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 20 {
        return Err(Error::param("eta_grid", format!("need at least 20 points, got {}", grid.len())));
    }
    if grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::param("eta_grid", "penalties must be finite and positive"));
    }
    let ratio = grid[0] / grid[1];
    if !(ratio > 1.0) {
        return Err(Error::param("eta_grid", "grid must be decreasing"));
    }
    for w in grid.windows(2) {
        if ((w[0] / w[1]) / ratio - 1.0).abs() > 1e-6 {
            return Err(Error::param("eta_grid", "grid must be log-spaced"));
        }
    }
    Ok(())
}

fn gram_path(gram: DMatrix<f64>, ys: &[f64]) -> Path {
    let (values, vectors) = symmetric_eigen(&gram);
    let top = values.iter().cloned().fold(0.0, f64::max);
    let z = vectors.transpose() * nalgebra::DVector::from_column_slice(ys);
    let d = values
        .iter()
        .map(|&dj| if dj > 1e-14 * top { dj } else { 0.0 })
        .collect();
    Path {
        d,
        z: z.iter().copied().collect(),
        floor: 0.0,
        backend: Backend::Gram { basis: vectors },
    }
}

fn feature_path(phi: DMatrix<f64>, ys: &[f64]) -> Path {
    let (values, vectors) = symmetric_eigen(&(phi.transpose() * &phi));
    let top = values.iter().cloned().fold(0.0, f64::max);
    let y = nalgebra::DVector::from_column_slice(ys);
    let b = vectors.transpose() * (phi.transpose() * &y);
    let mut d = Vec::with_capacity(b.len());
    let mut z = Vec::with_capacity(b.len());
    for (j, &dj) in values.iter().enumerate() {
        // directions outside the row space of Φ carry no signal
        if dj > 1e-14 * top {
            d.push(dj);
            z.push(b[j] / dj.sqrt());
        } else {
            d.push(0.0);
            z.push(0.0);
        }
    }
    // residual of the least-squares fit, computed directly
    let coef: Vec<f64> = d.iter().zip(&z).map(|(&dj, &zj)| if dj > 0.0 { zj / dj.sqrt() } else { 0.0 }).collect();
    let w = mat_vec(&vectors, &coef);
    let fitted = mat_vec(&phi, &w);
    let floor = ys.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    Path {
        d,
        z,
        floor,
        backend: Backend::Features {
            phi,
            basis: vectors,
        },
    }
}

/// `c_j = λ_j Σ_i α_i φ_j(x_i)`.
fn section_coordinates(spec: &EigenSpec, anchors: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; spec.n_terms()];
    let mut phi = vec![0.0; spec.n_terms()];
    for (&x, &a) in anchors.iter().zip(alpha) {
        FourierBasis::eval_into(x, &mut phi);
        for (cj, pj) in c.iter_mut().zip(&phi) {
            *cj += a * pj;
        }
    }
    for (cj, l) in c.iter_mut().zip(spec.eigenvalues()) {
        *cj *= l;
    }
    c
}

/// A function `f = Σ_i α_i K(x_i, ·)` selected on a frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFunction {
    pub alpha: Vec<f64>,
    /// Sample points the sections are anchored at; empty without a kernel.
    pub anchors: Vec<f64>,
    /// L₂ eigencoordinates `c_j`; empty without a kernel.
    pub coefficients: Vec<f64>,
    pub h: f64,
    pub loss: f64,
    /// Ridge penalty of the selected point; absent for the zero function.
    pub eta: Option<f64>,
    pub jitter: f64,
    /// Regularized objective at selection time.
    pub objective: Option<f64>,
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FitDocument {
    format: String,
    #[serde(flatten)]
    fit: FittedFunction,
}

impl FittedFunction {
    /// `f = Σ α_i K(x_i, ·)` for explicit sections.
    pub fn from_sections(spec: &EigenSpec, anchors: &[f64], alpha: &[f64]) -> Result<Self> {
        if anchors.len() != alpha.len() {
            return Err(Error::Precondition("anchors and coefficients differ in length".into()));
        }
        let gram = spec.gram_matrix(anchors)?;
        let g_alpha = mat_vec(&gram, alpha);
        Ok(FittedFunction {
            alpha: alpha.to_vec(),
            anchors: anchors.to_vec(),
            coefficients: section_coordinates(spec, anchors, alpha),
            h: dot(alpha, &g_alpha).max(0.0).sqrt(),
            loss: f64::NAN,
            eta: None,
            jitter: 0.0,
            objective: None,
            config_hash: None,
        })
    }

    /// `f(x)` from the eigencoordinates.
    pub fn eval(&self, x: f64) -> f64 {
        let mut phi = vec![0.0; self.coefficients.len()];
        FourierBasis::eval_into(x, &mut phi);
        dot(&phi, &self.coefficients)
    }

    /// `f(x) = Σ α_i K(x_i, x)` through the kernel.
    pub fn eval_sections(&self, spec: &EigenSpec, x: f64) -> f64 {
        self.anchors
            .iter()
            .zip(&self.alpha)
            .map(|(&xi, &a)| a * spec.kernel_unchecked(xi, x))
            .sum()
    }

    /// `‖f‖²_{L₂} = Σ c_j²`.
    pub fn l2_norm_sq(&self) -> f64 {
        dot(&self.coefficients, &self.coefficients)
    }

    /// Grid maximum of `|f|`, refined locally.
    pub fn sup_norm(&self) -> f64 {
        let top = FourierBasis::frequency(self.coefficients.len().saturating_sub(1));
        GridEvaluator::new(SUP_GRID.max(4 * top + 4)).sup_norm(&self.coefficients)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = FitDocument {
            format: FIT_FORMAT.to_string(),
            fit: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FitDocument = serde_json::from_str(text)?;
        if doc.format != FIT_FORMAT {
            return Err(Error::Malformed(format!("unknown fit format `{}`", doc.format)));
        }
        if doc.fit.alpha.len() != doc.fit.anchors.len() && !doc.fit.anchors.is_empty() {
            return Err(Error::Malformed("anchors and coefficients differ in length".into()));
        }
        Ok(doc.fit)
    }
}

/// Membership and moment diagnostics for the class of functions whose sup
/// norm is controlled by their H-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H1Report {
    /// `κ₃ (‖f‖_∞ / ‖f‖_H^p)^{2/(1-p)}`; zero for the zero function.
    pub membership: f64,
    pub sup_norm: f64,
    pub h: f64,
    /// `P_n f²` on the sample.
    pub empirical_second_moment: f64,
    /// Whether `P_n f² ≥ 9`.
    pub moment_guard: bool,
    /// `E f² = Σ c_j²`.
    pub second_moment: f64,
}

impl H1Report {
    /// `E f² / membership`, or `None` for the zero function.
    pub fn moment_ratio(&self) -> Option<f64> {
        (self.membership > 0.0).then(|| self.second_moment / self.membership)
    }
}

/// Reports the sup-norm class membership value and the second moments of
/// `f`; never alters the fit. The membership value is NaN for `p = 1`.
pub fn h1_diagnostic(f: &FittedFunction, spec: &EigenSpec, kappa3: f64, sample: &SampleSet) -> H1Report {
    let p = spec.p();
    let sup = f.sup_norm();
    let membership = if f.h == 0.0 || sup == 0.0 {
        0.0
    } else if p >= 1.0 {
        f64::NAN
    } else {
        kappa3 * (sup / f.h.powf(p)).powf(2.0 / (1.0 - p))
    };
    let pn = if sample.is_empty() {
        0.0
    } else {
        sample.xs.iter().map(|&x| f.eval(x).powi(2)).sum::<f64>() / sample.len() as f64
    };
    H1Report {
        membership,
        sup_norm: sup,
        h: f.h,
        empirical_second_moment: pn,
        moment_guard: pn >= 9.0,
        second_moment: f.l2_norm_sq(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regfunc::{Constants, RegularizerKind};
    use crate::synth::make_target;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::SQRT_2;

    /// Coarse grid over a box followed by repeated local zooms around the
    /// best few candidates.
    fn zoom_minimize(f: &dyn Fn(&[f64]) -> f64, dim: usize, half: f64) -> f64 {
        let per_axis: usize = if dim <= 3 { 21 } else { 9 };
        let total = per_axis.pow(dim as u32);
        let mut cands: Vec<(f64, Vec<f64>)> = (0..total)
            .map(|mut k| {
                let x: Vec<f64> = (0..dim)
                    .map(|_| {
                        let j = k % per_axis;
                        k /= per_axis;
                        -half + 2.0 * half * j as f64 / (per_axis - 1) as f64
                    })
                    .collect();
                (f(&x), x)
            })
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let local = 5usize;
        let mut best = f64::INFINITY;
        for (_, start) in cands.into_iter().take(4) {
            let mut center = start;
            let mut width = 2.0 * half / (per_axis - 1) as f64;
            let mut value = f(&center);
            for _ in 0..80 {
                let steps = local.pow(dim as u32);
                for mut k in 0..steps {
                    let x: Vec<f64> = (0..dim)
                        .map(|d| {
                            let j = k % local;
                            k /= local;
                            center[d] - width + 2.0 * width * j as f64 / (local - 1) as f64
                        })
                        .collect();
                    let v = f(&x);
                    if v < value {
                        value = v;
                        center = x;
                    }
                }
                width *= 0.6;
            }
            best = best.min(value);
        }
        best
    }

    fn sample_for(spec: &Arc<EigenSpec>, n: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..spec.n_terms()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        make_target(spec.clone(), 0.5, &g).unwrap().with_noise(0.5).unwrap().draw_sample(n, seed).unwrap()
    }

    #[test]
    fn ridge_examples() {
        let g = DMatrix::from_element(1, 1, 1.0);
        let eta = 0.3;
        let s = ridge_solve(&g, &[1.0], eta).unwrap();
        assert!((s.alpha[0] - 1.0 / (1.0 + eta)).abs() < 1e-15);
        let spec = EigenSpec::build(0.5, 21, SQRT_2).unwrap();
        let xs = [0.1, 0.4, 0.45, 0.9];
        let gram = spec.gram_matrix(&xs).unwrap();
        let ys = [1.0, -2.0, 0.5, 3.0];
        let s = ridge_solve(&gram, &ys, 1e6).unwrap();
        assert!(norm(&s.alpha) <= 1e-5 * norm(&ys));
        assert!(ridge_solve(&gram, &ys, 0.0).is_err());
    }

    #[test]
    fn ridge_matches_brute_force() {
        let spec = EigenSpec::build(0.5, 9, SQRT_2).unwrap();
        let xs = [0.05, 0.3, 0.55, 0.61, 0.8];
        let gram = spec.gram_matrix(&xs).unwrap();
        let ys = [0.4, -0.2, 0.9, 0.1, -0.6];
        let eta = 0.01;
        let n = 5.0;
        let objective = |a: &[f64]| {
            let fitted = mat_vec(&gram, a);
            let loss = fitted.iter().zip(&ys).map(|(f, y)| (f - y).powi(2)).sum::<f64>() / n;
            loss + eta * dot(a, &fitted)
        };
        let sol = ridge_solve(&gram, &ys, eta).unwrap();
        let exact = objective(&sol.alpha);
        let half = sol.alpha.iter().map(|v| v.abs()).fold(0.0, f64::max) * 1.5;
        let brute = zoom_minimize(&objective, 5, half);
        assert!(exact <= brute * (1.0 + 1e-12));
        assert!((brute - exact).abs() <= 1e-6 * exact, "{brute} vs {exact}");
    }

    #[test]
    fn zero_responses_collapse() {
        let spec = Arc::new(EigenSpec::build(0.5, 21, SQRT_2).unwrap());
        let sample = SampleSet::new(vec![0.1, 0.5, 0.7], vec![0.0; 3]).unwrap();
        let f = Frontier::for_sample(spec, &sample, &default_eta_grid()).unwrap();
        assert!(f.points().iter().all(|p| p.h == 0.0 && p.loss == 0.0));
    }

    #[test]
    fn frontier_shape_both_backends() {
        let spec = Arc::new(EigenSpec::build(0.5, 31, SQRT_2).unwrap());
        for &n in &[20usize, 200] {
            let sample = sample_for(&spec, n, 5);
            let f = Frontier::for_sample(spec.clone(), &sample, &default_eta_grid()).unwrap();
            let pts = f.points();
            let scale = dot(&sample.ys, &sample.ys) / n as f64;
            assert_eq!(pts[0].h, 0.0);
            assert!(pts[1].h <= TOP_NORM);
            assert!((pts[1].loss - scale).abs() <= 1e-5 * scale);
            for w in pts[1..].windows(2) {
                assert!(w[1].h > w[0].h, "h must strictly grow as η falls");
                assert!(w[1].loss <= w[0].loss + 1e-12);
            }
            let k = pts.len();
            assert!((pts[k - 2].loss - pts[k - 1].loss).abs() <= BOTTOM_LOSS_CHANGE * scale);
        }
    }

    #[test]
    fn backends_agree() {
        let spec = Arc::new(EigenSpec::build(0.5, 11, SQRT_2).unwrap());
        let sample = sample_for(&spec, 40, 9);
        let grid = default_eta_grid();
        let a = Frontier::from_gram(spec.gram_matrix(&sample.xs).unwrap(), &sample.ys, &grid).unwrap();
        let b = Frontier::from_features(spec.feature_matrix(&sample.xs).unwrap(), &sample.ys, &grid).unwrap();
        for &eta in &[1.0, 1e-2, 1e-4] {
            let (ha, la) = a.evaluate_at(eta).unwrap();
            let (hb, lb) = b.evaluate_at(eta).unwrap();
            assert!((ha - hb).abs() <= 1e-8 * ha);
            assert!((la - lb).abs() <= 1e-8 * la);
        }
    }

    #[test]
    fn stored_loss_and_alpha_are_consistent() {
        let spec = Arc::new(EigenSpec::build(0.5, 31, SQRT_2).unwrap());
        for &n in &[25usize, 120] {
            let sample = sample_for(&spec, n, 21);
            let f = Frontier::for_sample(spec.clone(), &sample, &default_eta_grid()).unwrap();
            let reg = RegularizerSpec::new(RegularizerKind::Sublinear, Constants::default(), &spec, n as f64).unwrap();
            let fit = f.regularized_erm(&reg, 1.0).unwrap();
            let loss: f64 = sample
                .xs
                .iter()
                .zip(&sample.ys)
                .map(|(&x, &y)| (fit.eval_sections(&spec, x) - y).powi(2))
                .sum::<f64>()
                / n as f64;
            assert!((loss - fit.loss).abs() <= 1e-10 * fit.loss);
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                assert!((fit.eval(x) - fit.eval_sections(&spec, x)).abs() <= 1e-10);
            }
            let h2: f64 = fit.coefficients.iter().zip(spec.eigenvalues()).map(|(c, l)| c * c / l).sum();
            assert!((h2.sqrt() - fit.h).abs() <= 1e-8 * fit.h.max(1.0));
        }
    }

    #[test]
    fn null_and_heavy_ridge_selections() {
        let spec = Arc::new(EigenSpec::build(0.5, 31, SQRT_2).unwrap());
        let sample = sample_for(&spec, 30, 2);
        let f = Frontier::for_sample(spec.clone(), &sample, &default_eta_grid()).unwrap();
        let null = RegularizerSpec::new(RegularizerKind::Null, Constants::default(), &spec, 30.0).unwrap();
        let fit = f.regularized_erm(&null, 1.0).unwrap();
        let last = f.points().last().unwrap();
        assert_eq!(fit.eta, Some(last.eta));
        let mut c = Constants::default();
        c.kappa1 = 1e9;
        let heavy = RegularizerSpec::new(RegularizerKind::RidgeBaseline, c, &spec, 30.0).unwrap();
        let fit = f.regularized_erm(&heavy, 1.0).unwrap();
        assert_eq!(fit.h, 0.0);
        assert!(fit.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn erm_matches_brute_force_small() {
        let spec = Arc::new(EigenSpec::build(0.5, 3, SQRT_2).unwrap());
        let mut c = Constants::default();
        c.kappa1 = 0.05;
        let sample = sample_for(&spec, 3, 17);
        let f = Frontier::for_sample(spec.clone(), &sample, &default_eta_grid()).unwrap();
        for kind in [RegularizerKind::Sublinear, RegularizerKind::Quadratic, RegularizerKind::RidgeBaseline] {
            let reg = RegularizerSpec::new(kind, c, &spec, 3.0).unwrap();
            let fit = f.regularized_erm(&reg, 1.0).unwrap();
            let objective = |t: &[f64]| {
                let h = norm(t);
                let loss = sample
                    .xs
                    .iter()
                    .zip(&sample.ys)
                    .map(|(&x, &y)| (dot(&spec.feature_vector(x).unwrap(), t) - y).powi(2))
                    .sum::<f64>()
                    / 3.0;
                loss + c.kappa1 * reg.evaluate(h, 1.0)
            };
            let half = f.points().last().unwrap().h * 1.2 + 1e-3;
            let brute = zoom_minimize(&objective, 3, half);
            let got = fit.objective.unwrap();
            assert!((got - brute).abs() <= 1e-6 * brute, "{kind}: {got} vs {brute}");
        }
    }

    #[test]
    fn h1_examples() {
        let spec = Arc::new(EigenSpec::build(0.5, 31, SQRT_2).unwrap());
        let sample = sample_for(&spec, 10, 3);
        let zero = FittedFunction::from_sections(&spec, &[], &[]).unwrap();
        let r = h1_diagnostic(&zero, &spec, 1.0, &sample);
        assert_eq!(r.membership, 0.0);
        assert_eq!(r.moment_ratio(), None);
        let x0 = 0.37;
        let section = FittedFunction::from_sections(&spec, &[x0], &[1.0]).unwrap();
        let k00 = spec.kernel_eval(x0, x0).unwrap();
        assert!((section.h * section.h - k00).abs() <= 1e-12);
        assert!((section.sup_norm() - k00).abs() <= 1e-8);
        let r = h1_diagnostic(&section, &spec, 1.0, &sample);
        let expect = (k00 / k00.sqrt().sqrt()).powi(4);
        assert!((r.membership - expect).abs() <= 1e-8 * expect);
        assert!(!r.moment_guard);
    }

    #[test]
    fn fit_json_round_trip() {
        let spec = Arc::new(EigenSpec::build(0.5, 31, SQRT_2).unwrap());
        let sample = sample_for(&spec, 12, 4);
        let f = Frontier::for_sample(spec.clone(), &sample, &default_eta_grid()).unwrap();
        let reg = RegularizerSpec::new(RegularizerKind::Sublinear, Constants::default(), &spec, 12.0).unwrap();
        let mut fit = f.regularized_erm(&reg, 1.0).unwrap();
        fit.config_hash = Some("abc".into());
        let back = FittedFunction::from_json(&fit.to_json().unwrap()).unwrap();
        assert_eq!(back, fit);
        let zero = f.fitted_at(0).unwrap();
        assert_eq!(FittedFunction::from_json(&zero.to_json().unwrap()).unwrap().eta, None);
        assert!(FittedFunction::from_json("{\"format\":\"x\"}").is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[1.0; 25]).is_err());
        assert!(check_grid(&log_grid(1.0, 1e-2, 4)).is_err());
        assert!(check_grid(&default_eta_grid()).is_ok());
        assert_eq!(default_eta_grid().len(), 49);
    }
}
