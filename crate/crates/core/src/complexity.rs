//! Intersection ellipsoids, localized Gaussian complexities, covering-number
//! bounds and Monte-Carlo checks of the localization inclusions and the
//! isomorphic inequality.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::regfunc::{threshold_x, Constants, SpectrumParams};
use crate::seeding::{derive, rng_for};
use crate::solver::{default_eta_grid, Frontier};
use crate::spectrum::{EigenSpec, FourierBasis};
use crate::stats::{summarize, Summary};
use crate::synth::RegressionTask;
use crate::trig::{GridEvaluator, SUP_GRID};

/// Monte-Carlo budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub draws: usize,
    pub seed: u64,
}

impl McConfig {
    pub const MIN_DRAWS: usize = 100;
    pub const DEFAULT_DRAWS: usize = 2000;

    pub fn new(draws: usize, seed: u64) -> Result<Self> {
        let c = McConfig { draws, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws < Self::MIN_DRAWS {
            return Err(Error::param(
                "draws",
                format!("need at least {} draws, got {}", Self::MIN_DRAWS, self.draws),
            ));
        }
        Ok(())
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub draws: usize,
}

impl From<Summary> for McEstimate {
    fn from(s: Summary) -> Self {
        McEstimate {
            mean: s.mean,
            stderr: s.stderr,
            draws: s.count,
        }
    }
}

/// Axis-aligned ellipsoid with axes `θ_i = min{√(x/λ_i), r}`, contained in
/// `{‖t‖ ≤ r, Σλ_i t_i² ≤ x}` and containing it after scaling by `√2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEllipsoid {
    pub x: f64,
    pub r: f64,
    pub axes: Vec<f64>,
}

pub fn ellipsoid_axes(x: f64, r: f64, lambdas: &[f64]) -> Result<IntersectionEllipsoid> {
    if !(x >= 0.0) {
        return Err(Error::param("x", format!("localization level must be ≥ 0, got {x}")));
    }
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("radius must be ≥ 0, got {r}")));
    }
    let axes = lambdas
        .iter()
        .map(|&l| if l > 0.0 { (x / l).sqrt().min(r) } else { r })
        .collect();
    Ok(IntersectionEllipsoid { x, r, axes })
}

impl IntersectionEllipsoid {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// `(Σ θ_i² v_i²)^{1/2}`.
    pub fn support(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.axes.len() {
            return Err(Error::Precondition(format!(
                "vector has {} entries, ellipsoid has {} axes",
                v.len(),
                self.axes.len()
            )));
        }
        Ok(self.support_unchecked(v))
    }

    fn support_unchecked(&self, v: &[f64]) -> f64 {
        self.axes
            .iter()
            .zip(v)
            .map(|(t, vi)| (t * vi).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn ellipsoid_support(e: &IntersectionEllipsoid, v: &[f64]) -> Result<f64> {
    e.support(v)
}

/// Uniform design points, standard Gaussian weights and the vector
/// `v_j = √λ_j Σ_i g_i φ_j(X_i)` for one draw.
fn weighted_feature_sum(spec: &EigenSpec, n: usize, rng: &mut impl Rng, phi: &mut [f64], v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = 0.0);
    for _ in 0..n {
        let x: f64 = rng.gen();
        let g: f64 = rng.sample(StandardNormal);
        basis_fast(x, phi);
        for (vj, pj) in v.iter_mut().zip(phi.iter()) {
            *vj += g * pj;
        }
    }
    for (vj, l) in v.iter_mut().zip(spec.eigenvalues()) {
        *vj *= l.sqrt();
    }
}

/// Basis values by the angle-addition recurrence, re-anchored every 64
/// frequencies.
pub fn basis_fast(x: f64, out: &mut [f64]) {
    use std::f64::consts::{PI, SQRT_2};
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    let (s1, c1) = (2.0 * PI * x).sin_cos();
    let (mut s, mut c) = (s1, c1);
    let mut k = 1usize;
    let mut i = 1;
    while i < out.len() {
        if k % 64 == 0 {
            let (ss, cc) = (2.0 * PI * k as f64 * x).sin_cos();
            s = ss;
            c = cc;
        }
        out[i] = SQRT_2 * c;
        if i + 1 < out.len() {
            out[i + 1] = SQRT_2 * s;
        }
        let next_c = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = next_c;
        i += 2;
        k += 1;
    }
}

/// `E sup_{t ∈ E_{x,r}} |Σ g_i f_t(X_i)| / n` by Monte Carlo over both the
/// design and the Gaussian weights.
pub fn localized_gaussian_complexity(spec: &EigenSpec, n: usize, x: f64, r: f64, mc: &McConfig) -> Result<McEstimate> {
    Ok(localized_gaussian_complexity_many(spec, n, &[(x, r)], mc)?[0])
}

/// [`localized_gaussian_complexity`] at several `(x, r)` with common random
/// numbers. Draw `d` uses the stream keyed by `(n, d)`.
pub fn localized_gaussian_complexity_many(
    spec: &EigenSpec,
    n: usize,
    levels: &[(f64, f64)],
    mc: &McConfig,
) -> Result<Vec<McEstimate>> {
    mc.validate()?;
    if n < 2 {
        return Err(Error::param("n", format!("need n ≥ 2, got {n}")));
    }
    let bodies = levels
        .iter()
        .map(|&(x, r)| ellipsoid_axes(x, r, spec.eigenvalues()))
        .collect::<Result<Vec<_>>>()?;
    let m = spec.n_terms();
    let per_draw: Vec<Vec<f64>> = (0..mc.draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng_for(mc.seed, &[n as u64, d as u64]);
            let mut phi = vec![0.0; m];
            let mut v = vec![0.0; m];
            weighted_feature_sum(spec, n, &mut rng, &mut phi, &mut v);
            bodies.iter().map(|e| e.support_unchecked(&v) / n as f64).collect()
        })
        .collect();
    Ok((0..levels.len())
        .map(|k| {
            let vals: Vec<f64> = per_draw.iter().map(|row| row[k]).collect();
            summarize(&vals).into()
        })
        .collect())
}

/// `((1/n) Σ min{x, r²λ_i})^{1/2}`.
pub fn complexity_scale(spec: &EigenSpec, n: usize, x: f64, r: f64) -> f64 {
    (spec.sum_min(x, r) / n as f64).sqrt()
}

/// `E max_i |⟨G, T X_i⟩|` together with the diameter `max_i ‖T X_i‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSup {
    pub mean_sup: McEstimate,
    pub diameter: f64,
}

const ROW_BLOCK: usize = 128;

/// Monte-Carlo estimate of `E‖G‖_Ē` with `‖v‖_Ē = max_i |⟨v, T X_i⟩|`,
/// `T = diag(θ)` and `G` standard Gaussian on the coordinates.
pub fn gaussian_sup(spec: &EigenSpec, xs: &[f64], e: &IntersectionEllipsoid, mc: &McConfig) -> Result<GaussianSup> {
    mc.validate()?;
    let m = spec.n_terms();
    if e.dim() != m {
        return Err(Error::Precondition("ellipsoid and spectrum differ in dimension".into()));
    }
    let weights: Vec<f64> = e.axes.iter().zip(spec.eigenvalues()).map(|(t, l)| t * l.sqrt()).collect();
    let mut rng = rng_for(mc.seed, &[xs.len() as u64, 0x5ad]);
    let gauss = DMatrix::<f64>::from_fn(m, mc.draws, |_, _| rng.sample(StandardNormal));
    let blocks: Vec<(Vec<f64>, f64)> = xs
        .par_chunks(ROW_BLOCK)
        .map(|chunk| {
            let mut rows = DMatrix::<f64>::zeros(chunk.len(), m);
            let mut phi = vec![0.0; m];
            let mut diameter: f64 = 0.0;
            for (i, &x) in chunk.iter().enumerate() {
                basis_fast(x, &mut phi);
                let mut sq = 0.0;
                for j in 0..m {
                    let w = weights[j] * phi[j];
                    rows[(i, j)] = w;
                    sq += w * w;
                }
                diameter = diameter.max(sq.sqrt());
            }
            let prod = &rows * &gauss;
            let maxima = (0..mc.draws)
                .map(|d| prod.column(d).iter().fold(0.0f64, |a, v| a.max(v.abs())))
                .collect();
            (maxima, diameter)
        })
        .collect();
    let mut maxima = vec![0.0f64; mc.draws];
    let mut diameter: f64 = 0.0;
    for (block, dia) in &blocks {
        for (m, b) in maxima.iter_mut().zip(block) {
            *m = m.max(*b);
        }
        diameter = diameter.max(*dia);
    }
    Ok(GaussianSup {
        mean_sup: summarize(&maxima).into(),
        diameter,
    })
}

/// `(E‖G‖_Ē / ε)²`, the dual-Sudakov bound on `log N(B₂, ε B_Ē)` up to its
/// constant.
pub fn dual_sudakov_bound(spec: &EigenSpec, xs: &[f64], x: f64, r: f64, eps: f64, mc: &McConfig) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "scale must be positive"));
    }
    let e = ellipsoid_axes(x, r, spec.eigenvalues())?;
    let sup = gaussian_sup(spec, xs, &e, mc)?;
    Ok((sup.mean_sup.mean / eps).powi(2))
}

/// Two-regime entropy integral and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DudleyBound {
    /// `(n ε₀²/4 + M² ln(D/ε₀))^{1/2}`, small-scale term only when `D ≤ ε₀`.
    pub bound: f64,
    pub eps0: f64,
    /// `D = max_i ‖T X_i‖`, beyond which one ball covers.
    pub diameter: f64,
    /// `M = E‖G‖_Ē`.
    pub mean_sup: McEstimate,
    /// `Q(x, r) = A (Σ min{x, r²λ_i})^{1/2}`.
    pub q: f64,
}

/// Entropy integral with the volumetric estimate `n ln(ε₀/ε)` below
/// `ε₀ = c₄ Q √(ln n / n)` and the dual-Sudakov estimate `M²/ε²` above.
pub fn dudley_gamma2_bound(spec: &EigenSpec, xs: &[f64], x: f64, r: f64, c4: f64, mc: &McConfig) -> Result<DudleyBound> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::param("sample", format!("need n ≥ 2, got {n}")));
    }
    if !(c4 > 0.0) {
        return Err(Error::param("c4", "must be positive"));
    }
    let q = spec.basis_bound() * spec.sum_min(x, r).sqrt();
    let e = ellipsoid_axes(x, r, spec.eigenvalues())?;
    let sup = gaussian_sup(spec, xs, &e, mc)?;
    let nf = n as f64;
    let eps0 = c4 * q * (nf.ln() / nf).sqrt();
    let small = nf * eps0 * eps0 / 4.0;
    let m = sup.mean_sup.mean;
    let large = if sup.diameter > eps0 {
        m * m * (sup.diameter / eps0).ln()
    } else {
        0.0
    };
    Ok(DudleyBound {
        bound: (small + large).sqrt(),
        eps0,
        diameter: sup.diameter,
        mean_sup: sup.mean_sup,
        q,
    })
}

/// Population and empirical excess losses `(PL_f, P_nL_f)` of every frontier
/// function of norm at most `r`, one list per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct IsomorphismTrials {
    pub r: f64,
    pub n: usize,
    /// `max{r sup_x K(x,x)^{1/2}, ‖Y‖_∞}`.
    pub b: f64,
    pub pairs: Vec<Vec<(f64, f64)>>,
}

/// Outcome of [`isomorphism_mc`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismReport {
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Localization level used for the slack.
    pub x: f64,
    /// Total additive slack `x/2 + c_Y (1 + b²) u / n`.
    pub slack: f64,
    /// Largest violation seen, in units of the slack (≤ 0 when none).
    pub worst_excess: f64,
}

/// Draws `trials` samples of size `n` and records the excess losses of the
/// frontier functions inside the radius-`r` ball, relative to the best
/// function in the ball.
pub fn isomorphism_trials(task: &RegressionTask, r: f64, n: usize, trials: usize, seed: u64) -> Result<IsomorphismTrials> {
    if n < 2 {
        return Err(Error::param("n", "need n ≥ 2"));
    }
    let spec = task.shared_spec();
    let b = task.response_bound().max(r * spec.trace().sqrt());
    let star = task.best_in_ball(r)?;
    let star_c: Vec<f64> = star.t.iter().zip(spec.eigenvalues()).map(|(t, l)| t * l.sqrt()).collect();
    let star_risk = task.population_risk_excess(&star_c)?;
    let grid = default_eta_grid();
    let pairs = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sample = task.draw_sample(n, derive(seed, &[t as u64]))?;
            let frontier = Frontier::for_sample(spec.clone(), &sample, &grid)?;
            let mut phi = vec![0.0; spec.n_terms()];
            let star_vals: Vec<f64> = sample
                .xs
                .iter()
                .map(|&x| {
                    FourierBasis::eval_into(x, &mut phi);
                    dot(&phi, &star_c)
                })
                .collect();
            let mut out = Vec::new();
            for (i, p) in frontier.points().iter().enumerate() {
                if p.h > r {
                    break;
                }
                let f = frontier.fitted_at(i)?;
                let pl = task.population_risk_excess(&f.coefficients)? - star_risk;
                let pnl = sample
                    .xs
                    .iter()
                    .zip(&sample.ys)
                    .zip(&star_vals)
                    .map(|((&x, &y), &s)| (f.eval(x) - y).powi(2) - (s - y).powi(2))
                    .sum::<f64>()
                    / n as f64;
                out.push((pl, pnl));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IsomorphismTrials { r, n, b, pairs })
}

impl IsomorphismTrials {
    /// Slack `x/2 + c_Y (1 + b²) u / n` at `x = threshold_x(r, n)`.
    pub fn slack(&self, params: &SpectrumParams, constants: &Constants) -> (f64, f64) {
        let x = threshold_x(self.r, self.n as f64, params, constants.c_threshold);
        let slack = x / 2.0 + constants.c_y * (1.0 + self.b * self.b) * constants.u / self.n as f64;
        (x, slack)
    }

    /// Counts trials in which some function breaks
    /// `½P_nL - s ≤ PL ≤ 2P_nL + s`.
    pub fn report(&self, params: &SpectrumParams, constants: &Constants) -> IsomorphismReport {
        let (x, slack) = self.slack(params, constants);
        let worsts: Vec<f64> = self
            .pairs
            .iter()
            .map(|trial| {
                trial
                    .iter()
                    .map(|&(pl, pnl)| {
                        let below = (0.5 * pnl - slack) - pl;
                        let above = pl - (2.0 * pnl + slack);
                        below.max(above) / slack
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let failures = worsts.iter().filter(|&&w| w > 0.0).count();
        let trials = self.pairs.len();
        IsomorphismReport {
            trials,
            failures,
            failure_rate: failures as f64 / trials.max(1) as f64,
            x,
            slack,
            worst_excess: worsts.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Fraction of trials in which some frontier function of norm at most `r`
/// breaks `½P_nL - s ≤ PL ≤ 2P_nL + s`, with `L` the excess loss relative
/// to the best function in the ball and `s` the slack at the localization
/// threshold.
pub fn isomorphism_mc(task: &RegressionTask, r: f64, n: usize, constants: &Constants, trials: usize, seed: u64) -> Result<IsomorphismReport> {
    if trials < 100 {
        return Err(Error::param("trials", format!("need at least 100 trials, got {trials}")));
    }
    let sample = isomorphism_trials(task, r, n, trials, seed)?;
    Ok(sample.report(&SpectrumParams::from(task.spec()), constants))
}

/// Outcome of [`lemma41_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    /// Largest of `‖t - t*‖/(2r)` and `Σλ(t - t*)²/(4x)` over accepted `t`.
    pub max_ratio: f64,
    pub accepted: usize,
    pub proposals: usize,
}

/// Maximum number of proposals before rejection sampling gives up.
pub const MAX_PROPOSALS: usize = 1_000_000;

/// Samples `t` with `‖t‖ ≤ r` and excess over the best-in-ball at most `x`,
/// and checks `t - t* ∈ 2√x D ∩ 2r B`.
pub fn lemma41_check(task: &RegressionTask, r: f64, x: f64, samples: usize, seed: u64) -> Result<InclusionReport> {
    if !(x > 0.0) {
        return Err(Error::param("x", "localization level must be positive"));
    }
    let lambdas = task.spec().eigenvalues();
    let m = lambdas.len();
    let star = task.best_in_ball(r)?;
    let a = task.coefficients();
    let risk = |t: &[f64]| -> f64 {
        t.iter()
            .zip(lambdas)
            .zip(a)
            .map(|((ti, l), ai)| (l.sqrt() * ti - ai).powi(2))
            .sum()
    };
    let star_risk = risk(&star.t);
    let mut rng = rng_for(seed, &[0x41]);
    let (mut accepted, mut proposals) = (0usize, 0usize);
    let mut max_ratio: f64 = 0.0;
    let mut t = vec![0.0; m];
    while accepted < samples {
        if proposals >= MAX_PROPOSALS {
            return Err(Error::Starvation(proposals));
        }
        proposals += 1;
        let kind = proposals % 3;
        let mut dir: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= dn);
        match kind {
            // perturbation of t* along a random direction
            0 => {
                let rho = 2.0 * r * rng.gen::<f64>().powi(3);
                for j in 0..m {
                    t[j] = star.t[j] + rho * dir[j];
                }
            }
            // shrunken t* plus a small perturbation
            1 => {
                let s = rng.gen::<f64>();
                let rho = r * rng.gen::<f64>().powi(4);
                for j in 0..m {
                    t[j] = s * star.t[j] + rho * dir[j];
                }
            }
            // uniform direction with a random radius
            _ => {
                let rho = r * rng.gen::<f64>();
                for j in 0..m {
                    t[j] = rho * dir[j];
                }
            }
        }
        let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > r {
            continue;
        }
        if risk(&t) - star_risk > x {
            continue;
        }
        accepted += 1;
        let diff2: f64 = t.iter().zip(&star.t).map(|(u, v)| (u - v).powi(2)).sum();
        let weighted: f64 = t
            .iter()
            .zip(&star.t)
            .zip(lambdas)
            .map(|((u, v), l)| l * (u - v).powi(2))
            .sum();
        let ratio = if r > 0.0 { diff2.sqrt() / (2.0 * r) } else { 0.0 };
        max_ratio = max_ratio.max(ratio).max(weighted / (4.0 * x));
    }
    Ok(InclusionReport {
        max_ratio,
        accepted,
        proposals,
    })
}

/// Family member attaining the minimum in [`lemma51_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Random,
    Sparse,
    Section,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub min_ratio: f64,
    pub argmin: FamilyKind,
    pub evaluated: usize,
}

/// `E f² (‖f‖_H^p / ‖f‖_∞)^{2/(1-p)}` for `f = Σ t_i √λ_i φ_i`.
pub fn moment_ratio(spec: &EigenSpec, t: &[f64], grid: &GridEvaluator) -> Result<f64> {
    let p = spec.p();
    if p >= 1.0 {
        return Err(Error::NotApplicable("the moment ratio needs p < 1".into()));
    }
    let c: Vec<f64> = t.iter().zip(spec.eigenvalues()).map(|(ti, l)| ti * l.sqrt()).collect();
    let ef2 = dot(&c, &c);
    let h = dot(t, t).sqrt();
    let sup = grid.sup_norm(&c);
    if sup == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(ef2 * (h.powf(p) / sup).powf(2.0 / (1.0 - p)))
}

/// Minimum of [`moment_ratio`] over `m` functions: random coefficient
/// vectors with several decay profiles, sparse combinations, kernel
/// sections and the constant.
pub fn lemma51_check(spec: &EigenSpec, m: usize, seed: u64) -> Result<MomentReport> {
    if m < 100 {
        return Err(Error::param("m", format!("family size must be ≥ 100, got {m}")));
    }
    let dim = spec.n_terms();
    let top = FourierBasis::frequency(dim.saturating_sub(1));
    let grid = GridEvaluator::new(SUP_GRID.max(4 * top + 4));
    let lambdas = spec.eigenvalues();
    let members: Vec<(FamilyKind, Vec<f64>)> = (0..m)
        .map(|k| {
            let mut rng = rng_for(seed, &[0x51, k as u64]);
            let mut t = vec![0.0; dim];
            let kind = match k % 4 {
                0 => {
                    let decay = rng.gen_range(0.0..1.0);
                    for (j, tj) in t.iter_mut().enumerate() {
                        let w: f64 = rng.sample(StandardNormal);
                        *tj = w * lambdas[j].powf(decay / 2.0);
                    }
                    FamilyKind::Random
                }
                1 => {
                    let terms = rng.gen_range(1..=3usize);
                    for _ in 0..terms {
                        let j = rng.gen_range(0..dim);
                        t[j] += rng.sample::<f64, _>(StandardNormal);
                    }
                    FamilyKind::Sparse
                }
                2 => {
                    let x0: f64 = rng.gen();
                    spec.feature_into(x0, &mut t);
                    FamilyKind::Section
                }
                _ => {
                    t[0] = 1.0;
                    FamilyKind::Constant
                }
            };
            (kind, t)
        })
        .collect();
    let ratios = members
        .par_iter()
        .map(|(kind, t)| moment_ratio(spec, t, &grid).map(|v| (*kind, v)))
        .collect::<Result<Vec<_>>>()?;
    let (argmin, min_ratio) = ratios
        .iter()
        .filter(|(_, v)| v.is_finite())
        .fold((FamilyKind::Constant, f64::INFINITY), |acc, &(k, v)| if v < acc.1 { (k, v) } else { acc });
    Ok(MomentReport {
        min_ratio,
        argmin,
        evaluated: ratios.len(),
    })
}
