//! Regularization functionals, complexity thresholds and fixed points.
//!
//! Every unnamed constant is carried in [`Constants`]; all logarithms are
//! natural. Sample sizes are accepted as reals so the functionals can be
//! probed at non-integer `n`.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{check_spectrum, EigenSpec, PowerLaw};

/// Constants left unnamed by the theory. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    /// Fixed-point constant `c̃`.
    pub c_tilde: f64,
    /// Decay-dependent constant `c_p` (quadratic regularizer, `Q̃`).
    pub c_p: f64,
    /// Entropy constant `c'_p` (in `Ũ`, and in the improved θ-shift).
    pub c_p_prime: f64,
    /// Target-dependent constant `c_Y`.
    pub c_y: f64,
    /// `c'_Y` in the quadratic θ-shift.
    pub c_y_prime: f64,
    /// `c_{p,Y}` in the localization threshold.
    pub c_threshold: f64,
    /// Front constant of the improved regularizer.
    pub c_improved: f64,
    /// Front constant `c₃` of the sublinear regularizer.
    pub c3: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    /// Confidence parameter.
    pub u: f64,
    /// Penalty of the plain ridge baseline `η·‖f‖²`.
    pub ridge_eta: f64,
    /// Lower end `c₁` of the admissible range `c₁ ln ln n ≤ u`.
    pub u_min_factor: f64,
    /// Upper end `c₂` of the admissible range `u ≤ c₂ (ln n)^{2/(1-p)}`.
    pub u_max_factor: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            c_tilde: 1.0,
            c_p: 1.0,
            c_p_prime: 1.0,
            c_y: 1.0,
            c_y_prime: 1.0,
            c_threshold: 1.0,
            c_improved: 1.0,
            c3: 1.0,
            kappa1: 1.0,
            kappa2: 1.0,
            kappa3: 1.0,
            u: 1.0,
            ridge_eta: 1.0,
            u_min_factor: 1.0,
            u_max_factor: 1.0,
        }
    }
}

impl Constants {
    fn fields(&self) -> [(&'static str, f64); 15] {
        [
            ("c_tilde", self.c_tilde),
            ("c_p", self.c_p),
            ("c_p_prime", self.c_p_prime),
            ("c_y", self.c_y),
            ("c_y_prime", self.c_y_prime),
            ("c_threshold", self.c_threshold),
            ("c_improved", self.c_improved),
            ("c3", self.c3),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("kappa3", self.kappa3),
            ("u", self.u),
            ("ridge_eta", self.ridge_eta),
            ("u_min_factor", self.u_min_factor),
            ("u_max_factor", self.u_max_factor),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.fields() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("constant must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Compact `name=value` rendering used in CSV rows.
    pub fn describe(&self) -> String {
        self.fields()
            .iter()
            .map(|(k, v)| format!("{k}={v:e}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// The spectral scalars the functionals depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub p: f64,
    /// Weak-`ℓ_p` norm `Λ`.
    pub weak_norm: f64,
    /// Eigenfunction sup-norm bound `A`.
    pub basis_bound: f64,
}

impl From<&EigenSpec> for SpectrumParams {
    fn from(spec: &EigenSpec) -> Self {
        SpectrumParams {
            p: spec.p(),
            weak_norm: spec.weak_norm(),
            basis_bound: spec.basis_bound(),
        }
    }
}

/// Smallest `z > 0` with `z ≥ c̃ ((1/n) Σ min{z, λ_i})^{1/2}`.
///
/// `g(z)/√z` is increasing, so the sign change of `g` is unique; it is
/// located by bisection to relative tolerance `1e-9`.
pub fn fixed_point_z(lambdas: &[f64], n: f64, c_tilde: f64) -> Result<f64> {
    check_spectrum(lambdas)?;
    if !(n >= 1.0) {
        return Err(Error::param("n", format!("sample size must be ≥ 1, got {n}")));
    }
    if !(c_tilde > 0.0) {
        return Err(Error::param("c_tilde", "must be positive"));
    }
    let mut suffix = vec![0.0; lambdas.len() + 1];
    for i in (0..lambdas.len()).rev() {
        suffix[i] = suffix[i + 1] + lambdas[i];
    }
    let sum_min = |z: f64| {
        let k = lambdas.partition_point(|&l| l > z);
        z * k as f64 + suffix[k]
    };
    Ok(solve_fixed_point(sum_min, lambdas.first().copied().unwrap_or(0.0), suffix[0], n, c_tilde))
}

/// [`fixed_point_z`] on a spec's stored spectrum.
pub fn fixed_point_for(spec: &EigenSpec, n: f64, c_tilde: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(Error::param("n", format!("sample size must be ≥ 1, got {n}")));
    }
    if !(c_tilde > 0.0) {
        return Err(Error::param("c_tilde", "must be positive"));
    }
    Ok(solve_fixed_point(
        |z| spec.sum_min(z, 1.0),
        spec.eigenvalues()[0],
        spec.trace(),
        n,
        c_tilde,
    ))
}

/// [`fixed_point_z`] on the untruncated power law `λ_i = i^{-1/p}`.
pub fn fixed_point_power_law(law: &PowerLaw, n: f64, c_tilde: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(Error::param("n", format!("sample size must be ≥ 1, got {n}")));
    }
    if !(c_tilde > 0.0) {
        return Err(Error::param("c_tilde", "must be positive"));
    }
    Ok(solve_fixed_point(|z| law.sum_min(z, 1.0), 1.0, law.trace(), n, c_tilde))
}

fn solve_fixed_point(sum_min: impl Fn(f64) -> f64, top: f64, total: f64, n: f64, c: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let g = |z: f64| z - c * (sum_min(z) / n).sqrt();
    let mut hi = top.max(c * (total / n).sqrt());
    let mut lo = 0.0;
    debug_assert!(g(hi) >= 0.0);
    for _ in 0..400 {
        if hi - lo <= 1e-9 * hi * 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `Σ_i min{x, r²λ_i}`.
pub fn sum_min(x: f64, r: f64, lambdas: &[f64]) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let r2 = r * r;
    lambdas.iter().map(|&l| x.min(r2 * l)).sum()
}

/// `Σ min{x, r²λ_i} / (Λ x^{1-p} r^{2p})`; bounded above by a constant that
/// depends only on `p`.
pub fn lemma34_ratio(x: f64, r: f64, spec: &EigenSpec) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::param("x", "must be positive"));
    }
    if r < 0.0 {
        return Err(Error::param("r", "must be nonnegative"));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let p = spec.p();
    Ok(spec.sum_min(x, r) / (spec.weak_norm() * x.powf(1.0 - p) * r.powf(2.0 * p)))
}

/// `Q(x, r) = A (Σ min{x, r²λ_i})^{1/2}`.
pub fn q_fn(x: f64, r: f64, spec: &EigenSpec) -> f64 {
    spec.basis_bound() * spec.sum_min(x, r).sqrt()
}

/// `Θ = A Λ^{1/2} r^p ln n / √n`.
pub fn theta(r: f64, n: f64, sp: &SpectrumParams) -> f64 {
    sp.basis_bound * sp.weak_norm.sqrt() * r.powf(sp.p) * n.ln() / n.sqrt()
}

/// Localization level `c · max{Θ^{2/(1+p)}, Θ^{2/p}}`.
pub fn threshold_x(r: f64, n: f64, sp: &SpectrumParams, c: f64) -> f64 {
    threshold_from_theta(theta(r, n, sp), sp.p, c)
}

pub fn threshold_from_theta(th: f64, p: f64, c: f64) -> f64 {
    c * th.powf(2.0 / (1.0 + p)).max(th.powf(2.0 / p))
}

/// Quadratic regularizer `c_p r² (Λ/n)^{1/(1+p)} + c_Y (1 + r²) u / n`.
pub fn rho_quadratic(r: f64, u: f64, n: f64, sp: &SpectrumParams, c: &Constants) -> f64 {
    let r2 = r * r;
    c.c_p * r2 * (sp.weak_norm / n).powf(1.0 / (1.0 + sp.p)) + c.c_y * (1.0 + r2) * u / n
}

/// Improved regularizer
/// `c (1 + u) max{r^{2p/(1+p)} (ln n)^{2/(1+p)} n^{-1/(1+p)}, r²/n}`.
pub fn rho_improved(r: f64, u: f64, n: f64, sp: &SpectrumParams, c: &Constants) -> f64 {
    let p = sp.p;
    let e = 1.0 / (1.0 + p);
    let lead = r.powf(2.0 * p * e) * n.ln().powf(2.0 * e) * n.powf(-e);
    c.c_improved * (1.0 + u) * lead.max(r * r / n)
}

/// Sublinear regularizer
/// `c₃ (1 + u + c_Y ln n + ln ln(h + e)) ((h + 1)^p ln n / √n)^{2/(1+p)}`.
pub fn v_tilde(h: f64, u: f64, n: f64, p: f64, c: &Constants) -> f64 {
    let front = 1.0 + u + c.c_y * n.ln() + (h + E).ln().ln();
    let core = (h + 1.0).powf(p) * n.ln() / n.sqrt();
    c.c3 * front * core.powf(2.0 / (1.0 + p))
}

/// `θ(r, x) = x + ln(π²/6) + 2 ln(1 + pl1/rho1 + ln r)`.
pub fn theta_shift(r: f64, x: f64, pl1: f64, rho1: f64) -> Result<f64> {
    if !(rho1 > 0.0) {
        return Err(Error::param("rho1", format!("must be positive, got {rho1}")));
    }
    Ok(x + (PI * PI / 6.0).ln() + 2.0 * (1.0 + pl1 / rho1 + r.ln()).ln())
}

/// `φ̃(x, r) = (Ũ/√n) max{√x, √EL*, Ũ/√n}` with `Ũ = c'_p Q̃ ln n` and
/// `Q̃ = (c_p A² Λ x^{1-p} r^{2p})^{1/2}`.
pub fn phi_tilde(
    x: f64,
    r: f64,
    n: f64,
    el_star: f64,
    sp: &SpectrumParams,
    c: &Constants,
) -> f64 {
    let q = (c.c_p
        * sp.basis_bound
        * sp.basis_bound
        * sp.weak_norm
        * x.powf(1.0 - sp.p)
        * r.powf(2.0 * sp.p))
    .sqrt();
    let u = c.c_p_prime * q * n.ln() / n.sqrt();
    u * x.sqrt().max(el_star.sqrt()).max(u)
}

/// Closed-form domination constant for the peeling sum
/// `Σ_i 2^{-i} φ̃(2^{i+1}x) ≤ 2^{1-p/2} / (1 - 2^{-p/2}) · φ̃(x)`.
pub fn peeling_constant(p: f64) -> f64 {
    2f64.powf(1.0 - p / 2.0) / (1.0 - 2f64.powf(-p / 2.0))
}

/// `Σ_{i=0}^{terms-1} 2^{-i} φ̃(2^{i+1}x)`.
pub fn peeling_sum(
    x: f64,
    r: f64,
    n: f64,
    el_star: f64,
    sp: &SpectrumParams,
    c: &Constants,
    terms: usize,
) -> f64 {
    (0..terms)
        .map(|i| 2f64.powi(-(i as i32)) * phi_tilde(2f64.powi(i as i32 + 1) * x, r, n, el_star, sp, c))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    Quadratic,
    Improved,
    Sublinear,
    RidgeBaseline,
    Null,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 5] = [
        RegularizerKind::Sublinear,
        RegularizerKind::Improved,
        RegularizerKind::Quadratic,
        RegularizerKind::RidgeBaseline,
        RegularizerKind::Null,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegularizerKind::Quadratic => "quadratic",
            RegularizerKind::Improved => "improved",
            RegularizerKind::Sublinear => "sublinear",
            RegularizerKind::RidgeBaseline => "ridge_baseline",
            RegularizerKind::Null => "null",
        }
    }

    /// Smallest sample size at which the functional is defined.
    pub fn min_n(self) -> f64 {
        match self {
            RegularizerKind::Sublinear => 3.0,
            RegularizerKind::Improved => 2.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param("kind", format!("unknown regularizer `{s}`")))
    }
}

/// A regularization functional bound to a spectrum and sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub constants: Constants,
    pub spectrum: SpectrumParams,
    pub n: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, constants: Constants, spec: &EigenSpec, n: f64) -> Result<Self> {
        Self::from_params(kind, constants, SpectrumParams::from(spec), n)
    }

    pub fn from_params(
        kind: RegularizerKind,
        constants: Constants,
        spectrum: SpectrumParams,
        n: f64,
    ) -> Result<Self> {
        constants.validate()?;
        if !(n >= kind.min_n()) {
            return Err(Error::param(
                "n",
                format!("{kind} regularizer needs n ≥ {}, got {n}", kind.min_n()),
            ));
        }
        Ok(RegularizerSpec {
            kind,
            constants,
            spectrum,
            n,
        })
    }

    /// Value of the penalty at a function of H-norm `h`, with the hierarchy
    /// index `r(f) = h + 1`. The quadratic and improved functionals are
    /// evaluated at `2r` with the θ-shifted confidence level.
    pub fn evaluate(&self, h: f64, u: f64) -> f64 {
        let c = &self.constants;
        let sp = &self.spectrum;
        let n = self.n;
        let r = h + 1.0;
        let shifted = |c_prime: f64| u + (PI * PI / 6.0).ln() + 2.0 * (1.0 + c_prime * n + r.ln()).ln();
        match self.kind {
            RegularizerKind::Null => 0.0,
            RegularizerKind::RidgeBaseline => c.ridge_eta * h * h,
            RegularizerKind::Quadratic => rho_quadratic(2.0 * r, shifted(c.c_y_prime), n, sp, c),
            RegularizerKind::Improved => rho_improved(2.0 * r, shifted(c.c_p_prime), n, sp, c),
            RegularizerKind::Sublinear => v_tilde(h, u, n, sp.p, c),
        }
    }

    /// Warning text when `u` lies outside `[c₁ ln ln n, c₂ (ln n)^{2/(1-p)}]`.
    pub fn confidence_range_warning(&self, u: f64) -> Option<String> {
        let c = &self.constants;
        let ln_n = self.n.ln();
        let lo = c.u_min_factor * ln_n.ln().max(0.0);
        let hi = if self.spectrum.p < 1.0 {
            c.u_max_factor * ln_n.powf(2.0 / (1.0 - self.spectrum.p))
        } else {
            f64::INFINITY
        };
        (u < lo || u > hi).then(|| format!("u = {u} outside the admissible range [{lo}, {hi}]"))
    }
}

/// Evaluates the named regularizer; see [`RegularizerSpec::evaluate`].
pub fn evaluate_regularizer(spec: &RegularizerSpec, h: f64, u: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::param("h", format!("H-norm must be nonnegative, got {h}")));
    }
    Ok(spec.evaluate(h, u))
}
