//! The check suite: one pass/fail row per property.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sweep::{gaussian_sweep, sup_sweep};
use super::table::{fmt_f64, Table};
use crate::complexity::{isomorphism_trials, lemma41_check, lemma51_check};
use crate::error::{Error, Result};
use crate::regfunc::{fixed_point_power_law, peeling_constant, peeling_sum, phi_tilde, SpectrumParams};
use crate::seeding::derive;
use crate::spectrum::{EigenSpec, PowerLaw};
use crate::stats::{loglog_fit, spread};
use crate::synth::SparseTarget;

const ISO_CAL_KEY: u64 = 0x6973_6f63;
const ISO_TEST_KEY: u64 = 0x6973_6f74;
const INCLUSION_KEY: u64 = 0x696e_636c;
const MOMENT_KEY: u64 = 0x6d6f_6d74;

/// One row of the check table: `value` must lie in `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckRow {
    fn within(name: &str, value: f64, lower: f64, upper: f64, detail: String) -> Self {
        CheckRow {
            name: name.into(),
            value,
            lower,
            upper,
            pass: value >= lower && value <= upper,
            detail,
        }
    }

    fn crashed(name: &str, e: &Error) -> Self {
        CheckRow {
            name: name.into(),
            value: f64::NAN,
            lower: f64::NAN,
            upper: f64::NAN,
            pass: false,
            detail: format!("error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub config_hash: String,
    pub rows: Vec<CheckRow>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["config_hash", "check", "value", "lower", "upper", "pass", "detail"]);
        for r in &self.rows {
            t.push(vec![
                self.config_hash.clone(),
                r.name.clone(),
                fmt_f64(r.value),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                r.pass.to_string(),
                r.detail.clone(),
            ]);
        }
        t
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.table().save(&dir.join("checks.csv"))
    }
}

type CheckFn = fn(&ExperimentConfig) -> Result<Vec<CheckRow>>;

/// Every check in table order.
pub const CHECKS: [(&str, CheckFn); 10] = [
    ("fixed_point", check_fixed_point),
    ("lemma34_spread", check_lemma34),
    ("approximation", check_approximation),
    ("gaussian_complexity_spread", check_gaussian),
    ("supremum", check_supremum),
    ("inclusion_ratio", check_inclusion),
    ("moment_ratio", check_moment),
    ("peeling_domination", check_peeling),
    ("isomorphism_failure_rate", check_isomorphism),
    ("solver_consistency", check_solver),
];

/// Runs the suite; a check that errors is recorded as a failure.
pub fn run_checks(cfg: &ExperimentConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let rows = pool.install(|| {
        CHECKS
            .iter()
            .flat_map(|(name, f)| match f(cfg) {
                Ok(rows) => rows,
                Err(e) => {
                    warn!("check {name} failed to run: {e}");
                    vec![CheckRow::crashed(name, &e)]
                }
            })
            .collect()
    });
    Ok(CheckReport {
        config_hash: cfg.hash(),
        rows,
    })
}

fn fixed_point_slope_and_level(cfg: &ExperimentConfig, p: f64) -> Result<(f64, f64, f64)> {
    let law = PowerLaw::new(p)?;
    let (a, b) = cfg.checks.fixed_point_log2_n;
    let ns: Vec<f64> = (a..=b).map(|k| 2f64.powi(k as i32)).collect();
    let zs = ns
        .iter()
        .map(|&n| fixed_point_power_law(&law, n, cfg.constants.c_tilde))
        .collect::<Result<Vec<_>>>()?;
    let fit = loglog_fit(&ns, &zs)?;
    let levels: Vec<f64> = ns
        .iter()
        .zip(&zs)
        .map(|(n, z)| z * (n / law.weak_norm()).powf(1.0 / (1.0 + p)))
        .collect();
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((fit.slope + 1.0 / (1.0 + p), lo, hi))
}

/// Slope of the fixed point against `n`, and its level against the
/// closed form `(Λ/n)^{1/(1+p)}`.
fn check_fixed_point(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let ch = &cfg.checks;
    let mut worst = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut detail = Vec::new();
    for &p in &ch.fixed_point_p {
        let (dev, l, h) = fixed_point_slope_and_level(cfg, p)?;
        worst = worst.max(dev.abs());
        lo = lo.min(l);
        hi = hi.max(h);
        detail.push(format!("p={p:.4}: slope error {dev:+.4}, level [{l:.4e}, {h:.4e}]"));
    }
    let band = ch.fixed_point_level;
    let mut level = CheckRow::within("fixed_point_level", lo, band.0, band.1, detail.join("; "));
    level.pass = lo >= band.0 && hi <= band.1;
    Ok(vec![
        CheckRow::within("fixed_point_slope", worst, 0.0, ch.slope_tolerance, detail.join("; ")),
        level,
    ])
}

fn check_lemma34(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let law = PowerLaw::new(cfg.spectrum.p)?;
    let p = law.p();
    let mut ratios = Vec::new();
    for i in 0..=60 {
        for j in 0..=30 {
            let x = 10f64.powf(-6.0 + 6.0 * i as f64 / 60.0);
            let r = 10f64.powf(3.0 * j as f64 / 30.0);
            if x > r * r * law.eigenvalue(1) {
                continue;
            }
            ratios.push(law.sum_min(x, r) / (law.weak_norm() * x.powf(1.0 - p) * r.powf(2.0 * p)));
        }
    }
    let s = spread(&ratios);
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(vec![CheckRow::within(
        "lemma34_spread",
        s,
        1.0,
        cfg.checks.lemma34_max_spread,
        format!("{} grid points, largest ratio {max:.4}", ratios.len()),
    )])
}

/// `A(r - 1)` against its bound for every radius, and the slope of `A(r)`
/// on the upper half of the radius grid.
fn check_approximation(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let ch = &cfg.checks;
    let mut worst_ratio = 0.0f64;
    let mut worst_slope = 0.0f64;
    let mut detail = Vec::new();
    for &sigma in &ch.approx_sigmas {
        let target = SparseTarget::geometric(cfg.spectrum.p, sigma, ch.approx_octaves, ch.approx_per_octave)?;
        let radii: Vec<f64> = (0..=ch.approx_log2_r_max).map(|k| 2f64.powi(k as i32)).collect();
        for &r in &radii {
            match target.check_approx_bound(r) {
                Ok((lhs, rhs)) => worst_ratio = worst_ratio.max(lhs / rhs),
                Err(Error::BoundViolated { lhs, rhs, .. }) => worst_ratio = worst_ratio.max(lhs / rhs),
                Err(e) => return Err(e),
            }
        }
        let half = radii.len() / 2;
        let upper = &radii[half..];
        let errs = upper
            .iter()
            .map(|&r| target.best_in_ball(r).map(|b| b.excess))
            .collect::<Result<Vec<_>>>()?;
        let slope = loglog_fit(upper, &errs)?.slope;
        let predicted = -4.0 * sigma / (1.0 - 2.0 * sigma);
        let rel = (slope - predicted).abs() / predicted.abs();
        worst_slope = worst_slope.max(rel);
        detail.push(format!("σ={sigma}: slope {slope:.4} vs {predicted:.4}"));
    }
    Ok(vec![
        CheckRow::within(
            "approximation_bound",
            worst_ratio,
            0.0,
            1.0,
            "largest A(r-1)/bound".into(),
        ),
        CheckRow::within(
            "approximation_slope",
            worst_slope,
            0.0,
            ch.approx_slope_tolerance,
            detail.join("; "),
        ),
    ])
}

fn check_gaussian(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let rows = gaussian_sweep(cfg)?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(vec![CheckRow::within(
        "gaussian_complexity_spread",
        spread(&ratios),
        1.0,
        cfg.checks.gaussian_max_spread,
        format!("estimate/scale in [{lo:.4}, {hi:.4}] over {} cells", rows.len()),
    )])
}

/// Drift of the fitted Gaussian-supremum constant and growth exponent of
/// the entropy-integral ratio in `ln n`.
fn check_supremum(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let ch = &cfg.checks;
    let rows = sup_sweep(cfg)?;
    let c2: Vec<f64> = rows.iter().map(|r| r.c2).collect();
    let ln_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ratio: Vec<f64> = rows.iter().map(|r| r.dudley_ratio).collect();
    let exponent = loglog_fit(&ln_n, &ratio)?.slope;
    let max_ratio = ratio.iter().cloned().fold(0.0, f64::max);
    Ok(vec![
        CheckRow::within(
            "slepian_constant_drift",
            spread(&c2),
            1.0,
            ch.sudakov_max_drift,
            format!(
                "c2 in [{:.4}, {:.4}], N = {}",
                c2.iter().cloned().fold(f64::INFINITY, f64::min),
                c2.iter().cloned().fold(0.0, f64::max),
                ch.sudakov_terms
            ),
        ),
        CheckRow::within(
            "dudley_log_exponent",
            exponent,
            ch.dudley_exponent.0,
            ch.dudley_exponent.1,
            format!("bound/(Q ln n) at most {max_ratio:.4}"),
        ),
    ])
}

fn check_inclusion(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let ch = &cfg.checks;
    let spec = cfg.build_spec()?;
    let task = cfg.build_task(spec)?;
    let rep = lemma41_check(&task, ch.inclusion_r, ch.inclusion_x, ch.inclusion_samples, derive(cfg.seed, &[INCLUSION_KEY]))?;
    Ok(vec![CheckRow::within(
        "inclusion_ratio",
        rep.max_ratio,
        0.0,
        1.0,
        format!("{} accepted of {} proposals", rep.accepted, rep.proposals),
    )])
}

/// Minimum moment ratio on the function family, positive and stable when
/// the truncation is doubled.
fn check_moment(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let ch = &cfg.checks;
    let seed = derive(cfg.seed, &[MOMENT_KEY]);
    let (a, b) = ch.moment_terms;
    let sa = EigenSpec::build(cfg.spectrum.p, a, cfg.spectrum.basis_bound)?;
    let sb = EigenSpec::build(cfg.spectrum.p, b, cfg.spectrum.basis_bound)?;
    let ra = lemma51_check(&sa, ch.moment_family, seed)?;
    let rb = lemma51_check(&sb, ch.moment_family, seed)?;
    let drift = spread(&[ra.min_ratio, rb.min_ratio]);
    let mut row = CheckRow::within(
        "moment_ratio",
        drift,
        1.0,
        ch.moment_max_drift,
        format!(
            "min ratio {:.4e} (N={a}, {:?}) and {:.4e} (N={b}, {:?})",
            ra.min_ratio, ra.argmin, rb.min_ratio, rb.argmin
        ),
    );
    row.pass &= ra.min_ratio > 0.0 && rb.min_ratio > 0.0;
    Ok(vec![row])
}

fn check_peeling(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let sp = SpectrumParams {
        p: cfg.spectrum.p,
        weak_norm: 1.0,
        basis_bound: cfg.spectrum.basis_bound,
    };
    let c = &cfg.constants;
    let k = peeling_constant(sp.p);
    let mut worst = 0.0f64;
    for &n in &[64.0, 1024.0, 65536.0] {
        for i in 0..=12 {
            let x = 10f64.powf(-8.0 + i as f64 * 0.5);
            for &r in &[1.0, 4.0, 32.0] {
                let total = peeling_sum(x, r, n, 0.0, &sp, c, cfg.checks.peeling_terms);
                let head = phi_tilde(x, r, n, 0.0, &sp, c);
                if head > 0.0 {
                    worst = worst.max(total / (k * head));
                }
            }
        }
    }
    Ok(vec![CheckRow::within(
        "peeling_domination",
        worst,
        0.0,
        1.0,
        format!("largest sum/({k:.4}·φ̃)"),
    )])
}

/// Calibrates a common multiplier of the threshold and confidence
/// constants on one set of trials, then reports the failure rate on a
/// disjoint set.
fn check_isomorphism(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let ch = &cfg.checks;
    let spec = cfg.build_spec()?;
    let params = SpectrumParams::from(spec.as_ref());
    let task = cfg.build_task(spec)?;
    let cal = isomorphism_trials(&task, ch.isomorphism_r, ch.isomorphism_n, ch.isomorphism_trials, derive(cfg.seed, &[ISO_CAL_KEY]))?;
    let mut chosen = None;
    for k in -20..=20 {
        let m = 2f64.powi(k);
        let mut c = cfg.constants.clone();
        c.c_threshold *= m;
        c.c_y *= m;
        if cal.report(&params, &c).failure_rate <= ch.isomorphism_calibration_rate {
            chosen = Some((m, c));
            break;
        }
    }
    let (m, c) = chosen.ok_or_else(|| Error::Precondition("no multiplier in 2^-20..2^20 meets the calibration rate".into()))?;
    let test = isomorphism_trials(&task, ch.isomorphism_r, ch.isomorphism_n, ch.isomorphism_trials, derive(cfg.seed, &[ISO_TEST_KEY]))?;
    let rep = test.report(&params, &c);
    Ok(vec![CheckRow::within(
        "isomorphism_failure_rate",
        rep.failure_rate,
        0.0,
        ch.isomorphism_max_rate,
        format!(
            "multiplier {m:e}, {}/{} failures, slack {:.4e}",
            rep.failures, rep.trials, rep.slack
        ),
    )])
}

/// Re-evaluates the empirical loss of regularized fits from their
/// coefficients and compares with the stored frontier value.
fn check_solver(cfg: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    use crate::regfunc::{RegularizerKind, RegularizerSpec};
    use crate::solver::{default_eta_grid, Frontier};
    let spec = cfg.build_spec()?;
    let task = cfg.build_task(spec.clone())?;
    let mut worst = 0.0f64;
    for (s, &n) in [64usize, 512].iter().enumerate() {
        let sample = task.draw_sample(n, derive(cfg.seed, &[0x736f_6c76, s as u64]))?;
        let frontier = Frontier::for_sample(spec.clone(), &sample, &default_eta_grid())?;
        for kind in RegularizerKind::ALL {
            let reg = RegularizerSpec::new(kind, cfg.constants.clone(), &spec, n as f64)?;
            let fit = frontier.regularized_erm(&reg, cfg.constants.u)?;
            let loss = sample
                .xs
                .iter()
                .zip(&sample.ys)
                .map(|(&x, &y)| (fit.eval(x) - y).powi(2))
                .sum::<f64>()
                / n as f64;
            let scale = sample.ys.iter().map(|y| y * y).sum::<f64>() / n as f64;
            worst = worst.max((loss - fit.loss).abs() / scale);
        }
    }
    Ok(vec![CheckRow::within(
        "solver_consistency",
        worst,
        0.0,
        1e-10,
        "gap between stored and re-evaluated empirical loss, relative to mean squared response".into(),
    )])
}
