//! Complexity sweeps over the sample size: localized Gaussian complexity
//! against its closed-form scale, and the Gaussian supremum over the sampled
//! ellipsoid together with the entropy-integral bound.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::table::{fmt_f64, Table};
use crate::complexity::{complexity_scale, dudley_gamma2_bound, localized_gaussian_complexity_many, McConfig};
use crate::error::{Error, Result};
use crate::seeding::{derive, rng_for};
use crate::spectrum::EigenSpec;

const GAUSSIAN_KEY: u64 = 0x6761_7573;
const SUP_KEY: u64 = 0x7375_7072;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRow {
    pub n: usize,
    pub x: f64,
    pub r: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// `((1/n) Σ min{x, r²λ_i})^{1/2}`.
    pub scale: f64,
    pub ratio: f64,
}

/// Localized Gaussian complexity at `r = 1` over the configured `n` and `x`
/// grids, on the configured spectrum.
pub fn gaussian_sweep(cfg: &ExperimentConfig) -> Result<Vec<GaussianRow>> {
    let ch = &cfg.checks;
    let spec = cfg.build_spec()?;
    let r = 1.0;
    let levels: Vec<(f64, f64)> = (ch.gaussian_log10_x.0..=ch.gaussian_log10_x.1)
        .map(|e| (10f64.powi(e), r))
        .collect();
    let mut rows = Vec::new();
    for k in ch.gaussian_log2_n.0..=ch.gaussian_log2_n.1 {
        let n = 1usize << k;
        let mc = McConfig::new(ch.draws, derive(cfg.seed, &[GAUSSIAN_KEY]))?;
        let est = localized_gaussian_complexity_many(&spec, n, &levels, &mc)?;
        for (e, &(x, r)) in est.iter().zip(&levels) {
            let scale = complexity_scale(&spec, n, x, r);
            rows.push(GaussianRow {
                n,
                x,
                r,
                estimate: e.mean,
                stderr: e.stderr,
                scale,
                ratio: e.mean / scale,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupRow {
    pub n: usize,
    pub x: f64,
    pub mean_sup: f64,
    pub stderr: f64,
    /// `max_i ‖T X_i‖`.
    pub diameter: f64,
    /// `E‖G‖_Ē / (√ln n · max_i ‖T X_i‖)`.
    pub c2: f64,
    pub q: f64,
    pub eps0: f64,
    pub bound: f64,
    /// `bound / (Q ln n)`.
    pub dudley_ratio: f64,
}

/// Spectrum for the supremum sweep: the configured decay with
/// `sudakov_terms` terms, localized at `x = λ_N` so every axis of the
/// ellipsoid is active.
pub fn sup_spectrum(cfg: &ExperimentConfig) -> Result<(EigenSpec, f64)> {
    let spec = EigenSpec::build(cfg.spectrum.p, cfg.checks.sudakov_terms, cfg.spectrum.basis_bound)?;
    let x = *spec
        .eigenvalues()
        .last()
        .ok_or_else(|| Error::Config("empty supremum spectrum".into()))?;
    Ok((spec, x))
}

/// Gaussian supremum and entropy integral over `n = 2^a, …, 2^b` uniform
/// design points.
pub fn sup_sweep(cfg: &ExperimentConfig) -> Result<Vec<SupRow>> {
    let ch = &cfg.checks;
    let (spec, x) = sup_spectrum(cfg)?;
    let r = 1.0;
    let mut rows = Vec::new();
    for k in ch.sudakov_log2_n.0..=ch.sudakov_log2_n.1 {
        let n = 1usize << k;
        let mut rng = rng_for(cfg.seed, &[SUP_KEY, n as u64]);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let mc = McConfig::new(ch.draws, derive(cfg.seed, &[SUP_KEY]))?;
        let d = dudley_gamma2_bound(&spec, &xs, x, r, ch.dudley_c4, &mc)?;
        let ln_n = (n as f64).ln();
        rows.push(SupRow {
            n,
            x,
            mean_sup: d.mean_sup.mean,
            stderr: d.mean_sup.stderr,
            diameter: d.diameter,
            c2: d.mean_sup.mean / (ln_n.sqrt() * d.diameter),
            q: d.q,
            eps0: d.eps0,
            bound: d.bound,
            dudley_ratio: d.bound / (d.q * ln_n),
        });
    }
    Ok(rows)
}

pub fn gaussian_table(hash: &str, rows: &[GaussianRow]) -> Table {
    let mut t = Table::new(&["config_hash", "n", "x", "r", "estimate", "stderr", "scale", "ratio"]);
    for r in rows {
        t.push(vec![
            hash.into(),
            r.n.to_string(),
            fmt_f64(r.x),
            fmt_f64(r.r),
            fmt_f64(r.estimate),
            fmt_f64(r.stderr),
            fmt_f64(r.scale),
            fmt_f64(r.ratio),
        ]);
    }
    t
}

pub fn sup_table(hash: &str, rows: &[SupRow]) -> Table {
    let mut t = Table::new(&[
        "config_hash",
        "n",
        "x",
        "mean_sup",
        "stderr",
        "diameter",
        "c2",
        "q",
        "eps0",
        "bound",
        "dudley_ratio",
    ]);
    for r in rows {
        t.push(vec![
            hash.into(),
            r.n.to_string(),
            fmt_f64(r.x),
            fmt_f64(r.mean_sup),
            fmt_f64(r.stderr),
            fmt_f64(r.diameter),
            fmt_f64(r.c2),
            fmt_f64(r.q),
            fmt_f64(r.eps0),
            fmt_f64(r.bound),
            fmt_f64(r.dudley_ratio),
        ]);
    }
    t
}

/// Runs both sweeps and writes `gaussian.csv` and `supremum.csv`.
pub fn run_complexity(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<GaussianRow>, Vec<SupRow>)> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    let (g, s) = pool.install(|| -> Result<_> { Ok((gaussian_sweep(cfg)?, sup_sweep(cfg)?)) })?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = cfg.hash();
    gaussian_table(&hash, &g).save(&dir.join("gaussian.csv"))?;
    sup_table(&hash, &s).save(&dir.join("supremum.csv"))?;
    Ok((g, s))
}
