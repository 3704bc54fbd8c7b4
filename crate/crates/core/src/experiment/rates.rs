//! Excess-risk rates versus sample size for each regularizer.

use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::table::{fmt_f64, Table};
use crate::error::{Error, Result};
use crate::regfunc::{RegularizerKind, RegularizerSpec};
use crate::seeding::derive;
use crate::solver::{default_eta_grid, Frontier};
use crate::spectrum::EigenSpec;
use crate::stats::{loglog_fit, summarize, LineFit};
use crate::synth::{RegressionTask, SampleSet};

const RATES_KEY: u64 = 0x7261_7465;
const CALIBRATION_KEY: u64 = 0x6361_6c69;

/// Minimum fraction of completed cells per kind for a slope fit.
pub const MIN_COMPLETION: f64 = 0.8;

/// Exponent `β` with excess risk `≲ n^{-β}`, negated to match a fitted slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub name: &'static str,
    pub slope: f64,
}

/// Rate exponents for a decay `p` and smoothness `σ`.
pub fn predictions(p: f64, sigma: f64) -> Vec<Prediction> {
    let global = if sigma >= 0.5 { sigma / (1.0 + 2.0 * sigma) } else { sigma / 2.0 };
    vec![
        Prediction {
            name: "sublinear",
            slope: -2.0 * sigma / (p + 2.0 * sigma),
        },
        Prediction {
            name: "quadratic",
            slope: -(2.0 * sigma / (1.0 + p)).min(1.0 / (1.0 + p)),
        },
        Prediction {
            name: "uniform_entropy",
            slope: -global,
        },
    ]
}

/// Predicted slope of the fitted curve for a regularizer.
pub fn predicted_slope(kind: RegularizerKind, p: f64, sigma: f64) -> f64 {
    let preds = predictions(p, sigma);
    match kind {
        RegularizerKind::Sublinear | RegularizerKind::Improved => preds[0].slope,
        RegularizerKind::Quadratic => preds[1].slope,
        RegularizerKind::RidgeBaseline | RegularizerKind::Null => f64::NAN,
    }
}

/// Logarithmic factor carried by a regularizer's rate.
pub fn log_factor(kind: RegularizerKind, p: f64, n: f64) -> f64 {
    match kind {
        RegularizerKind::Sublinear | RegularizerKind::Improved => n.ln().powf(2.0 / (1.0 + p)),
        _ => 1.0,
    }
}

/// Cross-validation curve for one regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub kind: RegularizerKind,
    pub kappa1: f64,
    pub grid: Vec<(f64, f64)>,
}

struct Fold {
    frontier: Frontier,
    n_train: usize,
    held_x: Vec<f64>,
    held_y: Vec<f64>,
}

fn folds_for(spec: &Arc<EigenSpec>, sample: &SampleSet, folds: usize) -> Result<Vec<Fold>> {
    let grid = default_eta_grid();
    (0..folds)
        .map(|f| {
            let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
            for (i, (&x, &y)) in sample.xs.iter().zip(&sample.ys).enumerate() {
                if i % folds == f {
                    vx.push(x);
                    vy.push(y);
                } else {
                    tx.push(x);
                    ty.push(y);
                }
            }
            let n_train = tx.len();
            let train = SampleSet::new(tx, ty)?;
            Ok(Fold {
                frontier: Frontier::for_sample(spec.clone(), &train, &grid)?,
                n_train,
                held_x: vx,
                held_y: vy,
            })
        })
        .collect()
}

/// Chooses `κ₁` for each kind by K-fold cross-validation pooled over the
/// pilot sample sizes. Pilot samples use a seed stream disjoint from the
/// rate study.
pub fn calibrate_kappa1(cfg: &ExperimentConfig, task: &RegressionTask) -> Result<Vec<Calibration>> {
    let cal = &cfg.calibration;
    let spec = task.shared_spec();
    let grid = cal.kappa_grid();
    let u = cfg.constants.u;
    let jobs: Vec<(usize, usize)> = cal
        .pilot_n
        .iter()
        .flat_map(|&n| (0..cal.seeds).map(move |s| (n, s)))
        .collect();
    // errors[job][kind][kappa]
    let errors: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(n, s)| {
            let sample = task.draw_sample(n, derive(cfg.seed, &[CALIBRATION_KEY, n as u64, s as u64]))?;
            let folds = folds_for(&spec, &sample, cal.folds)?;
            cfg.kinds
                .iter()
                .map(|&kind| {
                    grid.iter()
                        .map(|&kappa| {
                            let mut c = cfg.constants.clone();
                            c.kappa1 = kappa;
                            let mut sq = 0.0;
                            for fold in &folds {
                                let reg = RegularizerSpec::new(kind, c.clone(), &spec, fold.n_train as f64)?;
                                let fit = fold.frontier.regularized_erm(&reg, u)?;
                                sq += fold
                                    .held_x
                                    .iter()
                                    .zip(&fold.held_y)
                                    .map(|(&x, &y)| (fit.eval(x) - y).powi(2))
                                    .sum::<f64>();
                            }
                            Ok(sq / n as f64)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cfg
        .kinds
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let curve: Vec<(f64, f64)> = grid
                .iter()
                .enumerate()
                .map(|(j, &kappa)| (kappa, errors.iter().map(|e| e[k][j]).sum::<f64>() / jobs.len() as f64))
                .collect();
            let kappa1 = if kind == RegularizerKind::Null {
                cfg.constants.kappa1
            } else {
                curve
                    .iter()
                    .fold((f64::NAN, f64::INFINITY), |acc, &(kappa, e)| if e < acc.1 { (kappa, e) } else { acc })
                    .0
            };
            Calibration { kind, kappa1, grid: curve }
        })
        .collect())
}

/// Outcome of one `(kind, n, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: RegularizerKind,
    pub n: usize,
    pub seed: usize,
    pub excess: Option<f64>,
    pub h: f64,
    pub eta: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub config_hash: String,
    pub kind: RegularizerKind,
    pub n: usize,
    pub mean_excess: f64,
    pub std_excess: f64,
    pub stderr_excess: f64,
    pub completed: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub kind: RegularizerKind,
    pub fit: Option<LineFit>,
    /// Slope after dividing the means by the kind's logarithmic factor.
    pub adjusted_slope: f64,
    pub predicted_slope: f64,
    pub completion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub config_hash: String,
    pub kappa1: Vec<(RegularizerKind, f64)>,
    pub calibration: Vec<Calibration>,
    pub cells: Vec<Cell>,
    pub rows: Vec<RateRow>,
    pub slopes: Vec<SlopeFit>,
}

impl RateResult {
    pub fn slope(&self, kind: RegularizerKind) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.kind == kind)
    }

    pub fn row(&self, kind: RegularizerKind, n: usize) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.kind == kind && r.n == n)
    }
}

/// Fits `ln(mean) = a + β ln n` over the rows of one kind after dropping
/// the first `burn_in` sizes. Rows carrying different config hashes are
/// rejected.
pub fn fit_rows(rows: &[RateRow], burn_in: usize, p: f64) -> Result<(LineFit, f64)> {
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.config_hash != first.config_hash) {
            return Err(Error::Precondition("rows from different configurations cannot be fitted together".into()));
        }
        if rows.iter().any(|r| r.kind != first.kind) {
            return Err(Error::Precondition("rows from different regularizers cannot be fitted together".into()));
        }
    }
    let used: Vec<&RateRow> = rows.iter().skip(burn_in).filter(|r| r.mean_excess > 0.0).collect();
    let ns: Vec<f64> = used.iter().map(|r| r.n as f64).collect();
    let means: Vec<f64> = used.iter().map(|r| r.mean_excess).collect();
    let fit = loglog_fit(&ns, &means)?;
    let kind = rows.first().map(|r| r.kind).unwrap_or(RegularizerKind::Null);
    let adjusted: Vec<f64> = used
        .iter()
        .map(|r| r.mean_excess / log_factor(kind, p, r.n as f64))
        .collect();
    let adj = loglog_fit(&ns, &adjusted)?;
    Ok((fit, adj.slope))
}

/// Draws one sample per `(n, seed)`, fits every regularizer on it and
/// records the exact excess risk.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<RateResult> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    pool.install(|| rates_inner(cfg))
}

fn rates_inner(cfg: &ExperimentConfig) -> Result<RateResult> {
    let hash = cfg.hash();
    let spec = cfg.build_spec()?;
    let task = cfg.build_task(spec.clone())?;
    let calibration = if cfg.calibration.enabled {
        calibrate_kappa1(cfg, &task)?
    } else {
        Vec::new()
    };
    let kappa1: Vec<(RegularizerKind, f64)> = cfg
        .kinds
        .iter()
        .map(|&k| {
            let v = calibration
                .iter()
                .find(|c| c.kind == k)
                .map_or(cfg.constants.kappa1, |c| c.kappa1);
            (k, v)
        })
        .collect();
    for (k, v) in &kappa1 {
        info!("{k}: κ₁ = {v:e}");
    }
    let grid = default_eta_grid();
    let units: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.seeds).map(move |s| (n, s)))
        .collect();
    let per_unit: Vec<Vec<Cell>> = units
        .par_iter()
        .map(|&(n, s)| {
            let fail = |kind, msg: String| Cell {
                kind,
                n,
                seed: s,
                excess: None,
                h: f64::NAN,
                eta: f64::NAN,
                error: Some(msg),
            };
            let frontier = task
                .draw_sample(n, derive(cfg.seed, &[RATES_KEY, n as u64, s as u64]))
                .and_then(|sample| Frontier::for_sample(spec.clone(), &sample, &grid));
            let frontier = match frontier {
                Ok(f) => f,
                Err(e) => {
                    warn!("cell n={n} seed={s}: {e}");
                    return cfg.kinds.iter().map(|&k| fail(k, e.to_string())).collect();
                }
            };
            kappa1
                .iter()
                .map(|&(kind, kappa)| {
                    let mut c = cfg.constants.clone();
                    c.kappa1 = kappa;
                    let fitted = RegularizerSpec::new(kind, c, &spec, n as f64)
                        .and_then(|reg| frontier.regularized_erm(&reg, cfg.constants.u))
                        .and_then(|f| task.population_risk_excess(&f.coefficients).map(|e| (f, e)));
                    match fitted {
                        Ok((f, excess)) => Cell {
                            kind,
                            n,
                            seed: s,
                            excess: Some(excess),
                            h: f.h,
                            eta: f.eta.unwrap_or(f64::INFINITY),
                            error: None,
                        },
                        Err(e) => {
                            warn!("cell {kind} n={n} seed={s}: {e}");
                            fail(kind, e.to_string())
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut cells: Vec<Cell> = per_unit.into_iter().flatten().collect();
    cells.sort_by(|a, b| (a.kind.as_str(), a.n, a.seed).cmp(&(b.kind.as_str(), b.n, b.seed)));
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &kind in &cfg.kinds {
        let mut kind_rows = Vec::new();
        let mut done = 0usize;
        for &n in &cfg.n_grid {
            let vals: Vec<f64> = cells
                .iter()
                .filter(|c| c.kind == kind && c.n == n)
                .filter_map(|c| c.excess)
                .collect();
            done += vals.len();
            let s = summarize(&vals);
            kind_rows.push(RateRow {
                config_hash: hash.clone(),
                kind,
                n,
                mean_excess: s.mean,
                std_excess: s.std,
                stderr_excess: s.stderr,
                completed: vals.len(),
                seeds: cfg.seeds,
            });
        }
        let completion = done as f64 / (cfg.seeds * cfg.n_grid.len()) as f64;
        let (fit, adjusted_slope) = if completion >= MIN_COMPLETION {
            match fit_rows(&kind_rows, cfg.burn_in, cfg.spectrum.p) {
                Ok((f, a)) => (Some(f), a),
                Err(e) => {
                    warn!("{kind}: slope fit failed: {e}");
                    (None, f64::NAN)
                }
            }
        } else {
            warn!("{kind}: only {:.0}% of cells completed, no slope", 100.0 * completion);
            (None, f64::NAN)
        };
        slopes.push(SlopeFit {
            kind,
            fit,
            adjusted_slope,
            predicted_slope: predicted_slope(kind, cfg.spectrum.p, cfg.task.sigma),
            completion,
        });
        rows.extend(kind_rows);
    }
    Ok(RateResult {
        config_hash: hash,
        kappa1,
        calibration,
        cells,
        rows,
        slopes,
    })
}

pub const RATES_HEADER: [&str; 10] = [
    "config_hash",
    "kind",
    "n",
    "mean_excess",
    "std_excess",
    "stderr_excess",
    "completed",
    "seeds",
    "kappa1",
    "predicted_slope",
];

impl RateResult {
    pub fn rates_table(&self, p: f64, sigma: f64) -> Table {
        let mut t = Table::new(&RATES_HEADER);
        for r in &self.rows {
            let kappa = self.kappa1.iter().find(|(k, _)| *k == r.kind).map_or(f64::NAN, |k| k.1);
            t.push(vec![
                r.config_hash.clone(),
                r.kind.to_string(),
                r.n.to_string(),
                fmt_f64(r.mean_excess),
                fmt_f64(r.std_excess),
                fmt_f64(r.stderr_excess),
                r.completed.to_string(),
                r.seeds.to_string(),
                fmt_f64(kappa),
                fmt_f64(predicted_slope(r.kind, p, sigma)),
            ]);
        }
        t
    }

    pub fn slopes_table(&self) -> Table {
        let mut t = Table::new(&[
            "config_hash",
            "kind",
            "slope",
            "intercept",
            "residual",
            "adjusted_slope",
            "predicted_slope",
            "completion",
        ]);
        for s in &self.slopes {
            let (slope, intercept, residual) = s.fit.map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.slope, f.intercept, f.residual));
            t.push(vec![
                self.config_hash.clone(),
                s.kind.to_string(),
                fmt_f64(slope),
                fmt_f64(intercept),
                fmt_f64(residual),
                fmt_f64(s.adjusted_slope),
                fmt_f64(s.predicted_slope),
                fmt_f64(s.completion),
            ]);
        }
        t
    }

    pub fn cells_table(&self) -> Table {
        let mut t = Table::new(&["config_hash", "kind", "n", "seed", "excess", "h", "eta", "error"]);
        for c in &self.cells {
            t.push(vec![
                self.config_hash.clone(),
                c.kind.to_string(),
                c.n.to_string(),
                c.seed.to_string(),
                fmt_f64(c.excess.unwrap_or(f64::NAN)),
                fmt_f64(c.h),
                fmt_f64(c.eta),
                c.error.clone().unwrap_or_default(),
            ]);
        }
        t
    }

    pub fn calibration_table(&self) -> Table {
        let mut t = Table::new(&["config_hash", "kind", "kappa1", "cv_error", "chosen"]);
        for c in &self.calibration {
            for &(kappa, err) in &c.grid {
                t.push(vec![
                    self.config_hash.clone(),
                    c.kind.to_string(),
                    fmt_f64(kappa),
                    fmt_f64(err),
                    (kappa == c.kappa1).to_string(),
                ]);
            }
        }
        t
    }

    /// Writes `rates.csv`, `slopes.csv`, `predictions.csv`, `cells.csv` and,
    /// when calibrated, `calibration.csv`.
    pub fn save(&self, dir: &Path, p: f64, sigma: f64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.rates_table(p, sigma).save(&dir.join("rates.csv"))?;
        self.slopes_table().save(&dir.join("slopes.csv"))?;
        self.cells_table().save(&dir.join("cells.csv"))?;
        let mut pred = Table::new(&["config_hash", "rate", "slope"]);
        for pr in predictions(p, sigma) {
            pred.push(vec![self.config_hash.clone(), pr.name.into(), fmt_f64(pr.slope)]);
        }
        pred.save(&dir.join("predictions.csv"))?;
        if !self.calibration.is_empty() {
            self.calibration_table().save(&dir.join("calibration.csv"))?;
        }
        Ok(())
    }
}
