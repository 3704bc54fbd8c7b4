//! Experiment configuration document.

use std::f64::consts::SQRT_2;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::regfunc::{Constants, RegularizerKind};
use crate::spectrum::EigenSpec;
use crate::synth::{make_target, power_coefficients, RegressionTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub p: f64,
    pub n_terms: usize,
    pub basis_bound: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            p: 0.5,
            n_terms: 201,
            basis_bound: SQRT_2,
        }
    }
}

/// Target `f = T^σ g` with `g_i = i^{-q}` and uniform noise on `[-b, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub sigma: f64,
    pub q: f64,
    pub noise: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            sigma: 0.5,
            q: 1.0,
            noise: 0.5,
        }
    }
}

/// Cross-validated choice of `κ₁` per regularizer on pilot samples that
/// are disjoint from the rate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    pub pilot_n: Vec<usize>,
    pub seeds: usize,
    pub folds: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub per_decade: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            enabled: true,
            pilot_n: vec![256, 1024, 4096],
            seeds: 8,
            folds: 5,
            kappa_min: 1e-6,
            kappa_max: 10.0,
            per_decade: 4,
        }
    }
}

impl CalibrationConfig {
    /// Increasing log-spaced candidate values.
    pub fn kappa_grid(&self) -> Vec<f64> {
        let lo = self.kappa_min.log10();
        let hi = self.kappa_max.log10();
        let steps = ((hi - lo) * self.per_decade as f64).round() as usize;
        (0..=steps)
            .map(|k| 10f64.powf(lo + k as f64 / self.per_decade as f64))
            .collect()
    }
}

/// Parameters of the check suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub fixed_point_p: Vec<f64>,
    pub fixed_point_log2_n: (u32, u32),
    pub slope_tolerance: f64,
    /// Accepted range of `z(n)·(n/Λ)^{1/(1+p)}`.
    pub fixed_point_level: (f64, f64),
    pub lemma34_max_spread: f64,
    pub approx_sigmas: Vec<f64>,
    pub approx_octaves: u32,
    pub approx_per_octave: u32,
    pub approx_log2_r_max: u32,
    pub approx_slope_tolerance: f64,
    pub gaussian_log2_n: (u32, u32),
    pub gaussian_log10_x: (i32, i32),
    pub gaussian_max_spread: f64,
    pub draws: usize,
    pub sudakov_log2_n: (u32, u32),
    /// Truncation of the flat-regime spectrum used by the Gaussian-supremum
    /// and entropy-integral sweeps.
    pub sudakov_terms: usize,
    pub sudakov_max_drift: f64,
    pub dudley_c4: f64,
    pub dudley_exponent: (f64, f64),
    pub isomorphism_n: usize,
    pub isomorphism_r: f64,
    pub isomorphism_trials: usize,
    pub isomorphism_max_rate: f64,
    pub isomorphism_calibration_rate: f64,
    pub inclusion_r: f64,
    pub inclusion_x: f64,
    pub inclusion_samples: usize,
    pub moment_family: usize,
    pub moment_terms: (usize, usize),
    pub moment_max_drift: f64,
    pub peeling_terms: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            fixed_point_p: vec![1.0 / 3.0, 0.5, 2.0 / 3.0],
            fixed_point_log2_n: (10, 20),
            slope_tolerance: 0.03,
            fixed_point_level: (0.1, 10.0),
            lemma34_max_spread: 10.0,
            approx_sigmas: vec![0.2, 0.35],
            approx_octaves: 40,
            approx_per_octave: 8,
            approx_log2_r_max: 8,
            approx_slope_tolerance: 0.10,
            gaussian_log2_n: (6, 12),
            gaussian_log10_x: (-4, 0),
            gaussian_max_spread: 3.0,
            draws: 400,
            sudakov_log2_n: (4, 12),
            sudakov_terms: 16385,
            sudakov_max_drift: 2.0,
            dudley_c4: 1.0,
            dudley_exponent: (0.0, 1.0),
            isomorphism_n: 512,
            isomorphism_r: 2.0,
            isomorphism_trials: 200,
            isomorphism_max_rate: 0.05,
            isomorphism_calibration_rate: 0.025,
            inclusion_r: 2.0,
            inclusion_x: 1e-3,
            inclusion_samples: 2000,
            moment_family: 1000,
            moment_terms: (201, 401),
            moment_max_drift: 2.0,
            peeling_terms: 60,
        }
    }
}

/// Everything a run depends on. `output_dir` and `jobs` do not enter the
/// config hash, so outputs are identical across parallelism degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spectrum: SpectrumConfig,
    pub task: TaskConfig,
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    pub kinds: Vec<RegularizerKind>,
    pub constants: Constants,
    pub calibration: CalibrationConfig,
    /// Smallest grid values dropped from slope fits.
    pub burn_in: usize,
    pub seed: u64,
    pub checks: CheckConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spectrum: SpectrumConfig::default(),
            task: TaskConfig::default(),
            n_grid: (6..=13).map(|k| 1usize << k).collect(),
            seeds: 50,
            kinds: vec![
                RegularizerKind::Sublinear,
                RegularizerKind::Quadratic,
                RegularizerKind::Improved,
            ],
            constants: Constants::default(),
            calibration: CalibrationConfig::default(),
            burn_in: 1,
            seed: 20_240_501,
            checks: CheckConfig::default(),
            output_dir: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_grid must be strictly increasing".into());
        }
        if self.seeds < 1 {
            return bad("seeds must be at least 1".into());
        }
        if self.kinds.is_empty() {
            return bad("no regularizer kinds".into());
        }
        let smallest = self.n_grid[0];
        for k in &self.kinds {
            if (smallest as f64) < k.min_n() {
                return bad(format!("{k} needs n ≥ {}, grid starts at {smallest}", k.min_n()));
            }
        }
        if self.burn_in >= self.n_grid.len() {
            return bad("burn_in drops the whole grid".into());
        }
        if !(self.task.noise >= 0.0) || !(self.task.sigma > 0.0 && self.task.sigma <= 1.0) {
            return bad("task needs σ ∈ (0, 1] and noise ≥ 0".into());
        }
        let cal = &self.calibration;
        if cal.enabled {
            if cal.folds < 2 || cal.seeds < 1 || cal.pilot_n.is_empty() || cal.per_decade < 1 {
                return bad("calibration needs ≥ 2 folds, ≥ 1 seed, pilot sizes and a grid".into());
            }
            if !(cal.kappa_min > 0.0 && cal.kappa_max >= cal.kappa_min) {
                return bad("calibration κ range must be positive and ordered".into());
            }
            if cal.pilot_n.iter().any(|&n| n < 2 * cal.folds) {
                return bad("pilot samples too small for the fold count".into());
            }
        }
        self.constants.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.build_spec().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical document with
    /// the output directory and thread count blanked.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        canon.jobs = 0;
        let text = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn build_spec(&self) -> Result<Arc<EigenSpec>> {
        let s = &self.spectrum;
        Ok(Arc::new(EigenSpec::build(s.p, s.n_terms, s.basis_bound)?))
    }

    pub fn build_task(&self, spec: Arc<EigenSpec>) -> Result<RegressionTask> {
        let g = power_coefficients(spec.n_terms(), self.task.q);
        make_target(spec, self.task.sigma, &g)?.with_noise(self.task.noise)
    }

    /// Thread pool honoring `jobs`.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}
