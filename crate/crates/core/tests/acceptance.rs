//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances and budgets are pinned here.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kernreg::experiment::checks::CHECKS;
use kernreg::experiment::{run_checks, run_rates, CheckReport, CheckRow, ExperimentConfig, RateResult};
use kernreg::regfunc::fixed_point_power_law;
use kernreg::solver::default_eta_grid;
use kernreg::spectrum::PowerLaw;
use kernreg::{Constants, EigenSpec, Frontier, RegularizerKind, RegularizerSpec, SampleSet};

struct Outcome {
    pass: bool,
    summary: String,
}

fn report(id: u32, title: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = outcome.pass && in_time;
    println!(
        "[{}] {id:>2} {title}: {} ({:.1} s, budget {} s{})",
        if pass { "PASS" } else { "FAIL" },
        outcome.summary,
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

/// Configuration with every quantity the criteria name set explicitly.
fn pinned_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.spectrum.p = 0.5;
    cfg.task.sigma = 0.5;
    cfg.task.noise = 0.5;
    cfg.n_grid = (6..=13).map(|k| 1usize << k).collect();
    cfg.seeds = 50;
    cfg.kinds = vec![RegularizerKind::Sublinear, RegularizerKind::Quadratic, RegularizerKind::Improved];
    cfg.jobs = 1;
    let ch = &mut cfg.checks;
    ch.fixed_point_p = vec![1.0 / 3.0, 0.5, 2.0 / 3.0];
    ch.fixed_point_log2_n = (10, 20);
    ch.approx_sigmas = vec![0.2, 0.35];
    ch.approx_log2_r_max = 8;
    ch.gaussian_log2_n = (6, 12);
    ch.gaussian_log10_x = (-4, 0);
    ch.sudakov_log2_n = (4, 12);
    ch.isomorphism_n = 512;
    ch.isomorphism_r = 2.0;
    ch.isomorphism_trials = 200;
    cfg
}

fn run_check(cfg: &ExperimentConfig, name: &str) -> Vec<CheckRow> {
    let (_, f) = CHECKS.iter().find(|(n, _)| *n == name).expect("check exists");
    let pool = cfg.pool().unwrap();
    pool.install(|| f(cfg)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn row<'a>(rows: &'a [CheckRow], name: &str) -> &'a CheckRow {
    rows.iter().find(|r| r.name == name).expect("row exists")
}

/// `Σ_{i>k} i^{-a}` for `a > 1`, summing the head exactly and the tail by
/// Euler–Maclaurin.
fn power_tail(k: u64, a: f64) -> f64 {
    const HEAD: u64 = 2000;
    let mut s = 0.0;
    let mut start = k;
    if k < HEAD {
        for i in (k + 1)..=HEAD {
            s += (i as f64).powf(-a);
        }
        start = HEAD;
    }
    let m = start as f64;
    // Σ_{i>m} f(i) = ∫_m^∞ f - f(m)/2 - f'(m)/12 + f'''(m)/720
    let f = m.powf(-a);
    let d1 = -a * m.powf(-a - 1.0);
    let d3 = -a * (a + 1.0) * (a + 2.0) * m.powf(-a - 3.0);
    s + m.powf(1.0 - a) / (a - 1.0) - f / 2.0 - d1 / 12.0 + d3 / 720.0
}

/// `Σ_{i≥1} min{x, r² i^{-1/p}}` evaluated independently of the library.
fn sum_min_oracle(p: f64, x: f64, r: f64) -> f64 {
    let a = 1.0 / p;
    // r² i^{-a} ≥ x  ⇔  i ≤ (r²/x)^p
    let mut count = ((r * r / x).powf(p)).floor() as u64;
    while count > 0 && r * r * (count as f64).powf(-a) < x {
        count -= 1;
    }
    while r * r * ((count + 1) as f64).powf(-a) >= x {
        count += 1;
    }
    count as f64 * x + r * r * power_tail(count, a)
}

/// Smallest root of `z = sqrt(Σ min{z, λ_i} / n)` by bisection.
fn fixed_point_oracle(p: f64, n: f64) -> f64 {
    let g = |z: f64| z - (sum_min_oracle(p, z, 1.0) / n).sqrt();
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    assert!(g(lo) < 0.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_fixed_point() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_match: f64 = 0.0;
    let mut parts = Vec::new();
    for &p in &[1.0 / 3.0, 0.5, 2.0 / 3.0] {
        let law = PowerLaw::new(p).unwrap();
        let ns: Vec<f64> = (10..=20).map(|k| 2f64.powi(k)).collect();
        let zs: Vec<f64> = ns.iter().map(|&n| fixed_point_power_law(&law, n, 1.0).unwrap()).collect();
        for (&n, &z) in ns.iter().zip(&zs) {
            worst_match = worst_match.max((z / fixed_point_oracle(p, n) - 1.0).abs());
        }
        let lx: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
        let ly: Vec<f64> = zs.iter().map(|z| z.ln()).collect();
        let slope = ols_slope(&lx, &ly);
        let dev = slope + 1.0 / (1.0 + p);
        worst = worst.max(dev.abs());
        parts.push(format!("p={p:.3} slope {slope:.4}"));
    }
    Outcome {
        pass: worst <= 0.03 && worst_match <= 1e-6,
        summary: format!(
            "{}; worst |slope + 1/(1+p)| = {worst:.4} (≤ 0.03), fixed point vs oracle {worst_match:.1e} (≤ 1e-6)",
            parts.join(", ")
        ),
    }
}

fn criterion_sum_min_ratio() -> Outcome {
    let p = 0.5;
    let law = PowerLaw::new(p).unwrap();
    let mut ratios = Vec::new();
    let mut worst_match: f64 = 0.0;
    for i in 0..=60 {
        for j in 0..=30 {
            let x = 10f64.powf(-6.0 + 6.0 * i as f64 / 60.0);
            let r = 10f64.powf(3.0 * j as f64 / 30.0);
            // λ₁ = 1 and Λ = 1 for the untruncated law
            if x > r * r {
                continue;
            }
            let oracle = sum_min_oracle(p, x, r);
            worst_match = worst_match.max((law.sum_min(x, r) / oracle - 1.0).abs());
            ratios.push(oracle / (x.powf(1.0 - p) * r.powf(2.0 * p)));
        }
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: max / min <= 10.0 && worst_match <= 1e-9,
        summary: format!(
            "max/min = {:.3} (≤ 10) over {} points, library vs oracle {worst_match:.1e}",
            max / min,
            ratios.len()
        ),
    }
}

fn criterion_approximation(rows: &[CheckRow]) -> Outcome {
    let bound = row(rows, "approximation_bound");
    let slope = row(rows, "approximation_slope");
    Outcome {
        pass: bound.value <= 1.0 && slope.value <= 0.10,
        summary: format!(
            "max A(r-1)/bound = {:.3e} (≤ 1), worst relative slope error {:.4} (≤ 0.10); {}",
            bound.value, slope.value, slope.detail
        ),
    }
}

fn phi(i: usize, x: f64) -> f64 {
    if i == 0 {
        return 1.0;
    }
    let k = ((i + 1) / 2) as f64;
    if i % 2 == 1 {
        SQRT_2 * (2.0 * PI * k * x).cos()
    } else {
        SQRT_2 * (2.0 * PI * k * x).sin()
    }
}

/// Brute-force minimum of `L̂(f) + κ₁ R(‖f‖_H)` over `f = Σ w_j √λ_j φ_j`:
/// nested grids over boxes of shrinking size, then pattern search from the
/// best grid points.
fn brute_force(lambdas: &[f64], xs: &[f64], ys: &[f64], objective: &dyn Fn(f64, f64) -> f64) -> f64 {
    let dim = lambdas.len();
    let design: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| (0..dim).map(|j| lambdas[j].sqrt() * phi(j, x)).collect())
        .collect();
    let value = |w: &[f64]| {
        let loss = design
            .iter()
            .zip(ys)
            .map(|(row, y)| (row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - y).powi(2))
            .sum::<f64>()
            / ys.len() as f64;
        let h = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        objective(h, loss)
    };
    let zero = vec![0.0; dim];
    let j0 = value(&zero);
    let mut box_size = 1.0;
    while objective(box_size, 0.0) <= j0 && box_size < 1e8 {
        box_size *= 2.0;
    }
    let per_dim = 41usize;
    let mut candidates: Vec<(f64, Vec<f64>)> = vec![(j0, zero)];
    let mut scale = box_size;
    while scale > box_size * 1e-5 {
        let total = per_dim.pow(dim as u32);
        for idx in 0..total {
            let mut w = vec![0.0; dim];
            let mut rem = idx;
            for wj in w.iter_mut() {
                *wj = -scale + 2.0 * scale * (rem % per_dim) as f64 / (per_dim - 1) as f64;
                rem /= per_dim;
            }
            candidates.push((value(&w), w));
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        candidates.truncate(30);
        scale /= 4.0;
    }
    let mut best = f64::INFINITY;
    for (start_value, start) in candidates {
        let mut w = start;
        let mut v = start_value;
        let mut step = box_size / 20.0;
        while step > 1e-14 * (1.0 + w.iter().map(|x| x.abs()).fold(0.0, f64::max)) {
            let mut moved = false;
            for j in 0..dim {
                for sign in [1.0, -1.0] {
                    let mut trial = w.clone();
                    trial[j] += sign * step;
                    let tv = value(&trial);
                    if tv < v {
                        w = trial;
                        v = tv;
                        moved = true;
                    }
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        best = best.min(v);
    }
    best
}

fn criterion_solver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let kinds = [
        RegularizerKind::Sublinear,
        RegularizerKind::Improved,
        RegularizerKind::Quadratic,
        RegularizerKind::RidgeBaseline,
    ];
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut nonzero = 0;
    while instances < 50 {
        let n_terms = rng.gen_range(1..=3usize);
        let n = rng.gen_range(1..=4usize);
        let kind = kinds[rng.gen_range(0..kinds.len())];
        if (n as f64) < kind.min_n() {
            continue;
        }
        let p = [1.0 / 3.0, 0.5, 2.0 / 3.0][rng.gen_range(0..3)];
        let kappa = 10f64.powf(rng.gen_range(-3.0..0.0));
        let xs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = Arc::new(EigenSpec::build(p, n_terms, SQRT_2).unwrap());
        let constants = Constants {
            kappa1: kappa,
            ..Constants::default()
        };
        let u = constants.u;
        let reg = RegularizerSpec::new(kind, constants, &spec, n as f64).unwrap();
        let objective = |h: f64, loss: f64| loss + kappa * reg.evaluate(h, u);
        let sample = SampleSet::new(xs.clone(), ys.clone()).unwrap();
        let frontier = Frontier::for_sample(spec.clone(), &sample, &default_eta_grid()).unwrap();
        let fit = frontier.regularized_erm(&reg, u).unwrap();
        let loss = xs.iter().zip(&ys).map(|(&x, &y)| (fit.eval(x) - y).powi(2)).sum::<f64>() / n as f64;
        let ours = objective(fit.h, loss);
        let brute = brute_force(spec.eigenvalues(), &xs, &ys, &objective);
        worst = worst.max((ours - brute).abs() / brute.abs().max(1e-300));
        if fit.h > 0.0 {
            nonzero += 1;
        }
        instances += 1;
    }
    Outcome {
        pass: worst <= 1e-6,
        summary: format!(
            "{instances} instances ({nonzero} with a non-zero minimizer), worst relative objective gap {worst:.2e} (≤ 1e-6)"
        ),
    }
}

fn criterion_rates(result: &RateResult) -> Outcome {
    let slope = result
        .slope(RegularizerKind::Sublinear)
        .and_then(|s| s.fit.as_ref())
        .map_or(f64::NAN, |f| f.slope);
    let sub = result.row(RegularizerKind::Sublinear, 8192).map_or(f64::NAN, |r| r.mean_excess);
    let quad = result.row(RegularizerKind::Quadratic, 8192).map_or(f64::NAN, |r| r.mean_excess);
    Outcome {
        pass: (-0.80..=-0.55).contains(&slope) && sub <= quad,
        summary: format!(
            "sublinear slope {slope:.4} (in [-0.80, -0.55]); mean excess at n=8192 sublinear {sub:.4e} ≤ quadratic {quad:.4e}"
        ),
    }
}

fn criterion_gaussian(rows: &[CheckRow]) -> Outcome {
    let r = row(rows, "gaussian_complexity_spread");
    Outcome {
        pass: r.value <= 3.0,
        summary: format!("ratio max/min {:.4} (≤ 3); {}", r.value, r.detail),
    }
}

fn criterion_slepian(rows: &[CheckRow]) -> Outcome {
    let r = row(rows, "slepian_constant_drift");
    Outcome {
        pass: r.value <= 2.0,
        summary: format!("c2 max/min {:.4} (≤ 2); {}", r.value, r.detail),
    }
}

fn criterion_dudley(rows: &[CheckRow]) -> Outcome {
    let r = row(rows, "dudley_log_exponent");
    Outcome {
        pass: (0.0..=1.0).contains(&r.value),
        summary: format!("ln-n exponent of bound/(Q ln n) {:.4} (in [0, 1]); {}", r.value, r.detail),
    }
}

fn criterion_isomorphism(rows: &[CheckRow]) -> Outcome {
    let r = row(rows, "isomorphism_failure_rate");
    Outcome {
        pass: r.value <= 0.05,
        summary: format!("failure rate {:.3} (≤ 0.05); {}", r.value, r.detail),
    }
}

fn criterion_inclusion_moment(inclusion: &[CheckRow], moment: &[CheckRow]) -> Outcome {
    let inc = row(inclusion, "inclusion_ratio");
    let mom = row(moment, "moment_ratio");
    Outcome {
        pass: inc.value <= 1.0 && mom.pass,
        summary: format!(
            "max inclusion ratio {:.4} (≤ 1); moment ratio drift {:.4} (≤ 2), {}",
            inc.value, mom.value, mom.detail
        ),
    }
}

fn rate_bytes(result: &RateResult, cfg: &ExperimentConfig) -> Vec<String> {
    vec![
        result.rates_table(cfg.spectrum.p, cfg.task.sigma).to_string().unwrap(),
        result.slopes_table().to_string().unwrap(),
        result.cells_table().to_string().unwrap(),
        result.calibration_table().to_string().unwrap(),
    ]
}

fn main() -> ExitCode {
    let cfg = pinned_config();
    let mut all = true;
    let mut check_rows: Vec<CheckRow> = Vec::new();
    let mut keep = |rows: Vec<CheckRow>| {
        check_rows.extend(rows.iter().cloned());
        rows
    };

    all &= report(1, "fixed-point scaling", Duration::from_secs(5), criterion_fixed_point);
    all &= report(2, "sum-min ratio", Duration::from_secs(5), criterion_sum_min_ratio);
    all &= report(3, "approximation error", Duration::from_secs(10), || {
        criterion_approximation(&keep(run_check(&cfg, "approximation")))
    });
    all &= report(4, "solver oracle equivalence", Duration::from_secs(60), criterion_solver_oracle);
    let mut rates = None;
    all &= report(5, "rate reproduction", Duration::from_secs(600), || {
        let r = run_rates(&cfg).expect("rates run");
        let out = criterion_rates(&r);
        rates = Some(r);
        out
    });
    all &= report(6, "localized Gaussian complexity", Duration::from_secs(120), || {
        criterion_gaussian(&keep(run_check(&cfg, "gaussian_complexity_spread")))
    });
    let mut sup = Vec::new();
    all &= report(7, "Gaussian supremum constant", Duration::from_secs(120), || {
        sup = keep(run_check(&cfg, "supremum"));
        criterion_slepian(&sup)
    });
    all &= report(8, "entropy-integral bound", Duration::from_secs(120), || criterion_dudley(&sup));
    all &= report(9, "isomorphism Monte Carlo", Duration::from_secs(300), || {
        criterion_isomorphism(&keep(run_check(&cfg, "isomorphism_failure_rate")))
    });
    all &= report(10, "inclusion and moment ratios", Duration::from_secs(60), || {
        let inc = keep(run_check(&cfg, "inclusion_ratio"));
        let mom = keep(run_check(&cfg, "moment_ratio"));
        criterion_inclusion_moment(&inc, &mom)
    });
    for name in ["fixed_point", "lemma34_spread", "peeling_domination", "solver_consistency"] {
        keep(run_check(&cfg, name));
    }
    all &= report(11, "determinism", Duration::from_secs(600), || {
        let order: Vec<&str> = CHECKS.iter().map(|(n, _)| *n).collect();
        let mut rows = Vec::new();
        for name in &order {
            rows.extend(run_check(&cfg, name));
        }
        let first = CheckReport {
            config_hash: cfg.hash(),
            rows,
        };
        let mut wide = cfg.clone();
        wide.jobs = 8;
        let second = run_checks(&wide).expect("checks run");
        let checks_equal = first.table().to_string().unwrap() == second.table().to_string().unwrap();
        let rates_first = rates.as_ref().expect("rates from criterion 5");
        let rates_second = run_rates(&wide).expect("rates run");
        let rates_equal = rate_bytes(rates_first, &cfg) == rate_bytes(&rates_second, &wide);
        Outcome {
            pass: checks_equal && rates_equal,
            summary: format!(
                "checks CSV identical jobs 1 vs 8: {checks_equal}; rates CSVs identical jobs 1 vs 8: {rates_equal}"
            ),
        }
    });
    let failed: Vec<&CheckRow> = check_rows.iter().filter(|r| !r.pass).collect();
    println!(
        "check rows evaluated: {}, failing: {}",
        check_rows.len(),
        if failed.is_empty() {
            "none".to_string()
        } else {
            failed.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ")
        }
    );
    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
