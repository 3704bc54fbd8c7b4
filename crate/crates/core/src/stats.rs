//! Small descriptive-statistics helpers: means, standard errors and
//! least-squares line fits on log-log data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Precondition(format!(
            "fit_line: {} abscissae vs {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Precondition("fit_line needs at least two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("fit_line: non-finite input".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("fit_line: abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        residual: (sse / n).sqrt(),
    })
}

/// Fit of `ln y` against `ln x`; all values must be positive.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return Err(Error::Precondition("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 for a single value).
    pub std: f64,
    pub stderr: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let count = values.len();
    if count == 0 {
        return Summary {
            mean: f64::NAN,
            std: f64::NAN,
            stderr: f64::NAN,
            count,
        };
    }
    let n = count as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if count > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary {
        mean,
        std,
        stderr: std / n.sqrt(),
        count,
    }
}

/// `max / min` of a set of positive values.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law_slope() {
        let ns: Vec<f64> = (6..14).map(|k| 2f64.powi(k)).collect();
        let ys: Vec<f64> = ns.iter().map(|n| 3.5 * n.powf(-0.6180339887)).collect();
        let fit = loglog_fit(&ns, &ys).unwrap();
        assert!((fit.slope + 0.6180339887).abs() < 1e-10);
        assert!((fit.intercept - 3.5f64.ln()).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0], &[2.0]).is_err());
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(loglog_fit(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        let s = summarize(&[2.0]);
        assert_eq!((s.mean, s.std), (2.0, 0.0));
    }

    proptest! {
        #[test]
        fn recovers_power_law(beta in 0.01f64..3.0, c in 0.01f64..100.0) {
            let ns: Vec<f64> = (4..12).map(|k| 2f64.powi(k)).collect();
            let ys: Vec<f64> = ns.iter().map(|n| c * n.powf(-beta)).collect();
            let fit = loglog_fit(&ns, &ys).unwrap();
            prop_assert!((fit.slope + beta).abs() < 1e-10);
        }
    }
}
