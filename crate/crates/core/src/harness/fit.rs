use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fit of `log err = slope log eps + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in natural-log units.
    pub residual: f64,
    pub points: usize,
    /// Epsilons dropped because their error was not positive (below the
    /// floating-point floor).
    pub excluded: Vec<f64>,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut excluded = Vec::new();
    let mut xy = Vec::with_capacity(points.len());
    for &(eps, err) in points {
        if err > 0.0 && eps > 0.0 && err.is_finite() {
            xy.push((eps.ln(), err.ln()));
        } else {
            excluded.push(eps);
        }
    }
    if !excluded.is_empty() {
        log::warn!("rate fit: {} point(s) below the floor excluded", excluded.len());
    }
    if xy.len() < 2 {
        return Err(Error::TooFewPoints(xy.len()));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("rate fit needs distinct epsilons".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xy.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit { slope, intercept, residual, points: xy.len(), excluded })
}
