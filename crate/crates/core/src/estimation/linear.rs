use crate::error::{Error, Result};

/// Ordinary least-squares line with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_slope: f64,
    pub std_intercept: f64,
}

/// Fits `y = slope x + intercept` to at least three points.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::domain("xs and ys differ in length"));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::domain(format!("linear fit needs at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let scale = xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if !(sxx > (1e-13 * scale).powi(2) * nf) {
        return Err(Error::DegenerateFit("rank deficient: all x values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let s2 = ssr / (nf - 2.0);
    Ok(LinearFit {
        slope,
        intercept,
        std_slope: (s2 / sxx).sqrt(),
        std_intercept: (s2 * (1.0 / nf + x_mean * x_mean / sxx)).sqrt(),
    })
}
