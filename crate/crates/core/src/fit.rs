//! Ordinary least squares on a line, shared by the exponential-law fits.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
}

/// Fits `y = intercept + slope x`. Returns `None` for fewer than two points or when all
/// abscissas coincide.
///
/// When `y` is constant the coefficient of determination is taken as 1 for an exact fit.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if sxx <= (1e-14 * scale).powi(2) * nf {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let sst: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(LinearFit {
        intercept,
        slope,
        r_squared,
        residual_norm: ssr.sqrt(),
    })
}
