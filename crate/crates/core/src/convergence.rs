//! Observed convergence orders from refinement studies.

/// Least-squares slope of `ln(error)` against `ln(spacing)`.
///
/// Returns `None` with fewer than two usable levels or when any error is
/// non-positive or non-finite.
pub fn observed_order(spacings: &[f64], errors: &[f64]) -> Option<f64> {
    if spacings.len() != errors.len() || spacings.len() < 2 {
        return None;
    }
    if errors.iter().chain(spacings).any(|v| !v.is_finite() || *v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = spacings.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Order from three successive values on grids refined by `ratio`, using
/// differences so the exact limit need not be known.
pub fn richardson_order(coarse: f64, medium: f64, fine: f64, ratio: f64) -> Option<f64> {
    let num = (coarse - medium).abs();
    let den = (medium - fine).abs();
    (num > 0.0 && den > 0.0).then(|| (num / den).ln() / ratio.ln())
}
