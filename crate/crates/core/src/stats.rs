/// Ordinary least squares `y ≈ slope·x + intercept` with coefficient of
/// determination. Returns `None` for fewer than two points or zero spread in x.
pub(crate) fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some((slope, my - slope * mx, r2))
}

#[cfg(test)]
mod tests {
    #[test]
    fn exact_line() {
        let (s, c, r2) = super::ols(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
        assert!(super::ols(&[1.0, 1.0], &[0.0, 2.0]).is_none());
    }
}
