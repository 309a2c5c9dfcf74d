//! Small numerical helpers shared across modules.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// `ln Σ exp(x_i)` without overflow. Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + compensated_sum(xs.iter().map(|x| (x - max).exp())).ln()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Reduce an angle into `[0, 2π)`.
pub fn fold_phase(phase: f64) -> f64 {
    phase.rem_euclid(std::f64::consts::TAU)
}

/// Indices of local maxima of `p` that exceed `floor * max(p)`.
///
/// A plateau counts once (left edge rises strictly, right edge does not rise).
pub fn local_maxima(p: &[f64], floor: f64) -> Vec<usize> {
    let peak = p.iter().copied().fold(0.0_f64, f64::max);
    let cut = floor * peak;
    let n = p.len();
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        // walk across plateaus
        let mut end = k;
        while end + 1 < n && p[end + 1] == p[k] {
            end += 1;
        }
        let left_ok = k == 0 || p[k - 1] < p[k];
        let right_ok = end + 1 == n || p[end + 1] < p[k];
        if left_ok && right_ok && p[k] > cut && p[k] > 0.0 {
            out.push(k);
        }
        k = end + 1;
    }
    out
}
