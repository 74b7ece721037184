//! Small statistics helpers: least-squares fits, quantiles with censoring,
//! Wilson intervals and chi-square goodness of fit.

use statrs::function::gamma::gamma_ur;

/// Ordinary least squares `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Root mean squared residual.
    pub rms_residual: f64,
}

/// Least-squares line through `(x_i, y_i)`; `None` with fewer than two
/// distinct abscissae.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = (0..n).map(|i| (y[i] - intercept - slope * x[i]).powi(2)).sum();
    Some(LinearFit {
        intercept,
        slope,
        rms_residual: (ss / n as f64).sqrt(),
    })
}

/// Empirical quantile (type 7, linear interpolation) of data where `None`
/// stands for a censored value at +∞. Returns `None` when the quantile
/// falls among the censored values.
pub fn censored_quantile(values: &[Option<f64>], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut finite: Vec<f64> = values.iter().flatten().copied().collect();
    finite.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let get = |i: usize| finite.get(i).copied();
    let a = get(lo)?;
    let b = get(hi)?;
    Some(a + (h - lo as f64) * (b - a))
}

/// Wilson score interval for `successes` out of `trials` at normal
/// quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The interval always contains p; rounding must not break that at 0 or 1.
    let lo = if successes == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let hi = if successes == trials { 1.0 } else { (centre + half).clamp(p, 1.0) };
    (lo, hi)
}

/// Pearson chi-square statistic and its upper-tail p-value.
///
/// Cells with expected count below `min_expected` are pooled into their
/// neighbour so the asymptotic distribution applies.
pub fn chi_square_test(observed: &[u64], expected: &[f64], min_expected: f64) -> (f64, usize, f64) {
    let mut obs_pooled = Vec::new();
    let mut exp_pooled = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        o_acc += *o as f64;
        e_acc += e;
        if e_acc >= min_expected {
            obs_pooled.push(o_acc);
            exp_pooled.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let (Some(lo), Some(le)) = (obs_pooled.last_mut(), exp_pooled.last_mut()) {
            *lo += o_acc;
            *le += e_acc;
        } else {
            obs_pooled.push(o_acc);
            exp_pooled.push(e_acc);
        }
    }
    let stat: f64 = obs_pooled
        .iter()
        .zip(&exp_pooled)
        .map(|(o, e)| if *e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let df = obs_pooled.len().saturating_sub(1);
    let p = if df == 0 || stat <= 0.0 {
        1.0
    } else {
        gamma_ur(df as f64 / 2.0, stat / 2.0)
    };
    (stat, df, p)
}
