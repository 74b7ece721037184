//! Special functions and compensated summation used across the crate.

use statrs::function::gamma;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// Upper incomplete gamma `Γ(a, x) = ∫_x^∞ u^{a-1} e^{-u} du` for `a > 0`.
pub fn upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return gamma::gamma(a);
    }
    gamma::gamma_ur(a, x) * gamma::gamma(a)
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// `ln(1 - e^{-t})` for `t >= 0`, accurate at both ends.
pub fn ln_one_minus_exp_neg(t: f64) -> f64 {
    if t <= 0.0 {
        f64::NEG_INFINITY
    } else if t < std::f64::consts::LN_2 {
        (-(-t).exp_m1()).ln()
    } else {
        (-(-t).exp()).ln_1p()
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// A function `x ↦ x^{-p} Σ_j c_j (ln x)^{q_j}`, closed under differentiation.
/// Used for Euler-Maclaurin boundary terms of power-log series.
#[derive(Clone, Debug)]
pub(crate) struct PowerLogPoly {
    p: f64,
    terms: Vec<(f64, f64)>,
}

impl PowerLogPoly {
    /// `(ln x)^q x^{-p}`.
    pub(crate) fn monomial(q: f64, p: f64) -> Self {
        PowerLogPoly {
            p,
            terms: vec![(1.0, q)],
        }
    }

    pub(crate) fn derivative(&self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * 2);
        for &(c, q) in &self.terms {
            if q != 0.0 {
                terms.push((c * q, q - 1.0));
            }
            terms.push((-c * self.p, q));
        }
        PowerLogPoly {
            p: self.p + 1.0,
            terms,
        }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let l = x.ln();
        let s: f64 = self.terms.iter().map(|&(c, q)| c * l.powf(q)).sum();
        s * x.powf(-self.p)
    }
}
