//! Merge kernel λ_{n,k}, per-state coalescence rates and the functionals
//! Φ_Λ(n), Φ_μ(n).
//!
//! λ_{n,k} = ∫ x^{k-2}(1-x)^{n-k} Λ(dx) is evaluated in `t = ln(1/x)` as
//! `exp(φ_max) ∫ exp(φ(t) - φ_max) dt`, with panels centred on the mode of
//! φ, so values far below `f64::MIN_POSITIVE` before scaling are harmless.
//! Row sums for large `n` use the closed binomial identities instead of
//! `n - 1` separate integrals.

use std::num::NonZeroUsize;
use std::sync::{Arc, LazyLock};

use lru::LruCache;
use parking_lot::Mutex;
use rayon::prelude::*;

use crate::error::{EfcError, Result};
use crate::measures::{t_max, CoagulationMeasure, SplittingMeasure};
use crate::quad::{self, QuadOptions};
use crate::special::{ln_choose, ln_one_minus_exp_neg, CompensatedSum};

/// Above this `n`, row totals and Φ_Λ switch from direct summation to the
/// integral identities.
pub const N_DIRECT: u64 = 512;

/// Target relative accuracy of a single λ_{n,k}.
const LAMBDA_REL_TOL: f64 = 1e-12;

/// Log-scale window kept around the mode of the integrand.
const LOG_WINDOW: f64 = 50.0;

/// How a row total or Φ_Λ was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumMethod {
    DirectSum,
    IntegralIdentity,
}

/// The coalescence row of state `n`.
#[derive(Clone, Debug)]
pub struct RateTable {
    pub n: u64,
    /// Entry `k - 2` is `C(n,k) λ_{n,k}`, for `k = 2..=n`.
    pub per_k_rates: Arc<Vec<f64>>,
    pub total_coag: f64,
    pub method: SumMethod,
}

impl RateTable {
    /// `C(n,k) λ_{n,k}`, or 0 outside `2..=n`.
    pub fn rate(&self, k: u64) -> f64 {
        if k < 2 || k > self.n {
            return 0.0;
        }
        self.per_k_rates[(k - 2) as usize]
    }
}

fn check_nk(n: u64, k: u64) -> Result<()> {
    if k < 2 || k > n {
        return Err(EfcError::domain(format!("need 2 <= k <= n, got n={n}, k={k}")));
    }
    Ok(())
}

/// Maximizes a unimodal `f` on `[a, b]`; returns the argmax.
fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a) <= 1e-9 * (1.0 + c.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Point in `[lo, hi]` where `f` crosses `level`, given `f(inside) >= level`
/// at the `inside` end. Coarse: only used to place panels.
fn crossing<F: Fn(f64) -> f64>(f: &F, level: f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..40 {
        let mid = 0.5 * (inside + outside);
        if f(mid) >= level {
            inside = mid;
        } else {
            outside = mid;
        }
        if (inside - outside).abs() < 1e-6 * (1.0 + inside.abs()) {
            break;
        }
    }
    0.5 * (inside + outside)
}

/// `ln λ_{n,k}`; `-inf` when the kernel vanishes.
pub fn ln_lambda_nk(lam: &CoagulationMeasure, n: u64, k: u64) -> Result<f64> {
    check_nk(n, k)?;
    if lam.is_zero() {
        return Ok(f64::NEG_INFINITY);
    }
    let a = (k - 1) as f64;
    let b = (n - k) as f64;
    let phi = |t: f64| {
        let mut v = -a * t + lam.ln_density_t(t);
        if b > 0.0 {
            v += b * ln_one_minus_exp_neg(t);
        }
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let tm = t_max();
    let t_mode = golden_max(&phi, 0.0, tm);
    let phi_max = phi(t_mode);
    if !phi_max.is_finite() {
        return Err(EfcError::QuadratureFailure {
            context: format!("no finite mode for lambda_{{{n},{k}}}"),
            error: f64::NAN,
            tolerance: LAMBDA_REL_TOL,
        });
    }
    let level = phi_max - LOG_WINDOW;
    let t_lo = if phi(1e-300) >= level || t_mode == 0.0 {
        0.0
    } else {
        crossing(&phi, level, t_mode, 0.0)
    };
    let t_hi = if phi(tm) >= level {
        tm
    } else {
        crossing(&phi, level, t_mode, tm)
    };
    let mut cand = vec![t_lo, 0.5 * (t_lo + t_mode), t_mode, 0.5 * (t_mode + t_hi), t_hi];
    cand.extend(lam.breakpoints_t());
    let pts = quad::breakpoints(0.0, tm, cand);
    let r = quad::integrate_points(
        |t| {
            let v = (phi(t) - phi_max).exp();
            if v == 0.0 {
                0.0
            } else {
                v * lam.rough_factor_t(t)
            }
        },
        &pts,
        QuadOptions {
            abs_tol: 1e-300,
            rel_tol: LAMBDA_REL_TOL,
            max_segments: 2000,
        },
    )
    .map_err(|e| match e {
        EfcError::QuadratureFailure { context, error, tolerance } => EfcError::QuadratureFailure {
            context: format!("lambda_{{{n},{k}}}: {context}"),
            error,
            tolerance,
        },
        other => other,
    })?;
    let mut ln_val = phi_max + r.value.ln();
    if k == 2 {
        // (1-x)^{n-2} ≈ 1 on (0, X_MIN).
        let sliver = lam.sliver_mass();
        if sliver > 0.0 {
            ln_val = if ln_val.is_finite() {
                ln_val + (sliver * (-ln_val).exp()).ln_1p()
            } else {
                sliver.ln()
            };
        }
    }
    Ok(ln_val)
}

/// λ_{n,k} = ∫ x^{k-2}(1-x)^{n-k} Λ(dx).
pub fn lambda_nk(lam: &CoagulationMeasure, n: u64, k: u64) -> Result<f64> {
    Ok(ln_lambda_nk(lam, n, k)?.exp())
}

/// `C(n,k) λ_{n,k}`, the rate of the jump `n → n - k + 1`.
pub fn coag_rate_nk(lam: &CoagulationMeasure, n: u64, k: u64) -> Result<f64> {
    Ok((ln_choose(n, k) + ln_lambda_nk(lam, n, k)?).exp())
}

static ROW_CACHE: LazyLock<Mutex<LruCache<(u64, u64), Arc<Vec<f64>>>>> =
    LazyLock::new(|| Mutex::new(LruCache::new(NonZeroUsize::new(256).expect("nonzero"))));

/// Rows at least this long are computed on the rayon pool.
const PARALLEL_ROW_MIN: u64 = 256;

fn compute_row(lam: &CoagulationMeasure, n: u64, parallel: bool) -> Result<Vec<f64>> {
    if n < 2 {
        return Ok(Vec::new());
    }
    // ln C(n,k) by compensated additive recurrence.
    let mut ln_c = Vec::with_capacity((n - 1) as usize);
    let mut acc = CompensatedSum::new();
    acc.add(((n * (n - 1)) as f64 / 2.0).ln());
    ln_c.push(acc.value());
    for k in 2..n {
        acc.add(((n - k) as f64).ln() - ((k + 1) as f64).ln());
        ln_c.push(acc.value());
    }
    let one = |k: u64| -> Result<f64> {
        Ok((ln_c[(k - 2) as usize] + ln_lambda_nk(lam, n, k)?).exp())
    };
    if lam.is_zero() {
        return Ok(vec![0.0; (n - 1) as usize]);
    }
    if parallel && n >= PARALLEL_ROW_MIN {
        (2..=n).into_par_iter().map(one).collect()
    } else {
        (2..=n).map(one).collect()
    }
}

/// Row `[C(n,k) λ_{n,k}]_{k=2..n}`, memoized per (measure, n).
///
/// Concurrent callers may compute the same row twice; values are
/// deterministic so the last insert wins harmlessly.
pub fn coag_row(lam: &CoagulationMeasure, n: u64) -> Result<Arc<Vec<f64>>> {
    coag_row_impl(lam, n, true)
}

/// Like [`coag_row`] but never uses the thread pool. For callers already
/// running inside pool tasks.
pub fn coag_row_sequential(lam: &CoagulationMeasure, n: u64) -> Result<Arc<Vec<f64>>> {
    coag_row_impl(lam, n, false)
}

fn coag_row_impl(lam: &CoagulationMeasure, n: u64, parallel: bool) -> Result<Arc<Vec<f64>>> {
    let key = (lam.fingerprint(), n);
    if let Some(row) = ROW_CACHE.lock().get(&key) {
        return Ok(row.clone());
    }
    let row = Arc::new(compute_row(lam, n, parallel)?);
    ROW_CACHE.lock().put(key, row.clone());
    Ok(row)
}

/// Direct-summation rate table for state `n >= 2`.
pub fn rate_table(lam: &CoagulationMeasure, n: u64) -> Result<RateTable> {
    if n < 2 {
        return Err(EfcError::domain(format!("rate table needs n >= 2, got {n}")));
    }
    let row = coag_row(lam, n)?;
    let total_coag = row.iter().rev().copied().collect::<CompensatedSum>().value();
    Ok(RateTable {
        n,
        per_k_rates: row,
        total_coag,
        method: SumMethod::DirectSum,
    })
}

#[derive(Clone, Copy)]
enum Identity {
    /// `Σ C(n,k) x^k (1-x)^{n-k}` over k >= 2.
    Total,
    /// `Σ C(n,k) x^k (1-x)^{n-k} (k-1)` over k >= 2.
    Phi,
}

/// `H(x) = Σ_{k>=2} C(n,k) x^k (1-x)^{n-k} w(k)`, stable for all `x`.
fn identity_kernel(kind: Identity, n: f64, x: f64) -> f64 {
    let nx = n * x;
    if nx < 0.5 {
        // H = Σ_{j>=2} c_j C(n,j) (-x)^j with c_j = 1 (Phi) or j-1 (Total).
        let mut term = n * (n - 1.0) / 2.0 * x * x;
        let mut sum = term;
        let mut j = 2.0;
        while j < n {
            term *= -(n - j) / (j + 1.0) * x;
            let c = match kind {
                Identity::Phi => 1.0,
                Identity::Total => j,
            };
            let add = c * term;
            sum += add;
            if add.abs() <= 1e-17 * sum.abs() {
                break;
            }
            j += 1.0;
        }
        sum
    } else {
        let l1p = (-x).ln_1p();
        let pow_n = (n * l1p).exp();
        match kind {
            Identity::Phi => nx - 1.0 + pow_n,
            Identity::Total => {
                let pow_n1 = ((n - 1.0) * l1p).exp();
                1.0 - pow_n - nx * pow_n1
            }
        }
    }
}

/// `P(Bin(n, x) >= 2) = 1 - (1-x)^n - n x (1-x)^{n-1}`, stable for small `nx`.
pub(crate) fn binomial_at_least_two(n: f64, x: f64) -> f64 {
    identity_kernel(Identity::Total, n, x)
}

fn identity_integral(lam: &CoagulationMeasure, n: u64, kind: Identity) -> Result<f64> {
    if n < 2 || lam.is_zero() {
        return Ok(0.0);
    }
    let nf = n as f64;
    let tm = t_max();
    let ln_n = nf.ln();
    let mut cand: Vec<f64> = [-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|o| ln_n + o)
        .collect();
    cand.push(1.0);
    cand.extend(lam.breakpoints_t());
    let pts = quad::breakpoints(0.0, tm, cand);
    let r = quad::integrate_points(
        |t| {
            let x = (-t).exp();
            let d = lam.density_t(t);
            if d == 0.0 {
                0.0
            } else {
                identity_kernel(kind, nf, x) / x * d
            }
        },
        &pts,
        QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-13,
            max_segments: 4000,
        },
    )?;
    // H(x) ≈ C(n,2) x² on (0, X_MIN) for both kernels.
    Ok(r.value + nf * (nf - 1.0) / 2.0 * lam.sliver_mass())
}

/// `Σ_{k=2}^n C(n,k) λ_{n,k}`, the total merge rate from `n`; 0 for `n <= 1`.
/// Direct summation up to [`N_DIRECT`], integral identity beyond.
pub fn total_coag_rate(lam: &CoagulationMeasure, n: u64) -> Result<f64> {
    let method = if n <= N_DIRECT {
        SumMethod::DirectSum
    } else {
        SumMethod::IntegralIdentity
    };
    total_coag_rate_by(lam, n, method)
}

pub fn total_coag_rate_by(lam: &CoagulationMeasure, n: u64, method: SumMethod) -> Result<f64> {
    if n <= 1 {
        return Ok(0.0);
    }
    match method {
        SumMethod::DirectSum => Ok(rate_table(lam, n)?.total_coag),
        SumMethod::IntegralIdentity => identity_integral(lam, n, Identity::Total),
    }
}

/// Φ_Λ(n) = Σ_{k=2}^n C(n,k) λ_{n,k} (k-1).
pub fn phi_lambda(lam: &CoagulationMeasure, n: u64) -> Result<f64> {
    let method = if n <= N_DIRECT {
        SumMethod::DirectSum
    } else {
        SumMethod::IntegralIdentity
    };
    phi_lambda_by(lam, n, method)
}

pub fn phi_lambda_by(lam: &CoagulationMeasure, n: u64, method: SumMethod) -> Result<f64> {
    if n < 2 {
        return Err(EfcError::domain(format!("phi_lambda needs n >= 2, got {n}")));
    }
    match method {
        SumMethod::DirectSum => {
            let row = coag_row(lam, n)?;
            let s: CompensatedSum = row
                .iter()
                .enumerate()
                .rev()
                .map(|(i, r)| r * (i + 1) as f64)
                .collect();
            Ok(s.value())
        }
        SumMethod::IntegralIdentity => identity_integral(lam, n, Identity::Phi),
    }
}

/// Φ_μ(n) = n Σ_{k=1}^n k μ(k).
pub fn phi_mu(mu: &SplittingMeasure, n: u64) -> f64 {
    n as f64 * mu.first_moment_upto(n)
}

/// `Σ C(n,k) λ_{n,k} (k-1)²` via `Λ[0,1) n(n-1) - Φ_Λ(n)`.
pub fn phi_lambda_second_moment(lam: &CoagulationMeasure, n: u64) -> Result<f64> {
    if n < 2 {
        return Err(EfcError::domain(format!("second moment needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    Ok(lam.total()? * nf * (nf - 1.0) - phi_lambda(lam, n)?)
}

/// Same quantity by direct summation of the row.
pub fn phi_lambda_second_moment_direct(lam: &CoagulationMeasure, n: u64) -> Result<f64> {
    let row = rate_table(lam, n)?;
    let s: CompensatedSum = row
        .per_k_rates
        .iter()
        .enumerate()
        .map(|(i, r)| r * ((i + 1) as f64).powi(2))
        .collect();
    Ok(s.value())
}

/// `Σ_{k=⌊δn⌋+1}^{n} C(n,k) λ_{n,k}`.
pub fn tail_coag_rate(lam: &CoagulationMeasure, n: u64, delta: f64) -> Result<f64> {
    if n < 2 {
        return Err(EfcError::domain(format!("tail rate needs n >= 2, got {n}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EfcError::domain(format!("delta must lie in (0,1), got {delta}")));
    }
    let first = ((delta * n as f64).floor() as u64 + 1).max(2);
    if first > n {
        return Ok(0.0);
    }
    let mut s = CompensatedSum::new();
    for k in (first..=n).rev() {
        s.add(coag_rate_nk(lam, n, k)?);
    }
    Ok(s.value())
}
