//! Coagulation measure Λ on [0,1) and splitting measure μ on the positive
//! integers, with the truncation μ ↦ μ_m.
//!
//! Λ is always absolutely continuous. Internally every density is evaluated
//! in the variable `t = ln(1/x)`, which maps (0,1) onto (0,∞) and turns the
//! log-power singularity at 0 into a polynomial factor.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::OnceLock;

use statrs::function::beta as sbeta;

use crate::error::{EfcError, Result};
use crate::quad::{self, QuadOptions};
use crate::special::{ln_one_minus_exp_neg, upper_gamma, CompensatedSum, PowerLogPoly};

/// Smallest `x` resolved by quadrature. Mass of Λ on (0, X_MIN) is handled
/// analytically.
pub const X_MIN: f64 = 1e-18;

/// `ln(1/X_MIN)`, the upper end of every `t`-integral.
pub fn t_max() -> f64 {
    -X_MIN.ln()
}

/// Default cutoff for the direct part of `μ(ℕ₊)`.
pub const DEFAULT_TAIL_CUTOFF: u64 = 10_000_000;

/// Parametric family of a coagulation measure.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaFamily {
    /// Density `c (ln 1/x)^{β-1}`.
    LogPower { c: f64, beta: f64 },
    /// Density `scale · x^{a-1}(1-x)^{b-1} / B(a,b)`.
    BetaDensity { a: f64, b: f64, scale: f64 },
    /// Constant density `scale`; `scale = 0` is the zero measure.
    Uniform { scale: f64 },
    /// Piecewise-linear density through `(grid[i], values[i])`, constant
    /// outside the grid.
    TabulatedDensity { grid: Vec<f64>, values: Vec<f64> },
}

impl LambdaFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LambdaFamily::LogPower { .. } => "log_power",
            LambdaFamily::BetaDensity { .. } => "beta",
            LambdaFamily::Uniform { .. } => "uniform",
            LambdaFamily::TabulatedDensity { .. } => "tabulated",
        }
    }
}

/// A finite, absolutely continuous measure Λ on [0,1).
#[derive(Clone, Debug)]
pub struct CoagulationMeasure {
    family: LambdaFamily,
    fingerprint: u64,
    ln_beta_ab: f64,
    total: OnceLock<f64>,
}

impl PartialEq for CoagulationMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
    }
}

fn positive_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(EfcError::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn hash_f64s(tag: &str, xs: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    tag.hash(&mut h);
    for x in xs {
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

impl CoagulationMeasure {
    pub fn new(family: LambdaFamily) -> Result<Self> {
        let mut ln_beta_ab = 0.0;
        let fingerprint = match &family {
            LambdaFamily::LogPower { c, beta } => {
                positive_finite("c", *c)?;
                if !(beta.is_finite() && *beta > 1.0) {
                    return Err(EfcError::domain(format!("beta must exceed 1, got {beta}")));
                }
                hash_f64s("log_power", &[*c, *beta])
            }
            LambdaFamily::BetaDensity { a, b, scale } => {
                positive_finite("a", *a)?;
                positive_finite("b", *b)?;
                positive_finite("scale", *scale)?;
                ln_beta_ab = sbeta::ln_beta(*a, *b);
                hash_f64s("beta", &[*a, *b, *scale])
            }
            LambdaFamily::Uniform { scale } => {
                if !(scale.is_finite() && *scale >= 0.0) {
                    return Err(EfcError::domain(format!(
                        "uniform scale must be nonnegative and finite, got {scale}"
                    )));
                }
                hash_f64s("uniform", &[*scale])
            }
            LambdaFamily::TabulatedDensity { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    return Err(EfcError::domain(
                        "tabulated density needs equally long, nonempty grid and values",
                    ));
                }
                if grid.iter().any(|g| !(g.is_finite() && *g > 0.0 && *g < 1.0)) {
                    return Err(EfcError::domain("tabulated grid must lie in (0,1)"));
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(EfcError::domain("tabulated grid must be strictly increasing"));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(EfcError::domain(
                        "tabulated values must be nonnegative and finite",
                    ));
                }
                let mut all = grid.clone();
                all.extend_from_slice(values);
                hash_f64s("tabulated", &all)
            }
        };
        let m = CoagulationMeasure {
            family,
            fingerprint,
            ln_beta_ab,
            total: OnceLock::new(),
        };
        // Finiteness of the total mass is part of the contract; tabulated
        // densities are bounded so this only fails on quadrature trouble.
        if matches!(m.family, LambdaFamily::TabulatedDensity { .. }) {
            let t = m.compute_total()?;
            let _ = m.total.set(t);
        }
        Ok(m)
    }

    pub fn log_power(c: f64, beta: f64) -> Result<Self> {
        Self::new(LambdaFamily::LogPower { c, beta })
    }

    pub fn beta_density(a: f64, b: f64, scale: f64) -> Result<Self> {
        Self::new(LambdaFamily::BetaDensity { a, b, scale })
    }

    pub fn uniform(scale: f64) -> Result<Self> {
        Self::new(LambdaFamily::Uniform { scale })
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(LambdaFamily::TabulatedDensity { grid, values })
    }

    /// Λ ≡ 0 (pure fragmentation).
    pub fn zero() -> Self {
        Self::uniform(0.0).expect("zero measure is valid")
    }

    pub fn family(&self) -> &LambdaFamily {
        &self.family
    }

    /// Stable hash of the family and its parameters.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn is_zero(&self) -> bool {
        match &self.family {
            LambdaFamily::Uniform { scale } => *scale == 0.0,
            LambdaFamily::TabulatedDensity { values, .. } => values.iter().all(|v| *v == 0.0),
            _ => false,
        }
    }

    /// Constants `(C1, C2, β)` of a two-sided log-power density bound, when
    /// the family has one.
    pub fn log_power_bounds(&self) -> Option<(f64, f64, f64)> {
        match self.family {
            LambdaFamily::LogPower { c, beta } => Some((c, c, beta)),
            _ => None,
        }
    }

    /// Density at `x ∈ (0,1)`.
    pub fn density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(EfcError::domain(format!("density argument must lie in (0,1), got {x}")));
        }
        Ok(match self.family {
            // Evaluate in x so grid nodes are hit exactly.
            LambdaFamily::TabulatedDensity { .. } => self.tabulated_value(x),
            _ => self.density_t(-x.ln()),
        })
    }

    /// Smooth part of `ln ρ(e^{-t})`. For tabulated densities this is 0 and
    /// the whole density lives in [`Self::rough_factor_t`].
    pub(crate) fn ln_density_t(&self, t: f64) -> f64 {
        match self.family {
            LambdaFamily::LogPower { c, beta } => c.ln() + (beta - 1.0) * t.ln(),
            LambdaFamily::BetaDensity { a, b, scale } => {
                let mut v = scale.ln() - self.ln_beta_ab - (a - 1.0) * t;
                if b != 1.0 {
                    v += (b - 1.0) * ln_one_minus_exp_neg(t);
                }
                v
            }
            LambdaFamily::Uniform { scale } => scale.ln(),
            LambdaFamily::TabulatedDensity { .. } => 0.0,
        }
    }

    /// Non-smooth multiplier of the density at `x = e^{-t}`.
    pub(crate) fn rough_factor_t(&self, t: f64) -> f64 {
        match self.family {
            LambdaFamily::TabulatedDensity { .. } => self.tabulated_value((-t).exp()),
            _ => 1.0,
        }
    }

    /// Density at `x = e^{-t}`.
    pub(crate) fn density_t(&self, t: f64) -> f64 {
        self.ln_density_t(t).exp() * self.rough_factor_t(t)
    }

    /// Extra quadrature breakpoints in `t` (tabulated grid nodes).
    pub(crate) fn breakpoints_t(&self) -> Vec<f64> {
        match &self.family {
            LambdaFamily::TabulatedDensity { grid, .. } => grid.iter().map(|g| -g.ln()).collect(),
            _ => Vec::new(),
        }
    }

    fn tabulated_value(&self, x: f64) -> f64 {
        let LambdaFamily::TabulatedDensity { grid, values } = &self.family else {
            return 0.0;
        };
        let n = grid.len();
        if x <= grid[0] {
            return values[0];
        }
        if x >= grid[n - 1] {
            return values[n - 1];
        }
        let i = grid.partition_point(|g| *g <= x);
        let (x0, x1) = (grid[i - 1], grid[i]);
        let w = (x - x0) / (x1 - x0);
        values[i - 1] * (1.0 - w) + values[i] * w
    }

    /// Λ(0, X_MIN), the mass not seen by `t`-quadrature.
    pub(crate) fn sliver_mass(&self) -> f64 {
        match &self.family {
            LambdaFamily::LogPower { c, beta } => c * upper_gamma(*beta, t_max()),
            LambdaFamily::BetaDensity { a, b, scale } => scale * sbeta::beta_reg(*a, *b, X_MIN),
            LambdaFamily::Uniform { scale } => scale * X_MIN,
            LambdaFamily::TabulatedDensity { values, .. } => values[0] * X_MIN,
        }
    }

    fn compute_total(&self) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let tm = t_max();
        let pts = quad::breakpoints(0.0, tm, self.breakpoints_t().into_iter().chain([1.0, 5.0, 20.0]));
        let r = quad::integrate_points(|t| self.density_t(t) * (-t).exp(), &pts, QuadOptions::rel(1e-13))?;
        Ok(r.value + self.sliver_mass())
    }

    /// Total mass Λ[0,1).
    pub fn total(&self) -> Result<f64> {
        if let Some(t) = self.total.get() {
            return Ok(*t);
        }
        let t = self.compute_total()?;
        Ok(*self.total.get_or_init(|| t))
    }
}

/// Power-log tail `μ(k) = b (ln k)^α / k²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLogTail {
    pub b: f64,
    pub alpha: f64,
}

/// Parametric family of a splitting measure.
#[derive(Clone, Debug, PartialEq)]
pub enum MuFamily {
    /// `μ(1) = mu1`, `μ(k) = b (ln k)^α / k²` for `k >= 2`.
    LogPower { b: f64, alpha: f64, mu1: f64 },
    /// Explicit masses on `1..=K`, optionally followed by a power-log tail.
    Tabulated {
        masses: Vec<f64>,
        tail: Option<PowerLogTail>,
    },
}

impl MuFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MuFamily::LogPower { .. } => "log_power",
            MuFamily::Tabulated { .. } => "tabulated",
        }
    }
}

/// A finite measure μ on the positive integers.
///
/// Represented as explicit masses `head[k-1]` for `k <= head.len()` and an
/// optional power-log tail for larger `k`.
#[derive(Clone, Debug)]
pub struct SplittingMeasure {
    family: MuFamily,
    head: Vec<f64>,
    tail: Option<PowerLogTail>,
    tail_cutoff: u64,
    fingerprint: u64,
    total: OnceLock<f64>,
}

impl PartialEq for SplittingMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.head == other.head && self.tail == other.tail
    }
}

/// Below this index Euler-Maclaurin tails are replaced by direct summation.
const EM_START: u64 = 1000;

impl SplittingMeasure {
    pub fn new(family: MuFamily) -> Result<Self> {
        let (head, tail) = match &family {
            MuFamily::LogPower { b, alpha, mu1 } => {
                if !(b.is_finite() && *b > 0.0 && alpha.is_finite() && *alpha > 0.0) {
                    return Err(EfcError::TailNotConvergent(format!(
                        "log-power splitting measure needs b > 0 and alpha > 0 finite, got b={b}, alpha={alpha}"
                    )));
                }
                if !(mu1.is_finite() && *mu1 >= 0.0) {
                    return Err(EfcError::domain(format!("mu1 must be nonnegative, got {mu1}")));
                }
                (
                    vec![*mu1],
                    Some(PowerLogTail {
                        b: *b,
                        alpha: *alpha,
                    }),
                )
            }
            MuFamily::Tabulated { masses, tail } => {
                if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    return Err(EfcError::TailNotConvergent(
                        "tabulated masses must be nonnegative and finite".into(),
                    ));
                }
                if let Some(t) = tail {
                    if !(t.b.is_finite() && t.b >= 0.0 && t.alpha.is_finite() && t.alpha >= 0.0) {
                        return Err(EfcError::TailNotConvergent(format!(
                            "power-log tail needs finite b >= 0 and alpha >= 0, got b={}, alpha={}",
                            t.b, t.alpha
                        )));
                    }
                }
                (masses.clone(), *tail)
            }
        };
        let mut key = head.clone();
        if let Some(t) = tail {
            key.extend_from_slice(&[t.b, t.alpha]);
        }
        let fingerprint = hash_f64s(if tail.is_some() { "mu_tail" } else { "mu" }, &key);
        Ok(SplittingMeasure {
            family,
            head,
            tail,
            tail_cutoff: DEFAULT_TAIL_CUTOFF,
            fingerprint,
            total: OnceLock::new(),
        })
    }

    /// The default family `μ(k) = b (ln k)^α k^{-2}`, `μ(1) = 0`.
    pub fn log_power(b: f64, alpha: f64) -> Result<Self> {
        Self::new(MuFamily::LogPower { b, alpha, mu1: 0.0 })
    }

    pub fn log_power_with_mu1(b: f64, alpha: f64, mu1: f64) -> Result<Self> {
        Self::new(MuFamily::LogPower { b, alpha, mu1 })
    }

    pub fn tabulated(masses: Vec<f64>, tail: Option<PowerLogTail>) -> Result<Self> {
        Self::new(MuFamily::Tabulated { masses, tail })
    }

    /// μ ≡ 0 (pure coagulation).
    pub fn zero() -> Self {
        Self::tabulated(Vec::new(), None).expect("zero measure is valid")
    }

    /// Overrides the direct-summation cutoff used by [`Self::total`].
    pub fn with_tail_cutoff(mut self, k_cut: u64) -> Self {
        self.tail_cutoff = k_cut.max(1);
        self.total = OnceLock::new();
        self
    }

    pub fn family(&self) -> &MuFamily {
        &self.family
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Power-log tail parameters, if the support is unbounded.
    pub fn tail(&self) -> Option<PowerLogTail> {
        self.tail.filter(|t| t.b > 0.0)
    }

    /// Largest explicitly stored index; above it only the tail contributes.
    pub fn head_len(&self) -> u64 {
        self.head.len() as u64
    }

    /// Largest `k` with positive mass, or `None` for unbounded support.
    pub fn support_max(&self) -> Option<u64> {
        if self.tail().is_some() {
            return None;
        }
        Some(self.head.iter().rposition(|m| *m > 0.0).map_or(0, |i| i as u64 + 1))
    }

    pub fn is_zero(&self) -> bool {
        self.support_max() == Some(0)
    }

    /// μ(k) for `k >= 1`; 0 is accepted and returns 0.
    pub fn mass(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if k <= self.head_len() {
            return self.head[(k - 1) as usize];
        }
        match self.tail {
            Some(t) => tail_mass(t, k as f64),
            None => 0.0,
        }
    }

    /// `Σ_{k >= m} μ(k)`.
    pub fn tail_sum_from(&self, m: u64) -> f64 {
        let m = m.max(1);
        let mut s = CompensatedSum::new();
        let hl = self.head_len();
        if m <= hl {
            for k in (m..=hl).rev() {
                s.add(self.head[(k - 1) as usize]);
            }
        }
        if let Some(t) = self.tail() {
            s.add(t.b * power_log_tail_sum(t.alpha, 2.0, m.max(hl + 1)));
        }
        s.value()
    }

    /// Total mass μ(ℕ₊): direct summation up to the cutoff (default 10⁷)
    /// plus an incomplete-Gamma remainder with Euler-Maclaurin boundary terms.
    pub fn total(&self) -> f64 {
        *self.total.get_or_init(|| {
            let hl = self.head_len();
            let mut s = CompensatedSum::new();
            if let Some(t) = self.tail() {
                let from = hl + 1;
                let upto = self.tail_cutoff.max(from - 1);
                s.add(t.b * power_log_tail_sum(t.alpha, 2.0, upto + 1));
                // Small terms first.
                for k in (from..=upto).rev() {
                    s.add(tail_mass(t, k as f64));
                }
            }
            for k in (1..=hl).rev() {
                s.add(self.head[(k - 1) as usize]);
            }
            s.value()
        })
    }

    /// The truncation μ_m: agrees with μ below `m`, carries `Σ_{k>=m} μ(k)`
    /// at `m` and vanishes above.
    pub fn truncate(&self, m: u64) -> Result<SplittingMeasure> {
        if m == 0 {
            return Err(EfcError::domain("truncation level must be at least 1"));
        }
        let mut masses: Vec<f64> = (1..m).map(|k| self.mass(k)).collect();
        masses.push(self.tail_sum_from(m));
        let mut out = SplittingMeasure::tabulated(masses, None)?;
        let _ = out.total.set(out.head.iter().rev().copied().collect::<CompensatedSum>().value());
        out.family = MuFamily::Tabulated {
            masses: out.head.clone(),
            tail: None,
        };
        Ok(out)
    }

    /// `Σ_{k=1}^{n} k μ(k)`.
    pub fn first_moment_upto(&self, n: u64) -> f64 {
        let hl = self.head_len();
        let mut s = CompensatedSum::new();
        for k in 1..=n.min(hl) {
            s.add(k as f64 * self.head[(k - 1) as usize]);
        }
        if let Some(t) = self.tail() {
            if n > hl {
                s.add(t.b * power_log_harmonic(t.alpha, hl + 1, n));
            }
        }
        s.value()
    }

    /// `Σ_{k >= from} μ(k) h(k)` for a smooth `h`, with an error bound.
    ///
    /// Terms up to `direct_to` are summed exactly; the remainder uses
    /// Euler-Maclaurin with the integral done by quadrature in `u = ln x`.
    /// The bound covers the dropped derivative term and quadrature error.
    pub fn tail_expectation<H: Fn(f64) -> f64>(
        &self,
        from: u64,
        direct_to: u64,
        h: H,
    ) -> Result<(f64, f64)> {
        let from = from.max(1);
        let hl = self.head_len();
        let mut s = CompensatedSum::new();
        let Some(t) = self.tail() else {
            for k in from..=hl {
                s.add(self.head[(k - 1) as usize] * h(k as f64));
            }
            return Ok((s.value(), 0.0));
        };
        let d = direct_to.max(from).max(hl + 1).max(EM_START);
        for k in from..d {
            let v = self.mass(k) * h(k as f64);
            s.add(v);
        }
        let f = |x: f64| tail_mass(t, x) * h(x);
        let fd = f(d as f64);
        let step = d as f64 * 1e-3;
        let fprime = (f(d as f64 + step) - f(d as f64 - step)) / (2.0 * step);
        let ud = (d as f64).ln();
        let pts: Vec<f64> = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|o| ud + o)
            .collect();
        let integral = quad::integrate_points(
            |u| {
                let x = u.exp();
                f(x) * x
            },
            &pts,
            QuadOptions {
                abs_tol: 1e-300,
                rel_tol: 1e-12,
                max_segments: 2000,
            },
        )?;
        if !(integral.value.is_finite() && fd.is_finite() && fprime.is_finite()) {
            return Err(EfcError::TailBoundUnavailable(
                "non-finite tail integrand".into(),
            ));
        }
        // Σ_{k>=d} F(k) = ∫_d^∞ F + F(d)/2 - F'(d)/12 + ...
        s.add(integral.value + fd / 2.0 - fprime / 12.0);
        // Last term: crude bound on the integral beyond the final panel.
        let u_end = pts[pts.len() - 1];
        let bound = fprime.abs() / 12.0 + integral.error + f(u_end.exp()) * u_end.exp();
        Ok((s.value(), bound.abs()))
    }
}

#[inline]
pub(crate) fn tail_mass(t: PowerLogTail, k: f64) -> f64 {
    if k < 2.0 {
        return 0.0;
    }
    t.b * k.ln().powf(t.alpha) / (k * k)
}

/// `Σ_{k >= from} (ln k)^α k^{-p}` for `p > 1`.
///
/// Direct summation below [`EM_START`], then the integral
/// `∫_M^∞ (ln x)^α x^{-p} dx` in closed form plus Euler-Maclaurin boundary
/// terms through the third derivative.
pub(crate) fn power_log_tail_sum(alpha: f64, p: f64, from: u64) -> f64 {
    let from = from.max(2);
    let m = from.max(EM_START);
    let mut s = CompensatedSum::new();
    let f = PowerLogPoly::monomial(alpha, p);
    let f1 = f.derivative();
    let f3 = f1.derivative().derivative();
    let mf = m as f64;
    // ∫_M^∞ (ln x)^α x^{-p} dx = Γ(α+1, (p-1) ln M) / (p-1)^{α+1}
    let integral = upper_gamma(alpha + 1.0, (p - 1.0) * mf.ln()) / (p - 1.0).powf(alpha + 1.0);
    s.add(integral + f.eval(mf) / 2.0 - f1.eval(mf) / 12.0 + f3.eval(mf) / 720.0);
    for k in (from..m).rev() {
        let x = k as f64;
        s.add(x.ln().powf(alpha) * x.powf(-p));
    }
    s.value()
}

const HARMONIC_DIRECT_MAX: u64 = 10_000_000;

/// `Σ_{k=from}^{to} (ln k)^α / k`.
///
/// Exact summation up to 10⁷; beyond, Euler-Maclaurin with the closed-form
/// integral `(ln x)^{α+1}/(α+1)`.
pub(crate) fn power_log_harmonic(alpha: f64, from: u64, to: u64) -> f64 {
    let from = from.max(2);
    if to < from {
        return 0.0;
    }
    let mut s = CompensatedSum::new();
    let direct_to = to.min(HARMONIC_DIRECT_MAX);
    for k in from..=direct_to {
        let x = k as f64;
        s.add(x.ln().powf(alpha) / x);
    }
    if to > direct_to {
        let a = direct_to.max(from - 1) as f64;
        let b = to as f64;
        let g = PowerLogPoly::monomial(alpha, 1.0);
        let g1 = g.derivative();
        let g3 = g1.derivative().derivative();
        // Σ_{k=a+1}^{b} g(k)
        let integral = (b.ln().powf(alpha + 1.0) - a.ln().powf(alpha + 1.0)) / (alpha + 1.0);
        s.add(integral + (g.eval(b) - g.eval(a)) / 2.0 + (g1.eval(b) - g1.eval(a)) / 12.0
            - (g3.eval(b) - g3.eval(a)) / 720.0);
    }
    s.value()
}

/// The pair (Λ, μ) with an optional fragmentation truncation level.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    lam: CoagulationMeasure,
    mu: SplittingMeasure,
    truncation: Option<u64>,
    effective_mu: SplittingMeasure,
}

impl ModelSpec {
    pub fn new(lam: CoagulationMeasure, mu: SplittingMeasure, truncation: Option<u64>) -> Result<Self> {
        let effective_mu = match truncation {
            Some(m) => mu.truncate(m)?,
            None => mu.clone(),
        };
        Ok(ModelSpec {
            lam,
            mu,
            truncation,
            effective_mu,
        })
    }

    pub fn lam(&self) -> &CoagulationMeasure {
        &self.lam
    }

    /// The splitting measure as configured (before truncation).
    pub fn mu(&self) -> &SplittingMeasure {
        &self.mu
    }

    pub fn truncation(&self) -> Option<u64> {
        self.truncation
    }

    /// μ_m when a truncation is set, μ otherwise.
    pub fn effective_mu(&self) -> &SplittingMeasure {
        &self.effective_mu
    }

    /// Same Λ and μ with a different truncation level.
    pub fn with_truncation(&self, truncation: Option<u64>) -> Result<Self> {
        ModelSpec::new(self.lam.clone(), self.mu.clone(), truncation)
    }
}
