//! Generator ℒ = ℒ^c + ℒ^f of the block-counting chain applied to the
//! Lyapunov test-function families, and its truncated version ℒ^m.

use crate::error::{EfcError, Result};
use crate::measures::{CoagulationMeasure, ModelSpec, SplittingMeasure};
use crate::rates::coag_row;
use crate::special::CompensatedSum;

/// Largest state at which ℒ^c is evaluated by direct summation.
pub const MAX_DIRECT_N: u64 = 20_000;

/// Default shift for the reciprocal log-log families.
pub const DEFAULT_SHIFT: f64 = 10.0;

/// Deepest supported iterated logarithm.
pub const MAX_LOG_DEPTH: u32 = 4;

/// Lyapunov test functions. All are evaluated on reals `x >= 1` so that the
/// fragmentation tail can be integrated.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// `log^{(m)}(n + l)`, with `log^{(0)} x = x`.
    IteratedLog { m: u32, l: f64 },
    /// `1 + 1/loglog(n + l)`.
    OnePlusInvLogLog { l: f64 },
    /// `1/loglog(n + l)`.
    InvLogLog { l: f64 },
    /// `1 - 1/loglog(n + l)`.
    OneMinusInvLogLog { l: f64 },
    /// `log n`.
    PlainLog,
    Constant(f64),
    /// `Σ a_i f_i`.
    Combination(Vec<(f64, TestFunction)>),
}

/// Shape of a test function at infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    IncreasingToInfinity,
    DecreasingToZero,
    Bounded,
}

/// Monotonicity in `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

/// Smallest integer shift making `log^{(m)}(1 + l)` finite and positive.
pub fn min_iterated_log_shift(m: u32) -> Result<f64> {
    if m > MAX_LOG_DEPTH {
        return Err(EfcError::domain(format!(
            "iterated log depth {m} exceeds supported maximum {MAX_LOG_DEPTH}"
        )));
    }
    // log^{(m)}(x) > 0 iff x > T_m, with T_0 = 0 and T_m = exp(T_{m-1}).
    let mut thr = 0.0f64;
    for _ in 0..m {
        thr = thr.exp();
    }
    Ok(thr.floor())
}

fn iterated_log(m: u32, x: f64) -> f64 {
    let mut v = x;
    for _ in 0..m {
        v = v.ln();
    }
    v
}

fn loglog(x: f64) -> f64 {
    x.ln().ln()
}

impl TestFunction {
    /// `log^{(m)}(n + l)` with the smallest admissible integer shift.
    pub fn iterated_log(m: u32) -> Result<Self> {
        Ok(TestFunction::IteratedLog {
            m,
            l: min_iterated_log_shift(m)?,
        })
    }

    pub fn iterated_log_with_shift(m: u32, l: f64) -> Result<Self> {
        let f = TestFunction::IteratedLog { m, l };
        f.validate()?;
        Ok(f)
    }

    /// `f(n) = n`.
    pub fn identity() -> Self {
        TestFunction::IteratedLog { m: 0, l: 0.0 }
    }

    pub fn inv_loglog() -> Self {
        TestFunction::InvLogLog { l: DEFAULT_SHIFT }
    }

    pub fn one_minus_inv_loglog() -> Self {
        TestFunction::OneMinusInvLogLog { l: DEFAULT_SHIFT }
    }

    pub fn one_plus_inv_loglog(l: f64) -> Result<Self> {
        let f = TestFunction::OnePlusInvLogLog { l };
        f.validate()?;
        Ok(f)
    }

    /// Checks the shift constraints: finite, positive value at `n = 1`.
    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::IteratedLog { m, l } => {
                if *m > MAX_LOG_DEPTH {
                    return Err(EfcError::domain(format!(
                        "iterated log depth {m} exceeds supported maximum {MAX_LOG_DEPTH}"
                    )));
                }
                let v = iterated_log(*m, 1.0 + l);
                if !(l.is_finite() && v.is_finite() && v > 0.0) {
                    return Err(EfcError::domain(format!(
                        "log^({m})(1 + {l}) must be finite and positive"
                    )));
                }
            }
            TestFunction::OnePlusInvLogLog { l } => {
                if !(l.is_finite() && *l >= 10.0) {
                    return Err(EfcError::domain(format!("shift must be at least 10, got {l}")));
                }
            }
            TestFunction::InvLogLog { l } | TestFunction::OneMinusInvLogLog { l } => {
                // loglog(1 + l) > 0 needs 1 + l > e.
                if !(l.is_finite() && 1.0 + l > std::f64::consts::E) {
                    return Err(EfcError::domain(format!(
                        "shift must satisfy 1 + l > e, got {l}"
                    )));
                }
                if matches!(self, TestFunction::OneMinusInvLogLog { .. }) && loglog(1.0 + l) <= 1.0 {
                    return Err(EfcError::domain(format!(
                        "1 - 1/loglog(1 + l) must be positive, got l = {l}"
                    )));
                }
            }
            TestFunction::PlainLog => {}
            TestFunction::Constant(v) => {
                if !v.is_finite() {
                    return Err(EfcError::domain("constant must be finite"));
                }
            }
            TestFunction::Combination(parts) => {
                for (a, f) in parts {
                    if !a.is_finite() {
                        return Err(EfcError::domain("combination coefficients must be finite"));
                    }
                    f.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Value at real `x >= 1`, without validation.
    pub(crate) fn value(&self, x: f64) -> f64 {
        match self {
            TestFunction::IteratedLog { m, l } => iterated_log(*m, x + l),
            TestFunction::OnePlusInvLogLog { l } => 1.0 + 1.0 / loglog(x + l),
            TestFunction::InvLogLog { l } => 1.0 / loglog(x + l),
            TestFunction::OneMinusInvLogLog { l } => 1.0 - 1.0 / loglog(x + l),
            TestFunction::PlainLog => x.ln(),
            TestFunction::Constant(v) => *v,
            TestFunction::Combination(parts) => parts.iter().map(|(a, f)| a * f.value(x)).sum(),
        }
    }

    /// `f(n)`; `Domain` when the shift constraints fail or `n = 0`.
    pub fn eval(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(EfcError::domain("test functions are defined for n >= 1"));
        }
        self.validate()?;
        Ok(self.value(n as f64))
    }

    pub fn monotonicity(&self) -> Monotonicity {
        match self {
            TestFunction::IteratedLog { .. }
            | TestFunction::OneMinusInvLogLog { .. }
            | TestFunction::PlainLog => Monotonicity::Increasing,
            TestFunction::OnePlusInvLogLog { .. } | TestFunction::InvLogLog { .. } => {
                Monotonicity::Decreasing
            }
            TestFunction::Constant(_) => Monotonicity::Constant,
            TestFunction::Combination(parts) => {
                let mut inc = false;
                let mut dec = false;
                for (a, f) in parts {
                    if *a == 0.0 {
                        continue;
                    }
                    match (f.monotonicity(), *a > 0.0) {
                        (Monotonicity::Increasing, true) | (Monotonicity::Decreasing, false) => inc = true,
                        (Monotonicity::Decreasing, true) | (Monotonicity::Increasing, false) => dec = true,
                        (Monotonicity::Mixed, _) => {
                            inc = true;
                            dec = true;
                        }
                        (Monotonicity::Constant, _) => {}
                    }
                }
                match (inc, dec) {
                    (false, false) => Monotonicity::Constant,
                    (true, false) => Monotonicity::Increasing,
                    (false, true) => Monotonicity::Decreasing,
                    (true, true) => Monotonicity::Mixed,
                }
            }
        }
    }

    /// `lim_{n→∞} f(n)`; `None` when infinite or undetermined.
    pub fn limit(&self) -> Option<f64> {
        match self {
            TestFunction::IteratedLog { .. } | TestFunction::PlainLog => None,
            TestFunction::OnePlusInvLogLog { .. } | TestFunction::OneMinusInvLogLog { .. } => Some(1.0),
            TestFunction::InvLogLog { .. } => Some(0.0),
            TestFunction::Constant(v) => Some(*v),
            TestFunction::Combination(parts) => {
                let mut s = 0.0;
                for (a, f) in parts {
                    if *a != 0.0 {
                        s += a * f.limit()?;
                    }
                }
                Some(s)
            }
        }
    }

    pub fn orientation(&self) -> Orientation {
        match (self.limit(), self.monotonicity()) {
            (None, _) => Orientation::IncreasingToInfinity,
            (Some(l), Monotonicity::Decreasing) if l == 0.0 => Orientation::DecreasingToZero,
            _ => Orientation::Bounded,
        }
    }

    /// True when some component grows linearly, so `Σ μ(k) f(n+k)`
    /// diverges for power-log tails.
    fn grows_linearly(&self) -> bool {
        match self {
            TestFunction::IteratedLog { m, .. } => *m == 0,
            TestFunction::Combination(parts) => parts.iter().any(|(a, f)| *a != 0.0 && f.grows_linearly()),
            _ => false,
        }
    }

    fn is_constant(&self) -> bool {
        self.monotonicity() == Monotonicity::Constant
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::IteratedLog { m, l } => format!("iterated_log(m={m},l={l})"),
            TestFunction::OnePlusInvLogLog { l } => format!("one_plus_inv_loglog(l={l})"),
            TestFunction::InvLogLog { l } => format!("inv_loglog(l={l})"),
            TestFunction::OneMinusInvLogLog { l } => format!("one_minus_inv_loglog(l={l})"),
            TestFunction::PlainLog => "log".into(),
            TestFunction::Constant(v) => format!("constant({v})"),
            TestFunction::Combination(parts) => {
                let inner: Vec<String> = parts.iter().map(|(a, f)| format!("{a}*{}", f.name())).collect();
                format!("combination({})", inner.join("+"))
            }
        }
    }
}

/// Tolerance for the fragmentation tail: the bound must not exceed
/// `max(rel_tol·|ℒ^f f(n)|, abs_tol)`.
#[derive(Clone, Copy, Debug)]
pub struct TailTolerance {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for TailTolerance {
    fn default() -> Self {
        TailTolerance {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
        }
    }
}

/// ℒf(n) split into its parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorValue {
    pub n: u64,
    pub coag_part: f64,
    pub frag_part: f64,
    pub frag_truncation_error: f64,
    pub total: f64,
}

/// ℒ^c f(n) = Σ_{k=2}^n C(n,k) λ_{n,k} [f(n-k+1) - f(n)].
pub fn gen_coag_apply(lam: &CoagulationMeasure, f: &TestFunction, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(EfcError::domain("generator is defined for n >= 1"));
    }
    f.validate()?;
    if n == 1 || f.is_constant() || lam.is_zero() {
        return Ok(0.0);
    }
    if n > MAX_DIRECT_N {
        return Err(EfcError::GridTooLarge {
            n,
            max: MAX_DIRECT_N,
        });
    }
    let row = coag_row(lam, n)?;
    let fn_ = f.value(n as f64);
    let mut s = CompensatedSum::new();
    for (i, r) in row.iter().enumerate().rev() {
        let k = i as u64 + 2;
        s.add(r * (f.value((n - k + 1) as f64) - fn_));
    }
    Ok(s.value())
}

/// Largest direct-summation cutoff tried before giving up on the tail bound.
const MAX_FRAG_DIRECT: u64 = 10_000_000;

/// ℒ^f f(n) = n Σ_k μ(k) [f(n+k) - f(n)], with a bound on the error of the
/// tail beyond the direct-summation cutoff.
///
/// The tail is not dropped: it is replaced by its Euler-Maclaurin integral
/// and the bound covers the first omitted correction plus quadrature error.
pub fn gen_frag_apply(
    mu: &SplittingMeasure,
    f: &TestFunction,
    n: u64,
    tol: TailTolerance,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(EfcError::domain("generator is defined for n >= 1"));
    }
    f.validate()?;
    if f.is_constant() || mu.is_zero() {
        return Ok((0.0, 0.0));
    }
    let nf = n as f64;
    let fn_ = f.value(nf);
    if let Some(kmax) = mu.support_max() {
        let mut s = CompensatedSum::new();
        for k in (1..=kmax).rev() {
            s.add(mu.mass(k) * (f.value(nf + k as f64) - fn_));
        }
        return Ok((nf * s.value(), 0.0));
    }
    if f.grows_linearly() {
        return Err(EfcError::TailBoundUnavailable(format!(
            "{} grows linearly; its fragmentation sum diverges for an unbounded splitting measure",
            f.name()
        )));
    }
    let mut direct_to = (32 * n).max(1000);
    loop {
        let (v, bound) = mu.tail_expectation(1, direct_to, |x| f.value(nf + x) - fn_)?;
        let value = nf * v;
        let err = nf * bound;
        if err <= (tol.rel_tol * value.abs()).max(tol.abs_tol) {
            return Ok((value, err));
        }
        if direct_to >= MAX_FRAG_DIRECT {
            return Err(EfcError::TailBoundUnavailable(format!(
                "tail bound {err:e} above tolerance for {} at n = {n}",
                f.name()
            )));
        }
        direct_to = (direct_to * 8).min(MAX_FRAG_DIRECT);
    }
}

/// ℒf(n) for the chain of `spec` (using μ_m when a truncation is set).
pub fn gen_apply(spec: &ModelSpec, f: &TestFunction, n: u64, tol: TailTolerance) -> Result<GeneratorValue> {
    let coag_part = gen_coag_apply(spec.lam(), f, n)?;
    let (frag_part, frag_truncation_error) = gen_frag_apply(spec.effective_mu(), f, n, tol)?;
    Ok(GeneratorValue {
        n,
        coag_part,
        frag_part,
        frag_truncation_error,
        total: coag_part + frag_part,
    })
}

/// ℒ^m f(n) for a spec with a truncation level; finite sum, no tail error.
pub fn gen_truncated_apply(spec: &ModelSpec, f: &TestFunction, n: u64) -> Result<GeneratorValue> {
    if spec.truncation().is_none() {
        return Err(EfcError::invalid("truncated generator needs a truncation level"));
    }
    gen_apply(spec, f, n, TailTolerance::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(TestFunction::identity().eval(7).unwrap(), 7.0);
        let v = TestFunction::inv_loglog().eval(90).unwrap();
        assert!((v - 1.0 / (100f64.ln().ln())).abs() < 1e-15);
        assert!((v - 0.654_801_8).abs() < 1e-6);
        assert_eq!(TestFunction::Constant(5.0).eval(123).unwrap(), 5.0);
    }

    #[test]
    fn minimal_shifts_are_positive_at_one() {
        for m in 0..=MAX_LOG_DEPTH {
            let f = TestFunction::iterated_log(m).unwrap();
            let TestFunction::IteratedLog { l, .. } = f else { unreachable!() };
            assert!(f.eval(1).unwrap() > 0.0, "m={m}");
            if l >= 1.0 {
                // One less is inadmissible.
                assert!(TestFunction::iterated_log_with_shift(m, l - 1.0).is_err(), "m={m}");
            }
        }
        assert_eq!(min_iterated_log_shift(2).unwrap(), 2.0);
        assert_eq!(min_iterated_log_shift(3).unwrap(), 15.0);
        assert!(TestFunction::iterated_log(5).is_err());
    }

    #[test]
    fn shift_constraints() {
        assert!(TestFunction::one_plus_inv_loglog(9.0).is_err());
        assert!(TestFunction::InvLogLog { l: 1.0 }.eval(1).is_err());
        assert!(TestFunction::PlainLog.eval(0).is_err());
    }

    #[test]
    fn orientation_flags() {
        assert_eq!(TestFunction::PlainLog.orientation(), Orientation::IncreasingToInfinity);
        assert_eq!(TestFunction::inv_loglog().orientation(), Orientation::DecreasingToZero);
        assert_eq!(TestFunction::one_plus_inv_loglog(10.0).unwrap().orientation(), Orientation::Bounded);
        assert_eq!(TestFunction::Constant(2.0).orientation(), Orientation::Bounded);
    }

    #[test]
    fn small_worked_generator() {
        let lam = CoagulationMeasure::uniform(1.0).unwrap();
        let mu = SplittingMeasure::tabulated(vec![0.0, 0.5], None).unwrap();
        let id = TestFunction::identity();
        assert!((gen_coag_apply(&lam, &id, 4).unwrap() + 13.0 / 3.0).abs() < 1e-11);
        let (v, e) = gen_frag_apply(&mu, &id, 4, TailTolerance::default()).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
        assert_eq!(e, 0.0);
        let spec = ModelSpec::new(lam, mu, None).unwrap();
        let g = gen_apply(&spec, &id, 4, TailTolerance::default()).unwrap();
        assert!((g.total + 1.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn linear_function_with_heavy_tail_is_refused() {
        let mu = SplittingMeasure::log_power(1.0, 1.0).unwrap();
        let r = gen_frag_apply(&mu, &TestFunction::identity(), 10, TailTolerance::default());
        assert!(matches!(r, Err(EfcError::TailBoundUnavailable(_))));
    }

    #[test]
    fn coag_grid_cap() {
        let lam = CoagulationMeasure::uniform(1.0).unwrap();
        let r = gen_coag_apply(&lam, &TestFunction::PlainLog, MAX_DIRECT_N + 1);
        assert!(matches!(r, Err(EfcError::GridTooLarge { .. })));
    }
}
