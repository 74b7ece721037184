//! Lyapunov drift checks on finite grids and the regime classification of
//! the boundary at infinity for log-power families.
//!
//! Every verdict here is a numerical prediction: asymptotic hypotheses are
//! replaced by finite grids, trends and extrapolations, and anything close
//! to a decision threshold is reported as `Inconclusive`.

use serde::Serialize;

use crate::error::{EfcError, Result};
use crate::generator::{gen_apply, Monotonicity, Orientation, TailTolerance, TestFunction};
use crate::measures::{LambdaFamily, ModelSpec, MuFamily};
use crate::rates::{phi_lambda, phi_mu};
use crate::stats::linear_fit;

/// Relative tolerance of the last-quartile trend test.
pub const TREND_TOL: f64 = 1e-3;

/// Default relative width of the Inconclusive band.
pub const DEFAULT_EPS_MARGIN: f64 = 0.1;

/// Default a-values for the CDI and stay-infinite checks.
pub const DEFAULT_A_LIST: [f64; 3] = [1e2, 1e3, 1e4];

/// Default truncation level used when a CDI check needs μ_m.
pub const DEFAULT_CDI_TRUNCATION: u64 = 1000;

/// Geometric grid of `points` integers from `lo` to `hi` (inclusive,
/// deduplicated).
pub fn geometric_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    let lo = lo.max(1);
    if points <= 1 || hi <= lo {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut g: Vec<u64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as u64)
        .collect();
    g.dedup();
    g
}

/// Default drift-check grid: 16 geometric points from 10² to 2·10⁴.
pub fn default_drift_grid() -> Vec<u64> {
    geometric_grid(100, 20_000, 16)
}

/// Default classification grid `2^4, …, 2^20`.
pub fn default_classify_grid() -> Vec<u64> {
    (4..=20).map(|j| 1u64 << j).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    NonExplosionBound,
    CdiDrift,
    StayInfiniteBound,
}

/// Outcome of a drift check on a finite grid.
#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub kind: DriftKind,
    pub test_function: String,
    pub grid: Vec<u64>,
    /// `g(n)` on the grid.
    pub g_values: Vec<f64>,
    /// `ℒg(n)` (or `ℒ^m g(n)`) on the grid.
    pub values: Vec<f64>,
    /// Fragmentation tail bounds attached to `values`.
    pub tail_bounds: Vec<f64>,
    /// The a-values for the CDI and stay-infinite kinds (empty otherwise).
    pub a_list: Vec<f64>,
    /// Minimal C (one entry) or the function of a, matching `a_list`.
    /// `None` marks an a with no grid point above it.
    pub fitted: Vec<Option<f64>>,
    /// Normalized last-quartile slope of `ℒg/g` against `ln n`.
    pub trend: f64,
    pub satisfied: bool,
}

impl DriftReport {
    /// `ℒg(n)/g(n)` on the grid.
    pub fn ratios(&self) -> Vec<f64> {
        self.values.iter().zip(&self.g_values).map(|(v, g)| v / g).collect()
    }
}

/// Least-squares slope of `y` against `ln n` over the last quartile,
/// multiplied by the quartile's `ln n` span and divided by the largest
/// `|y|` there: the relative change across the quartile.
pub fn last_quartile_trend(grid: &[u64], y: &[f64]) -> f64 {
    let n = grid.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let q = (n / 4).max(2);
    let xs: Vec<f64> = grid[n - q..n].iter().map(|v| (*v as f64).ln()).collect();
    let ys = &y[n - q..n];
    let Some(fit) = linear_fit(&xs, ys) else {
        return 0.0;
    };
    let span = xs[xs.len() - 1] - xs[0];
    let scale = ys.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    fit.slope * span / scale
}

fn evaluate_grid(
    spec: &ModelSpec,
    f: &TestFunction,
    grid: &[u64],
    tol: TailTolerance,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut gv = Vec::with_capacity(grid.len());
    let mut lv = Vec::with_capacity(grid.len());
    let mut tb = Vec::with_capacity(grid.len());
    for &n in grid {
        let g = gen_apply(spec, f, n, tol)?;
        gv.push(f.eval(n)?);
        lv.push(g.total);
        tb.push(g.frag_truncation_error);
    }
    Ok((gv, lv, tb))
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(EfcError::invalid("drift grid must be nonempty with n >= 1"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EfcError::invalid("drift grid must be strictly increasing"));
    }
    Ok(())
}

/// Smallest `C >= 0` with `ℒf <= C f` on the grid; satisfied when the ratio
/// `ℒf/f` shows no upward trend at the right edge.
pub fn check_nonexplosion(spec: &ModelSpec, f: &TestFunction, grid: &[u64]) -> Result<DriftReport> {
    check_grid(grid)?;
    if f.orientation() != Orientation::IncreasingToInfinity || f.monotonicity() != Monotonicity::Increasing {
        return Err(EfcError::invalid(format!(
            "non-explosion check needs an increasing test function diverging to infinity, got {}",
            f.name()
        )));
    }
    let (gv, lv, tb) = evaluate_grid(spec, f, grid, TailTolerance::default())?;
    let ratios: Vec<f64> = lv.iter().zip(&gv).map(|(l, g)| l / g).collect();
    let c = ratios.iter().fold(0.0f64, |m, r| m.max(*r));
    let trend = last_quartile_trend(grid, &ratios);
    Ok(DriftReport {
        kind: DriftKind::NonExplosionBound,
        test_function: f.name(),
        grid: grid.to_vec(),
        g_values: gv,
        values: lv,
        tail_bounds: tb,
        a_list: Vec::new(),
        fitted: vec![Some(c)],
        trend,
        satisfied: c.is_finite() && trend <= TREND_TOL,
    })
}

/// `d(a) = min_{u > a} ℒ^m f(u)/f(u)` for each `a`; satisfied when `d` is
/// strictly increasing along `a_list` and its last value exceeds
/// `threshold`.
pub fn check_cdi_drift(
    spec: &ModelSpec,
    f: &TestFunction,
    grid: &[u64],
    a_list: &[f64],
    threshold: f64,
) -> Result<DriftReport> {
    check_grid(grid)?;
    if spec.truncation().is_none() {
        return Err(EfcError::invalid("CDI drift check runs on a truncated spec"));
    }
    let lim = f.limit();
    if !matches!(lim, Some(l) if l.is_finite()) || f.eval(1)? <= 0.0 {
        return Err(EfcError::invalid(format!(
            "CDI drift check needs a bounded positive test function, got {}",
            f.name()
        )));
    }
    let (gv, lv, tb) = evaluate_grid(spec, f, grid, TailTolerance::default())?;
    let ratios: Vec<f64> = lv.iter().zip(&gv).map(|(l, g)| l / g).collect();
    let fitted: Vec<Option<f64>> = a_list
        .iter()
        .map(|a| {
            grid.iter()
                .zip(&ratios)
                .filter(|(n, _)| (**n as f64) > *a)
                .map(|(_, r)| *r)
                .reduce(f64::min)
        })
        .collect();
    let increasing = fitted.len() >= 2
        && fitted
            .windows(2)
            .all(|w| matches!((w[0], w[1]), (Some(x), Some(y)) if y > x));
    let last_ok = matches!(fitted.last(), Some(Some(d)) if *d > threshold);
    let trend = last_quartile_trend(grid, &ratios);
    Ok(DriftReport {
        kind: DriftKind::CdiDrift,
        test_function: f.name(),
        grid: grid.to_vec(),
        g_values: gv,
        values: lv,
        tail_bounds: tb,
        a_list: a_list.to_vec(),
        fitted,
        trend,
        satisfied: increasing && last_ok,
    })
}

/// `sup_{n > a} ℒf(n)/f(n)` for each `a`; satisfied when every supremum is
/// finite and the ratio shows no upward trend at the right edge.
pub fn check_stay_infinite(
    spec: &ModelSpec,
    f: &TestFunction,
    grid: &[u64],
    a_list: &[f64],
) -> Result<DriftReport> {
    check_grid(grid)?;
    if f.orientation() != Orientation::DecreasingToZero {
        return Err(EfcError::invalid(format!(
            "stay-infinite check needs a positive test function decreasing to 0, got {}",
            f.name()
        )));
    }
    let (gv, lv, tb) = evaluate_grid(spec, f, grid, TailTolerance::default())?;
    let ratios: Vec<f64> = lv.iter().zip(&gv).map(|(l, g)| l / g).collect();
    let fitted: Vec<Option<f64>> = a_list
        .iter()
        .map(|a| {
            grid.iter()
                .zip(&ratios)
                .filter(|(n, _)| (**n as f64) > *a)
                .map(|(_, r)| *r)
                .reduce(f64::max)
        })
        .collect();
    let trend = last_quartile_trend(grid, &ratios);
    // An `a` beyond the grid has an empty supremum and constrains nothing.
    let finite = fitted.iter().any(Option::is_some) && fitted.iter().flatten().all(|v| v.is_finite());
    Ok(DriftReport {
        kind: DriftKind::StayInfiniteBound,
        test_function: f.name(),
        grid: grid.to_vec(),
        g_values: gv,
        values: lv,
        tail_bounds: tb,
        a_list: a_list.to_vec(),
        fitted,
        trend,
        satisfied: finite && trend <= TREND_TOL,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Entrance,
    Exit,
    ComesDown,
    StaysInfinite,
    Explodes,
    NonExplosive,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Entrance => "Entrance",
            Verdict::Exit => "Exit",
            Verdict::ComesDown => "ComesDown",
            Verdict::StaysInfinite => "StaysInfinite",
            Verdict::Explodes => "Explodes",
            Verdict::NonExplosive => "NonExplosive",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    NonCritical,
    Critical,
}

/// One point of the normalized difference `R(n) = (Φ_Λ(n) - Φ_μ(n))/s(n)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridPoint {
    pub n: u64,
    #[serde(rename = "R")]
    pub r: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeVerdict {
    pub verdict: Verdict,
    pub branch: Branch,
    pub basis: String,
    /// The decision threshold nearest to the evidence.
    pub threshold: f64,
    /// Limit of R(n) from the two-term fit; `None` off the critical branch.
    pub extrapolated_limit: Option<f64>,
    /// Signed distance from the evidence to `threshold`.
    pub threshold_margin: f64,
    /// Half-width of the Inconclusive band around `threshold`.
    pub band: f64,
    /// Normalized last-quartile trend of R(n).
    pub trend: f64,
    pub grid: Vec<GridPoint>,
}

impl RegimeVerdict {
    /// JSON document printed by the `classify` command.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": 1,
            "verdict": self.verdict.as_str(),
            "branch": self.branch,
            "basis": self.basis,
            "threshold": self.threshold,
            "extrapolated_limit": self.extrapolated_limit,
            "margin": self.threshold_margin,
            "band": self.band,
            "trend": self.trend,
            "grid": self.grid,
        })
    }
}

/// Tolerance for treating `β = 1 + α` as an exact tie.
const EXPONENT_TIE_TOL: f64 = 1e-9;

/// Fits `R(n) ≈ L + A / ln ln n` on the upper half of the grid.
fn extrapolate(points: &[GridPoint]) -> Option<f64> {
    let h = points.len() / 2;
    let upper = &points[h..];
    let x: Vec<f64> = upper.iter().map(|p| 1.0 / (p.n as f64).ln().ln()).collect();
    let y: Vec<f64> = upper.iter().map(|p| p.r).collect();
    linear_fit(&x, &y).map(|f| f.intercept)
}

/// Classifies the boundary at infinity for log-power Λ and μ.
///
/// Off the critical line the exponent comparison decides. On it, the
/// normalized difference R(n) is evaluated on `grid`, extrapolated, and
/// compared with the relevant thresholds; anything within
/// `eps_margin`-relative distance of a threshold is `Inconclusive`.
pub fn classify_regime(spec: &ModelSpec, grid: Option<&[u64]>, eps_margin: f64) -> Result<RegimeVerdict> {
    let LambdaFamily::LogPower { c, beta } = *spec.lam().family() else {
        return Err(EfcError::UnsupportedFamily(format!(
            "classification needs a log-power coagulation measure, got {}",
            spec.lam().family().name()
        )));
    };
    let MuFamily::LogPower { b, alpha, .. } = *spec.mu().family() else {
        return Err(EfcError::UnsupportedFamily(format!(
            "classification needs a log-power splitting measure, got {}",
            spec.mu().family().name()
        )));
    };
    if !(eps_margin >= 0.0 && eps_margin.is_finite()) {
        return Err(EfcError::invalid("eps_margin must be a nonnegative number"));
    }
    let default_grid = default_classify_grid();
    let grid = grid.unwrap_or(&default_grid);
    if grid.len() < 4 || grid.iter().any(|n| *n < 4) {
        return Err(EfcError::invalid("classification grid needs at least 4 points, all >= 4"));
    }
    let crit = 1.0 + alpha;
    let d = c / beta;
    let d_star = b / crit;

    // R(n) with the scaling of the relevant critical regime; off the
    // critical line the leading power of ln n is used instead.
    let critical_line = (beta - crit).abs() <= EXPONENT_TIE_TOL * crit;
    let rel_d = (d - d_star) / d_star;
    let is_critical = critical_line && rel_d.abs() <= eps_margin;
    let scale = |n: f64| -> f64 {
        let l = n.ln();
        if !is_critical {
            n * l.powf(beta.max(crit))
        } else if alpha <= 1.0 {
            n * l * l.ln().powi(2)
        } else {
            n * l.powf(alpha)
        }
    };
    let mut points = Vec::with_capacity(grid.len());
    for &n in grid {
        let diff = phi_lambda(spec.lam(), n)? - phi_mu(spec.mu(), n);
        points.push(GridPoint {
            n,
            r: diff / scale(n as f64),
        });
    }
    let ys: Vec<f64> = points.iter().map(|p| p.r).collect();
    let trend = last_quartile_trend(grid, &ys);

    if !critical_line {
        let (verdict, basis) = if beta > crit {
            (Verdict::Entrance, "non-critical: beta > 1 + alpha, coalescence dominates")
        } else {
            (Verdict::Exit, "non-critical: beta < 1 + alpha, fragmentation dominates")
        };
        return Ok(RegimeVerdict {
            verdict,
            branch: Branch::NonCritical,
            basis: basis.into(),
            threshold: crit,
            extrapolated_limit: None,
            threshold_margin: beta - crit,
            band: EXPONENT_TIE_TOL * crit,
            trend,
            grid: points,
        });
    }
    if !is_critical {
        let (verdict, basis) = if d > d_star {
            (Verdict::Entrance, "beta = 1 + alpha and c/beta > b/(1+alpha)")
        } else {
            (Verdict::Exit, "beta = 1 + alpha and c/beta < b/(1+alpha)")
        };
        return Ok(RegimeVerdict {
            verdict,
            branch: Branch::NonCritical,
            basis: basis.into(),
            threshold: d_star,
            extrapolated_limit: None,
            threshold_margin: d - d_star,
            band: eps_margin * d_star,
            trend,
            grid: points,
        });
    }

    let Some(limit) = extrapolate(&points) else {
        return Err(EfcError::invalid("classification grid is degenerate"));
    };
    let rising = trend > TREND_TOL;
    let falling = trend < -TREND_TOL;
    if alpha <= 1.0 {
        // Thresholds: 0 (non-explosion / coming down) and -2c/beta
        // (staying infinite), both on the n ln n (lnln n)² scale.
        let scale_th = 2.0 * c / beta;
        let band = eps_margin * scale_th;
        let lower = -scale_th;
        let (threshold, margin) = if limit >= lower / 2.0 {
            (0.0, limit)
        } else {
            (lower, limit - lower)
        };
        let (verdict, basis) = if margin.abs() < band {
            (Verdict::Inconclusive, "critical, alpha <= 1: limit within the band of a threshold")
        } else if threshold == 0.0 && margin > 0.0 {
            if rising {
                (Verdict::Entrance, "critical, alpha <= 1: R(n) diverges upward on the n ln n (ln ln n)^2 scale")
            } else {
                (Verdict::NonExplosive, "critical, alpha <= 1: R(n) bounded below by a positive limit")
            }
        } else if threshold == lower && margin < 0.0 {
            if falling {
                (Verdict::Exit, "critical, alpha <= 1: R(n) diverges downward under the two-sided log-power density bound")
            } else {
                (Verdict::StaysInfinite, "critical, alpha <= 1: limit of R(n) below -2 C2/beta")
            }
        } else {
            (Verdict::Inconclusive, "critical, alpha <= 1: limit between the thresholds 0 and -2 C2/beta")
        };
        return Ok(RegimeVerdict {
            verdict,
            branch: Branch::Critical,
            basis: basis.into(),
            threshold,
            extrapolated_limit: Some(limit),
            threshold_margin: margin,
            band,
            trend,
            grid: points,
        });
    }
    let theta = (2.0 * std::f64::consts::LN_2 - 0.5) * b;
    let band = eps_margin * theta;
    let margin = limit - theta;
    let (verdict, basis) = if margin.abs() < band {
        (Verdict::Inconclusive, "critical, alpha > 1: limit within the band of (2 ln 2 - 1/2) b")
    } else if margin > 0.0 {
        (Verdict::Entrance, "critical, alpha > 1: limit of R(n) above (2 ln 2 - 1/2) b")
    } else {
        (Verdict::Exit, "critical, alpha > 1: limit of R(n) below (2 ln 2 - 1/2) b under the two-sided log-power density bound")
    };
    Ok(RegimeVerdict {
        verdict,
        branch: Branch::Critical,
        basis: basis.into(),
        threshold: theta,
        extrapolated_limit: Some(limit),
        threshold_margin: margin,
        band,
        trend,
        grid: points,
    })
}
