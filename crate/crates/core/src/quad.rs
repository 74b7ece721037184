//! Globally adaptive Gauss-Kronrod (G10/K21) quadrature on finite intervals.

use crate::error::{EfcError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_segments: 2000,
        }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..Default::default()
        }
    }
}

/// Integral value with its estimated absolute error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment { a, b, value, error }
}

/// Integrates `f` over the union of consecutive panels given by `points`
/// (sorted, at least two entries). Panel boundaries are where the integrand
/// may be non-smooth. Non-finite integrand values are reported as failures.
pub fn integrate_points<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(EfcError::invalid("quadrature needs at least two points"));
    }
    let mut segs: Vec<Segment> = Vec::with_capacity(64);
    for w in points.windows(2) {
        if !(w[0] <= w[1]) || !w[0].is_finite() || !w[1].is_finite() {
            return Err(EfcError::invalid(format!(
                "quadrature breakpoints must be finite and sorted, got [{}, {}]",
                w[0], w[1]
            )));
        }
        if w[1] > w[0] {
            segs.push(kronrod21(&mut f, w[0], w[1]));
        }
    }
    let total = |s: &[Segment]| -> (f64, f64) {
        let mut v = 0.0;
        let mut e = 0.0;
        for x in s {
            v += x.value;
            e += x.error;
        }
        (v, e)
    };
    loop {
        let (value, error) = total(&segs);
        if !value.is_finite() || !error.is_finite() {
            return Err(EfcError::QuadratureFailure {
                context: "non-finite integrand".into(),
                error,
                tolerance: opts.abs_tol.max(opts.rel_tol * value.abs()),
            });
        }
        let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= tol {
            return Ok(QuadResult { value, error });
        }
        // Largest-error segment that can still be split.
        let mut worst: Option<usize> = None;
        for (i, s) in segs.iter().enumerate() {
            let mid = 0.5 * (s.a + s.b);
            let splittable = mid > s.a && mid < s.b && (s.b - s.a) > 1e-15 * mid.abs().max(1e-300);
            if splittable && worst.is_none_or(|w| s.error > segs[w].error) {
                worst = Some(i);
            }
        }
        let Some(i) = worst else {
            // Nothing left to split: accept if the error is at rounding level.
            if error <= 1e3 * f64::EPSILON * value.abs() {
                return Ok(QuadResult { value, error });
            }
            return Err(EfcError::QuadratureFailure {
                context: "interval resolution exhausted".into(),
                error,
                tolerance: tol,
            });
        };
        if segs.len() >= opts.max_segments {
            return Err(EfcError::QuadratureFailure {
                context: format!("{} segments", segs.len()),
                error,
                tolerance: tol,
            });
        }
        let s = segs.swap_remove(i);
        let mid = 0.5 * (s.a + s.b);
        segs.push(kronrod21(&mut f, s.a, mid));
        segs.push(kronrod21(&mut f, mid, s.b));
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_points(f, &[a, b], opts)
}

/// Sorts, clips to `[lo, hi]` and deduplicates candidate breakpoints.
pub fn breakpoints(lo: f64, hi: f64, extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = extra
        .into_iter()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    pts
}
