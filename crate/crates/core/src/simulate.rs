//! Exact continuous-time simulation of the block-counting chain.
//!
//! For `n <= N_TABLE` merges are drawn from the exact per-k rate table.
//! Above it the chain is simulated by thinning: candidate merges arrive at
//! the rate of a dominating envelope measure, a candidate fraction `x` is
//! drawn from the envelope, accepted with the exact ratio, and the merge
//! size is then `Bin(n, x)` conditioned on being at least 2. Rejected
//! candidates leave the state unchanged, so the jump chain and holding
//! times are exact without ever evaluating the total merge rate.

use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution, Exp1, Gamma};
use serde::Serialize;
use statrs::function::beta as sbeta;

use crate::error::{EfcError, Result};
use crate::measures::{CoagulationMeasure, LambdaFamily, ModelSpec, PowerLogTail, SplittingMeasure};
use crate::rates::{binomial_at_least_two, coag_row_sequential};
use crate::special::{ln_choose, upper_gamma};

/// Largest state whose merge law uses the exact per-k table.
pub const N_TABLE: u64 = 512;

/// Size of the alias table for fragmentation sizes.
pub const K_ALIAS: u64 = 1 << 16;

/// Default explosion-proxy level.
pub const DEFAULT_CEILING: u64 = 100_000;

/// Default number of cached per-n merge tables.
pub const DEFAULT_RATE_CACHE: usize = 1024;

/// Above this mean, the conditioned binomial uses a library sampler.
const BINOMIAL_INVERSION_MAX_MEAN: f64 = 30.0;

/// Random stream of one replicate. ChaCha is counter based, so the stream
/// is fixed by `(seed, replicate)` and the draw counter alone.
pub type SimRng = ChaCha8Rng;

pub fn rng_for(seed: u64, replicate: u64) -> SimRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(replicate);
    r
}

/// Uniform on (0, 1].
#[inline]
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChainState {
    pub n: u64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Coag,
    Frag,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Coag => "coag",
            EventKind::Frag => "frag",
        }
    }
}

/// One jump. `Coag`: `n_after = n_before - k + 1`; `Frag`: `n_after = n_before + k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub t: f64,
    pub kind: EventKind,
    pub k: u64,
    pub n_before: u64,
    pub n_after: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "terminal", content = "tau")]
pub enum Terminal {
    TimeBudget,
    HitFloor(f64),
    HitCeiling(f64),
}

impl Terminal {
    pub fn name(&self) -> &'static str {
        match self {
            Terminal::TimeBudget => "TimeBudget",
            Terminal::HitFloor(_) => "HitFloor",
            Terminal::HitCeiling(_) => "HitCeiling",
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Terminal::TimeBudget => None,
            Terminal::HitFloor(t) | Terminal::HitCeiling(t) => Some(*t),
        }
    }
}

/// First time the chain reached `level` (`None` if it never did).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelCrossing {
    pub level: u64,
    pub t_first: Option<f64>,
}

/// Stopping rules and seed of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathParams {
    pub n0: u64,
    pub t_max: f64,
    pub n_ceiling: u64,
    pub a_floor: Option<u64>,
    pub seed: u64,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 {
            return Err(EfcError::invalid("n0 must be at least 1"));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(EfcError::invalid("t_max must be positive and finite"));
        }
        if self.n_ceiling <= self.n0 {
            return Err(EfcError::invalid(format!(
                "n_ceiling ({}) must exceed n0 ({})",
                self.n_ceiling, self.n0
            )));
        }
        if let Some(a) = self.a_floor {
            if a == 0 || a >= self.n0 {
                return Err(EfcError::invalid(format!(
                    "a_floor ({a}) must satisfy 1 <= a_floor < n0 ({})",
                    self.n0
                )));
            }
        }
        Ok(())
    }

    /// Levels `n0·2^j`, `j >= 1`, up to the ceiling.
    pub fn levels(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut l = self.n0.saturating_mul(2);
        while l <= self.n_ceiling {
            out.push(l);
            if l > u64::MAX / 2 {
                break;
            }
            l *= 2;
        }
        out
    }
}

/// Full configuration of a single simulated path.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub n0: u64,
    pub t_max: f64,
    pub n_ceiling: u64,
    pub a_floor: Option<u64>,
    pub seed: u64,
    pub rate_cache_size: usize,
}

impl SimConfig {
    pub fn params(&self) -> PathParams {
        PathParams {
            n0: self.n0,
            t_max: self.t_max,
            n_ceiling: self.n_ceiling,
            a_floor: self.a_floor,
            seed: self.seed,
        }
    }
}

/// Statistics of one run; what Monte Carlo keeps instead of the events.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub terminal: Terminal,
    pub final_state: ChainState,
    pub levels: Vec<LevelCrossing>,
    pub sup_n: u64,
    pub n_coag: u64,
    pub n_frag: u64,
    /// Largest fragmentation size seen.
    pub max_frag: u64,
    pub coag_candidates: u64,
    pub coag_accepted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub events: Vec<JumpEvent>,
    pub summary: PathSummary,
}

impl Trajectory {
    pub fn terminal(&self) -> Terminal {
        self.summary.terminal
    }
}

struct CoagTable {
    total: f64,
    /// Unnormalized cumulative rates; entry `k - 2` covers sizes `2..=k`.
    cumulative: Vec<f64>,
}

impl CoagTable {
    fn build(lam: &CoagulationMeasure, n: u64) -> Result<Self> {
        let row = coag_row_sequential(lam, n)?;
        let mut cumulative = Vec::with_capacity(row.len());
        let mut acc = 0.0;
        for r in row.iter() {
            acc += r;
            cumulative.push(acc);
        }
        Ok(CoagTable { total: acc, cumulative })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>() * self.total;
        let i = self.cumulative.partition_point(|c| *c <= u);
        i.min(self.cumulative.len() - 1) as u64 + 2
    }
}

/// Dominating measure `ρ̄(x) · min(x^{-2}, C(n,2))` with `ρ̄ >= ρ`.
#[derive(Clone, Debug)]
enum Envelope {
    /// `ρ̄ = ρ = c (ln 1/x)^{β-1}`.
    LogPower { c: f64, beta: f64 },
    /// `ρ̄ = k x^{a-1}`; `ratio(x) = ρ(x)/ρ̄(x)`.
    Power { k: f64, a: f64, extra: PowerExtra },
}

#[derive(Clone, Debug)]
enum PowerExtra {
    None,
    /// `(1-x)^{e}` with `e >= 0`.
    OneMinusPow(f64),
    /// Tabulated density divided by its maximum.
    Tabulated(CoagulationMeasure, f64),
}

/// Envelope constants at a given `n`.
struct EnvelopeAt {
    c2: f64,
    x_star: f64,
    t_star: f64,
    mass_a: f64,
    mass_b: f64,
}

impl Envelope {
    fn for_measure(lam: &CoagulationMeasure) -> Option<Envelope> {
        match lam.family() {
            LambdaFamily::LogPower { c, beta } => Some(Envelope::LogPower { c: *c, beta: *beta }),
            LambdaFamily::Uniform { scale } => Some(Envelope::Power {
                k: *scale,
                a: 1.0,
                extra: PowerExtra::None,
            }),
            LambdaFamily::BetaDensity { a, b, scale } => {
                if *b < 1.0 {
                    return None;
                }
                Some(Envelope::Power {
                    k: scale / sbeta::beta(*a, *b),
                    a: *a,
                    extra: if *b == 1.0 {
                        PowerExtra::None
                    } else {
                        PowerExtra::OneMinusPow(b - 1.0)
                    },
                })
            }
            LambdaFamily::TabulatedDensity { values, .. } => {
                let m = values.iter().fold(0.0f64, |a, v| a.max(*v));
                Some(Envelope::Power {
                    k: m,
                    a: 1.0,
                    extra: PowerExtra::Tabulated(lam.clone(), m),
                })
            }
        }
    }

    fn at(&self, n: u64) -> EnvelopeAt {
        let nf = n as f64;
        let c2 = nf * (nf - 1.0) / 2.0;
        let x_star = (1.0 / c2).sqrt();
        let t_star = -x_star.ln();
        let (mass_a, mass_b) = match *self {
            Envelope::LogPower { c, beta } => {
                let a = c2 * c * upper_gamma(beta, t_star);
                // ∫_0^{t*} t^{β-1} e^t dt = Σ_j t*^{β+j} / (j! (β+j))
                let mut term = t_star.powf(beta);
                let mut s = term / beta;
                let mut j = 0.0;
                loop {
                    j += 1.0;
                    term *= t_star / j;
                    let add = term / (beta + j);
                    s += add;
                    if add < 1e-17 * s {
                        break;
                    }
                }
                (a, c * s)
            }
            Envelope::Power { k, a, .. } => {
                let ma = c2 * k * x_star.powf(a) / a;
                let mb = if (a - 2.0).abs() < 1e-12 {
                    k * t_star
                } else {
                    k * (1.0 - x_star.powf(a - 2.0)) / (a - 2.0)
                };
                (ma, mb)
            }
        };
        EnvelopeAt {
            c2,
            x_star,
            t_star,
            mass_a,
            mass_b,
        }
    }

    /// Draws `x` from the normalized envelope, then thins by `ρ/ρ̄`.
    /// Returns `None` when the density-ratio step rejects.
    fn sample_x<R: Rng + ?Sized>(&self, e: &EnvelopeAt, rng: &mut R) -> Option<f64> {
        let piece_a = rng.random::<f64>() * (e.mass_a + e.mass_b) < e.mass_a;
        match self {
            Envelope::LogPower { beta, .. } => {
                let beta = *beta;
                let t = if piece_a {
                    truncated_gamma(beta, e.t_star, rng)
                } else {
                    // s = t* - t has density ∝ (t* - s)^{β-1} e^{-s} on (0, t*).
                    let tail = -(-e.t_star).exp_m1();
                    loop {
                        let s = -(-(rng.random::<f64>() * tail)).ln_1p();
                        let w = ((e.t_star - s) / e.t_star).max(0.0).powf(beta - 1.0);
                        if rng.random::<f64>() < w {
                            break e.t_star - s;
                        }
                    }
                };
                Some((-t).exp())
            }
            Envelope::Power { a, extra, .. } => {
                let a = *a;
                let u = open_unit(rng);
                let x = if piece_a {
                    e.x_star * u.powf(1.0 / a)
                } else if (a - 2.0).abs() < 1e-12 {
                    e.x_star.powf(u)
                } else {
                    let lo = e.x_star.powf(a - 2.0);
                    (lo + (1.0 - u) * (1.0 - lo)).powf(1.0 / (a - 2.0))
                };
                let keep = match extra {
                    PowerExtra::None => 1.0,
                    PowerExtra::OneMinusPow(p) => (1.0 - x).powf(*p),
                    PowerExtra::Tabulated(lam, m) => {
                        if x > 0.0 && x < 1.0 {
                            lam.density(x).unwrap_or(0.0) / m
                        } else {
                            0.0
                        }
                    }
                };
                if rng.random::<f64>() < keep {
                    Some(x)
                } else {
                    None
                }
            }
        }
    }
}

/// `t` with density ∝ `t^{β-1} e^{-t}` on `(t0, ∞)`.
fn truncated_gamma<R: Rng + ?Sized>(beta: f64, t0: f64, rng: &mut R) -> f64 {
    if t0 < beta - 1.0 {
        // Most of the Gamma(β) mass lies above t0.
        let g = Gamma::new(beta, 1.0).expect("beta > 1");
        loop {
            let t = g.sample(rng);
            if t > t0 {
                return t;
            }
        }
    }
    // Shifted exponential proposal with rate r; log acceptance
    // h(t) = (β-1) ln(t/t0) - (1-r)(t - t0), maximized at t_m.
    let r = (1.0 - (beta - 1.0) / t0).max(0.5);
    let t_m = if r < 1.0 {
        ((beta - 1.0) / (1.0 - r)).max(t0)
    } else {
        t0
    };
    let h = |t: f64| (beta - 1.0) * (t / t0).ln() - (1.0 - r) * (t - t0);
    let h_max = h(t_m);
    loop {
        let e: f64 = Exp1.sample(rng);
        let t = t0 + e / r;
        if open_unit(rng).ln() <= h(t) - h_max {
            return t;
        }
    }
}

/// `k ~ Bin(n, x)` conditioned on `k >= 2`.
fn binomial_at_least_two_sample<R: Rng + ?Sized>(n: u64, x: f64, rng: &mut R) -> u64 {
    let nf = n as f64;
    if x >= 1.0 {
        return n;
    }
    if nf * x <= BINOMIAL_INVERSION_MAX_MEAN {
        let total = binomial_at_least_two(nf, x);
        let mut u = rng.random::<f64>() * total;
        let odds = x / (1.0 - x);
        let mut p = (ln_choose(n, 2) + 2.0 * x.ln() + (nf - 2.0) * (-x).ln_1p()).exp();
        let mut k = 2u64;
        loop {
            if u < p || k >= n {
                return k;
            }
            u -= p;
            p *= (n - k) as f64 / (k + 1) as f64 * odds;
            if p == 0.0 {
                // Rounding left residual mass past the support's numerical end.
                return k;
            }
            k += 1;
        }
    }
    let b = Binomial::new(n, x).expect("valid binomial parameters");
    loop {
        let k = b.sample(rng);
        if k >= 2 {
            return k;
        }
    }
}

struct TailSampler {
    alpha: f64,
    k_prime: f64,
    s: f64,
    ln_m: f64,
}

impl TailSampler {
    fn new(tail: PowerLogTail, k_prime: u64) -> Self {
        let kp = k_prime as f64;
        let lk = kp.ln();
        let alpha = tail.alpha;
        let s = (1.0 - alpha / lk).max(0.5);
        let l_star = if s < 1.0 && alpha > 0.0 { lk.max(alpha / (1.0 - s)) } else { lk };
        let ln_m = alpha * l_star.ln() + (s - 1.0) * l_star + 2.0 * (1.0 / kp).ln_1p() - s.ln() - s * lk;
        TailSampler {
            alpha,
            k_prime: kp,
            s,
            ln_m,
        }
    }

    /// `k >= K'` with probability ∝ `(ln k)^α / k²`.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        loop {
            // Discretized Pareto: k = ⌊K' U^{-1/s}⌋.
            let y = self.k_prime * open_unit(rng).powf(-1.0 / self.s);
            if y >= 9.0e18 {
                // Mass beyond ~2^63 is below 1e-13; resampling conditions it away.
                continue;
            }
            let k = y.floor();
            let ln_q = self.s * self.k_prime.ln() - self.s * k.ln() + (-(-self.s * (1.0 / k).ln_1p()).exp_m1()).ln();
            let ln_t = self.alpha * k.ln().ln() - 2.0 * k.ln();
            let ln_t = if self.alpha == 0.0 { -2.0 * k.ln() } else { ln_t };
            if open_unit(rng).ln() <= ln_t - ln_q - self.ln_m {
                return k as u64;
            }
        }
    }
}

/// Sampler for fragmentation sizes `k ~ μ(·)/μ(ℕ₊)`.
pub struct FragSampler {
    alias: Option<WeightedAliasIndex<f64>>,
    /// Number of explicit sizes `1..=head`; index `head` is the tail bucket.
    head: usize,
    tail: Option<TailSampler>,
    total: f64,
}

impl FragSampler {
    pub fn new(mu: &SplittingMeasure) -> Result<Self> {
        let total = mu.total();
        if mu.is_zero() {
            return Ok(FragSampler {
                alias: None,
                head: 0,
                tail: None,
                total: 0.0,
            });
        }
        let (head, tail) = match mu.support_max() {
            Some(kmax) => (kmax, None),
            None => {
                let h = K_ALIAS.max(mu.head_len());
                (h, mu.tail())
            }
        };
        let mut weights: Vec<f64> = (1..=head).map(|k| mu.mass(k)).collect();
        if tail.is_some() {
            weights.push(mu.tail_sum_from(head + 1));
        }
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| EfcError::invalid(format!("fragmentation alias table: {e}")))?;
        Ok(FragSampler {
            alias: Some(alias),
            head: head as usize,
            tail: tail.map(|t| TailSampler::new(t, head + 1)),
            total,
        })
    }

    /// μ(ℕ₊).
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let Some(alias) = &self.alias else {
            return Err(EfcError::invalid("fragmentation size requested from a zero splitting measure"));
        };
        let i = alias.sample(rng);
        if i < self.head {
            return Ok(i as u64 + 1);
        }
        match &self.tail {
            Some(t) => Ok(t.sample(rng)),
            None => Ok(self.head as u64),
        }
    }
}

/// Sampler for merge sizes `k ∝ C(n,k) λ_{n,k}`.
pub struct CoagSampler {
    lam: CoagulationMeasure,
    envelope: Option<Envelope>,
    tables: Mutex<LruCache<u64, Arc<CoagTable>>>,
}

impl CoagSampler {
    pub fn new(lam: &CoagulationMeasure, rate_cache_size: usize) -> Self {
        CoagSampler {
            lam: lam.clone(),
            envelope: if lam.is_zero() { None } else { Envelope::for_measure(lam) },
            tables: Mutex::new(LruCache::new(
                NonZeroUsize::new(rate_cache_size.max(1)).expect("nonzero"),
            )),
        }
    }

    fn table(&self, n: u64) -> Result<Arc<CoagTable>> {
        if let Some(t) = self.tables.lock().get(&n) {
            return Ok(t.clone());
        }
        let t = Arc::new(CoagTable::build(&self.lam, n)?);
        self.tables.lock().put(n, t.clone());
        Ok(t)
    }

    /// Exact total merge rate for `n <= N_TABLE`.
    pub fn exact_total(&self, n: u64) -> Result<f64> {
        if n < 2 || self.lam.is_zero() {
            return Ok(0.0);
        }
        Ok(self.table(n)?.total)
    }

    /// Rate at which merge candidates arrive from state `n`, and whether
    /// every candidate is a real merge.
    fn candidate_rate(&self, n: u64) -> Result<(f64, bool)> {
        if n < 2 || self.lam.is_zero() {
            return Ok((0.0, true));
        }
        if n <= N_TABLE {
            return Ok((self.table(n)?.total, true));
        }
        match &self.envelope {
            Some(env) => {
                let e = env.at(n);
                Ok((e.mass_a + e.mass_b, false))
            }
            None => Err(EfcError::EnvelopeUnavailable(format!(
                "{} density at n = {n} > {N_TABLE}",
                self.lam.family().name()
            ))),
        }
    }

    /// One envelope candidate at `n > N_TABLE`: the merge size, or `None`
    /// when thinned away.
    fn try_envelope<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Result<Option<u64>> {
        let Some(env) = &self.envelope else {
            return Err(EfcError::EnvelopeUnavailable(format!(
                "{} density",
                self.lam.family().name()
            )));
        };
        let e = env.at(n);
        let Some(x) = env.sample_x(&e, rng) else {
            return Ok(None);
        };
        let h = binomial_at_least_two(n as f64, x);
        let cap = (e.c2 * x * x).min(1.0);
        if rng.random::<f64>() * cap >= h {
            return Ok(None);
        }
        Ok(Some(binomial_at_least_two_sample(n, x, rng)))
    }

    /// Fraction of envelope candidates that become merges at `n`,
    /// estimated from `draws` candidates.
    pub fn acceptance_rate<R: Rng + ?Sized>(&self, n: u64, draws: u64, rng: &mut R) -> Result<f64> {
        let mut acc = 0u64;
        for _ in 0..draws {
            if self.try_envelope(n, rng)?.is_some() {
                acc += 1;
            }
        }
        Ok(acc as f64 / draws.max(1) as f64)
    }

    /// Merge size from state `n >= 2`.
    pub fn sample<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Result<u64> {
        if n < 2 {
            return Err(EfcError::domain(format!("no merge possible from n = {n}")));
        }
        if self.lam.is_zero() {
            return Err(EfcError::ZeroRate { n });
        }
        if n == 2 {
            return Ok(2);
        }
        if n <= N_TABLE {
            return Ok(self.table(n)?.sample(rng));
        }
        loop {
            if let Some(k) = self.try_envelope(n, rng)? {
                return Ok(k);
            }
        }
    }

    /// Merge size with the envelope path forced, for any `n >= 3`.
    pub fn sample_by_rejection<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Result<u64> {
        if n < 3 {
            return self.sample(n, rng);
        }
        loop {
            if let Some(k) = self.try_envelope(n, rng)? {
                return Ok(k);
            }
        }
    }
}

/// Samplers and rates for one [`ModelSpec`]; shareable across threads.
pub struct Simulator {
    spec: ModelSpec,
    coag: CoagSampler,
    frag: FragSampler,
}

impl Simulator {
    pub fn new(spec: &ModelSpec, rate_cache_size: usize) -> Result<Self> {
        Ok(Simulator {
            spec: spec.clone(),
            coag: CoagSampler::new(spec.lam(), rate_cache_size),
            frag: FragSampler::new(spec.effective_mu())?,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn coag_sampler(&self) -> &CoagSampler {
        &self.coag
    }

    pub fn frag_sampler(&self) -> &FragSampler {
        &self.frag
    }

    /// Total jump rate `Q(n)` for `n <= N_TABLE` (exact table).
    pub fn holding_rate(&self, n: u64) -> Result<f64> {
        Ok(self.coag.exact_total(n)? + n as f64 * self.frag.total())
    }

    /// Advances `state` by one jump. Merge candidates rejected by thinning
    /// only advance time.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<JumpEvent> {
        let mut stats = (0u64, 0u64);
        self.step_counted(state, rng, f64::INFINITY, &mut stats)?
            .ok_or(EfcError::ZeroRate { n: state.n })
    }

    /// As [`Self::step`] but stops (returning `None`) once time would pass
    /// `t_limit`. `stats` accumulates (candidates, accepted) merges.
    fn step_counted<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        rng: &mut R,
        t_limit: f64,
        stats: &mut (u64, u64),
    ) -> Result<Option<JumpEvent>> {
        let n = state.n;
        let frag_rate = n as f64 * self.frag.total();
        let (coag_rate, exact) = self.coag.candidate_rate(n)?;
        let q = frag_rate + coag_rate;
        if q <= 0.0 {
            return Err(EfcError::ZeroRate { n });
        }
        loop {
            let e: f64 = Exp1.sample(rng);
            let t = state.t + e / q;
            if t > t_limit {
                state.t = t_limit;
                return Ok(None);
            }
            state.t = t;
            if rng.random::<f64>() * q < frag_rate {
                let k = self.frag.sample(rng)?;
                state.n = n + k;
                return Ok(Some(JumpEvent {
                    t,
                    kind: EventKind::Frag,
                    k,
                    n_before: n,
                    n_after: state.n,
                }));
            }
            let k = if exact {
                Some(self.coag.table(n)?.sample(rng))
            } else {
                stats.0 += 1;
                let k = self.coag.try_envelope(n, rng)?;
                if k.is_some() {
                    stats.1 += 1;
                }
                k
            };
            if let Some(k) = k {
                state.n = n - k + 1;
                return Ok(Some(JumpEvent {
                    t,
                    kind: EventKind::Coag,
                    k,
                    n_before: n,
                    n_after: state.n,
                }));
            }
        }
    }

    /// Runs one path, passing every event to `observer`.
    pub fn run<F: FnMut(&JumpEvent)>(
        &self,
        params: &PathParams,
        replicate: u64,
        mut observer: F,
    ) -> Result<PathSummary> {
        params.validate()?;
        let mut rng = rng_for(params.seed, replicate);
        let mut state = ChainState { n: params.n0, t: 0.0 };
        let mut levels: Vec<LevelCrossing> = params
            .levels()
            .into_iter()
            .map(|level| LevelCrossing { level, t_first: None })
            .collect();
        let mut next_level = 0usize;
        let mut summary = PathSummary {
            terminal: Terminal::TimeBudget,
            final_state: state,
            levels: Vec::new(),
            sup_n: state.n,
            n_coag: 0,
            n_frag: 0,
            max_frag: 0,
            coag_candidates: 0,
            coag_accepted: 0,
        };
        let mut stats = (0u64, 0u64);
        let terminal = loop {
            match self.step_counted(&mut state, &mut rng, params.t_max, &mut stats) {
                Ok(Some(ev)) => {
                    observer(&ev);
                    match ev.kind {
                        EventKind::Coag => summary.n_coag += 1,
                        EventKind::Frag => {
                            summary.n_frag += 1;
                            summary.max_frag = summary.max_frag.max(ev.k);
                        }
                    }
                    summary.sup_n = summary.sup_n.max(state.n);
                    while next_level < levels.len() && state.n >= levels[next_level].level {
                        levels[next_level].t_first = Some(state.t);
                        next_level += 1;
                    }
                    if state.n >= params.n_ceiling {
                        break Terminal::HitCeiling(state.t);
                    }
                    if let Some(a) = params.a_floor {
                        if state.n <= a {
                            break Terminal::HitFloor(state.t);
                        }
                    }
                }
                Ok(None) => break Terminal::TimeBudget,
                // Absorbing state: nothing more happens before t_max.
                Err(EfcError::ZeroRate { .. }) => {
                    state.t = params.t_max;
                    break Terminal::TimeBudget;
                }
                Err(e) => return Err(e),
            }
        };
        summary.terminal = terminal;
        summary.final_state = state;
        summary.levels = levels;
        summary.coag_candidates = stats.0;
        summary.coag_accepted = stats.1;
        Ok(summary)
    }

    /// Runs one path and keeps every event.
    pub fn trajectory(&self, params: &PathParams, replicate: u64) -> Result<Trajectory> {
        let mut events = Vec::new();
        let summary = self.run(params, replicate, |e| events.push(*e))?;
        Ok(Trajectory { events, summary })
    }
}

/// Simulates one path of the chain described by `config` (replicate 0).
pub fn simulate_path(config: &SimConfig) -> Result<Trajectory> {
    let sim = Simulator::new(&config.spec, config.rate_cache_size)?;
    sim.trajectory(&config.params(), 0)
}

/// Simulates the truncated chain with splitting measure μ_m.
pub fn simulate_truncated(config: &SimConfig, m: u64) -> Result<Trajectory> {
    let spec = config.spec.with_truncation(Some(m))?;
    let sim = Simulator::new(&spec, config.rate_cache_size)?;
    sim.trajectory(&config.params(), 0)
}
