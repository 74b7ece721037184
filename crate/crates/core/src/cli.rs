//! Command-line front end: configuration documents, subcommands and
//! artifact writers.
//!
//! Exit status is 0 on success, 2 when `classify` is inconclusive and 1 on
//! any error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::criteria::{classify_regime, default_drift_grid, Verdict, DEFAULT_EPS_MARGIN};
use crate::error::{EfcError, Result};
use crate::experiments::{
    cdi_stabilization_scan, estimate_explosion_proxy, estimate_hitting_time, verify_asymptotics, Asymptotic,
    McSettings,
};
use crate::generator::{gen_apply, gen_truncated_apply, TailTolerance, TestFunction};
use crate::measures::{CoagulationMeasure, ModelSpec, PowerLogTail, SplittingMeasure};
use crate::rates::{phi_lambda, phi_mu, total_coag_rate};
use crate::simulate::{Simulator, DEFAULT_CEILING, DEFAULT_RATE_CACHE};

/// Exit status for an inconclusive classification.
pub const EXIT_INCONCLUSIVE: u8 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum LambdaConfig {
    /// Density `c (ln 1/x)^{β-1}`.
    #[serde(rename = "logpower")]
    LogPower { c: f64, beta: f64 },
    #[serde(rename = "uniform")]
    Uniform { scale: f64 },
    #[serde(rename = "beta")]
    Beta {
        a: f64,
        b: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    #[serde(rename = "tabulated")]
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
    #[serde(rename = "zero")]
    Zero,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum MuConfig {
    /// `μ(k) = b (ln k)^α / k²` for `k >= 2`, `μ(1) = mu1`.
    #[serde(rename = "logpower")]
    LogPower {
        b: f64,
        alpha: f64,
        #[serde(default)]
        mu1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<u64>,
    },
    /// Explicit masses `μ(1..=len)`, optionally followed by a power-log tail.
    #[serde(rename = "tabulated")]
    Tabulated {
        masses: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_b: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail_alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<u64>,
    },
    #[serde(rename = "zero")]
    Zero,
}

impl MuConfig {
    pub fn truncation(&self) -> Option<u64> {
        match self {
            MuConfig::LogPower { truncation, .. } | MuConfig::Tabulated { truncation, .. } => *truncation,
            MuConfig::Zero => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// States used by `rates`.
    pub n: Vec<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: vec![2, 4, 16, 64, 256, 1024, 4096, 16384],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    IteratedLog,
    PlainLog,
    InvLoglog,
    OneMinusInvLoglog,
    OnePlusInvLoglog,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub function: FunctionKind,
    /// Depth `m` of `IteratedLog`.
    pub depth: u32,
    /// Shift `l`; the family's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    pub grid: Vec<u64>,
    pub rel_tol: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            function: FunctionKind::PlainLog,
            depth: 1,
            shift: None,
            grid: default_drift_grid(),
            rel_tol: TailTolerance::default().rel_tol,
        }
    }
}

impl LyapunovConfig {
    pub fn test_function(&self) -> Result<TestFunction> {
        let f = match (self.function, self.shift) {
            (FunctionKind::IteratedLog, None) => TestFunction::iterated_log(self.depth)?,
            (FunctionKind::IteratedLog, Some(l)) => TestFunction::iterated_log_with_shift(self.depth, l)?,
            (FunctionKind::PlainLog, _) => TestFunction::PlainLog,
            (FunctionKind::Identity, _) => TestFunction::identity(),
            (FunctionKind::InvLoglog, l) => TestFunction::InvLogLog {
                l: l.unwrap_or(crate::generator::DEFAULT_SHIFT),
            },
            (FunctionKind::OneMinusInvLoglog, l) => TestFunction::OneMinusInvLogLog {
                l: l.unwrap_or(crate::generator::DEFAULT_SHIFT),
            },
            (FunctionKind::OnePlusInvLoglog, l) => {
                TestFunction::one_plus_inv_loglog(l.unwrap_or(crate::generator::DEFAULT_SHIFT))?
            }
        };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n0: u64,
    pub t_max: f64,
    pub n_ceiling: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_floor: Option<u64>,
    pub rate_cache_size: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            n0: 1000,
            t_max: 50.0,
            n_ceiling: DEFAULT_CEILING,
            a_floor: None,
            rate_cache_size: DEFAULT_RATE_CACHE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum McMode {
    Hitting,
    Explosion,
    CdiScan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub mode: McMode,
    pub reps: u64,
    /// Floor `a` of the hitting time.
    pub a: u64,
    /// Starting states; `sim.n0` when empty.
    pub n0: Vec<u64>,
    /// Truncation levels of the CDI scan.
    pub m: Vec<u64>,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            mode: McMode::Hitting,
            reps: 200,
            a: 50,
            n0: Vec::new(),
            m: vec![1, 4, 16, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifySection {
    pub eps_margin: f64,
    /// Critical-branch grid; the built-in grid when empty.
    pub grid: Vec<u64>,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection {
            eps_margin: DEFAULT_EPS_MARGIN,
            grid: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub check: Asymptotic,
    /// The check's default grid when empty.
    pub grid: Vec<u64>,
    /// The check's default tolerance when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            check: Asymptotic::FragLogDriftTail,
            grid: Vec::new(),
            tol: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: Format,
    /// Standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            format: Format::Csv,
            path: None,
        }
    }
}

/// A complete run configuration. Every field has an explicit default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub lambda: LambdaConfig,
    pub mu: MuConfig,
    pub grid: GridConfig,
    pub lyapunov: LyapunovConfig,
    pub sim: SimSection,
    pub mc: McSection,
    pub classify: ClassifySection,
    pub verify: VerifySection,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            lambda: LambdaConfig::LogPower { c: 1.0, beta: 3.0 },
            mu: MuConfig::LogPower {
                b: 1.0,
                alpha: 1.0,
                mu1: 0.0,
                truncation: None,
            },
            grid: GridConfig::default(),
            lyapunov: LyapunovConfig::default(),
            sim: SimSection::default(),
            mc: McSection::default(),
            classify: ClassifySection::default(),
            verify: VerifySection::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Builds the measures; failures name the offending table.
    pub fn model(&self) -> Result<ModelSpec> {
        let lam = match &self.lambda {
            LambdaConfig::LogPower { c, beta } => {
                if !(*beta > 1.0) {
                    return Err(EfcError::Config {
                        key: "lambda.beta".into(),
                        reason: format!("log-power coagulation needs beta > 1, got {beta}"),
                    });
                }
                CoagulationMeasure::log_power(*c, *beta)
            }
            LambdaConfig::Uniform { scale } => CoagulationMeasure::uniform(*scale),
            LambdaConfig::Beta { a, b, scale } => CoagulationMeasure::beta_density(*a, *b, *scale),
            LambdaConfig::Tabulated { grid, values } => CoagulationMeasure::tabulated(grid.clone(), values.clone()),
            LambdaConfig::Zero => Ok(CoagulationMeasure::zero()),
        }
        .map_err(|e| as_config("lambda", e))?;
        let mu = match &self.mu {
            MuConfig::LogPower { b, alpha, mu1, .. } => SplittingMeasure::log_power_with_mu1(*b, *alpha, *mu1),
            MuConfig::Tabulated {
                masses,
                tail_b,
                tail_alpha,
                ..
            } => {
                let tail = match (tail_b, tail_alpha) {
                    (None, None) => None,
                    (Some(b), Some(alpha)) => Some(PowerLogTail { b: *b, alpha: *alpha }),
                    _ => {
                        return Err(EfcError::Config {
                            key: "mu.tail_b".into(),
                            reason: "tail_b and tail_alpha must be given together".into(),
                        })
                    }
                };
                SplittingMeasure::tabulated(masses.clone(), tail)
            }
            MuConfig::Zero => Ok(SplittingMeasure::zero()),
        }
        .map_err(|e| as_config("mu", e))?;
        ModelSpec::new(lam, mu, self.mu.truncation()).map_err(|e| as_config("mu.truncation", e))
    }

    pub fn mc_settings(&self) -> McSettings {
        McSettings {
            t_max: self.sim.t_max,
            n_ceiling: self.sim.n_ceiling,
            seed: self.seed,
            rate_cache_size: self.sim.rate_cache_size,
        }
    }

    fn validate(&self) -> Result<()> {
        self.model()?;
        self.lyapunov.test_function().map_err(|e| as_config("lyapunov", e))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EfcError::Serialization(e.to_string()))
    }
}

fn as_config(key: &str, e: EfcError) -> EfcError {
    match e {
        EfcError::Config { .. } => e,
        other => EfcError::Config {
            key: key.into(),
            reason: other.to_string(),
        },
    }
}

/// Parses a TOML or JSON document (JSON when it starts with `{`), rejecting
/// unknown keys and invalid measures.
pub fn parse_config(document: &str) -> Result<RunConfig> {
    let value: serde_json::Value = if document.trim_start().starts_with('{') {
        serde_json::from_str(document).map_err(|e| EfcError::Config {
            key: "<document>".into(),
            reason: e.to_string(),
        })?
    } else {
        let t: toml::Table = toml::from_str(document).map_err(|e| EfcError::Config {
            key: "<document>".into(),
            reason: e.message().to_string(),
        })?;
        serde_json::to_value(t)?
    };
    let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        EfcError::Config {
            key: if path == "." { "<root>".into() } else { path },
            reason: e.into_inner().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Parser)]
#[command(name = "efc", version, about = "Block-counting chains of exchangeable fragmentation-coalescence processes")]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// States (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    /// Starting states (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub n0: Option<Vec<u64>>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub ceiling: Option<u64>,
    #[arg(long)]
    pub floor: Option<u64>,
    /// Truncation level `m` of the splitting measure.
    #[arg(long)]
    pub truncation: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Total merge rate, Φ_Λ, Φ_μ and their difference on a grid.
    Rates(#[command(flatten)] Overrides),
    /// Generator applied to a test function on a grid.
    Lyapunov {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum)]
        function: Option<FunctionKind>,
    },
    /// Boundary classification of a log-power model.
    Classify(#[command(flatten)] Overrides),
    /// One simulated path.
    Simulate(#[command(flatten)] Overrides),
    /// Monte Carlo estimates over many paths.
    Mc {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum)]
        mode: Option<McMode>,
    },
    /// Numerical check of a large-n asymptotic.
    Verify {
        #[command(flatten)]
        overrides: Overrides,
        /// Check id, e.g. frag-log-drift-tail.
        #[arg(long)]
        which: Option<Asymptotic>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Prints the full default configuration as TOML.
    PrintDefaults,
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(n) = &o.n {
        cfg.grid.n = n.clone();
        cfg.lyapunov.grid = n.clone();
        cfg.classify.grid = n.clone();
        cfg.verify.grid = n.clone();
    }
    if let Some(n0) = &o.n0 {
        if let Some(first) = n0.first() {
            cfg.sim.n0 = *first;
        }
        cfg.mc.n0 = n0.clone();
    }
    if let Some(r) = o.reps {
        cfg.mc.reps = r;
    }
    if let Some(t) = o.t_max {
        cfg.sim.t_max = t;
    }
    if let Some(c) = o.ceiling {
        cfg.sim.n_ceiling = c;
    }
    if let Some(f) = o.floor {
        cfg.sim.a_floor = Some(f);
        cfg.mc.a = f;
    }
    if let Some(m) = o.truncation {
        match &mut cfg.mu {
            MuConfig::LogPower { truncation, .. } | MuConfig::Tabulated { truncation, .. } => *truncation = Some(m),
            MuConfig::Zero => {}
        }
    }
}

/// Shortest decimal that reads back to the same `f64` (at most 17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

struct Output {
    path: Option<PathBuf>,
}

impl Output {
    fn write(&self, text: &str) -> Result<()> {
        match &self.path {
            Some(p) => std::fs::write(p, text)?,
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
            }
        }
        Ok(())
    }

    /// Sibling artifact `<path>.<suffix>`; `None` when writing to stdout.
    fn sibling(&self, suffix: &str) -> Option<PathBuf> {
        self.path.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".");
            s.push(suffix);
            PathBuf::from(s)
        })
    }
}

fn json_text(v: &serde_json::Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn csv_text(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs a parsed command line; `Ok` carries the exit status.
pub fn run(cli: &Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(p) = &cli.out {
        cfg.output.path = Some(p.clone());
    }
    let overrides = match &cli.command {
        Command::Rates(o) | Command::Classify(o) | Command::Simulate(o) => Some(o),
        Command::Lyapunov { overrides, .. } | Command::Mc { overrides, .. } | Command::Verify { overrides, .. } => {
            Some(overrides)
        }
        Command::Config { .. } => None,
    };
    if let Some(o) = overrides {
        apply_overrides(&mut cfg, o);
    }
    match &cli.command {
        Command::Lyapunov { function: Some(f), .. } => cfg.lyapunov.function = *f,
        Command::Mc { mode: Some(m), .. } => cfg.mc.mode = *m,
        Command::Verify { which, tol, .. } => {
            if let Some(w) = which {
                cfg.verify.check = *w;
            }
            if tol.is_some() {
                cfg.verify.tol = *tol;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    run_command(&cli.command, &cfg)
}

/// Dispatches `command` on a validated configuration.
pub fn run_command(command: &Command, cfg: &RunConfig) -> Result<u8> {
    let out = Output {
        path: cfg.output.path.clone(),
    };
    let format = cfg.output.format;
    match command {
        Command::Config {
            action: ConfigAction::PrintDefaults,
        } => {
            out.write(&RunConfig::default().to_toml()?)?;
            Ok(0)
        }
        Command::Rates(_) => {
            let spec = cfg.model()?;
            let mut rows = Vec::new();
            for &n in &cfg.grid.n {
                if n == 0 {
                    return Err(EfcError::Config {
                        key: "grid.n".into(),
                        reason: "states must be positive".into(),
                    });
                }
                let total = total_coag_rate(spec.lam(), n)?;
                let pl = if n >= 2 { phi_lambda(spec.lam(), n)? } else { 0.0 };
                let pm = phi_mu(spec.effective_mu(), n);
                rows.push((n, total, pl, pm, pl - pm));
            }
            let text = match format {
                Format::Csv => csv_text(
                    "n,total_coag,phi_lambda,phi_mu,phi_diff",
                    rows.iter().map(|r| {
                        vec![r.0.to_string(), fmt_f64(r.1), fmt_f64(r.2), fmt_f64(r.3), fmt_f64(r.4)]
                    }),
                ),
                Format::Json => json_text(&serde_json::json!({
                    "schema": 1,
                    "rows": rows.iter().map(|r| serde_json::json!({
                        "n": r.0, "total_coag": r.1, "phi_lambda": r.2, "phi_mu": r.3, "phi_diff": r.4
                    })).collect::<Vec<_>>(),
                }))?,
            };
            out.write(&text)?;
            Ok(0)
        }
        Command::Lyapunov { .. } => {
            let spec = cfg.model()?;
            let f = cfg.lyapunov.test_function()?;
            let tol = TailTolerance {
                rel_tol: cfg.lyapunov.rel_tol,
                ..TailTolerance::default()
            };
            let mut rows = Vec::new();
            for &n in &cfg.lyapunov.grid {
                let v = if spec.truncation().is_some() {
                    gen_truncated_apply(&spec, &f, n)?
                } else {
                    gen_apply(&spec, &f, n, tol)?
                };
                rows.push((n, f.eval(n)?, v));
            }
            let text = match format {
                Format::Csv => csv_text(
                    "n,g,Lc_g,Lf_g,L_g,tail_bound",
                    rows.iter().map(|(n, g, v)| {
                        vec![
                            n.to_string(),
                            fmt_f64(*g),
                            fmt_f64(v.coag_part),
                            fmt_f64(v.frag_part),
                            fmt_f64(v.total),
                            fmt_f64(v.frag_truncation_error),
                        ]
                    }),
                ),
                Format::Json => json_text(&serde_json::json!({
                    "schema": 1,
                    "test_function": f.name(),
                    "rows": rows.iter().map(|(n, g, v)| serde_json::json!({
                        "n": n, "g": g, "Lc_g": v.coag_part, "Lf_g": v.frag_part,
                        "L_g": v.total, "tail_bound": v.frag_truncation_error
                    })).collect::<Vec<_>>(),
                }))?,
            };
            out.write(&text)?;
            Ok(0)
        }
        Command::Classify(_) => {
            let spec = cfg.model()?;
            let grid = (!cfg.classify.grid.is_empty()).then_some(cfg.classify.grid.as_slice());
            let v = classify_regime(&spec, grid, cfg.classify.eps_margin)?;
            out.write(&json_text(&v.to_json())?)?;
            Ok(if v.verdict == Verdict::Inconclusive { EXIT_INCONCLUSIVE } else { 0 })
        }
        Command::Simulate(_) => {
            let spec = cfg.model()?;
            let sim = Simulator::new(&spec, cfg.sim.rate_cache_size)?;
            let params = crate::simulate::PathParams {
                n0: cfg.sim.n0,
                t_max: cfg.sim.t_max,
                n_ceiling: cfg.sim.n_ceiling,
                a_floor: cfg.sim.a_floor,
                seed: cfg.seed,
            };
            let tr = sim.trajectory(&params, 0)?;
            let summary = serde_json::json!({
                "schema": 1,
                "terminal": tr.summary.terminal.name(),
                "tau": tr.summary.terminal.tau(),
                "levels": tr.summary.levels.iter().map(|l| serde_json::json!({
                    "level": l.level, "t_first": l.t_first
                })).collect::<Vec<_>>(),
                "sup_n": tr.summary.sup_n,
                "final_n": tr.summary.final_state.n,
                "events": tr.events.len(),
            });
            match format {
                Format::Csv => {
                    let text = csv_text(
                        "t,n,kind,k",
                        tr.events.iter().map(|e| {
                            vec![fmt_f64(e.t), e.n_after.to_string(), e.kind.as_str().into(), e.k.to_string()]
                        }),
                    );
                    out.write(&text)?;
                    let js = json_text(&summary)?;
                    match out.sibling("summary.json") {
                        Some(p) => std::fs::write(p, js)?,
                        None => eprint!("{js}"),
                    }
                }
                Format::Json => {
                    let mut all = summary;
                    all["trajectory"] = serde_json::to_value(&tr.events)?;
                    out.write(&json_text(&all)?)?;
                }
            }
            Ok(0)
        }
        Command::Mc { .. } => {
            let spec = cfg.model()?;
            let settings = cfg.mc_settings();
            let n0s = if cfg.mc.n0.is_empty() { vec![cfg.sim.n0] } else { cfg.mc.n0.clone() };
            let m_label = spec.truncation().map(|m| m.to_string()).unwrap_or_default();
            let (report, rows): (serde_json::Value, Vec<Vec<String>>) = match cfg.mc.mode {
                McMode::Hitting => {
                    let s = estimate_hitting_time(&spec, cfg.mc.a, &n0s, cfg.mc.reps, &settings)?;
                    let rows = s
                        .iter()
                        .map(|x| {
                            vec![
                                x.n0.to_string(),
                                m_label.clone(),
                                fmt_opt(x.tau_q50),
                                fmt_opt(x.tau_q10),
                                fmt_opt(x.tau_q90),
                            ]
                        })
                        .collect();
                    let js: Vec<_> = s.iter().map(|x| x.to_json()).collect();
                    (serde_json::json!({"schema": 1, "mode": "hitting", "summaries": js}), rows)
                }
                McMode::Explosion => {
                    let mut js = Vec::new();
                    let mut rows = Vec::new();
                    for &n0 in &n0s {
                        let x = estimate_explosion_proxy(&spec, n0, cfg.mc.reps, &settings)?;
                        rows.push(vec![
                            x.n0.to_string(),
                            m_label.clone(),
                            fmt_opt(x.tau_q50),
                            fmt_opt(x.tau_q10),
                            fmt_opt(x.tau_q90),
                        ]);
                        js.push(x.to_json());
                    }
                    (serde_json::json!({"schema": 1, "mode": "explosion", "summaries": js}), rows)
                }
                McMode::CdiScan => {
                    let scan = cdi_stabilization_scan(&spec, cfg.mc.a, &n0s, &cfg.mc.m, cfg.mc.reps, &settings)?;
                    let rows = scan
                        .cells
                        .iter()
                        .map(|c| {
                            vec![
                                c.n0.to_string(),
                                c.m.to_string(),
                                fmt_opt(c.median_tau),
                                fmt_opt(c.q10),
                                fmt_opt(c.q90),
                            ]
                        })
                        .collect();
                    let mut js = serde_json::to_value(&scan)?;
                    js["schema"] = serde_json::json!(1);
                    js["mode"] = serde_json::json!("cdi-scan");
                    (js, rows)
                }
            };
            let text = match format {
                Format::Csv => csv_text("n0,m,median_tau,q10,q90", rows),
                Format::Json => json_text(&report)?,
            };
            out.write(&text)?;
            Ok(0)
        }
        Command::Verify { .. } => {
            let spec = cfg.model()?;
            let check = cfg.verify.check;
            let tol = cfg.verify.tol.unwrap_or_else(|| check.default_tol());
            let r = verify_asymptotics(&spec, check, &cfg.verify.grid, tol)?;
            let text = match format {
                Format::Csv => csv_text(
                    "n,ratio,target",
                    r.grid
                        .iter()
                        .zip(&r.measured)
                        .zip(&r.target)
                        .map(|((n, m), t)| vec![n.to_string(), fmt_f64(*m), fmt_opt(*t)]),
                ),
                Format::Json => json_text(&r.to_json())?,
            };
            out.write(&text)?;
            Ok(0)
        }
    }
}
