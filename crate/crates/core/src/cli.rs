//! Command-line front end: flat key=value experiment configs, run
//! orchestration across generator and sampler grids, and report output as
//! text, CSV or JSON.
//!
//! Results go to standard output or the file named by `--out`; progress
//! lines go to standard error. With a fixed config and seed the CSV bytes
//! are identical across runs and across worker counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::market::{covariance_blocks, MarketSpec, TimeGrid, VolatilityModel};
use crate::pathgen::{
    effective_dimension, generator_cholesky, generator_kpa, generator_pca, GeneratingMatrix,
    GeneratorMethod, PathGenError,
};
use crate::pricer::{price_basket_asian, PayoffSpec, SamplerKind, SimulationPlan};

/// Version stamp carried in every report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Paths per batch used when `--smoke` caps a run.
pub const SMOKE_PATHS: usize = 512;

/// Configs compiled into the binary, addressable by name via `--config`.
pub const BUNDLED_CONFIGS: &[(&str, &str)] = &[
    ("basket2_uncorr", include_str!("../data/configs/basket2_uncorr.cfg")),
    ("basket2_corr", include_str!("../data/configs/basket2_corr.cfg")),
    ("basket10_uncorr", include_str!("../data/configs/basket10_uncorr.cfg")),
    ("basket10_corr", include_str!("../data/configs/basket10_corr.cfg")),
    ("expdecay_uncorr", include_str!("../data/configs/expdecay_uncorr.cfg")),
    ("expdecay_corr", include_str!("../data/configs/expdecay_corr.cfg")),
];

/// Failures split by exit code: bad input is 2, everything after a valid
/// config is 1.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(message) | CliError::Runtime(message) => f.write_str(message),
        }
    }
}

impl std::error::Error for CliError {}

/// One resolved experiment: market, grid, payoff and the run grid. String
/// fields keep the config echo in reports byte-stable and round-trippable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spot: Vec<f64>,
    pub rate: f64,
    pub rho: f64,
    pub sigma: Vec<f64>,
    pub sigma_inf: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub steps: usize,
    pub horizon: f64,
    pub strike: f64,
    pub samplers: Vec<String>,
    pub generators: Vec<String>,
    /// "full", "anova", or comma-separated column counts.
    pub eff_dim: String,
    pub anova_p: f64,
    pub paths: usize,
    pub batches: usize,
    pub seed: u64,
}

/// How many generating-matrix columns each run keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
enum WidthChoice {
    Full,
    Anova,
    Explicit(Vec<usize>),
}

/// Typed counterpart of a validated config, ready to price.
#[derive(Debug)]
struct ResolvedRun {
    spec: MarketSpec,
    grid: TimeGrid,
    payoff: PayoffSpec,
    samplers: Vec<SamplerKind>,
    generators: Vec<GeneratorMethod>,
    width: WidthChoice,
    anova_p: f64,
    paths: usize,
    batches: usize,
    seed: u64,
}

/// One (generator, sampler, width) cell of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub generator: String,
    pub sampler: String,
    pub eff_dim: usize,
    pub price: f64,
    pub rmse: f64,
    pub seconds: f64,
}

/// Everything a run produced, carrying its config for reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

/// Knobs that shape execution without being part of the experiment.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Report zero in every seconds field, making output byte-stable.
    pub no_timing: bool,
    /// Cap paths per batch at `SMOKE_PATHS` for a quick end-to-end pass.
    pub smoke: bool,
}

fn validation(message: impl Into<String>) -> CliError {
    CliError::Validation(message.into())
}

/// Returns the bundled config text for `name`, or reads `name` as a path.
pub fn load_config(name: &str) -> Result<String, CliError> {
    if let Some((_, text)) = BUNDLED_CONFIGS.iter().find(|(key, _)| *key == name) {
        return Ok((*text).to_string());
    }
    std::fs::read_to_string(name).map_err(|err| {
        let names: Vec<&str> = BUNDLED_CONFIGS.iter().map(|(key, _)| *key).collect();
        validation(format!(
            "cannot read config '{name}': {err} (bundled names: {})",
            names.join(", ")
        ))
    })
}

struct RawConfig {
    // section -> key -> (value, consumed)
    sections: BTreeMap<String, BTreeMap<String, (String, bool)>>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, bool)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (index, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(cut) => &raw_line[..cut],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let position = index + 1;
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| validation(format!("line {position}: unterminated section header '{line}'")))?
                    .trim()
                    .to_string();
                if !matches!(name.as_str(), "market" | "grid" | "payoff" | "run") {
                    return Err(validation(format!(
                        "line {position}: unknown section '[{name}]', expected market, grid, payoff or run"
                    )));
                }
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                validation(format!("line {position}: expected 'key = value', got '{line}'"))
            })?;
            let section = current
                .clone()
                .ok_or_else(|| validation(format!("line {position}: key before any [section] header")))?;
            let key = key.trim().to_string();
            let entry = sections.entry(section.clone()).or_default();
            if entry.insert(key.clone(), (value.trim().to_string(), false)).is_some() {
                return Err(validation(format!("line {position}: duplicate key '{key}' in [{section}]")));
            }
        }
        Ok(RawConfig { sections })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let (value, consumed) = self.sections.get_mut(section)?.get_mut(key)?;
        *consumed = true;
        Some(value.clone())
    }

    fn reject_leftovers(&self) -> Result<(), CliError> {
        for (section, keys) in &self.sections {
            for (key, (_, consumed)) in keys {
                if !consumed {
                    return Err(validation(format!("config [{section}]: unknown key '{key}'")));
                }
            }
        }
        Ok(())
    }
}

fn parse_scalar<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| {
        validation(format!(
            "config [{section}].{key}: cannot parse '{value}' as {}",
            std::any::type_name::<T>()
        ))
    })
}

fn parse_list(section: &str, key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|item| parse_scalar(section, key, item.trim()))
        .collect()
}

/// Expands `linspace(a, b)` over the asset count, or parses a plain list.
fn parse_sigma(value: &str, assets: Option<usize>) -> Result<Vec<f64>, CliError> {
    if let Some(inner) = value.strip_prefix("linspace(").and_then(|rest| rest.strip_suffix(')')) {
        let ends = parse_list("market", "sigma", inner)?;
        if ends.len() != 2 {
            return Err(validation(format!(
                "config [market].sigma: linspace takes two endpoints, got {}",
                ends.len()
            )));
        }
        let count = assets.ok_or_else(|| {
            validation("config [market].sigma: linspace needs an explicit 'assets' count")
        })?;
        if count < 2 {
            return Err(validation("config [market].sigma: linspace needs at least 2 assets"));
        }
        let gap = (ends[1] - ends[0]) / (count - 1) as f64;
        return Ok((0..count).map(|i| ends[0] + gap * i as f64).collect());
    }
    parse_list("market", "sigma", value)
}

/// Broadcasts a one-element list to `count` entries and checks longer lists.
fn broadcast(section: &str, key: &str, values: Vec<f64>, count: usize) -> Result<Vec<f64>, CliError> {
    if values.len() == 1 {
        return Ok(vec![values[0]; count]);
    }
    if values.len() == count {
        return Ok(values);
    }
    Err(validation(format!(
        "config [{section}].{key}: got {} values for {count} assets",
        values.len()
    )))
}

/// Parses the flat sectioned key=value format into a config with the
/// standard run sizes as defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut raw = RawConfig::parse(text)?;

    let assets: Option<usize> = match raw.take("market", "assets") {
        Some(value) => Some(parse_scalar("market", "assets", &value)?),
        None => None,
    };
    let sigma_text = raw
        .take("market", "sigma")
        .ok_or_else(|| validation("config [market]: missing key 'sigma'"))?;
    let sigma = parse_sigma(&sigma_text, assets)?;
    let count = match assets {
        Some(count) => {
            if sigma.len() != 1 && sigma.len() != count {
                return Err(validation(format!(
                    "config [market].sigma: got {} values for {count} assets",
                    sigma.len()
                )));
            }
            count
        }
        None => sigma.len(),
    };
    if count == 0 {
        return Err(validation("config [market]: asset count is zero"));
    }
    let sigma = broadcast("market", "sigma", sigma, count)?;
    let spot_text = raw
        .take("market", "spot")
        .ok_or_else(|| validation("config [market]: missing key 'spot'"))?;
    let spot = broadcast("market", "spot", parse_list("market", "spot", &spot_text)?, count)?;
    let rate_text = raw
        .take("market", "rate")
        .ok_or_else(|| validation("config [market]: missing key 'rate'"))?;
    let rate = parse_scalar("market", "rate", &rate_text)?;
    let rho = match raw.take("market", "rho") {
        Some(value) => parse_scalar("market", "rho", &value)?,
        None => 0.0,
    };
    let sigma_inf = match raw.take("market", "sigma_inf") {
        Some(value) => Some(broadcast(
            "market",
            "sigma_inf",
            parse_list("market", "sigma_inf", &value)?,
            count,
        )?),
        None => None,
    };
    let tau = match raw.take("market", "tau") {
        Some(value) => {
            Some(broadcast("market", "tau", parse_list("market", "tau", &value)?, count)?)
        }
        None => None,
    };
    if sigma_inf.is_some() != tau.is_some() {
        return Err(validation(
            "config [market]: sigma_inf and tau must be given together",
        ));
    }

    let steps_text = raw
        .take("grid", "steps")
        .ok_or_else(|| validation("config [grid]: missing key 'steps'"))?;
    let steps = parse_scalar("grid", "steps", &steps_text)?;
    let horizon_text = raw
        .take("grid", "horizon")
        .ok_or_else(|| validation("config [grid]: missing key 'horizon'"))?;
    let horizon = parse_scalar("grid", "horizon", &horizon_text)?;

    let strike_text = raw
        .take("payoff", "strike")
        .ok_or_else(|| validation("config [payoff]: missing key 'strike'"))?;
    let strike = parse_scalar("payoff", "strike", &strike_text)?;

    let split_names = |value: String| -> Vec<String> {
        value.split(',').map(|name| name.trim().to_string()).collect()
    };
    let samplers = raw
        .take("run", "samplers")
        .map(split_names)
        .unwrap_or_else(|| vec!["rqmc".to_string()]);
    let generators = raw
        .take("run", "generators")
        .map(split_names)
        .unwrap_or_else(|| vec!["pca".to_string()]);
    let eff_dim = raw.take("run", "eff_dim").unwrap_or_else(|| "full".to_string());
    let anova_p = match raw.take("run", "anova_p") {
        Some(value) => parse_scalar("run", "anova_p", &value)?,
        None => 0.99,
    };
    let paths = match raw.take("run", "paths") {
        Some(value) => parse_scalar("run", "paths", &value)?,
        None => 8192,
    };
    let batches = match raw.take("run", "batches") {
        Some(value) => parse_scalar("run", "batches", &value)?,
        None => 10,
    };
    let seed = match raw.take("run", "seed") {
        Some(value) => parse_scalar("run", "seed", &value)?,
        None => 1,
    };
    raw.reject_leftovers()?;

    Ok(ExperimentConfig {
        spot,
        rate,
        rho,
        sigma,
        sigma_inf,
        tau,
        steps,
        horizon,
        strike,
        samplers,
        generators,
        eff_dim,
        anova_p,
        paths,
        batches,
        seed,
    })
}

fn parse_width(eff_dim: &str) -> Result<WidthChoice, CliError> {
    match eff_dim {
        "full" => Ok(WidthChoice::Full),
        "anova" => Ok(WidthChoice::Anova),
        list => {
            let widths: Result<Vec<usize>, CliError> = list
                .split(',')
                .map(|item| parse_scalar("run", "eff_dim", item.trim()))
                .collect();
            Ok(WidthChoice::Explicit(widths?))
        }
    }
}

impl ExperimentConfig {
    /// Checks every invariant and builds the typed market objects.
    fn resolve(&self) -> Result<ResolvedRun, CliError> {
        let count = self.sigma.len();
        let vol = match (&self.sigma_inf, &self.tau) {
            (Some(sigma_inf), Some(tau)) => VolatilityModel::ExpDecay {
                sigma_decay: self
                    .sigma
                    .iter()
                    .zip(sigma_inf)
                    .map(|(total, floor)| total - floor)
                    .collect(),
                sigma_inf: sigma_inf.clone(),
                tau: tau.clone(),
            },
            (None, None) => VolatilityModel::Constant { sigma: self.sigma.clone() },
            _ => return Err(validation("config [market]: sigma_inf and tau must be given together")),
        };
        let spec = MarketSpec {
            spots: self.spot.clone(),
            rate: self.rate,
            correlation: MarketSpec::uniform_correlation(count, self.rho),
            vol,
            weights: MarketSpec::equal_weights(count, self.steps),
        };
        let grid = TimeGrid::equally_spaced(self.steps, self.horizon)
            .map_err(|err| validation(format!("config [grid]: {err}")))?;
        spec.validate(&grid)
            .map_err(|err| validation(format!("config [market]: {err}")))?;
        if !self.strike.is_finite() || self.strike < 0.0 {
            return Err(validation(format!(
                "config [payoff].strike: must be finite and non-negative, got {}",
                self.strike
            )));
        }
        let samplers: Result<Vec<SamplerKind>, CliError> = self
            .samplers
            .iter()
            .map(|name| name.parse().map_err(|err| validation(format!("config [run].samplers: {err}"))))
            .collect();
        let generators: Result<Vec<GeneratorMethod>, CliError> = self
            .generators
            .iter()
            .map(|name| name.parse().map_err(|err| validation(format!("config [run].generators: {err}"))))
            .collect();
        let samplers = samplers?;
        let generators = generators?;
        if samplers.is_empty() {
            return Err(validation("config [run].samplers: need at least one sampler"));
        }
        if generators.is_empty() {
            return Err(validation("config [run].generators: need at least one generator"));
        }
        if !(self.anova_p > 0.0 && self.anova_p <= 1.0) {
            return Err(validation(format!(
                "config [run].anova_p: must lie in (0, 1], got {}",
                self.anova_p
            )));
        }
        let width = parse_width(&self.eff_dim)?;
        let nominal = count * self.steps;
        match &width {
            WidthChoice::Full => {}
            WidthChoice::Anova => {
                if generators.contains(&GeneratorMethod::Cholesky) {
                    return Err(validation(
                        "config [run].eff_dim: cholesky columns have no variance ordering; \
                         use eff_dim = full or drop the cholesky generator",
                    ));
                }
            }
            WidthChoice::Explicit(widths) => {
                for &dims in widths {
                    if dims == 0 || dims > nominal {
                        return Err(validation(format!(
                            "config [run].eff_dim: width {dims} outside 1..={nominal}"
                        )));
                    }
                }
                if generators.contains(&GeneratorMethod::Cholesky)
                    && widths.iter().any(|&dims| dims != nominal)
                {
                    return Err(validation(
                        "config [run].eff_dim: cholesky columns have no variance ordering; \
                         use eff_dim = full or drop the cholesky generator",
                    ));
                }
            }
        }
        if self.paths == 0 {
            return Err(validation("config [run].paths: must be at least 1"));
        }
        if self.batches < 2 {
            return Err(validation(format!(
                "config [run].batches: spread estimation needs at least 2 batches, got {}",
                self.batches
            )));
        }
        Ok(ResolvedRun {
            spec,
            grid,
            payoff: PayoffSpec { strike: self.strike, maturity: self.horizon },
            samplers,
            generators,
            width,
            anova_p: self.anova_p,
            paths: self.paths,
            batches: self.batches,
            seed: self.seed,
        })
    }
}

fn build_generator(
    method: GeneratorMethod,
    run: &ResolvedRun,
) -> Result<GeneratingMatrix, CliError> {
    let cov = covariance_blocks(&run.spec, &run.grid)
        .map_err(|err| CliError::Runtime(format!("covariance assembly failed: {err}")))?;
    let built = match method {
        GeneratorMethod::Cholesky => generator_cholesky(&cov),
        GeneratorMethod::Pca => generator_pca(&cov, &run.grid),
        GeneratorMethod::Kpa => generator_kpa(&cov, &run.grid),
    };
    built.map_err(|err| CliError::Runtime(format!("{method} generator failed: {err}")))
}

/// Widths requested for one generator, each with the matrix to price with.
fn widths_for(
    generator: &GeneratingMatrix,
    run: &ResolvedRun,
) -> Result<Vec<(usize, GeneratingMatrix)>, CliError> {
    let full = generator.input_dim();
    let cut = |dims: usize| -> Result<(usize, GeneratingMatrix), CliError> {
        if dims == full {
            return Ok((full, generator.clone()));
        }
        let sliced = generator.truncate(dims).map_err(|err: PathGenError| {
            validation(format!("config [run].eff_dim: {err}"))
        })?;
        Ok((dims, sliced))
    };
    match &run.width {
        WidthChoice::Full => Ok(vec![(full, generator.clone())]),
        WidthChoice::Anova => {
            let spectrum = generator.spectrum().ok_or_else(|| {
                validation("config [run].eff_dim: generator exposes no spectrum to truncate by")
            })?;
            let eff = effective_dimension(spectrum, run.anova_p)
                .map_err(|err| validation(format!("config [run].anova_p: {err}")))?;
            Ok(vec![cut(eff.dims.max(1))?])
        }
        WidthChoice::Explicit(widths) => widths.iter().map(|&dims| cut(dims)).collect(),
    }
}

/// Executes every requested cell and collects the report.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport, CliError> {
    let resolved = config.resolve()?;
    let paths = if options.smoke { resolved.paths.min(SMOKE_PATHS) } else { resolved.paths };
    if let Some(jobs) = options.jobs {
        if jobs == 0 {
            return Err(validation("--jobs: must be at least 1"));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|err| CliError::Runtime(format!("worker pool: {err}")))?;

    let mut rows = Vec::new();
    for &method in &resolved.generators {
        let generator = build_generator(method, &resolved)?;
        if generator.kpa_floor_events() > 0 {
            eprintln!(
                "note: {method} fit floored {} near-zero eigenvalues",
                generator.kpa_floor_events()
            );
        }
        for (width, matrix) in widths_for(&generator, &resolved)? {
            for &sampler in &resolved.samplers {
                let plan = SimulationPlan {
                    paths_per_batch: paths,
                    batches: resolved.batches,
                    seed: resolved.seed,
                    sampler,
                };
                let estimate = pool
                    .install(|| {
                        price_basket_asian(
                            &resolved.spec,
                            &resolved.grid,
                            &resolved.payoff,
                            &matrix,
                            &plan,
                        )
                    })
                    .map_err(|err| CliError::Runtime(format!("{method}/{sampler}: {err}")))?;
                eprintln!(
                    "{method}/{sampler} E={width}: price {:.6} rmse {:.6} ({:.2}s)",
                    estimate.price, estimate.rmse, estimate.seconds
                );
                rows.push(ReportRow {
                    generator: method.to_string(),
                    sampler: sampler.to_string(),
                    eff_dim: width,
                    price: estimate.price,
                    rmse: estimate.rmse,
                    seconds: if options.no_timing { 0.0 } else { estimate.seconds },
                });
            }
        }
    }

    let mut echo = config.clone();
    echo.paths = paths;
    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo,
        rows,
    })
}

/// Renders the stable six-column CSV; an empty report is header-only.
pub fn emit_csv(report: &RunReport) -> String {
    let mut out = String::from("generator,sampler,E,price,rmse,seconds\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.3}",
            row.generator, row.sampler, row.eff_dim, row.price, row.rmse, row.seconds
        );
    }
    out
}

/// Renders the versioned JSON document.
pub fn emit_json(report: &RunReport) -> Result<String, CliError> {
    serde_json::to_string_pretty(report)
        .map(|mut text| {
            text.push('\n');
            text
        })
        .map_err(|err| CliError::Runtime(format!("JSON encoding failed: {err}")))
}

/// Reads a JSON report back; inverse of `emit_json`.
pub fn parse_report(text: &str) -> Result<RunReport, CliError> {
    serde_json::from_str(text).map_err(|err| validation(format!("cannot parse report: {err}")))
}

fn config_summary(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    let sigma_span = match (config.sigma.first(), config.sigma.last()) {
        (Some(first), Some(last)) if config.sigma.len() > 2 => {
            format!("{first:.4}..{last:.4} ({} values)", config.sigma.len())
        }
        _ => config
            .sigma
            .iter()
            .map(|value| format!("{value:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
    };
    let _ = writeln!(
        out,
        "assets {}, steps {}, horizon {}, rate {}, rho {}",
        config.sigma.len(),
        config.steps,
        config.horizon,
        config.rate,
        config.rho
    );
    let _ = writeln!(out, "sigma {sigma_span}");
    if let (Some(sigma_inf), Some(tau)) = (&config.sigma_inf, &config.tau) {
        let _ = writeln!(out, "decaying toward {:.4} with tau {}", sigma_inf[0], tau[0]);
    }
    let _ = writeln!(
        out,
        "strike {}, paths {}, batches {}, seed {}, eff_dim {}, anova_p {}",
        config.strike, config.paths, config.batches, config.seed, config.eff_dim, config.anova_p
    );
    out
}

/// Renders the human-readable summary.
pub fn emit_text(report: &RunReport) -> String {
    let mut out = format!("asianqmc {}\n", report.version);
    out.push_str(&config_summary(&report.config));
    if report.rows.is_empty() {
        out.push_str("no rows\n");
        return out;
    }
    out.push_str("\ngenerator  sampler     E      price       rmse   seconds\n");
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{:<9}  {:<7}  {:>4}  {:>9.6}  {:>9.6}  {:>8.3}",
            row.generator, row.sampler, row.eff_dim, row.price, row.rmse, row.seconds
        );
    }
    out
}

/// Prices arithmetic Asian basket options by plain Monte Carlo, Latin
/// Hypercube and randomized quasi-Monte Carlo simulation.
#[derive(Parser, Debug)]
#[command(name = "asianqmc", version, about)]
pub struct Cli {
    /// Bundled config name or path to a config file
    #[arg(long)]
    pub config: String,
    /// Override [run].samplers (comma-separated: mc, lhs, rqmc, lss)
    #[arg(long)]
    pub sampler: Option<String>,
    /// Override [run].generators (comma-separated: cholesky, pca, kpa)
    #[arg(long)]
    pub generator: Option<String>,
    /// Override [run].paths
    #[arg(long)]
    pub paths: Option<usize>,
    /// Override [run].batches
    #[arg(long)]
    pub batches: Option<usize>,
    /// Override [run].seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override [run].eff_dim: "full", "anova", or column counts
    #[arg(long = "eff-dim")]
    pub eff_dim: Option<String>,
    /// Override [run].anova_p, the explained-variance threshold
    #[arg(long = "anova-p")]
    pub anova_p: Option<f64>,
    /// Output format: text, csv or json
    #[arg(long, default_value = "text")]
    pub format: String,
    /// Write results to this file instead of standard output
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
    /// Cap paths per batch at 512 for a quick end-to-end pass
    #[arg(long)]
    pub smoke: bool,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Echo the resolved config and exit without simulating
    #[arg(long = "dry-run")]
    pub dry_run: bool,
    /// Report zero in every seconds field, making output byte-stable
    #[arg(long = "no-timing")]
    pub no_timing: bool,
}

fn apply_overrides(config: &mut ExperimentConfig, cli: &Cli) {
    let split = |value: &String| -> Vec<String> {
        value.split(',').map(|name| name.trim().to_string()).collect()
    };
    if let Some(samplers) = &cli.sampler {
        config.samplers = split(samplers);
    }
    if let Some(generators) = &cli.generator {
        config.generators = split(generators);
    }
    if let Some(paths) = cli.paths {
        config.paths = paths;
    }
    if let Some(batches) = cli.batches {
        config.batches = batches;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(eff_dim) = &cli.eff_dim {
        config.eff_dim = eff_dim.trim().to_string();
    }
    if let Some(anova_p) = cli.anova_p {
        config.anova_p = anova_p;
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if !matches!(cli.format.as_str(), "text" | "csv" | "json") {
        return Err(validation(format!(
            "--format: unknown format '{}', expected text, csv or json",
            cli.format
        )));
    }
    let text = load_config(&cli.config)?;
    let mut config = parse_config(&text)?;
    apply_overrides(&mut config, cli);
    if cli.dry_run {
        config.resolve()?;
        let report = RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            rows: Vec::new(),
        };
        print!("{}", emit_text(&report));
        return Ok(());
    }
    let options = RunOptions { jobs: cli.jobs, no_timing: cli.no_timing, smoke: cli.smoke };
    let report = run(&config, &options)?;
    let rendered = match cli.format.as_str() {
        "csv" => emit_csv(&report),
        "json" => emit_json(&report)?,
        _ => emit_text(&report),
    };
    match &cli.out {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|err| CliError::Runtime(format!("cannot write {}: {err}", path.display())))?,
        None => print!("{rendered}"),
    }
    Ok(())
}

/// Entry point behind `main`; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
