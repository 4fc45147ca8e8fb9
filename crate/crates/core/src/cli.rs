//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when an input cannot be read or parsed, 3 when
//! it parses but fails validation. Diagnostics go to stderr; results go to
//! stdout or `--out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::counting::CountingMeasure;
use crate::error::Error;
use crate::measure::{Kernel, MeasurableFn, RandomMeasure};
use crate::rct::{self, DispersionRule, VaccineTrial};
use crate::sensitivity::{self, LogBase, Partition};

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stonethrow", version, about = "Random counting measure sensitivity analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Write results to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Normal392,
    Quarterwidth,
}

impl From<RuleArg> for DispersionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Normal392 => DispersionRule::Normal392,
            RuleArg::Quarterwidth => DispersionRule::QuarterWidth,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moments, defect and orthogonality of a counting distribution.
    Dist {
        /// Path to a JSON counting distribution, or the JSON text itself.
        spec: String,
        /// Append empirical moments from this many draws.
        #[arg(long, requires = "seed")]
        sample: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Partition ANOVA and sensitivity indices of Nf.
    Anova {
        /// JSON random measure: {"kappa": {...}, "nu": {...}}.
        #[arg(long)]
        measure: PathBuf,
        /// JSON function keyed by point label.
        #[arg(long, required_unless_present = "kernel", conflicts_with = "kernel")]
        function: Option<PathBuf>,
        /// JSON measurement kernel; analyses the marked integrand 1_E(x) y.
        #[arg(long)]
        kernel: Option<PathBuf>,
        /// JSON partition: {"cell": ["point", ...], ...}.
        #[arg(long)]
        partition: PathBuf,
    },
    /// Efficacy, sensitivity, entropy and Monte Carlo intervals of a vaccine trial.
    Vaccine {
        /// JSON trial summary.
        trial: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = rct::DEFAULT_REPS)]
        reps: usize,
    },
    /// Arm sensitivities and entropies of clinical endpoints.
    Endpoints {
        /// CSV with header name,t_mean,t_lo,t_hi,t_sd,c_mean,c_lo,c_hi,c_sd.
        csv: PathBuf,
        /// Group weights ν{T},ν{C}.
        #[arg(long, value_parser = parse_weights, default_value = "0.5,0.5")]
        weights: [f64; 2],
        #[arg(long, value_enum, default_value = "normal392")]
        dispersion_rule: RuleArg,
    },
    /// Unc(p) and H2(p) on a grid over [0, 1].
    Curve {
        #[arg(long, value_parser = parse_step, default_value = "0.01")]
        step: f64,
        /// Add a marked reference row at this p (decimal or a/b fraction).
        #[arg(long, value_parser = parse_fraction)]
        mark: Option<f64>,
    },
}

fn parse_step(s: &str) -> Result<f64, String> {
    let step: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if step > 0.0 && step <= 0.5 {
        Ok(step)
    } else {
        Err(format!("step {step} must lie in (0, 0.5]"))
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("{value} lies outside [0, 1]"))
    }
}

fn parse_weights(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [t, c] => Ok([
            t.parse().map_err(|_| format!("bad weight `{t}`"))?,
            c.parse().map_err(|_| format!("bad weight `{c}`"))?,
        ]),
        _ => Err(format!("expected two comma-separated weights, got `{s}`")),
    }
}

/// A failure with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn parse(message: impl Into<String>) -> Self {
        Self { code: EXIT_PARSE, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_INVALID, message: message.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Csv(_) => CliError::parse(e.to_string()),
            _ => CliError::invalid(e.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))
}

fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| {
        let message = format!("{origin}: {e}");
        match e.classify() {
            serde_json::error::Category::Data => CliError::invalid(message),
            _ => CliError::parse(message),
        }
    })
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

/// Rounds half to even at three decimals.
pub fn round3(x: f64) -> String {
    format!("{:.3}", (x * 1000.0).round_ties_even() / 1000.0)
}

/// Runs a parsed command line and returns the text to emit.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Dist { spec, sample, seed } => cmd_dist(spec, *sample, *seed, cli.format.unwrap_or(Format::Json)),
        Command::Anova { measure, function, kernel, partition } => {
            cmd_anova(measure, function.as_deref(), kernel.as_deref(), partition, cli.format.unwrap_or(Format::Json))
        }
        Command::Vaccine { trial, seed, reps } => cmd_vaccine(trial, *seed, *reps, cli.format.unwrap_or(Format::Json)),
        Command::Endpoints { csv, weights, dispersion_rule } => {
            cmd_endpoints(csv, *weights, (*dispersion_rule).into(), cli.format.unwrap_or(Format::Csv))
        }
        Command::Curve { step, mark } => cmd_curve(*step, *mark, cli.format.unwrap_or(Format::Csv)),
    }
}

fn key_value_csv(value: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), v, out);
                }
            }
            Value::Null => {}
            Value::String(s) => writeln!(out, "{prefix},{s}").unwrap(),
            other => writeln!(out, "{prefix},{other}").unwrap(),
        }
    }
    let mut out = String::from("field,value\n");
    walk("", value, &mut out);
    out
}

pub fn cmd_dist(spec: &str, sample: Option<usize>, seed: Option<u64>, format: Format) -> Result<String, CliError> {
    let (text, origin) = if spec.trim_start().starts_with('{') {
        (spec.to_owned(), "<inline>".to_owned())
    } else {
        (read_text(Path::new(spec))?, spec.to_owned())
    };
    let kappa: CountingMeasure = parse_json(&text, &origin)?;
    let mut report = json!({
        "distribution": kappa,
        "mean": kappa.mean(),
        "variance": kappa.variance(),
        "defect": kappa.defect(),
        "orthogonal": kappa.is_orthogonal(),
    });
    if let Some(reps) = sample {
        if reps < 2 {
            return Err(CliError::invalid("--sample needs at least 2 draws"));
        }
        let seed = seed.expect("clap enforces --seed with --sample");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..reps).map(|_| kappa.sample(&mut rng) as f64).collect();
        let m = crate::measure::McMoments::from_samples(&draws, None);
        report["sample"] = json!({
            "draws": reps,
            "seed": seed,
            "mean": m.mean,
            "variance": m.variance,
            "mean_se": m.mean_se,
            "variance_se": m.variance_se,
        });
    }
    Ok(match format {
        Format::Json => to_json(&report),
        Format::Csv => key_value_csv(&report),
    })
}

pub fn cmd_anova(
    measure: &Path,
    function: Option<&Path>,
    kernel: Option<&Path>,
    partition: &Path,
    format: Format,
) -> Result<String, CliError> {
    let n: RandomMeasure = load_json(measure)?;
    let partition: Partition = load_json(partition)?;
    let (decomposition, measure) = match (function, kernel) {
        (Some(f), _) => {
            let f: MeasurableFn = load_json(f)?;
            let d = sensitivity::anova_decompose(&n, &f, &partition)?;
            (d, sensitivity::sensitivity_measure(&n.nu, &f))
        }
        (None, Some(k)) => {
            let q: Kernel = load_json(k)?;
            let moments = n.nu.product(&q)?;
            let d = sensitivity::anova_decompose_marked(&n, &moments, &partition)?;
            (d, sensitivity::sensitivity_measure_marked(&n.nu, &moments))
        }
        (None, None) => return Err(CliError::invalid("either --function or --kernel is required")),
    };
    let residual = decomposition.identity_residual();
    let indices = if decomposition.degenerate { None } else { Some(sensitivity::sensitivity_indices(&decomposition)?) };
    // 𝕊 is undefined only when Nf has no second moment at all.
    let measure = match measure {
        Ok(s) => Some(s.cell_masses(&partition)?),
        Err(Error::ZeroSecondMoment) => None,
        Err(e) => return Err(e.into()),
    };
    let entropy = measure.as_ref().map(|s| s.entropy(None, LogBase::Binary)).transpose()?;

    match format {
        Format::Json => Ok(to_json(&json!({
            "decomposition": decomposition,
            "identity_residual": residual,
            "indices": indices,
            "sensitivity_measure": measure,
            "entropy_bits": entropy,
        }))),
        Format::Csv => {
            let mut out = String::from("cell,S_a,S_b,S_prob,entropy_contrib\n");
            for cell in decomposition.cell_variances.keys() {
                let (sa, sb) = match &indices {
                    Some(r) => (r.structural[cell].to_string(), r.correlative[cell].to_string()),
                    None => (String::new(), String::new()),
                };
                let (prob, contrib) = match measure.as_ref().and_then(|s| s.get(cell)) {
                    Some(p) => {
                        let h = sensitivity::shannon_entropy([p], LogBase::Binary);
                        (p.to_string(), h.to_string())
                    }
                    None => (String::new(), String::new()),
                };
                writeln!(out, "{cell},{sa},{sb},{prob},{contrib}").unwrap();
            }
            Ok(out)
        }
    }
}

pub fn cmd_vaccine(trial: &Path, seed: u64, reps: usize, format: Format) -> Result<String, CliError> {
    let t: VaccineTrial = load_json(trial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = rct::analyze_vaccine(&t, reps, &mut rng)?;
    let value = json!({ "trial": t, "seed": seed, "reps": reps, "report": report });
    Ok(match format {
        Format::Json => to_json(&value),
        Format::Csv => key_value_csv(&value),
    })
}

pub fn cmd_endpoints(csv: &Path, weights: [f64; 2], rule: DispersionRule, format: Format) -> Result<String, CliError> {
    let file = fs::File::open(csv).map_err(|e| CliError::parse(format!("{}: {e}", csv.display())))?;
    let records = rct::read_endpoints_csv(file)?;
    let mut rows = Vec::with_capacity(records.len());
    for record in &records {
        let s = rct::endpoint_sensitivity(record, weights, rule)
            .map_err(|e| CliError::invalid(format!("endpoint `{}`: {e}", record.name)))?;
        rows.push((record.name.as_str(), s));
    }
    match format {
        Format::Json => Ok(to_json(
            &rows
                .iter()
                .map(|(name, s)| json!({ "name": name, "s_T": s.s_t, "s_C": s.s_c, "h2": s.h2 }))
                .collect::<Vec<_>>(),
        )),
        Format::Csv => {
            if rows.is_empty() {
                return Ok(String::new());
            }
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer
                .write_record(["name", "s_T", "s_C", "h2", "s_T_full", "s_C_full", "h2_full"])
                .expect("in-memory write");
            for (name, s) in &rows {
                writer
                    .write_record([
                        name.to_string(),
                        round3(s.s_t),
                        round3(s.s_c),
                        round3(s.h2),
                        s.s_t.to_string(),
                        s.s_c.to_string(),
                        s.h2.to_string(),
                    ])
                    .expect("in-memory write");
            }
            Ok(String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8"))
        }
    }
}

pub fn cmd_curve(step: f64, mark: Option<f64>, format: Format) -> Result<String, CliError> {
    let mut rows: Vec<(rct::CurveRow, bool)> = rct::uncertainty_curve(step)?.into_iter().map(|r| (r, false)).collect();
    if let Some(p) = mark {
        let at = rows.partition_point(|(r, _)| r.p <= p);
        rows.insert(at, (rct::CurveRow::at(p), true));
    }
    match format {
        Format::Json => Ok(to_json(
            &rows
                .iter()
                .map(|(r, marked)| json!({ "p": r.p, "unc": r.unc, "h2": r.h2, "marked": marked }))
                .collect::<Vec<_>>(),
        )),
        Format::Csv => {
            let mut out = String::from("p,unc,h2,marked\n");
            for (r, marked) in &rows {
                writeln!(out, "{},{},{},{}", r.p, r.unc, r.h2, u8::from(*marked)).unwrap();
            }
            Ok(out)
        }
    }
}
