//! Command-line front end.
//!
//! Validation failures exit with 1, computation failures with 2; both print
//! one `error: <code>: <message>` line to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, LoadedScenario, OutputOptions, ScenarioConfig};
use crate::demand::DemandError;
use crate::exec::{with_threads, Exec};
use crate::format::{fixed_sig, sig};
use crate::risk::RiskError;
use crate::scenario::{
    allocate_branch_headways, calibrate_q, compare_car_distributions, sweep, Axis, AxisRange,
    Metric, ScenarioError,
};

#[derive(Debug, Parser)]
#[command(name = "transit-risk", version, about = "Airborne transmission risk on rail transit lines")]
pub struct Cli {
    /// Scenario config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Report probabilities per 1000 riders in CSV output.
    #[arg(long = "per-1000", global = true)]
    pub per_1000: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the base case and write a JSON report.
    Run,
    /// Two-axis parameter grid, e.g. `--grid A=0.1:1.5:0.1,B=0.1:1.5:0.1`.
    Sweep {
        #[arg(long)]
        grid: String,
        /// blended, masked or unmasked
        #[arg(long, default_value = "blended")]
        metric: String,
    },
    /// Trunk headway split search, `--hab lo:hi:step` in minutes.
    Headways {
        #[arg(long)]
        hab: String,
    },
    /// Compare car-load distributions, `--shares "0.1,0.2,...;0.25,..."`.
    Cars {
        #[arg(long)]
        shares: String,
    },
    /// Back-calculate the quanta generation rate from an outbreak.
    Calibrate {
        #[arg(long = "attack-rate")]
        attack_rate: f64,
        #[arg(long)]
        infectors: f64,
        /// Exposure time, hours.
        #[arg(long)]
        hours: f64,
        /// m³/hour.
        #[arg(long)]
        ventilation: f64,
        /// m³/hour.
        #[arg(long, default_value_t = 0.72)]
        breathing: f64,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub exit: i32,
    pub code: String,
    pub message: String,
}

impl Failure {
    fn validation(code: &str, message: impl ToString) -> Self {
        Failure {
            exit: 1,
            code: code.into(),
            message: message.to_string(),
        }
    }

    fn computation(code: &str, message: impl ToString) -> Self {
        Failure {
            exit: 2,
            code: code.into(),
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::validation(e.code(), e)
    }
}

impl From<RiskError> for Failure {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::EmptyDemand => Failure::computation(e.code(), e),
            _ => Failure::validation(e.code(), e),
        }
    }
}

impl From<DemandError> for Failure {
    fn from(e: DemandError) -> Self {
        Failure::validation(e.code(), e)
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Risk(r) => r.into(),
            ScenarioError::TargetUnreachable { .. } | ScenarioError::NoConvergence(_) => {
                Failure::computation(e.code(), e)
            }
            _ => Failure::validation(e.code(), e),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::computation("io", format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(stderr, "error: usage: {first}");
            return 1;
        }
    };
    match with_threads(cli.threads, || dispatch(&cli)) {
        Ok(output) => match emit(&cli, output, stdout) {
            Ok(()) => 0,
            Err(f) => report(f, stderr),
        },
        Err(f) => report(f, stderr),
    }
}

fn report(f: Failure, stderr: &mut dyn Write) -> i32 {
    let message = f.message.replace('\n', " ");
    let _ = writeln!(stderr, "error: {}: {}", f.code, message);
    f.exit
}

/// Main output plus an optional side file written next to `--out`.
struct Output {
    main: String,
    side: Option<(&'static str, String)>,
}

fn emit(cli: &Cli, output: Output, stdout: &mut dyn Write) -> Result<(), Failure> {
    match &cli.out {
        Some(path) => {
            fs::write(path, &output.main).map_err(|e| io_failure(path, e))?;
            if let Some((ext, text)) = output.side {
                let side = path.with_extension(ext);
                fs::write(&side, text).map_err(|e| io_failure(&side, e))?;
            }
        }
        None => {
            stdout
                .write_all(output.main.as_bytes())
                .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
        }
    }
    Ok(())
}

fn load(cli: &Cli) -> Result<LoadedScenario, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::validation("missing_config", "--config is required"))?;
    Ok(ScenarioConfig::load(path)?)
}

struct Numbers {
    digits: usize,
    scale: f64,
}

impl Numbers {
    fn new(cli: &Cli, opts: &OutputOptions) -> Self {
        Numbers {
            digits: opts.precision,
            scale: if cli.per_1000 || opts.per_1000 { 1000.0 } else { 1.0 },
        }
    }

    fn num(&self, v: f64) -> String {
        sig(v, self.digits)
    }

    fn prob(&self, p: f64) -> String {
        sig(p * self.scale, self.digits)
    }

    fn unit(&self) -> &'static str {
        if self.scale == 1.0 {
            "probability"
        } else {
            "per_1000"
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

fn dispatch(cli: &Cli) -> Result<Output, Failure> {
    match &cli.command {
        Command::Run => cmd_run(cli),
        Command::Sweep { grid, metric } => cmd_sweep(cli, grid, metric),
        Command::Headways { hab } => cmd_headways(cli, hab),
        Command::Cars { shares } => cmd_cars(cli, shares),
        Command::Calibrate {
            attack_rate,
            infectors,
            hours,
            ventilation,
            breathing,
        } => {
            let q = calibrate_q(*attack_rate, *infectors, *breathing, *hours, *ventilation)?;
            Ok(Output {
                main: format!("{}\n", fixed_sig(q, 6)),
                side: None,
            })
        }
    }
}

fn cmd_run(cli: &Cli) -> Result<Output, Failure> {
    let loaded = load(cli)?;
    let scenario = &loaded.scenario;
    let model = scenario.model()?;
    let report = model.evaluate(&scenario.base_params()?, Exec::Parallel)?;
    Ok(Output {
        main: to_json(&report),
        side: None,
    })
}

/// `name=lo:hi:step,name=lo:hi:step`
pub fn parse_grid(spec: &str) -> Result<[(Axis, AxisRange); 2], ScenarioError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(ScenarioError::EmptyRange(format!("`{spec}` must name exactly two axes")));
    }
    let axis = |part: &str| -> Result<(Axis, AxisRange), ScenarioError> {
        let (name, range) = part
            .split_once('=')
            .ok_or_else(|| ScenarioError::EmptyRange(format!("`{part}` is not name=lo:hi:step")))?;
        Ok((name.trim().parse()?, range.parse()?))
    };
    Ok([axis(parts[0])?, axis(parts[1])?])
}

#[derive(Serialize)]
struct SweepMeta<'a> {
    scenario_sha256: &'a str,
    axis1: Axis,
    range1: AxisRange,
    axis2: Axis,
    range2: AxisRange,
    metric: Metric,
    unit: &'a str,
    rows: usize,
}

fn cmd_sweep(cli: &Cli, grid: &str, metric: &str) -> Result<Output, Failure> {
    let [a1, a2] = parse_grid(grid)?;
    let metric: Metric = metric.parse()?;
    let loaded = load(cli)?;
    let nums = Numbers::new(cli, &loaded.config.output);
    let scenario = &loaded.scenario;
    let model = scenario.model()?;
    let grid = sweep(scenario, &model, a1, a2, metric, Exec::Parallel)?;
    let mut csv = format!("{},{},{}\n", a1.0, a2.0, nums.unit());
    for (x, y, v) in grid.rows() {
        csv.push_str(&format!("{},{},{}\n", nums.num(x), nums.num(y), nums.prob(v)));
    }
    let meta = SweepMeta {
        scenario_sha256: &loaded.fingerprint,
        axis1: a1.0,
        range1: a1.1,
        axis2: a2.0,
        range2: a2.1,
        metric,
        unit: nums.unit(),
        rows: grid.cells.len(),
    };
    Ok(Output {
        main: csv,
        side: Some(("meta.json", to_json(&meta))),
    })
}

#[derive(Serialize)]
struct AllocationSummary<'a> {
    scenario_sha256: &'a str,
    argmin_h_ab_min: f64,
    argmin_h_ba_min: f64,
    min_system_p: f64,
    rows: usize,
}

fn cmd_headways(cli: &Cli, hab: &str) -> Result<Output, Failure> {
    let range: AxisRange = hab.parse()?;
    let loaded = load(cli)?;
    let nums = Numbers::new(cli, &loaded.config.output);
    let values: Vec<f64> = range.values().iter().map(|m| m / 60.0).collect();
    let result = allocate_branch_headways(&loaded.scenario, &values, Exec::Parallel)?;
    let labels: Vec<&str> = result.rows[0].services.iter().map(|s| s.label.as_str()).collect();
    let mut csv = String::from("h_ab_min,h_ba_min,system");
    for l in &labels {
        csv.push(',');
        csv.push_str(l);
    }
    csv.push('\n');
    for row in &result.rows {
        csv.push_str(&format!(
            "{},{},{}",
            nums.num(row.h_ab * 60.0),
            nums.num(row.h_ba * 60.0),
            nums.prob(row.system_p)
        ));
        for s in &row.services {
            csv.push(',');
            csv.push_str(&nums.prob(s.probability));
        }
        csv.push('\n');
    }
    let best = result
        .rows
        .iter()
        .find(|r| r.h_ab == result.argmin_h_ab)
        .expect("argmin is one of the rows");
    let summary = AllocationSummary {
        scenario_sha256: &loaded.fingerprint,
        argmin_h_ab_min: best.h_ab * 60.0,
        argmin_h_ba_min: best.h_ba * 60.0,
        min_system_p: best.system_p,
        rows: result.rows.len(),
    };
    Ok(Output {
        main: csv,
        side: Some(("summary.json", to_json(&summary))),
    })
}

/// `a,b,c;d,e,f` into share vectors.
pub fn parse_shares(spec: &str) -> Result<Vec<Vec<f64>>, DemandError> {
    spec.split(';')
        .map(|block| {
            block
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| DemandError::InvalidShares(format!("`{v}` is not a number")))
                })
                .collect()
        })
        .collect()
}

fn cmd_cars(cli: &Cli, shares: &str) -> Result<Output, Failure> {
    let distributions = parse_shares(shares)?;
    for d in &distributions {
        crate::demand::validate_shares(d)?;
    }
    let loaded = load(cli)?;
    let nums = Numbers::new(cli, &loaded.config.output);
    let results = compare_car_distributions(&loaded.scenario, &distributions, Exec::Parallel)?;
    let mut csv = String::from("scenario,car,share,car_p,system_p,crowding\n");
    for (i, r) in results.iter().enumerate() {
        for (c, (&share, &p)) in r.shares.iter().zip(&r.car_p).enumerate() {
            let tag = if c == r.most_crowded_car {
                "most"
            } else if c == r.least_crowded_car {
                "least"
            } else {
                ""
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                c + 1,
                nums.num(share),
                nums.prob(p),
                nums.prob(r.system_p),
                tag
            ));
        }
    }
    Ok(Output { main: csv, side: None })
}
