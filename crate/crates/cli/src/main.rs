use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sic_certify::expsim::{estimate_table, simulate_counts, CountRecord};
use sic_certify::npa::{quantum_upper_bound, three_outcome_bound, Level};
use sic_certify::pipeline::{run_tomography, write_file, Certifier, PipelineError, Report, RunConfig};
use sic_certify::scenario::{eval_functional, reference_setup, werner_table, CorrelationTable};
use sic_certify::svg;
use sic_certify::varopt::{optimize_gap, write_gap_trace, GapOptions};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_NOT_CERTIFIED: u8 = 4;

#[derive(Parser)]
#[command(name = "sic-certify", version, about = "Device-independent certification of a qubit SIC-POVM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relaxation level: 1, 1ab or 2.
    #[arg(long, global = true, value_parser = parse_level)]
    level: Option<Level>,
    #[arg(long, global = true)]
    visibility: Option<f64>,
    /// Penalty weight of the functional.
    #[arg(long, global = true, allow_negative_numbers = true)]
    k: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Subtract expected accidentals (tomography only).
    #[arg(long, global = true)]
    correct_accidentals: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Built-in functional: elegant, modified:K, optimized.
    #[arg(long, global = true)]
    functional: Option<String>,
    /// Functional given as a JSON file.
    #[arg(long, global = true)]
    functional_file: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate photon counts for every setting.
    Simulate,
    /// Estimate a probability table from counts.
    Estimate {
        counts: PathBuf,
        /// JSON sidecar; defaults to the counts path with a .json extension when present.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Evaluate the functional on a table (CSV or JSON).
    Eval { table: PathBuf },
    /// Quantum and three-outcome upper bounds of the functional.
    Bound,
    /// Simulate, estimate, evaluate and compare with the three-outcome bound.
    Certify {
        /// Seed sweep `a..b` (exclusive) or `a..=b`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Range<u64>>,
    },
    /// Search functional coefficients maximizing the certification gap.
    OptimizeCoeffs {
        #[arg(long, default_value_t = 2000)]
        max_eval: usize,
        /// Skip re-scoring the winner at level 2.
        #[arg(long)]
        no_rescore: bool,
    },
    /// Conditioned-state and two-qubit tomography.
    Tomo {
        /// Clip reconstructed Bloch vectors to unit length.
        #[arg(long)]
        normalize: bool,
    },
    /// Validate a report and recompute its significance from counts.
    Report {
        report: PathBuf,
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
}

fn parse_level(s: &str) -> Result<Level, String> {
    match s.parse::<Level>() {
        Ok(Level::Three) => Err("level 3 is not supported here".into()),
        Ok(l) => Ok(l),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let err = || format!("expected a..b or a..=b, got '{s}'");
    let (a, rest) = s.split_once("..").ok_or_else(err)?;
    let a: u64 = a.trim().parse().map_err(|_| err())?;
    let end = match rest.strip_prefix('=') {
        Some(b) => b.trim().parse::<u64>().map_err(|_| err())? + 1,
        None => rest.trim().parse().map_err(|_| err())?,
    };
    if end <= a {
        return Err(format!("empty seed range '{s}'"));
    }
    Ok(a..end)
}

enum Failure {
    Code(u8, String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = if e.exit_code() == 3 { EXIT_NUMERICAL } else { EXIT_VALIDATION };
        Failure::Code(code, e.to_string())
    }
}

fn invalid(msg: impl std::fmt::Display) -> Failure {
    Failure::Code(EXIT_VALIDATION, msg.to_string())
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Code(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(l) = cli.level {
        cfg.level = l;
    }
    if let Some(v) = cli.visibility {
        cfg.experiment.visibility = v;
    }
    if cli.k.is_some() {
        cfg.k = cli.k;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = &cli.functional {
        cfg.functional = f.clone();
        cfg.functional_file = None;
    }
    if let Some(f) = &cli.functional_file {
        cfg.functional_file = Some(f.clone());
    }
    cfg.correct_accidentals |= cli.correct_accidentals;
    cfg.validate()?;
    Ok(cfg)
}

fn emit_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(invalid)?;
    println!("{text}");
    Ok(())
}

fn emit_csv(header: &[&str], rows: &[Vec<String>]) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        let _ = writeln!(out, "{}", r.join(","));
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_counts(path: &Path, sidecar: Option<&Path>) -> Result<CountRecord, Failure> {
    let default_side = path.with_extension("json");
    let side = match sidecar {
        Some(p) => Some(read_text(p)?),
        None if default_side.exists() => Some(read_text(&default_side)?),
        None => None,
    };
    let file = fs::File::open(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    CountRecord::read(file, side.as_deref()).map_err(invalid)
}

fn load_table(path: &Path) -> Result<CorrelationTable, Failure> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        CorrelationTable::from_json(&text)
    } else {
        CorrelationTable::read_csv(text.as_bytes())
    };
    parsed.map_err(invalid)
}

fn run(cli: &Cli) -> CliResult {
    let cfg = run_config(cli)?;
    match &cli.command {
        Command::Simulate => simulate(&cfg, cli.format),
        Command::Estimate { counts, sidecar } => estimate(cli, counts, sidecar.as_deref()),
        Command::Eval { table } => eval(&cfg, cli.format, table),
        Command::Bound => bound(&cfg, cli.format),
        Command::Certify { seeds } => certify(&cfg, cli.format, seeds.clone()),
        Command::OptimizeCoeffs { max_eval, no_rescore } => optimize(cli, &cfg, *max_eval, *no_rescore),
        Command::Tomo { normalize } => tomo(&cfg, *normalize),
        Command::Report { report, counts, sidecar } => report_cmd(report, counts.as_deref(), sidecar.as_deref()),
    }
}

fn simulate(cfg: &RunConfig, format: Format) -> CliResult {
    let rec = simulate_counts(&cfg.experiment(), &reference_setup()).map_err(invalid)?;
    let mut csv = Vec::new();
    rec.write_csv(&mut csv).map_err(invalid)?;
    let side = rec.sidecar_json().map_err(invalid)?;
    match &cfg.out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_file(&dir.join("counts.csv"), &csv)?;
            write_file(&dir.join("counts.json"), side.as_bytes())?;
            eprintln!("wrote {}", dir.join("counts.csv").display());
        }
        None if format == Format::Csv => print!("{}", String::from_utf8_lossy(&csv)),
        None => println!("{side}"),
    }
    Ok(0)
}

fn estimate(cli: &Cli, counts: &Path, sidecar: Option<&Path>) -> CliResult {
    let rec = load_counts(counts, sidecar)?;
    let table = estimate_table(&rec).map_err(invalid)?;
    let (name, bytes) = match cli.format {
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf).map_err(invalid)?;
            ("table.csv", buf)
        }
        Format::Json => ("table.json", table.to_json().map_err(invalid)?.into_bytes()),
    };
    match &cli.out {
        Some(dir) => {
            ensure_dir(dir)?;
            write_file(&dir.join(name), &bytes)?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(0)
}

#[derive(Serialize)]
struct EvalOutput {
    value: f64,
    sigma: Option<f64>,
}

fn eval(cfg: &RunConfig, format: Format, table: &Path) -> CliResult {
    let f = cfg.resolve_functional()?;
    let t = load_table(table)?;
    let e = eval_functional(&f, &t).map_err(invalid)?;
    match format {
        Format::Json => emit_json(&EvalOutput { value: e.value, sigma: e.sigma })?,
        Format::Csv => emit_csv(
            &["value", "sigma"],
            &[vec![e.value.to_string(), e.sigma.map(|s| s.to_string()).unwrap_or_default()]],
        ),
    }
    Ok(0)
}

#[derive(Serialize)]
struct BoundOutput {
    level: Level,
    quantum_bound: f64,
    three_outcome_bound: f64,
    dropped_outcome: usize,
}

fn bound(cfg: &RunConfig, format: Format) -> CliResult {
    let f = cfg.resolve_functional()?;
    let q = quantum_upper_bound(&f, cfg.level).map_err(PipelineError::from)?;
    let (b, j) = three_outcome_bound(&f, cfg.level).map_err(PipelineError::from)?;
    let out = BoundOutput { level: cfg.level, quantum_bound: q, three_outcome_bound: b, dropped_outcome: j + 1 };
    match format {
        Format::Json => emit_json(&out)?,
        Format::Csv => emit_csv(
            &["level", "quantum_bound", "three_outcome_bound", "dropped_outcome"],
            &[vec![out.level.to_string(), q.to_string(), b.to_string(), (j + 1).to_string()]],
        ),
    }
    Ok(0)
}

fn report_row(r: &Report) -> Vec<String> {
    vec![
        r.seed.to_string(),
        r.value.to_string(),
        r.sigma.to_string(),
        r.bound.to_string(),
        r.gap.to_string(),
        r.significance.map(|s| s.to_string()).unwrap_or_default(),
        r.certified.to_string(),
    ]
}

const REPORT_HEADER: [&str; 7] = ["seed", "value", "sigma", "bound", "gap", "significance", "certified"];

#[derive(Serialize)]
struct SweepSummary {
    runs: usize,
    certified: usize,
    above_five_sigma: usize,
    mean_value: f64,
    mean_sigma: f64,
    bound: f64,
}

fn certify(cfg: &RunConfig, format: Format, seeds: Option<Range<u64>>) -> CliResult {
    let certifier = Certifier::new();
    let reports = match seeds {
        Some(range) => certifier.sweep(cfg, range)?,
        None => {
            let a = certifier.run(cfg)?;
            if let Some(dir) = &cfg.out {
                a.write(dir)?;
            }
            vec![a.report]
        }
    };
    match format {
        Format::Csv => emit_csv(&REPORT_HEADER, &reports.iter().map(report_row).collect::<Vec<_>>()),
        Format::Json if reports.len() == 1 => print!("{}", reports[0].to_json()?),
        Format::Json => {
            let n = reports.len() as f64;
            emit_json(&SweepSummary {
                runs: reports.len(),
                certified: reports.iter().filter(|r| r.certified).count(),
                above_five_sigma: reports.iter().filter(|r| r.significance.is_some_and(|s| s > 5.0)).count(),
                mean_value: reports.iter().map(|r| r.value).sum::<f64>() / n,
                mean_sigma: reports.iter().map(|r| r.sigma).sum::<f64>() / n,
                bound: reports[0].bound,
            })?
        }
    }
    Ok(if reports.iter().all(|r| r.certified) { 0 } else { EXIT_NOT_CERTIFIED })
}

#[derive(Serialize)]
struct OptimizeOutput {
    evaluations: usize,
    start_gap: Option<f64>,
    final_gap: Option<f64>,
    rescored_bound: Option<f64>,
    rescored_gap: Option<f64>,
}

fn optimize(cli: &Cli, cfg: &RunConfig, max_eval: usize, no_rescore: bool) -> CliResult {
    let start = cfg.resolve_functional()?;
    let k = start.k;
    let data = werner_table(&reference_setup(), cfg.experiment.visibility).map_err(invalid)?;
    let mut opts = GapOptions::default();
    opts.level = cli.level.unwrap_or(Level::OneAB);
    opts.simplex.max_evaluations = max_eval;
    if no_rescore {
        opts.rescore_level = None;
    }
    let res = optimize_gap(&start, &data, k, &opts).map_err(PipelineError::from)?;
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        write_file(&dir.join("functional.json"), res.functional.to_json().map_err(invalid)?.as_bytes())?;
        let mut csv = Vec::new();
        write_gap_trace(&res.trace, &mut csv).map_err(invalid)?;
        write_file(&dir.join("gap_trace.csv"), &csv)?;
        write_file(&dir.join("gap_trace.svg"), svg::gap_trace(&res.trace).as_bytes())?;
    }
    emit_json(&OptimizeOutput {
        evaluations: res.evaluations,
        start_gap: res.trace.first().map(|r| r.gap),
        final_gap: res.trace.last().map(|r| r.gap),
        rescored_bound: res.rescored.as_ref().map(|r| r.bound),
        rescored_gap: res.rescored.as_ref().map(|r| r.gap),
    })?;
    Ok(0)
}

fn tomo(cfg: &RunConfig, normalize: bool) -> CliResult {
    let cfg = RunConfig { normalize: cfg.normalize || normalize, ..cfg.clone() };
    let (report, bell, tomography) = run_tomography(&cfg)?;
    let json = serde_json::to_string_pretty(&report).map_err(invalid)?;
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        write_file(&dir.join("tomography.json"), json.as_bytes())?;
        let proj: Vec<_> = report.conditioned.iter().map(|c| c.projective.bloch).collect();
        let sic: Vec<_> = report.conditioned.iter().map(|c| c.sic.bloch).collect();
        write_file(&dir.join("bloch.svg"), svg::bloch_panels("projective", &proj, "SIC-POVM", &sic).as_bytes())?;
        for (name, rec) in [("counts", &bell), ("tomography_counts", &tomography)] {
            let mut csv = Vec::new();
            rec.write_csv(&mut csv).map_err(invalid)?;
            write_file(&dir.join(format!("{name}.csv")), &csv)?;
            write_file(&dir.join(format!("{name}.json")), rec.sidecar_json().map_err(invalid)?.as_bytes())?;
        }
    }
    println!("{json}");
    Ok(0)
}

#[derive(Serialize)]
struct ReportCheck {
    valid: bool,
    certified: bool,
    significance: Option<f64>,
    recomputed_significance: Option<f64>,
}

fn report_cmd(path: &Path, counts: Option<&Path>, sidecar: Option<&Path>) -> CliResult {
    let report = Report::from_json(&read_text(path)?)?;
    let recomputed = match counts {
        Some(c) => Some(report.check_against(&load_counts(c, sidecar)?)?),
        None => None,
    };
    emit_json(&ReportCheck {
        valid: true,
        certified: report.certified,
        significance: report.significance,
        recomputed_significance: recomputed,
    })?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("0..100").unwrap(), 0..100);
        assert_eq!(parse_seeds("3..=5").unwrap(), 3..6);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x..2").is_err());
    }

    #[test]
    fn levels() {
        assert_eq!(parse_level("1ab").unwrap(), Level::OneAB);
        assert!(parse_level("3").is_err());
        assert!(parse_level("7").is_err());
    }
}
