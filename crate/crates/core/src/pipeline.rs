//! Config-driven runs: simulate, estimate, evaluate, bound, report.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expsim::{estimate_table, simulate_counts, simulate_tomography_counts, CountRecord, ExpError, ExperimentConfig};
use crate::npa::{three_outcome_bound, Level, NpaError};
use crate::qmath::phi_plus;
use crate::scenario::{
    eval_functional, functional_by_name, reference_setup, BellFunctional, CorrelationTable, EntryFlag, ScenarioError,
};
use crate::tomo::{conditioned_reconstructions, two_qubit_tomography, ConditionedComparison, FrequencyTable, TomoError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Expsim(#[from] ExpError),
    #[error(transparent)]
    Npa(#[from] NpaError),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// 2 for invalid input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Npa(NpaError::Sdp(_) | NpaError::NotSolved(_)) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Built-in functional name (`elegant`, `modified:K`, `optimized`).
    pub functional: String,
    /// JSON functional file; takes precedence over `functional`.
    pub functional_file: Option<PathBuf>,
    /// Overrides the penalty weight `k` of the functional.
    pub k: Option<f64>,
    pub level: Level,
    /// Source and detection model. Its `seed` is replaced by the run seed.
    pub experiment: ExperimentConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Subtract expected accidentals in tomography (Bell values always use raw counts).
    pub correct_accidentals: bool,
    /// Clip reconstructed Bloch vectors to unit length.
    pub normalize: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            functional: "optimized".into(),
            functional_file: None,
            k: None,
            level: Level::Two,
            experiment: ExperimentConfig::default(),
            seed: 0,
            out: None,
            correct_accidentals: false,
            normalize: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.level == Level::Three {
            return Err(PipelineError::Config("level must be 1, 1ab or 2".into()));
        }
        self.resolve_functional()?;
        Ok(())
    }

    pub fn resolve_functional(&self) -> Result<BellFunctional> {
        let mut f = match &self.functional_file {
            Some(p) => BellFunctional::from_json(&fs::read_to_string(p).map_err(io_err(p))?)?,
            None => functional_by_name(&self.functional)?,
        };
        if let Some(k) = self.k {
            if !k.is_finite() {
                return Err(PipelineError::Config("k must be finite".into()));
            }
            f.k = k;
        }
        Ok(f)
    }

    /// Experiment config carrying the run seed.
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig { seed: self.seed, ..self.experiment.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub functional: BellFunctional,
    pub level: Level,
    pub value: f64,
    pub sigma: f64,
    /// Three-outcome upper bound and the dropped outcome attaining it (one-based).
    pub bound: f64,
    pub dropped_outcome: usize,
    pub gap: f64,
    /// `gap / sigma`; absent when sigma vanishes.
    pub significance: Option<f64>,
    pub certified: bool,
    pub flags: Vec<EntryFlag>,
}

impl Report {
    pub fn new(
        config: &RunConfig,
        functional: BellFunctional,
        value: f64,
        sigma: f64,
        bound: (f64, usize),
        flags: Vec<EntryFlag>,
    ) -> Self {
        let gap = value - bound.0;
        Self {
            version: VERSION.to_string(),
            config: config.clone(),
            seed: config.seed,
            functional,
            level: config.level,
            value,
            sigma,
            bound: bound.0,
            dropped_outcome: bound.1 + 1,
            gap,
            significance: (sigma > 0.0).then(|| gap / sigma),
            certified: gap > 0.0,
            flags,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    /// Internal consistency: finite numbers, derived fields match.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(format!("report: {m}")));
        if self.version.is_empty() {
            return bad("missing version");
        }
        if self.seed != self.config.seed || self.level != self.config.level {
            return bad("seed or level differ from the embedded config");
        }
        if ![self.value, self.sigma, self.bound, self.gap].iter().all(|v| v.is_finite()) || self.sigma < 0.0 {
            return bad("non-finite value");
        }
        if (self.gap - (self.value - self.bound)).abs() > 1e-12 {
            return bad("gap differs from value - bound");
        }
        match self.significance {
            Some(s) if self.sigma > 0.0 && (s - self.gap / self.sigma).abs() <= 1e-12 * s.abs().max(1.0) => {}
            None if self.sigma == 0.0 => {}
            _ => return bad("significance differs from gap / sigma"),
        }
        if self.certified != (self.gap > 0.0) {
            return bad("certified flag inconsistent with gap");
        }
        if !(1..=4).contains(&self.dropped_outcome) {
            return bad("dropped outcome out of range");
        }
        Ok(())
    }

    /// Recomputes value and sigma from counts and checks them against the report.
    pub fn check_against(&self, counts: &CountRecord) -> Result<f64> {
        let table = estimate_table(counts)?;
        let est = eval_functional(&self.functional, &table)?;
        let sigma = est.sigma.unwrap_or(0.0);
        if (est.value - self.value).abs() > 1e-12 || (sigma - self.sigma).abs() > 1e-12 {
            return Err(PipelineError::Config(format!(
                "counts give {} +- {}, report says {} +- {}",
                est.value, sigma, self.value, self.sigma
            )));
        }
        let significance = (est.value - self.bound) / sigma;
        Ok(significance)
    }
}

/// Everything a certification run produced.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub counts: CountRecord,
    pub table: CorrelationTable,
    pub report: Report,
}

impl Artifacts {
    /// Writes `counts.csv`, `counts.json`, `table.csv` and `report.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut csv = Vec::new();
        self.counts.write_csv(&mut csv)?;
        write_file(&dir.join("counts.csv"), &csv)?;
        write_file(&dir.join("counts.json"), self.counts.sidecar_json()?.as_bytes())?;
        let mut table = Vec::new();
        self.table.write_csv(&mut table)?;
        write_file(&dir.join("table.csv"), &table)?;
        write_file(&dir.join("report.json"), self.report.to_json()?.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Runs certifications, caching three-outcome bounds per (functional, level).
#[derive(Default)]
pub struct Certifier {
    cache: Mutex<HashMap<(Vec<u64>, Level), (f64, usize)>>,
}

impl Certifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bound(&self, f: &BellFunctional, level: Level) -> Result<(f64, usize)> {
        let mut key: Vec<u64> = f.to_params().iter().map(|v| v.to_bits()).collect();
        key.push(f.k.to_bits());
        if let Some(b) = self.cache.lock().expect("cache lock").get(&(key.clone(), level)) {
            return Ok(*b);
        }
        let b = three_outcome_bound(f, level)?;
        self.cache.lock().expect("cache lock").insert((key, level), b);
        Ok(b)
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<Artifacts> {
        cfg.validate()?;
        let f = cfg.resolve_functional()?;
        let counts = simulate_counts(&cfg.experiment(), &reference_setup())?;
        let table = estimate_table(&counts)?;
        let est = eval_functional(&f, &table)?;
        let bound = self.bound(&f, cfg.level)?;
        let report = Report::new(cfg, f, est.value, est.sigma.unwrap_or(0.0), bound, table.flags.clone());
        Ok(Artifacts { counts, table, report })
    }

    /// Independent runs for each seed; with an output directory, each run
    /// writes into `<out>/seed-<n>`.
    pub fn sweep(&self, cfg: &RunConfig, seeds: std::ops::Range<u64>) -> Result<Vec<Report>> {
        cfg.validate()?;
        self.bound(&cfg.resolve_functional()?, cfg.level)?;
        let one = |seed: u64| -> Result<Report> {
            let c = RunConfig { seed, ..cfg.clone() };
            let a = self.run(&c)?;
            if let Some(out) = &cfg.out {
                a.write(&out.join(format!("seed-{seed}")))?;
            }
            Ok(a.report)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            seeds.into_par_iter().map(one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            seeds.map(one).collect()
        }
    }
}

/// Full pipeline with a fresh bound cache.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Report> {
    let a = Certifier::new().run(cfg)?;
    if let Some(out) = &cfg.out {
        a.write(out)?;
    }
    Ok(a.report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub version: String,
    pub config: RunConfig,
    pub conditioned: Vec<ConditionedComparison>,
    pub min_fidelity: f64,
    /// Fidelity of the nine-setting reconstruction with `|Phi+>`.
    pub two_qubit_fidelity: f64,
    /// Reconstructed two-qubit state, `[re, im]` per entry.
    pub two_qubit_state: Vec<Vec<[f64; 2]>>,
}

/// Conditioned-state comparison from Bell counts plus two-qubit tomography.
pub fn run_tomography(cfg: &RunConfig) -> Result<(TomographyReport, CountRecord, CountRecord)> {
    cfg.validate()?;
    let setup = reference_setup();
    let exp = cfg.experiment();
    let bell = simulate_counts(&exp, &setup)?;
    let conditioned = conditioned_reconstructions(&bell, &setup.povm_directions, cfg.correct_accidentals, cfg.normalize)?;
    let tomo = simulate_tomography_counts(&exp)?;
    let freq = FrequencyTable::from_tomography_record(&tomo, cfg.correct_accidentals)?;
    // raw linear inversion; the overlap with a pure target needs no projection
    let rho = two_qubit_tomography(&freq, false)?;
    let two_qubit_fidelity = rho.trace_product(&phi_plus());
    let m = rho.matrix();
    let state = (0..4).map(|i| (0..4).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
    let min_fidelity = conditioned.iter().map(|c| c.fidelity).fold(1.0, f64::min);
    let report = TomographyReport {
        version: VERSION.to_string(),
        config: cfg.clone(),
        conditioned,
        min_fidelity,
        two_qubit_fidelity,
        two_qubit_state: state,
    };
    Ok((report, bell, tomo))
}
