//! Monte Carlo of the photon-counting experiment and the count estimators.
//!
//! Polarization optics follow the Jones convention `H = (1, 0)`, retarders
//! with the fast axis at `theta` from horizontal. Light passes the QWP first,
//! then the HWP, then a PBS whose transmitted (H) port is the `+1` outcome.
//! Polarization Bloch vectors use `z = H/V`, `x = D/A`, `y = R/L`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{born_joint, c, werner, BlochVector, Operator, QmathError, C64};
use crate::scenario::{
    outcome_sign, CorrelationTable, EntryFlag, FlagKind, ReferenceSetup, ScenarioError, SettingId,
    BINARY_SETTINGS, BOB_SETTINGS, POVM_OUTCOMES,
};

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("direction has zero length")]
    ZeroTarget,
    #[error("malformed count record: {0}")]
    Malformed(String),
    #[error(transparent)]
    Qmath(#[from] QmathError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExpError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Werner mixing parameter of the source.
    pub visibility: f64,
    /// Coincidences per second.
    pub coincidence_rate: f64,
    /// Seconds per setting and repetition.
    pub duration_per_setting: f64,
    pub repetitions: usize,
    /// Wave-plate motor precision, degrees.
    pub motor_sigma: f64,
    /// Dark counts per second per detector.
    pub dark_rate: f64,
    /// Coincidence window, seconds.
    pub window: f64,
    /// Singles per second per detector.
    pub singles_rate: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            visibility: 0.995,
            coincidence_rate: 150.0,
            duration_per_setting: 30.0,
            repetitions: 23,
            motor_sigma: 0.02,
            dark_rate: 500.0,
            window: 1.6e-9,
            singles_rate: 300.0,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ExpError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.visibility) {
            return bad("visibility must lie in [0, 1]");
        }
        for (name, v) in [
            ("coincidence_rate", self.coincidence_rate),
            ("motor_sigma", self.motor_sigma),
            ("dark_rate", self.dark_rate),
            ("window", self.window),
            ("singles_rate", self.singles_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be a finite non-negative number"));
            }
        }
        if !(self.duration_per_setting > 0.0 && self.duration_per_setting.is_finite()) {
            return bad("duration_per_setting must be positive");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        Ok(())
    }
}

/// `S_i S_j dt / T`: accidental coincidences per second from singles totals
/// `S_i`, `S_j` collected over `T` seconds.
pub fn accidental_rate(s_i: f64, s_j: f64, window: f64, duration: f64) -> f64 {
    assert!(duration > 0.0, "duration must be positive");
    s_i * s_j * window / duration
}

/// Expected accidental coincidences over the whole run, `S_i S_j dt`.
pub fn accidental_total(s_i: f64, s_j: f64, window: f64, duration: f64) -> f64 {
    accidental_rate(s_i, s_j, window, duration) * duration
}

/// Probability that a coincidence window holds a dark-count-induced
/// coincidence: a dark click paired with a signal click on either side, or two
/// dark clicks.
pub fn dark_coincidence_probability(signal_rate: f64, dark_rate: f64, window: f64) -> f64 {
    let s = signal_rate * window;
    let d = dark_rate * window;
    2.0 * s * d + d * d
}

fn rotation(theta: f64) -> DMatrix<C64> {
    let (s, co) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c(co, 0.), c(-s, 0.), c(s, 0.), c(co, 0.)])
}

fn retarder(theta_deg: f64, retardance: f64) -> DMatrix<C64> {
    let t = theta_deg.to_radians();
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1., 0.), C64::from_polar(1.0, retardance)]));
    rotation(t) * d * rotation(-t)
}

/// Half-wave plate with fast axis at `theta` degrees.
pub fn hwp(theta_deg: f64) -> DMatrix<C64> {
    retarder(theta_deg, std::f64::consts::PI)
}

/// Quarter-wave plate with fast axis at `theta` degrees.
pub fn qwp(theta_deg: f64) -> DMatrix<C64> {
    retarder(theta_deg, std::f64::consts::FRAC_PI_2)
}

fn bloch_of_ket(k: &DVector<C64>) -> BlochVector {
    let (a, b) = (k[0], k[1]);
    let ab = a.conj() * b;
    BlochVector::new(2.0 * ab.re, 2.0 * ab.im, a.norm_sqr() - b.norm_sqr())
}

/// Direction measured by the `+1` (transmitted) port for plate angles in degrees.
pub fn measured_direction(hwp_deg: f64, qwp_deg: f64) -> BlochVector {
    let u = hwp(hwp_deg) * qwp(qwp_deg);
    let h = DVector::from_vec(vec![c(1., 0.), c(0., 0.)]);
    bloch_of_ket(&(u.adjoint() * h))
}

/// Plate angles `(hwp, qwp)` in degrees that measure along `target`.
pub fn waveplate_angles(target: BlochVector) -> Result<(f64, f64)> {
    let n = target.normalized().map_err(|_| ExpError::ZeroTarget)?;
    // QWP along the major axis of the polarization ellipse linearizes it.
    let q = 0.5 * n.x.atan2(n.z);
    let q_deg = q.to_degrees();
    let theta = (n.z.clamp(-1.0, 1.0)).acos();
    let phi = n.y.atan2(n.x);
    let ket = DVector::from_vec(vec![c((theta / 2.0).cos(), 0.), C64::from_polar((theta / 2.0).sin(), phi)]);
    let lin = qwp(q_deg) * ket;
    let p = bloch_of_ket(&lin);
    // linear polarization at angle p.x.atan2(p.z)/2; a HWP at half of it maps it to H
    let h_deg = (0.25 * p.x.atan2(p.z)).to_degrees();
    Ok((h_deg, q_deg))
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// `target` as realized after independent Gaussian errors (degrees) on both plates.
pub fn perturbed_direction<R: Rng + ?Sized>(target: BlochVector, motor_sigma: f64, rng: &mut R) -> Result<BlochVector> {
    let (h, q) = waveplate_angles(target)?;
    let Some(dist) = normal(motor_sigma) else {
        return target.normalized().map_err(|_| ExpError::ZeroTarget);
    };
    let dh = dist.sample(rng);
    let dq = dist.sample(rng);
    Ok(measured_direction(h + dh, q + dq))
}

/// Common small unitary applied to the four-outcome measurement by plate errors.
fn povm_jitter<R: Rng + ?Sized>(motor_sigma: f64, rng: &mut R) -> Operator {
    let Some(dist) = normal(motor_sigma) else {
        return Operator::identity(2);
    };
    let dh = dist.sample(rng);
    let dq = dist.sample(rng);
    let nominal = hwp(0.0) * qwp(0.0);
    Operator::new(hwp(dh) * qwp(dq) * nominal.adjoint()).expect("2x2")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// Bell-test settings: `x` in 0..4 (3 = four-outcome), `y` in 0..4.
    Bell,
    /// Pauli-pair tomography settings: `x`, `y` in 0..3 for `x, y, z`.
    Tomography,
}

/// Counts of one setting pair and repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountEntry {
    pub x: usize,
    pub y: usize,
    pub repetition: usize,
    /// `counts[a][b]`, with binary outcome index 0 for `+1`.
    pub counts: Vec<[u64; 2]>,
    /// Singles of Alice's detectors (one per outcome).
    pub singles_alice: Vec<u64>,
    pub singles_bob: [u64; 2],
}

impl CountEntry {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Nominal plate angles `(hwp, qwp)` of every projective setting, degrees.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SettingAngles {
    pub alice: Vec<(f64, f64)>,
    pub bob: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub kind: RecordKind,
    pub config: ExperimentConfig,
    pub angles: SettingAngles,
    pub entries: Vec<CountEntry>,
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Multinomial draw by successive conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out[i] = k;
        left -= k;
        mass -= p;
    }
    out
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn binary_effects(n: BlochVector) -> [Operator; 2] {
    [crate::qmath::operator_from_bloch(1.0, n), crate::qmath::operator_from_bloch(1.0, -n)]
}

/// Draws the counts of one setting pair given its outcome probabilities.
fn draw_entry<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    x: usize,
    y: usize,
    repetition: usize,
    probs: &[[f64; 2]],
    rng: &mut R,
) -> CountEntry {
    let t = cfg.duration_per_setting;
    let total = poisson(cfg.coincidence_rate * t, rng);
    let flat: Vec<f64> = probs.iter().flatten().copied().collect();
    let signal = multinomial(total, &flat, rng);
    let singles_alice: Vec<u64> = (0..probs.len()).map(|_| poisson(cfg.singles_rate * t, rng)).collect();
    let singles_bob = [poisson(cfg.singles_rate * t, rng), poisson(cfg.singles_rate * t, rng)];
    // uncorrelated background on every detector pair
    let acc = accidental_rate(cfg.singles_rate * t, cfg.singles_rate * t, cfg.window, t);
    let dark = dark_coincidence_probability(cfg.singles_rate, cfg.dark_rate, cfg.window) / cfg.window.max(f64::MIN_POSITIVE);
    let background = if cfg.window > 0.0 { (acc + dark) * t } else { 0.0 };
    let counts = probs
        .iter()
        .enumerate()
        .map(|(a, _)| std::array::from_fn(|b| signal[2 * a + b] + poisson(background, rng)))
        .collect();
    CountEntry { x, y, repetition, counts, singles_alice, singles_bob }
}

fn run_jobs<T: Send>(jobs: Vec<(usize, usize, usize)>, f: impl Fn(usize, usize, usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.into_par_iter().map(|(x, y, r)| f(x, y, r)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.into_iter().map(|(x, y, r)| f(x, y, r)).collect()
    }
}

/// Simulates every Bell setting pair for every repetition. Each
/// (setting, repetition) uses its own random stream derived from the seed, so
/// the record does not depend on evaluation order.
pub fn simulate_counts(cfg: &ExperimentConfig, setup: &ReferenceSetup) -> Result<CountRecord> {
    cfg.validate()?;
    let rho = werner(cfg.visibility);
    let mut jobs = Vec::new();
    for x in 0..=BINARY_SETTINGS {
        for y in 0..BOB_SETTINGS {
            for r in 0..cfg.repetitions {
                jobs.push((x, y, r));
            }
        }
    }
    let entries = run_jobs(jobs, |x, y, r| {
        let stream = ((x * BOB_SETTINGS + y) as u64) << 32 | r as u64;
        let mut rng = stream_rng(cfg.seed, stream);
        let bob = binary_effects(perturbed_direction(setup.bob_directions[y], cfg.motor_sigma, &mut rng)?);
        let alice: Vec<Operator> = if x < BINARY_SETTINGS {
            binary_effects(perturbed_direction(setup.alice_directions[x], cfg.motor_sigma, &mut rng)?).to_vec()
        } else {
            let v = povm_jitter(cfg.motor_sigma, &mut rng);
            setup.measurements.alice_povm.iter().map(|e| e.conjugate_by(&v)).collect()
        };
        let mut probs = Vec::with_capacity(alice.len());
        for ea in &alice {
            probs.push([born_joint(&rho, ea, &bob[0])?, born_joint(&rho, ea, &bob[1])?]);
        }
        Ok(draw_entry(cfg, x, y, r, &probs, &mut rng))
    })?;
    let angles = SettingAngles {
        alice: setup.alice_directions.iter().map(|&d| waveplate_angles(d)).collect::<Result<_>>()?,
        bob: setup.bob_directions.iter().map(|&d| waveplate_angles(d)).collect::<Result<_>>()?,
    };
    Ok(CountRecord { kind: RecordKind::Bell, config: cfg.clone(), angles, entries })
}

/// Nine-setting Pauli-pair tomography of the Werner source.
pub fn simulate_tomography_counts(cfg: &ExperimentConfig) -> Result<CountRecord> {
    cfg.validate()?;
    let rho = werner(cfg.visibility);
    let axes = [BlochVector::new(1., 0., 0.), BlochVector::new(0., 1., 0.), BlochVector::new(0., 0., 1.)];
    let mut jobs = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            for r in 0..cfg.repetitions {
                jobs.push((i, j, r));
            }
        }
    }
    let entries = run_jobs(jobs, |i, j, r| {
        let stream = (1u64 << 63) | ((i * 3 + j) as u64) << 32 | r as u64;
        let mut rng = stream_rng(cfg.seed, stream);
        let ea = binary_effects(perturbed_direction(axes[i], cfg.motor_sigma, &mut rng)?);
        let eb = binary_effects(perturbed_direction(axes[j], cfg.motor_sigma, &mut rng)?);
        let mut probs = Vec::with_capacity(2);
        for a in &ea {
            probs.push([born_joint(&rho, a, &eb[0])?, born_joint(&rho, a, &eb[1])?]);
        }
        Ok(draw_entry(cfg, i, j, r, &probs, &mut rng))
    })?;
    let angles = SettingAngles {
        alice: axes.iter().map(|&d| waveplate_angles(d)).collect::<Result<_>>()?,
        bob: axes.iter().map(|&d| waveplate_angles(d)).collect::<Result<_>>()?,
    };
    Ok(CountRecord { kind: RecordKind::Tomography, config: cfg.clone(), angles, entries })
}

impl CountRecord {
    /// Counts of setting `(x, y)` summed over repetitions. With
    /// `correct_accidentals`, the expected accidentals `S_a S_b dt / T` of each
    /// repetition are subtracted (floored at zero).
    pub fn pooled(&self, x: usize, y: usize, correct_accidentals: bool) -> Option<Vec<[f64; 2]>> {
        let mut out: Option<Vec<[f64; 2]>> = None;
        let t = self.config.duration_per_setting;
        for e in self.entries.iter().filter(|e| e.x == x && e.y == y) {
            let acc = out.get_or_insert_with(|| vec![[0.0; 2]; e.counts.len()]);
            for (a, row) in e.counts.iter().enumerate() {
                for b in 0..2 {
                    let mut n = row[b] as f64;
                    if correct_accidentals {
                        let sa = e.singles_alice.get(a).copied().unwrap_or(0) as f64;
                        n = (n - accidental_total(sa, e.singles_bob[b] as f64, self.config.window, t)).max(0.0);
                    }
                    acc[a][b] += n;
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            for (a, row) in e.counts.iter().enumerate() {
                for (b, &count) in row.iter().enumerate() {
                    w.serialize(CountRow {
                        x: e.x + 1,
                        y: e.y + 1,
                        repetition: e.repetition + 1,
                        a: self.alice_label(e.x, a),
                        b: outcome_sign(b) as i64,
                        count,
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    fn alice_label(&self, x: usize, a: usize) -> i64 {
        if self.kind == RecordKind::Bell && x == BINARY_SETTINGS {
            a as i64 + 1
        } else {
            outcome_sign(a) as i64
        }
    }

    /// JSON sidecar: kind, config (with seed), plate angles and singles.
    pub fn sidecar_json(&self) -> Result<String> {
        let singles = self
            .entries
            .iter()
            .map(|e| SinglesRow {
                x: e.x + 1,
                y: e.y + 1,
                repetition: e.repetition + 1,
                alice: e.singles_alice.clone(),
                bob: e.singles_bob,
            })
            .collect();
        let side = Sidecar { kind: self.kind, config: self.config.clone(), angles: self.angles.clone(), singles };
        Ok(serde_json::to_string_pretty(&side)?)
    }

    /// Reads counts; without a sidecar the record is taken as a Bell record
    /// with default config and no singles.
    pub fn read<R: Read>(csv_reader: R, sidecar: Option<&str>) -> Result<Self> {
        let side: Option<Sidecar> = sidecar.map(serde_json::from_str).transpose()?;
        let kind = side.as_ref().map_or(RecordKind::Bell, |s| s.kind);
        let mut r = csv::Reader::from_reader(csv_reader);
        let mut map: std::collections::BTreeMap<(usize, usize, usize), CountEntry> = Default::default();
        for row in r.deserialize() {
            let row: CountRow = row?;
            if row.x == 0 || row.y == 0 || row.repetition == 0 {
                return Err(ExpError::Malformed("labels are one-based".into()));
            }
            let (x, y, rep) = (row.x - 1, row.y - 1, row.repetition - 1);
            let four = kind == RecordKind::Bell && x == BINARY_SETTINGS;
            let (x_max, y_max) = match kind {
                RecordKind::Bell => (BINARY_SETTINGS, BOB_SETTINGS - 1),
                RecordKind::Tomography => (2, 2),
            };
            if x > x_max || y > y_max {
                return Err(ExpError::Malformed(format!("setting x={} y={}", row.x, row.y)));
            }
            let a = if four {
                match row.a {
                    1..=4 => row.a as usize - 1,
                    _ => return Err(ExpError::Malformed(format!("outcome a={}", row.a))),
                }
            } else {
                match row.a {
                    1 => 0,
                    -1 => 1,
                    _ => return Err(ExpError::Malformed(format!("outcome a={}", row.a))),
                }
            };
            let b = match row.b {
                1 => 0,
                -1 => 1,
                _ => return Err(ExpError::Malformed(format!("outcome b={}", row.b))),
            };
            let n_a = if four { POVM_OUTCOMES } else { 2 };
            let e = map.entry((x, y, rep)).or_insert_with(|| CountEntry {
                x,
                y,
                repetition: rep,
                counts: vec![[0; 2]; n_a],
                singles_alice: vec![0; n_a],
                singles_bob: [0; 2],
            });
            e.counts[a][b] += row.count;
        }
        if let Some(side) = &side {
            for s in &side.singles {
                if let Some(e) = map.get_mut(&(s.x - 1, s.y - 1, s.repetition - 1)) {
                    e.singles_alice = s.alice.clone();
                    e.singles_bob = s.bob;
                }
            }
        }
        let (config, angles) = match side {
            Some(s) => (s.config, s.angles),
            None => (ExperimentConfig::default(), SettingAngles::default()),
        };
        Ok(CountRecord { kind, config, angles, entries: map.into_values().collect() })
    }
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    x: usize,
    y: usize,
    repetition: usize,
    a: i64,
    b: i64,
    count: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SinglesRow {
    x: usize,
    y: usize,
    repetition: usize,
    alice: Vec<u64>,
    bob: [u64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    kind: RecordKind,
    config: ExperimentConfig,
    angles: SettingAngles,
    singles: Vec<SinglesRow>,
}

/// Frequencies from raw (uncorrected) pooled counts.
pub fn estimate_table(counts: &CountRecord) -> Result<CorrelationTable> {
    estimate_table_with(counts, false)
}

/// Frequencies `N / sum N` per setting with multinomial uncertainties.
/// Settings without counts are flagged missing (entries NaN); settings with a
/// frequency at 0 or 1 are flagged as boundary cases.
pub fn estimate_table_with(counts: &CountRecord, correct_accidentals: bool) -> Result<CorrelationTable> {
    if counts.kind != RecordKind::Bell {
        return Err(ExpError::Malformed("expected a Bell count record".into()));
    }
    let mut t = CorrelationTable::uniform();
    for setting in SettingId::all() {
        let (x, y) = match setting {
            SettingId::Binary { x, y } => (x, y),
            SettingId::Povm { y } => (BINARY_SETTINGS, y),
        };
        let pooled = counts.pooled(x, y, correct_accidentals);
        let total: f64 = pooled.iter().flatten().flatten().sum();
        let probs: Vec<[f64; 2]> = match &pooled {
            Some(p) if total > 0.0 => p.iter().map(|r| [r[0] / total, r[1] / total]).collect(),
            _ => {
                t.flags.push(EntryFlag { setting, kind: FlagKind::Missing });
                vec![[f64::NAN; 2]; setting.alice_outcomes()]
            }
        };
        if total > 0.0 && probs.iter().flatten().any(|&p| p == 0.0 || p == 1.0) {
            t.flags.push(EntryFlag { setting, kind: FlagKind::Boundary });
        }
        let n = (total > 0.0).then_some(total);
        match setting {
            SettingId::Binary { x, y } => {
                t.binary[x][y] = [probs[0], probs[1]];
                t.binary_totals[x][y] = n;
            }
            SettingId::Povm { y } => {
                t.povm[y] = std::array::from_fn(|a| probs[a]);
                t.povm_totals[y] = n;
            }
        }
    }
    Ok(t)
}
