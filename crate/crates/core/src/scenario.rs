//! The Bell scenario: Alice has three binary settings and one four-outcome
//! setting, Bob has four binary settings.
//!
//! Indices are zero based throughout the API. Binary outcomes are stored with
//! index 0 for `+1` and index 1 for `-1`; the four-outcome setting uses index
//! `a` for outcome `a + 1`. File formats use the one-based labels.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{
    born_joint, operator_from_bloch, phi_plus, qubit_state, sigma_dot, BlochVector, Operator,
    QmathError,
};

pub const BINARY_SETTINGS: usize = 3;
pub const BOB_SETTINGS: usize = 4;
pub const POVM_OUTCOMES: usize = 4;
/// Alice's four-outcome setting, zero based.
pub const POVM_SETTING: usize = 3;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("setting x={x}, y={y} is outside the scenario")]
    InvalidSetting { x: usize, y: usize },
    #[error("no correlator is defined for the four-outcome setting")]
    FourOutcomeCorrelator,
    #[error("setting {0} has no data")]
    MissingSetting(SettingId),
    #[error("unknown functional '{0}'")]
    UnknownFunctional(String),
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error(transparent)]
    Qmath(#[from] QmathError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

/// `+1` for index 0, `-1` for index 1.
#[inline]
pub fn outcome_sign(index: usize) -> f64 {
    if index == 0 {
        1.0
    } else {
        -1.0
    }
}

/// One measurement-setting pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SettingId {
    Binary { x: usize, y: usize },
    Povm { y: usize },
}

impl std::fmt::Display for SettingId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SettingId::Binary { x, y } => write!(f, "(x={}, y={})", x + 1, y + 1),
            SettingId::Povm { y } => write!(f, "(x=4, y={})", y + 1),
        }
    }
}

impl SettingId {
    pub fn all() -> impl Iterator<Item = SettingId> {
        let binary = (0..BINARY_SETTINGS)
            .flat_map(|x| (0..BOB_SETTINGS).map(move |y| SettingId::Binary { x, y }));
        binary.chain((0..BOB_SETTINGS).map(|y| SettingId::Povm { y }))
    }

    pub fn alice_outcomes(self) -> usize {
        match self {
            SettingId::Binary { .. } => 2,
            SettingId::Povm { .. } => POVM_OUTCOMES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// No coincidences were recorded; entries are NaN.
    Missing,
    /// Some frequency sits at 0 or 1, where Poisson propagation degenerates.
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFlag {
    pub setting: SettingId,
    pub kind: FlagKind,
}

/// A value with an optional first-order standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: Option<f64>,
}

pub type BinaryBlock = [[f64; 2]; 2];
pub type PovmBlock = [[f64; 2]; POVM_OUTCOMES];

/// `P(a, b | x, y)` for every setting pair of the scenario.
///
/// Uncertainties are carried as the number of coincidences behind each
/// setting; per-entry and derived standard errors follow from multinomial
/// (equivalently, first-order Poisson-through-quotient) propagation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    /// `binary[x][y][a][b]`.
    pub binary: [[BinaryBlock; BOB_SETTINGS]; BINARY_SETTINGS],
    /// `povm[y][a][b]`.
    pub povm: [PovmBlock; BOB_SETTINGS],
    pub binary_totals: [[Option<f64>; BOB_SETTINGS]; BINARY_SETTINGS],
    pub povm_totals: [Option<f64>; BOB_SETTINGS],
    pub flags: Vec<EntryFlag>,
}

impl CorrelationTable {
    pub fn uniform() -> Self {
        Self {
            binary: [[[[0.25; 2]; 2]; BOB_SETTINGS]; BINARY_SETTINGS],
            povm: [[[0.125; 2]; POVM_OUTCOMES]; BOB_SETTINGS],
            binary_totals: [[None; BOB_SETTINGS]; BINARY_SETTINGS],
            povm_totals: [None; BOB_SETTINGS],
            flags: Vec::new(),
        }
    }

    /// Table with unbiased marginals, `P(a,b|x,y) = (1 + a b E_xy) / 4`, and a
    /// uniform four-outcome block. When `sigma` is given, the per-setting totals
    /// are chosen so that the propagated correlator error equals it.
    pub fn from_correlators(
        correlators: [[f64; BOB_SETTINGS]; BINARY_SETTINGS],
        sigma: Option<[[f64; BOB_SETTINGS]; BINARY_SETTINGS]>,
    ) -> Self {
        let mut t = Self::uniform();
        for x in 0..BINARY_SETTINGS {
            for y in 0..BOB_SETTINGS {
                let e = correlators[x][y];
                for a in 0..2 {
                    for b in 0..2 {
                        t.binary[x][y][a][b] = (1.0 + outcome_sign(a) * outcome_sign(b) * e) / 4.0;
                    }
                }
                if let Some(s) = sigma {
                    t.binary_totals[x][y] = Some((1.0 - e * e) / (s[x][y] * s[x][y]));
                }
            }
        }
        t
    }

    pub fn probabilities(&self, setting: SettingId) -> Vec<[f64; 2]> {
        match setting {
            SettingId::Binary { x, y } => self.binary[x][y].to_vec(),
            SettingId::Povm { y } => self.povm[y].to_vec(),
        }
    }

    pub fn total(&self, setting: SettingId) -> Option<f64> {
        match setting {
            SettingId::Binary { x, y } => self.binary_totals[x][y],
            SettingId::Povm { y } => self.povm_totals[y],
        }
    }

    pub fn has_flag(&self, setting: SettingId, kind: FlagKind) -> bool {
        self.flags.iter().any(|f| f.setting == setting && f.kind == kind)
    }

    pub fn is_missing(&self, setting: SettingId) -> bool {
        self.has_flag(setting, FlagKind::Missing)
    }

    /// Per-entry standard error `sqrt(p (1 - p) / N)`.
    pub fn entry_sigma(&self, setting: SettingId, a: usize, b: usize) -> Option<f64> {
        let n = self.total(setting)?;
        let p = self.probabilities(setting)[a][b];
        Some((p * (1.0 - p) / n).sqrt())
    }

    /// Linear form `sum_ab c[a][b] P(a,b|setting)` with its propagated error.
    pub fn linear_form(&self, setting: SettingId, coefficients: &[[f64; 2]]) -> Result<Estimate> {
        if self.is_missing(setting) {
            return Err(ScenarioError::MissingSetting(setting));
        }
        let probs = self.probabilities(setting);
        let mut mean = 0.0;
        let mut second = 0.0;
        for (row, crow) in probs.iter().zip(coefficients) {
            for b in 0..2 {
                mean += crow[b] * row[b];
                second += crow[b] * crow[b] * row[b];
            }
        }
        let sigma = self.total(setting).map(|n| ((second - mean * mean).max(0.0) / n).sqrt());
        Ok(Estimate { value: mean, sigma })
    }

    /// Largest deviation of any setting's probabilities from summing to one.
    pub fn normalization_deviation(&self) -> f64 {
        SettingId::all()
            .filter(|s| !self.is_missing(*s))
            .map(|s| {
                let sum: f64 = self.probabilities(s).iter().flatten().sum();
                (sum - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest violation of no-signalling in either direction.
    pub fn no_signaling_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        // Alice's marginals must not depend on Bob's setting.
        for x in 0..=BINARY_SETTINGS {
            let marginal = |y: usize| -> Vec<f64> {
                let setting = if x < BINARY_SETTINGS {
                    SettingId::Binary { x, y }
                } else {
                    SettingId::Povm { y }
                };
                self.probabilities(setting).iter().map(|r| r[0] + r[1]).collect()
            };
            let reference = marginal(0);
            for y in 1..BOB_SETTINGS {
                for (u, v) in reference.iter().zip(marginal(y)) {
                    dev = dev.max((u - v).abs());
                }
            }
        }
        // Bob's marginals must not depend on Alice's setting.
        for y in 0..BOB_SETTINGS {
            let marginal = |setting: SettingId| -> [f64; 2] {
                let p = self.probabilities(setting);
                let mut m = [0.0; 2];
                for row in &p {
                    m[0] += row[0];
                    m[1] += row[1];
                }
                m
            };
            let reference = marginal(SettingId::Povm { y });
            for x in 0..BINARY_SETTINGS {
                let m = marginal(SettingId::Binary { x, y });
                dev = dev.max((m[0] - reference[0]).abs()).max((m[1] - reference[1]).abs());
            }
        }
        dev
    }

    /// Convex combination `lambda * self + (1 - lambda) * other` of the probabilities.
    pub fn mix(&self, lambda: f64, other: &CorrelationTable) -> CorrelationTable {
        let mut out = self.clone();
        for x in 0..BINARY_SETTINGS {
            for y in 0..BOB_SETTINGS {
                for a in 0..2 {
                    for b in 0..2 {
                        out.binary[x][y][a][b] =
                            lambda * self.binary[x][y][a][b] + (1.0 - lambda) * other.binary[x][y][a][b];
                    }
                }
            }
        }
        for y in 0..BOB_SETTINGS {
            for a in 0..POVM_OUTCOMES {
                for b in 0..2 {
                    out.povm[y][a][b] = lambda * self.povm[y][a][b] + (1.0 - lambda) * other.povm[y][a][b];
                }
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<TableRow> {
        let mut rows = Vec::with_capacity(80);
        for setting in SettingId::all() {
            let probs = self.probabilities(setting);
            for (a, row) in probs.iter().enumerate() {
                for (b, &p) in row.iter().enumerate() {
                    let (x_label, a_label) = match setting {
                        SettingId::Binary { x, .. } => (x as u8 + 1, outcome_sign(a) as i8),
                        SettingId::Povm { .. } => (4, a as i8 + 1),
                    };
                    let y = match setting {
                        SettingId::Binary { y, .. } | SettingId::Povm { y } => y,
                    };
                    rows.push(TableRow {
                        x: x_label,
                        y: y as u8 + 1,
                        a: a_label,
                        b: outcome_sign(b) as i8,
                        p,
                        sigma: self.entry_sigma(setting, a, b),
                    });
                }
            }
        }
        rows
    }

    /// Rebuilds a table from rows; per-setting totals are recovered from the
    /// entry with the largest `p (1 - p)` as `N = p (1 - p) / sigma^2`.
    pub fn from_rows(rows: &[TableRow], flags: Vec<EntryFlag>) -> Result<Self> {
        let mut t = Self::uniform();
        t.flags = flags;
        let mut seen = std::collections::HashSet::new();
        let mut best: std::collections::HashMap<SettingId, (f64, f64)> = Default::default();
        for r in rows {
            let (setting, a) = r.locate()?;
            let b = match r.b {
                1 => 0,
                -1 => 1,
                other => return Err(ScenarioError::Malformed(format!("Bob outcome {other}"))),
            };
            if !seen.insert((setting, a, b)) {
                return Err(ScenarioError::Malformed(format!("duplicate entry {setting} a={} b={}", r.a, r.b)));
            }
            match setting {
                SettingId::Binary { x, y } => t.binary[x][y][a][b] = r.p,
                SettingId::Povm { y } => t.povm[y][a][b] = r.p,
            }
            if let Some(s) = r.sigma {
                let w = r.p * (1.0 - r.p);
                if s > 0.0 && w > 0.0 {
                    let entry = best.entry(setting).or_insert((0.0, 0.0));
                    if w > entry.0 {
                        *entry = (w, w / (s * s));
                    }
                }
            }
        }
        if seen.len() != 80 {
            return Err(ScenarioError::Malformed(format!("expected 80 entries, found {}", seen.len())));
        }
        for (setting, (_, n)) in best {
            match setting {
                SettingId::Binary { x, y } => t.binary_totals[x][y] = Some(n),
                SettingId::Povm { y } => t.povm_totals[y] = Some(n),
            }
        }
        Ok(t)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<TableRow>, _>>()?;
        Self::from_rows(&rows, Vec::new())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TableDocument { rows: self.rows(), flags: self.flags.clone() };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TableDocument = serde_json::from_str(text)?;
        Self::from_rows(&doc.rows, doc.flags)
    }
}

/// One CSV/JSON row with one-based labels: `a`, `b` are `+1/-1` for binary
/// settings and `a` is `1..=4` for `x = 4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub x: u8,
    pub y: u8,
    pub a: i8,
    pub b: i8,
    pub p: f64,
    pub sigma: Option<f64>,
}

impl TableRow {
    fn locate(&self) -> Result<(SettingId, usize)> {
        let y = (self.y as usize).wrapping_sub(1);
        if y >= BOB_SETTINGS {
            return Err(ScenarioError::Malformed(format!("y={}", self.y)));
        }
        match self.x {
            1..=3 => {
                let a = match self.a {
                    1 => 0,
                    -1 => 1,
                    other => return Err(ScenarioError::Malformed(format!("binary outcome {other}"))),
                };
                Ok((SettingId::Binary { x: self.x as usize - 1, y }, a))
            }
            4 => {
                if !(1..=4).contains(&self.a) {
                    return Err(ScenarioError::Malformed(format!("four-outcome label {}", self.a)));
                }
                Ok((SettingId::Povm { y }, self.a as usize - 1))
            }
            other => Err(ScenarioError::Malformed(format!("x={other}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TableDocument {
    rows: Vec<TableRow>,
    #[serde(default)]
    flags: Vec<EntryFlag>,
}

/// `E_xy = sum_ab a b P(a,b|x,y)` for a binary Alice setting.
pub fn correlator(table: &CorrelationTable, x: usize, y: usize) -> Result<Estimate> {
    if x == POVM_SETTING {
        return Err(ScenarioError::FourOutcomeCorrelator);
    }
    if x > POVM_SETTING || y >= BOB_SETTINGS {
        return Err(ScenarioError::InvalidSetting { x, y });
    }
    table.linear_form(SettingId::Binary { x, y }, &[[1.0, -1.0], [-1.0, 1.0]])
}

/// A linear Bell functional
/// `sum_xy gamma_xy E_xy - k sum_{y,a,b} penalty[y][a][b] P(a,b|4,y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "FunctionalDocument", try_from = "FunctionalDocument")]
pub struct BellFunctional {
    /// `gamma_xy`, indexed `[x][y]`.
    pub correlator: [[f64; BOB_SETTINGS]; BINARY_SETTINGS],
    /// Penalty coefficients, indexed `[y][a][b]`.
    pub penalty: [[[f64; 2]; POVM_OUTCOMES]; BOB_SETTINGS],
    pub k: f64,
}

/// Sign pattern of the elegant Bell expression.
pub const ELEGANT_SIGNS: [[f64; 4]; 3] =
    [[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];

const OPTIMIZED_CORRELATOR: [[f64; 4]; 3] = [
    [0.9541, 0.9917, -0.9767, -1.0064],
    [0.9514, -0.9921, 0.8211, -1.0237],
    [1.0641, -1.0044, -1.0579, 1.1563],
];

/// Published penalty coefficients, `[y][a][b]` with `b = 0` for `+1`.
const OPTIMIZED_PENALTY: [[[f64; 2]; 4]; 4] = [
    [[1.2068, -0.0374], [-0.0034, 0.0140], [0.0006, 0.0268], [-0.0163, -0.0155]],
    [[-0.0033, 0.0184], [1.1156, -0.0046], [-0.0125, 0.0401], [-0.0175, -0.0240]],
    [[-0.0108, 0.0153], [-0.1195, 0.1752], [0.6201, 0.0149], [-0.0399, 0.0527]],
    [[0.0058, -0.0149], [0.0025, 0.0205], [0.0150, 0.0212], [0.9565, -0.0023]],
];

/// Named functionals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuiltinFunctional {
    Elegant,
    /// Elegant expression minus `k sum_i P(a=i, b=+1 | x=4, y=i)`.
    Modified(f64),
    /// The optimised certification operator with `k = 3`.
    Optimized,
}

impl std::str::FromStr for BuiltinFunctional {
    type Err = ScenarioError;

    /// Accepts `elegant`, `optimized`, `modified` (k = 1), `modified:K` and `modified(K)`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "elegant" => return Ok(Self::Elegant),
            "optimized" | "optimised" => return Ok(Self::Optimized),
            "modified" => return Ok(Self::Modified(1.0)),
            _ => {}
        }
        let arg = t
            .strip_prefix("modified:")
            .or_else(|| t.strip_prefix("modified(").and_then(|r| r.strip_suffix(')')));
        match arg.and_then(|a| a.trim().parse::<f64>().ok()) {
            Some(k) => Ok(Self::Modified(k)),
            None => Err(ScenarioError::UnknownFunctional(s.to_string())),
        }
    }
}

pub fn builtin_functional(which: BuiltinFunctional) -> BellFunctional {
    match which {
        BuiltinFunctional::Elegant => BellFunctional::elegant(),
        BuiltinFunctional::Modified(k) => {
            let mut f = BellFunctional::elegant();
            for i in 0..POVM_OUTCOMES {
                f.penalty[i][i][0] = 1.0;
            }
            f.k = k;
            f
        }
        BuiltinFunctional::Optimized => BellFunctional {
            correlator: OPTIMIZED_CORRELATOR,
            penalty: OPTIMIZED_PENALTY,
            k: 3.0,
        },
    }
}

/// Parses a functional name (see [`BuiltinFunctional`]).
pub fn functional_by_name(name: &str) -> Result<BellFunctional> {
    Ok(builtin_functional(name.parse()?))
}

impl BellFunctional {
    pub fn zero() -> Self {
        Self { correlator: [[0.0; 4]; 3], penalty: [[[0.0; 2]; 4]; 4], k: 0.0 }
    }

    pub fn elegant() -> Self {
        Self { correlator: ELEGANT_SIGNS, ..Self::zero() }
    }

    /// `E_11 + E_12 + E_21 - E_22`, embedded in the first two settings of each side.
    pub fn chsh() -> Self {
        let mut f = Self::zero();
        f.correlator[0][0] = 1.0;
        f.correlator[0][1] = 1.0;
        f.correlator[1][0] = 1.0;
        f.correlator[1][1] = -1.0;
        f
    }

    /// Coefficient of `P(a,b|x,y)` for a setting pair.
    pub fn setting_coefficients(&self, setting: SettingId) -> Vec<[f64; 2]> {
        match setting {
            SettingId::Binary { x, y } => {
                let g = self.correlator[x][y];
                vec![[g, -g], [-g, g]]
            }
            SettingId::Povm { y } => self.penalty[y]
                .iter()
                .map(|row| [-self.k * row[0], -self.k * row[1]])
                .collect(),
        }
    }

    /// Effective penalty weight `k * penalty[y][a][b]`.
    pub fn effective_penalty(&self, y: usize, a: usize, b: usize) -> f64 {
        self.k * self.penalty[y][a][b]
    }

    pub fn has_penalty(&self) -> bool {
        self.k != 0.0 && self.penalty.iter().flatten().flatten().any(|&c| c != 0.0)
    }

    /// Multiplies every coefficient (correlator and penalty) by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut f = self.clone();
        f.correlator.iter_mut().flatten().for_each(|g| *g *= s);
        f.penalty.iter_mut().flatten().flatten().for_each(|c| *c *= s);
        f
    }

    /// Mean `|gamma_xy|`.
    pub fn correlator_scale(&self) -> f64 {
        self.correlator.iter().flatten().map(|g| g.abs()).sum::<f64>() / 12.0
    }

    /// Flattened coefficients: 12 correlator weights followed by 32 penalty weights.
    pub fn to_params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.correlator.iter().flatten().copied().collect();
        v.extend(self.penalty.iter().flatten().flatten());
        v
    }

    pub fn from_params(params: &[f64], k: f64) -> Self {
        assert_eq!(params.len(), 44, "expected 12 + 32 coefficients");
        let mut f = Self::zero();
        f.k = k;
        for (i, g) in f.correlator.iter_mut().flatten().enumerate() {
            *g = params[i];
        }
        for (i, c) in f.penalty.iter_mut().flatten().flatten().enumerate() {
            *c = params[12 + i];
        }
        f
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FunctionalDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FunctionalDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PenaltyTerm {
    a: u8,
    b: i8,
    y: u8,
    coefficient: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionalDocument {
    gamma_xy: [[f64; 4]; 3],
    penalty: Vec<PenaltyTerm>,
    k: f64,
}

impl From<&BellFunctional> for FunctionalDocument {
    fn from(f: &BellFunctional) -> Self {
        let mut penalty = Vec::new();
        for y in 0..BOB_SETTINGS {
            for a in 0..POVM_OUTCOMES {
                for b in 0..2 {
                    penalty.push(PenaltyTerm {
                        a: a as u8 + 1,
                        b: outcome_sign(b) as i8,
                        y: y as u8 + 1,
                        coefficient: f.penalty[y][a][b],
                    });
                }
            }
        }
        Self { gamma_xy: f.correlator, penalty, k: f.k }
    }
}

impl From<BellFunctional> for FunctionalDocument {
    fn from(f: BellFunctional) -> Self {
        Self::from(&f)
    }
}

impl TryFrom<FunctionalDocument> for BellFunctional {
    type Error = ScenarioError;

    fn try_from(doc: FunctionalDocument) -> Result<Self> {
        let mut f = BellFunctional::zero();
        f.correlator = doc.gamma_xy;
        f.k = doc.k;
        for term in doc.penalty {
            let b = match term.b {
                1 => 0,
                -1 => 1,
                other => return Err(ScenarioError::Malformed(format!("penalty b={other}"))),
            };
            if !(1..=4).contains(&term.a) || !(1..=4).contains(&term.y) {
                return Err(ScenarioError::Malformed(format!("penalty a={} y={}", term.a, term.y)));
            }
            f.penalty[term.y as usize - 1][term.a as usize - 1][b] = term.coefficient;
        }
        Ok(f)
    }
}

/// Value of a functional on a table, with linearly propagated error.
pub fn eval_functional(f: &BellFunctional, table: &CorrelationTable) -> Result<Estimate> {
    let mut value = 0.0;
    let mut variance = 0.0;
    let mut has_sigma = true;
    for setting in SettingId::all() {
        let coefficients = f.setting_coefficients(setting);
        if coefficients.iter().flatten().all(|&c| c == 0.0) {
            continue;
        }
        let e = table.linear_form(setting, &coefficients)?;
        value += e.value;
        match e.sigma {
            Some(s) => variance += s * s,
            None => has_sigma = false,
        }
    }
    Ok(Estimate { value, sigma: has_sigma.then(|| variance.sqrt()) })
}

/// Deterministic local strategy: outcome per setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LocalStrategy {
    /// `+1 / -1` for each binary Alice setting.
    pub alice_binary: [i8; BINARY_SETTINGS],
    /// Zero-based outcome of the four-outcome setting.
    pub alice_povm: usize,
    pub bob: [i8; BOB_SETTINGS],
}

impl LocalStrategy {
    /// The deterministic correlation table of this strategy.
    pub fn table(&self) -> CorrelationTable {
        let mut t = CorrelationTable::uniform();
        let idx = |s: i8| if s > 0 { 0 } else { 1 };
        for x in 0..BINARY_SETTINGS {
            for y in 0..BOB_SETTINGS {
                t.binary[x][y] = [[0.0; 2]; 2];
                t.binary[x][y][idx(self.alice_binary[x])][idx(self.bob[y])] = 1.0;
            }
        }
        for y in 0..BOB_SETTINGS {
            t.povm[y] = [[0.0; 2]; POVM_OUTCOMES];
            t.povm[y][self.alice_povm][idx(self.bob[y])] = 1.0;
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalBound {
    pub value: f64,
    pub strategy: LocalStrategy,
}

/// Exact maximum over the 512 deterministic local strategies.
pub fn local_bound(f: &BellFunctional) -> LocalBound {
    let sign = |bits: usize, i: usize| if bits >> i & 1 == 0 { 1.0 } else { -1.0 };
    let mut best: Option<LocalBound> = None;
    for alice_bits in 0..(1usize << BINARY_SETTINGS) {
        for alice_povm in 0..POVM_OUTCOMES {
            for bob_bits in 0..(1usize << BOB_SETTINGS) {
                let mut value = 0.0;
                for y in 0..BOB_SETTINGS {
                    let b = sign(bob_bits, y);
                    for x in 0..BINARY_SETTINGS {
                        value += f.correlator[x][y] * sign(alice_bits, x) * b;
                    }
                    let b_index = (bob_bits >> y) & 1;
                    value -= f.effective_penalty(y, alice_povm, b_index);
                }
                if best.is_none_or(|b| value > b.value) {
                    let strategy = LocalStrategy {
                        alice_binary: std::array::from_fn(|x| sign(alice_bits, x) as i8),
                        alice_povm,
                        bob: std::array::from_fn(|y| sign(bob_bits, y) as i8),
                    };
                    best = Some(LocalBound { value, strategy });
                }
            }
        }
    }
    best.expect("at least one strategy")
}

/// Measurement operators of a quantum strategy.
///
/// Binary settings are given as observables with spectrum in `[-1, 1]`; the
/// `+1` effect is `(I + O) / 2`.
#[derive(Clone, Debug)]
pub struct Measurements {
    pub alice_binary: [Operator; BINARY_SETTINGS],
    pub alice_povm: [Operator; POVM_OUTCOMES],
    pub bob: [Operator; BOB_SETTINGS],
}

/// `(I + s O) / 2`.
pub fn binary_effect(observable: &Operator, outcome: usize) -> Operator {
    let d = observable.dim();
    (&Operator::identity(d) + &observable.scale(outcome_sign(outcome))).scale(0.5)
}

/// The exact correlation table of a state and a set of measurements.
pub fn quantum_table(state: &Operator, m: &Measurements) -> Result<CorrelationTable> {
    let mut t = CorrelationTable::uniform();
    let bob_effects: Vec<[Operator; 2]> =
        m.bob.iter().map(|o| [binary_effect(o, 0), binary_effect(o, 1)]).collect();
    for x in 0..BINARY_SETTINGS {
        let alice = [binary_effect(&m.alice_binary[x], 0), binary_effect(&m.alice_binary[x], 1)];
        for y in 0..BOB_SETTINGS {
            for a in 0..2 {
                for b in 0..2 {
                    t.binary[x][y][a][b] = born_joint(state, &alice[a], &bob_effects[y][b])?;
                }
            }
        }
    }
    for y in 0..BOB_SETTINGS {
        for a in 0..POVM_OUTCOMES {
            for b in 0..2 {
                t.povm[y][a][b] = born_joint(state, &m.alice_povm[a], &bob_effects[y][b])?;
            }
        }
    }
    Ok(t)
}

/// Bob's measurement directions `B_1..B_4`.
pub fn bob_directions() -> [BlochVector; BOB_SETTINGS] {
    [
        BlochVector::new(1.0, -1.0, 1.0),
        BlochVector::new(1.0, 1.0, -1.0),
        BlochVector::new(-1.0, -1.0, -1.0),
        BlochVector::new(-1.0, 1.0, 1.0),
    ]
    .map(|v| v.scale(1.0 / SQRT3))
}

/// Alice's projective directions `sigma_x, sigma_y, sigma_z`.
pub fn alice_directions() -> [BlochVector; BINARY_SETTINGS] {
    [
        BlochVector::new(1.0, 0.0, 0.0),
        BlochVector::new(0.0, 1.0, 0.0),
        BlochVector::new(0.0, 0.0, 1.0),
    ]
}

/// SIC effects exactly as printed, built from `alpha = (3 - sqrt 3)/6` and
/// `beta = sqrt 3 / 6`. Their Bloch directions are `-B_y`.
pub fn sic_povm_printed() -> [Operator; POVM_OUTCOMES] {
    use crate::qmath::c;
    let alpha = (3.0 - SQRT3) / 6.0;
    let beta = SQRT3 / 6.0;
    let m = |rows: [[crate::qmath::C64; 2]; 2]| {
        Operator::from_rows(&[&rows[0], &rows[1]]).expect("2x2").scale(0.5)
    };
    [
        m([[c(alpha, 0.), c(-beta, -beta)], [c(-beta, beta), c(1. - alpha, 0.)]]),
        m([[c(1. - alpha, 0.), c(-beta, beta)], [c(-beta, -beta), c(alpha, 0.)]]),
        m([[c(1. - alpha, 0.), c(beta, -beta)], [c(beta, beta), c(alpha, 0.)]]),
        m([[c(alpha, 0.), c(beta, beta)], [c(beta, -beta), c(1. - alpha, 0.)]]),
    ]
}

/// The ideal strategy: `|Phi+>`, Pauli settings for Alice, the tetrahedral
/// settings for Bob and a SIC anti-aligned with Bob in the `|Phi+>`
/// correlation frame.
#[derive(Clone, Debug)]
pub struct ReferenceSetup {
    pub state: Operator,
    pub measurements: Measurements,
    pub alice_directions: [BlochVector; BINARY_SETTINGS],
    pub bob_directions: [BlochVector; BOB_SETTINGS],
    /// Bloch directions of the four SIC effects (each of weight 1/2).
    pub povm_directions: [BlochVector; POVM_OUTCOMES],
}

/// Builds the reference setup.
///
/// Since `<Phi+| A (x) B |Phi+> = Tr(A^T B) / 2`, the SIC that is
/// anti-aligned with Bob in the correlations is the complex conjugate of
/// [`sic_povm_printed`]; its directions are `-conj(B_y)`.
pub fn reference_setup() -> ReferenceSetup {
    let alice_directions = alice_directions();
    let bob_directions = bob_directions();
    let povm_directions = bob_directions.map(|m| -m.conjugated());
    ReferenceSetup {
        state: phi_plus(),
        measurements: Measurements {
            alice_binary: alice_directions.map(sigma_dot),
            alice_povm: povm_directions.map(|n| operator_from_bloch(0.5, n)),
            bob: bob_directions.map(sigma_dot),
        },
        alice_directions,
        bob_directions,
        povm_directions,
    }
}

impl ReferenceSetup {
    /// Same measurements on the Werner state of visibility `v`.
    pub fn with_visibility(&self, v: f64) -> ReferenceSetup {
        ReferenceSetup { state: crate::qmath::werner(v), ..self.clone() }
    }

    /// The eight states Alice is steered to by Bob's settings and outcomes,
    /// in order `(y, b)` with `b = 0` for `+1`.
    pub fn steered_states(&self) -> Vec<BlochVector> {
        let mut out = Vec::with_capacity(8);
        for m in self.bob_directions {
            for b in 0..2 {
                out.push(m.conjugated().scale(outcome_sign(b)));
            }
        }
        out
    }
}

/// Exact table of the reference setup.
pub fn ideal_table(setup: &ReferenceSetup) -> Result<CorrelationTable> {
    quantum_table(&setup.state, &setup.measurements)
}

/// Analytic table of the Werner state for the reference measurements.
pub fn werner_table(setup: &ReferenceSetup, visibility: f64) -> Result<CorrelationTable> {
    let ideal = ideal_table(setup)?;
    let mut noise = CorrelationTable::uniform();
    for y in 0..BOB_SETTINGS {
        for a in 0..POVM_OUTCOMES {
            let w = setup.measurements.alice_povm[a].trace().re;
            noise.povm[y][a] = [w / 4.0; 2];
        }
    }
    Ok(ideal.mix(visibility, &noise))
}

/// Reference qubit state with Bloch vector `v` (convenience re-export).
pub fn state_from_bloch(v: BlochVector) -> Operator {
    qubit_state(v)
}
