//! Linear-inversion state reconstruction: Pauli tomography of a qubit,
//! single-setting tomography with a tetrahedral POVM, and nine-setting
//! two-qubit tomography.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expsim::{CountRecord, ExpError, RecordKind};
use crate::qmath::{paulis, BlochVector, Operator, QmathError};
use crate::scenario::{outcome_sign, BINARY_SETTINGS, BOB_SETTINGS, POVM_OUTCOMES};

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("missing setting: {0}")]
    MissingSetting(String),
    #[error("expected {expected:?} frequencies, found {found:?}")]
    WrongContext { expected: FrequencyContext, found: FrequencyContext },
    #[error("directions are not a tetrahedral frame (defect {defect:.3e})")]
    NotSic { defect: f64 },
    #[error("Bloch vector norm {norm} exceeds 1")]
    Unphysical { norm: f64 },
    #[error("frequencies of setting {setting} sum to {sum}")]
    Normalization { setting: usize, sum: f64 },
    #[error(transparent)]
    Expsim(#[from] ExpError),
    #[error(transparent)]
    Qmath(#[from] QmathError),
}

pub type Result<T> = std::result::Result<T, TomoError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyContext {
    /// Settings `x, y, z`, outcomes `(+1, -1)`.
    Projective,
    /// One setting, four outcomes.
    Sic,
    /// Settings `3i + j` for Pauli pair `(i, j)`, outcomes `2a + b`.
    TwoQubit,
}

impl FrequencyContext {
    fn shape(self) -> (usize, usize) {
        match self {
            FrequencyContext::Projective => (3, 2),
            FrequencyContext::Sic => (1, POVM_OUTCOMES),
            FrequencyContext::TwoQubit => (9, 4),
        }
    }
}

/// Relative frequencies per setting; `None` marks a setting never measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub context: FrequencyContext,
    pub frequencies: Vec<Option<Vec<f64>>>,
    /// Number of events behind each setting, when known.
    pub totals: Vec<Option<f64>>,
}

impl FrequencyTable {
    /// Frequencies from raw counts, shaped per the context.
    pub fn from_counts(context: FrequencyContext, counts: &[Option<Vec<f64>>]) -> Result<Self> {
        let (settings, outcomes) = context.shape();
        if counts.len() != settings {
            return Err(TomoError::MissingSetting(format!("expected {settings} settings, found {}", counts.len())));
        }
        let mut frequencies = Vec::with_capacity(settings);
        let mut totals = Vec::with_capacity(settings);
        for (s, c) in counts.iter().enumerate() {
            match c {
                Some(c) if c.iter().sum::<f64>() > 0.0 => {
                    if c.len() != outcomes {
                        return Err(TomoError::MissingSetting(format!("setting {s} has {} outcomes", c.len())));
                    }
                    let n: f64 = c.iter().sum();
                    frequencies.push(Some(c.iter().map(|v| v / n).collect()));
                    totals.push(Some(n));
                }
                _ => {
                    frequencies.push(None);
                    totals.push(None);
                }
            }
        }
        Ok(Self { context, frequencies, totals })
    }

    /// `f(+1 | sigma_i)` for the three Pauli settings, optionally with totals.
    pub fn projective(f_plus: [f64; 3], totals: Option<[f64; 3]>) -> Self {
        Self {
            context: FrequencyContext::Projective,
            frequencies: f_plus.iter().map(|&f| Some(vec![f, 1.0 - f])).collect(),
            totals: (0..3).map(|i| totals.map(|t| t[i])).collect(),
        }
    }

    pub fn sic(f: [f64; POVM_OUTCOMES], total: Option<f64>) -> Self {
        Self { context: FrequencyContext::Sic, frequencies: vec![Some(f.to_vec())], totals: vec![total] }
    }

    /// Two-qubit frequencies `f[i][j][a][b]` for the Pauli pair `(i, j)`.
    pub fn two_qubit(f: [[[[f64; 2]; 2]; 3]; 3], totals: Option<f64>) -> Self {
        let mut frequencies = Vec::with_capacity(9);
        for row in &f {
            for s in row {
                frequencies.push(Some(s.iter().flatten().copied().collect()));
            }
        }
        Self { context: FrequencyContext::TwoQubit, frequencies, totals: vec![totals; 9] }
    }

    /// Frequencies of a two-qubit tomography count record.
    pub fn from_tomography_record(record: &CountRecord, correct_accidentals: bool) -> Result<Self> {
        if record.kind != RecordKind::Tomography {
            return Err(TomoError::MissingSetting("not a tomography record".into()));
        }
        let counts: Vec<Option<Vec<f64>>> = (0..9)
            .map(|s| record.pooled(s / 3, s % 3, correct_accidentals).map(|p| p.iter().flatten().copied().collect()))
            .collect();
        Self::from_counts(FrequencyContext::TwoQubit, &counts)
    }

    fn require(&self, context: FrequencyContext) -> Result<()> {
        if self.context != context {
            return Err(TomoError::WrongContext { expected: context, found: self.context });
        }
        let (settings, outcomes) = context.shape();
        if self.frequencies.len() != settings {
            return Err(TomoError::MissingSetting(format!("expected {settings} settings")));
        }
        for (s, f) in self.frequencies.iter().enumerate() {
            match f {
                None => return Err(TomoError::MissingSetting(format!("setting {}", s + 1))),
                Some(f) if f.len() != outcomes => {
                    return Err(TomoError::MissingSetting(format!("setting {} has {} outcomes", s + 1, f.len())))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn get(&self, s: usize) -> &[f64] {
        self.frequencies[s].as_deref().expect("checked by require")
    }

    /// Checks that each setting sums to 1 within 3 sigma (1e-9 without totals).
    pub fn validate(&self) -> Result<()> {
        for (s, f) in self.frequencies.iter().enumerate() {
            let Some(f) = f else { continue };
            let sum: f64 = f.iter().sum();
            let tol = match self.totals.get(s).copied().flatten() {
                Some(n) => (3.0 * (f.len() as f64 / n).sqrt()).max(1e-9),
                None => 1e-9,
            };
            if (sum - 1.0).abs() > tol {
                return Err(TomoError::Normalization { setting: s + 1, sum });
            }
        }
        Ok(())
    }
}

/// Reconstructed Bloch vector with per-component uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub bloch: BlochVector,
    pub sigma: Option<[f64; 3]>,
    /// The raw estimate had norm above 1 and was rescaled to unit length.
    pub clipped: bool,
}

/// `r_i = 2 f(+1|sigma_i) - 1`. With `normalize`, vectors longer than 1 are
/// rescaled to unit length and the result is marked as clipped.
pub fn invert_projective(f: &FrequencyTable, normalize: bool) -> Result<Reconstruction> {
    f.require(FrequencyContext::Projective)?;
    let mut r = [0.0; 3];
    let mut sigma = Some([0.0; 3]);
    for i in 0..3 {
        let p = f.get(i);
        let fp = p[0] / (p[0] + p[1]);
        r[i] = 2.0 * fp - 1.0;
        match (f.totals[i], sigma.as_mut()) {
            (Some(n), Some(s)) => s[i] = 2.0 * (fp * (1.0 - fp) / n).sqrt(),
            _ => sigma = None,
        }
    }
    let mut bloch = BlochVector::from_array(r);
    let clipped = normalize && bloch.norm() > 1.0;
    if clipped {
        bloch = bloch.scale(1.0 / bloch.norm());
    }
    Ok(Reconstruction { bloch, sigma, clipped })
}

/// Largest violation of `|n_j| = 1`, `sum n_j = 0` and `sum n_j n_j^T = 4/3 I`.
pub fn frame_defect(directions: &[BlochVector; POVM_OUTCOMES]) -> f64 {
    let mut defect: f64 = 0.0;
    let mut sum = BlochVector::ZERO;
    let mut frame = [[0.0; 3]; 3];
    for d in directions {
        defect = defect.max((d.norm() - 1.0).abs());
        sum = sum + *d;
        let a = d.to_array();
        for i in 0..3 {
            for j in 0..3 {
                frame[i][j] += a[i] * a[j];
            }
        }
    }
    defect = defect.max(sum.norm());
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 4.0 / 3.0 } else { 0.0 };
            defect = defect.max((frame[i][j] - target).abs());
        }
    }
    defect
}

/// `s = 3 sum_j f_j n_j` for effects `(I + n_j . sigma) / 4`.
pub fn invert_sic(f: &FrequencyTable, directions: &[BlochVector; POVM_OUTCOMES]) -> Result<Reconstruction> {
    f.require(FrequencyContext::Sic)?;
    let defect = frame_defect(directions);
    if defect > 1e-9 {
        return Err(TomoError::NotSic { defect });
    }
    let p = f.get(0);
    let total: f64 = p.iter().sum();
    let p: Vec<f64> = p.iter().map(|v| v / total).collect();
    let mut s = BlochVector::ZERO;
    for (fj, n) in p.iter().zip(directions) {
        s = s + n.scale(3.0 * fj);
    }
    let sigma = f.totals[0].map(|n| {
        let dirs: Vec<[f64; 3]> = directions.iter().map(|d| d.to_array()).collect();
        std::array::from_fn(|k| {
            let mut var = 0.0;
            for j in 0..POVM_OUTCOMES {
                for l in 0..POVM_OUTCOMES {
                    let cov = if j == l { p[j] * (1.0 - p[j]) } else { -p[j] * p[l] };
                    var += 9.0 * dirs[j][k] * dirs[l][k] * cov / n;
                }
            }
            var.max(0.0).sqrt()
        })
    });
    Ok(Reconstruction { bloch: s, sigma, clipped: false })
}

/// Linear inversion `rho = (1/4) sum_ij <s_i s_j> s_i (x) s_j`. Single-qubit
/// expectations average the marginals over the partner's three settings.
/// With `project`, negative eigenvalues are clipped and the trace restored.
pub fn two_qubit_tomography(f: &FrequencyTable, project: bool) -> Result<Operator> {
    f.require(FrequencyContext::TwoQubit)?;
    let mut corr = [[0.0; 3]; 3];
    let mut alice = [0.0; 3];
    let mut bob = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            let p = f.get(3 * i + j);
            let total: f64 = p.iter().sum();
            for a in 0..2 {
                for b in 0..2 {
                    let q = p[2 * a + b] / total;
                    corr[i][j] += outcome_sign(a) * outcome_sign(b) * q;
                    alice[i] += outcome_sign(a) * q / 3.0;
                    bob[j] += outcome_sign(b) * q / 3.0;
                }
            }
        }
    }
    let s = paulis();
    let id = Operator::identity(2);
    let mut rho = id.kron(&id);
    for i in 0..3 {
        rho = &rho + &s[i].kron(&id).scale(alice[i]);
        rho = &rho + &id.kron(&s[i]).scale(bob[i]);
        for j in 0..3 {
            rho = &rho + &s[i].kron(&s[j]).scale(corr[i][j]);
        }
    }
    let rho = rho.scale(0.25);
    if !project {
        return Ok(rho);
    }
    let clipped = rho.eigen().map(|v| v.max(0.0));
    let tr = clipped.trace().re;
    Ok(clipped.scale(1.0 / tr).hermitian_part())
}

/// Qubit fidelity of two Bloch states,
/// `(1 + r1.r2 + sqrt((1 - |r1|^2)(1 - |r2|^2))) / 2`. Norms up to `1 + 1e-6`
/// are accepted as unit.
pub fn bloch_fidelity(r1: BlochVector, r2: BlochVector) -> Result<f64> {
    bloch_fidelity_tol(r1, r2, 1e-6)
}

/// [`bloch_fidelity`] accepting norms up to `1 + tol`; longer-than-unit
/// vectors are rescaled to unit length first.
pub fn bloch_fidelity_tol(r1: BlochVector, r2: BlochVector, tol: f64) -> Result<f64> {
    let fix = |r: BlochVector| {
        let n = r.norm();
        if n > 1.0 + tol {
            Err(TomoError::Unphysical { norm: n })
        } else if n > 1.0 {
            Ok(r.scale(1.0 / n))
        } else {
            Ok(r)
        }
    };
    let (a, b) = (fix(r1)?, fix(r2)?);
    let mixed = ((1.0 - a.dot(a)).max(0.0) * (1.0 - b.dot(b)).max(0.0)).sqrt();
    Ok(((1.0 + a.dot(b) + mixed) / 2.0).clamp(0.0, 1.0))
}

/// Projective and tetrahedral reconstructions of the state Alice holds after
/// Bob's outcome `b` for setting `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedComparison {
    pub y: usize,
    pub b: usize,
    pub projective: Reconstruction,
    pub sic: Reconstruction,
    pub fidelity: f64,
}

/// Frequencies of Alice's measurements conditioned on Bob's `(y, b)`, taken
/// from a Bell count record.
pub fn conditioned_frequencies(
    record: &CountRecord,
    y: usize,
    b: usize,
    correct_accidentals: bool,
) -> Result<(FrequencyTable, FrequencyTable)> {
    if record.kind != RecordKind::Bell {
        return Err(TomoError::MissingSetting("not a Bell record".into()));
    }
    let pick = |x: usize| record.pooled(x, y, correct_accidentals).map(|p| p.iter().map(|r| r[b]).collect::<Vec<f64>>());
    let proj: Vec<Option<Vec<f64>>> = (0..BINARY_SETTINGS).map(pick).collect();
    let sic = vec![pick(BINARY_SETTINGS)];
    Ok((
        FrequencyTable::from_counts(FrequencyContext::Projective, &proj)?,
        FrequencyTable::from_counts(FrequencyContext::Sic, &sic)?,
    ))
}

/// The eight conditioned states in `(y, b)` order, reconstructed both ways.
pub fn conditioned_reconstructions(
    record: &CountRecord,
    directions: &[BlochVector; POVM_OUTCOMES],
    correct_accidentals: bool,
    normalize: bool,
) -> Result<Vec<ConditionedComparison>> {
    let mut out = Vec::with_capacity(2 * BOB_SETTINGS);
    for y in 0..BOB_SETTINGS {
        for b in 0..2 {
            let (fp, fs) = conditioned_frequencies(record, y, b, correct_accidentals)?;
            let projective = invert_projective(&fp, normalize)?;
            let mut sic = invert_sic(&fs, directions)?;
            if normalize && sic.bloch.norm() > 1.0 {
                sic.bloch = sic.bloch.scale(1.0 / sic.bloch.norm());
                sic.clipped = true;
            }
            let fidelity = bloch_fidelity_tol(projective.bloch, sic.bloch, f64::INFINITY)?;
            out.push(ConditionedComparison { y, b, projective, sic, fidelity });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expsim::{simulate_counts, simulate_tomography_counts, ExperimentConfig};
    use crate::qmath::{fidelity, phi_plus, qubit_state, werner, born_joint, operator_from_bloch};
    use crate::scenario::{reference_setup, sic_povm_printed};
    use crate::qmath::bloch_from_operator;

    const S3: f64 = 0.577_350_269_189_625_8;

    fn printed_frame() -> [BlochVector; 4] {
        sic_povm_printed().map(|e| bloch_from_operator(&e).unwrap().1)
    }

    fn exact_two_qubit(rho: &Operator) -> FrequencyTable {
        let s = paulis();
        let mut f = [[[[0.0; 2]; 2]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..2 {
                    for b in 0..2 {
                        let ea = crate::scenario::binary_effect(&s[i], a);
                        let eb = crate::scenario::binary_effect(&s[j], b);
                        f[i][j][a][b] = born_joint(rho, &ea, &eb).unwrap();
                    }
                }
            }
        }
        FrequencyTable::two_qubit(f, None)
    }

    #[test]
    fn projective_examples() {
        let r = invert_projective(&FrequencyTable::projective([1.0, 0.5, 0.5], None), false).unwrap();
        assert!(r.bloch.distance(BlochVector::new(1., 0., 0.)) < 1e-15);
        let r = invert_projective(&FrequencyTable::projective([0.5; 3], None), false).unwrap();
        assert!(r.bloch.norm() < 1e-15);
        let f = (1.0 + S3) / 2.0;
        let r = invert_projective(&FrequencyTable::projective([f; 3], Some([1e4; 3])), false).unwrap();
        assert!((r.bloch.x - S3).abs() < 1e-12);
        assert!(r.sigma.unwrap()[0] > 0.0);
    }

    #[test]
    fn projective_clipping_is_flagged() {
        let f = FrequencyTable::projective([1.0, 1.0, 0.5], None);
        let raw = invert_projective(&f, false).unwrap();
        assert!(!raw.clipped && raw.bloch.norm() > 1.0);
        let clipped = invert_projective(&f, true).unwrap();
        assert!(clipped.clipped && (clipped.bloch.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sic_examples() {
        let frame = printed_frame();
        let r = invert_sic(&FrequencyTable::sic([0.25; 4], None), &frame).unwrap();
        assert!(r.bloch.norm() < 1e-15);
        let r = invert_sic(&FrequencyTable::sic([0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0], None), &frame).unwrap();
        assert!(r.bloch.distance(BlochVector::new(-S3, S3, -S3)) < 1e-12, "{:?}", r.bloch);
    }

    #[test]
    fn sic_rejects_bad_frame() {
        let mut frame = printed_frame();
        frame[0] = BlochVector::new(0., 0., 1.);
        assert!(matches!(invert_sic(&FrequencyTable::sic([0.25; 4], None), &frame), Err(TomoError::NotSic { .. })));
    }

    #[test]
    fn sic_sigma_matches_propagation() {
        let frame = reference_setup().povm_directions;
        let p = frame.map(|n| (1.0 + n.dot(BlochVector::new(0.0, 0.0, 0.6))) / 4.0);
        let r = invert_sic(&FrequencyTable::sic(p, Some(1e4)), &frame).unwrap();
        // independent check: sigma_k^2 = (9 sum_j p_j n_jk^2 - s_k^2) / N
        for k in 0..3 {
            let second: f64 = (0..4).map(|j| p[j] * frame[j].to_array()[k].powi(2)).sum();
            let s = r.bloch.to_array()[k];
            let expected = ((9.0 * second - s * s) / 1e4).sqrt();
            assert!((r.sigma.unwrap()[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_context_and_missing() {
        let f = FrequencyTable::sic([0.25; 4], None);
        assert!(matches!(invert_projective(&f, false), Err(TomoError::WrongContext { .. })));
        let mut f = FrequencyTable::projective([0.5; 3], None);
        f.frequencies[1] = None;
        assert!(matches!(invert_projective(&f, false), Err(TomoError::MissingSetting(_))));
    }

    #[test]
    fn validate_checks_sums() {
        let mut f = FrequencyTable::sic([0.25; 4], Some(100.0));
        assert!(f.validate().is_ok());
        f.frequencies[0] = Some(vec![0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(f.validate(), Err(TomoError::Normalization { .. })));
    }

    #[test]
    fn fidelity_examples() {
        let r = BlochVector::new(S3, S3, S3);
        assert!((bloch_fidelity(r, r).unwrap() - 1.0).abs() < 1e-12);
        assert!(bloch_fidelity(r, -r).unwrap() < 1e-12);
        let a = BlochVector::new(0.561, 0.601, 0.570);
        let b = BlochVector::new(0.544, 0.508, 0.668);
        assert!(matches!(bloch_fidelity(a, b), Err(TomoError::Unphysical { .. })));
        let f = bloch_fidelity_tol(a, b, 1e-3).unwrap();
        assert!((f - 0.995).abs() < 1e-3, "{f}");
    }

    #[test]
    fn bloch_fidelity_agrees_with_operator_fidelity() {
        let a = BlochVector::new(0.3, -0.2, 0.5);
        let b = BlochVector::new(-0.1, 0.4, 0.2);
        let direct = fidelity(&qubit_state(a), &qubit_state(b)).unwrap();
        assert!((bloch_fidelity(a, b).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn two_qubit_ideal_and_werner() {
        let rho = two_qubit_tomography(&exact_two_qubit(&phi_plus()), false).unwrap();
        assert!(rho.max_abs_diff(&phi_plus()) < 1e-10);
        assert!((fidelity(&rho, &phi_plus()).unwrap() - 1.0).abs() < 1e-9);
        let v = 0.9947;
        let rho = two_qubit_tomography(&exact_two_qubit(&werner(v)), false).unwrap();
        let f = fidelity(&rho, &phi_plus()).unwrap();
        assert!((f - (1.0 + 3.0 * v) / 4.0).abs() < 1e-9);
        assert!((f - 0.996).abs() < 1e-3);
    }

    #[test]
    fn two_qubit_projection() {
        // frequencies of an unphysical "state" with correlations beyond Phi+
        let mut f = exact_two_qubit(&phi_plus());
        for s in f.frequencies.iter_mut().flatten() {
            let extra: Vec<f64> = s.iter().map(|v| (v - 0.25) * 0.02).collect();
            for (p, e) in s.iter_mut().zip(extra) {
                *p += e;
            }
        }
        let raw = two_qubit_tomography(&f, false).unwrap();
        assert!(raw.min_eigenvalue() < 0.0);
        let proj = two_qubit_tomography(&f, true).unwrap();
        assert!(proj.is_density());
    }

    #[test]
    fn simulated_tomography_fidelity() {
        let cfg = ExperimentConfig { visibility: 0.9947, seed: 2, ..Default::default() };
        let rec = simulate_tomography_counts(&cfg).unwrap();
        let f = FrequencyTable::from_tomography_record(&rec, false).unwrap();
        f.validate().unwrap();
        let rho = two_qubit_tomography(&f, true).unwrap();
        let fid = fidelity(&rho, &phi_plus()).unwrap();
        assert!((fid - 0.996).abs() < 2e-3, "{fid}");
    }

    #[test]
    fn conditioned_states_agree() {
        let setup = reference_setup();
        let cfg = ExperimentConfig { seed: 11, ..Default::default() };
        let rec = simulate_counts(&cfg, &setup).unwrap();
        let out = conditioned_reconstructions(&rec, &setup.povm_directions, false, false).unwrap();
        let steered = setup.steered_states();
        assert_eq!(out.len(), 8);
        for (c, s) in out.iter().zip(&steered) {
            assert!(c.fidelity > 0.995, "{c:?}");
            assert!(c.projective.bloch.distance(*s) < 0.05);
        }
    }

    #[test]
    fn sic_forward_then_invert_is_identity() {
        let frame = reference_setup().povm_directions;
        let r = BlochVector::new(0.2, -0.7, 0.4);
        let effects = frame.map(|n| operator_from_bloch(0.5, n));
        let p = effects.map(|e| qubit_state(r).trace_product(&e));
        let s = invert_sic(&FrequencyTable::sic(p, None), &frame).unwrap();
        assert!(s.bloch.distance(r) < 1e-12);
    }
}
