//! Moment-matrix (NPA) relaxations of the scenario.
//!
//! Binary settings enter through their `+1` projectors. The four-outcome
//! setting enters as orthogonal projectors `Pi_1..Pi_4` summing to the
//! identity, so one of them is eliminated. Moments are taken real: a word and
//! its adjoint share one variable.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{BellFunctional, BINARY_SETTINGS, BOB_SETTINGS, POVM_OUTCOMES};
use crate::sdpcore::{solve_sdp, SdpError, SdpOptions, SdpProblem, SdpStatus};

/// Largest moment matrix order accepted for level 3.
pub const LEVEL3_MAX_ORDER: usize = 200;

#[derive(Debug, Error)]
pub enum NpaError {
    #[error("unknown level '{0}' (expected 1, 1ab, 2 or 3)")]
    UnknownLevel(String),
    #[error("outcome {0} does not exist")]
    BadOutcome(usize),
    #[error("moment matrix of order {0} exceeds the level-3 size guard")]
    TooLarge(usize),
    #[error("objective needs moment <{0}>, which is outside the relaxation")]
    MissingMoment(String),
    #[error("solver finished with status {0:?}")]
    NotSolved(SdpStatus),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

pub type Result<T> = std::result::Result<T, NpaError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Level {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "1+AB")]
    OneAB,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
}

impl std::str::FromStr for Level {
    type Err = NpaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(Level::One),
            "1ab" | "1+ab" => Ok(Level::OneAB),
            "2" => Ok(Level::Two),
            "3" => Ok(Level::Three),
            _ => Err(NpaError::UnknownLevel(s.to_string())),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::One => "1",
            Level::OneAB => "1+AB",
            Level::Two => "2",
            Level::Three => "3",
        })
    }
}

/// Outcome structure of Alice's four-outcome setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    None,
    /// The given zero-based outcome never occurs.
    DropOutcome(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AliceLetter {
    /// `+1` projector of binary setting `x`.
    Binary(u8),
    /// Projector of outcome `a` of the four-outcome setting.
    Povm(u8),
}

impl AliceLetter {
    fn measurement(self) -> u8 {
        match self {
            AliceLetter::Binary(x) => x,
            AliceLetter::Povm(_) => BINARY_SETTINGS as u8,
        }
    }
}

/// A reduced operator word; Alice's and Bob's letters commute.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word {
    pub alice: Vec<AliceLetter>,
    /// `+1` projectors of Bob's settings.
    pub bob: Vec<u8>,
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.alice.is_empty() && self.bob.is_empty() {
            return f.write_str("1");
        }
        let mut parts = Vec::new();
        for l in &self.alice {
            parts.push(match l {
                AliceLetter::Binary(x) => format!("A{}", x + 1),
                AliceLetter::Povm(a) => format!("P{}", a + 1),
            });
        }
        for y in &self.bob {
            parts.push(format!("B{}", y + 1));
        }
        f.write_str(&parts.join(" "))
    }
}

fn reduce_alice(letters: impl IntoIterator<Item = AliceLetter>) -> Option<Vec<AliceLetter>> {
    let mut out: Vec<AliceLetter> = Vec::new();
    for l in letters {
        match out.last() {
            Some(&top) if top == l => {}
            Some(&top) if top.measurement() == l.measurement() => return None,
            _ => out.push(l),
        }
    }
    Some(out)
}

fn reduce_bob(letters: impl IntoIterator<Item = u8>) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::new();
    for l in letters {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

impl Word {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn alice(l: AliceLetter) -> Self {
        Self { alice: vec![l], bob: vec![] }
    }

    pub fn bob(y: u8) -> Self {
        Self { alice: vec![], bob: vec![y] }
    }

    pub fn is_identity(&self) -> bool {
        self.alice.is_empty() && self.bob.is_empty()
    }

    pub fn len(&self) -> usize {
        self.alice.len() + self.bob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_identity()
    }

    pub fn adjoint(&self) -> Word {
        Word {
            alice: self.alice.iter().rev().copied().collect(),
            bob: self.bob.iter().rev().copied().collect(),
        }
    }

    /// `self * other`, or `None` when the product vanishes.
    pub fn times(&self, other: &Word) -> Option<Word> {
        let alice = reduce_alice(self.alice.iter().chain(&other.alice).copied())?;
        let bob = reduce_bob(self.bob.iter().chain(&other.bob).copied());
        Some(Word { alice, bob })
    }

    /// Representative shared by a word and its adjoint.
    pub fn canonical(self) -> Word {
        let adj = self.adjoint();
        if adj < self {
            adj
        } else {
            self
        }
    }
}

/// Which operators appear in the relaxation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LetterSet {
    pub binary: Vec<u8>,
    pub povm: bool,
    pub bob: Vec<u8>,
}

impl LetterSet {
    pub fn full() -> Self {
        Self {
            binary: (0..BINARY_SETTINGS as u8).collect(),
            povm: true,
            bob: (0..BOB_SETTINGS as u8).collect(),
        }
    }

    /// Only the settings with a non-zero coefficient in `f`.
    pub fn used_by(f: &BellFunctional) -> Self {
        let binary = (0..BINARY_SETTINGS).filter(|&x| f.correlator[x].iter().any(|&g| g != 0.0));
        let povm = f.has_penalty();
        let bob = (0..BOB_SETTINGS).filter(|&y| {
            (0..BINARY_SETTINGS).any(|x| f.correlator[x][y] != 0.0)
                || (povm && f.penalty[y].iter().flatten().any(|&c| c != 0.0))
        });
        Self { binary: binary.map(|x| x as u8).collect(), povm, bob: bob.map(|y| y as u8).collect() }
    }
}

/// Layout of the four-outcome projectors under a restriction.
#[derive(Clone, Debug, PartialEq, Eq)]
struct PovmLayout {
    explicit: Vec<u8>,
    eliminated: u8,
    dropped: Option<u8>,
}

impl PovmLayout {
    fn new(restriction: Restriction) -> Result<Self> {
        let dropped = match restriction {
            Restriction::None => None,
            Restriction::DropOutcome(j) if j < POVM_OUTCOMES => Some(j as u8),
            Restriction::DropOutcome(j) => return Err(NpaError::BadOutcome(j)),
        };
        let mut present: Vec<u8> = (0..POVM_OUTCOMES as u8).filter(|&a| Some(a) != dropped).collect();
        let eliminated = present.pop().expect("at least one outcome");
        Ok(Self { explicit: present, eliminated, dropped })
    }
}

/// Ordered operator words spanning the moment matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialBasis {
    pub level: Level,
    pub words: Vec<Word>,
}

impl MonomialBasis {
    pub fn new(level: Level, letters: &LetterSet, restriction: Restriction) -> Result<Self> {
        let layout = PovmLayout::new(restriction)?;
        let mut alice: Vec<Word> =
            letters.binary.iter().map(|&x| Word::alice(AliceLetter::Binary(x))).collect();
        if letters.povm {
            alice.extend(layout.explicit.iter().map(|&a| Word::alice(AliceLetter::Povm(a))));
        }
        let bob: Vec<Word> = letters.bob.iter().map(|&y| Word::bob(y)).collect();
        let singles: Vec<Word> = alice.iter().chain(&bob).cloned().collect();

        let mut words = vec![Word::identity()];
        let mut seen: std::collections::HashSet<Word> = words.iter().cloned().collect();
        let mut push = |w: Word, words: &mut Vec<Word>| {
            if seen.insert(w.clone()) {
                words.push(w);
            }
        };
        for w in &singles {
            push(w.clone(), &mut words);
        }
        match level {
            Level::One => {}
            Level::OneAB => {
                for a in &alice {
                    for b in &bob {
                        push(a.times(b).expect("commuting letters"), &mut words);
                    }
                }
            }
            Level::Two | Level::Three => {
                let depth = if level == Level::Two { 2 } else { 3 };
                let mut frontier: Vec<Word> = singles.clone();
                for _ in 1..depth {
                    let mut next = Vec::new();
                    for u in &frontier {
                        for s in &singles {
                            if let Some(w) = u.times(s) {
                                if w.len() > u.len() {
                                    next.push(w.clone());
                                    push(w, &mut words);
                                }
                            }
                        }
                    }
                    frontier = next;
                }
            }
        }
        if level == Level::Three && words.len() > LEVEL3_MAX_ORDER {
            return Err(NpaError::TooLarge(words.len()));
        }
        Ok(Self { level, words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// An SDP whose optimum plus `offset` bounds the functional from above.
#[derive(Clone, Debug)]
pub struct MomentProblem {
    pub level: Level,
    pub restriction: Restriction,
    pub basis: MonomialBasis,
    /// Canonical word behind each SDP variable.
    pub variables: Vec<Word>,
    pub sdp: SdpProblem,
    pub offset: f64,
}

/// Basis and size summary of a relaxation.
#[derive(Clone, Debug, Serialize)]
pub struct NpaManifest {
    pub level: Level,
    pub restriction: Restriction,
    pub order: usize,
    pub variables: usize,
    pub basis: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NpaSolution {
    /// Certified upper bound: the dual objective.
    pub bound: f64,
    /// Primal objective at the returned moments.
    pub primal: f64,
    pub status: SdpStatus,
    pub iterations: usize,
}

/// Linear form over moments plus a constant.
#[derive(Default)]
struct MomentForm {
    terms: HashMap<Word, f64>,
    constant: f64,
}

impl MomentForm {
    fn add(&mut self, w: Word, c: f64) {
        if w.is_identity() {
            self.constant += c;
        } else {
            *self.terms.entry(w.canonical()).or_insert(0.0) += c;
        }
    }

    /// Adds `c <Pi_a B>` (or `c <Pi_a>` when `bob` is `None`) with the
    /// eliminated projector expanded.
    fn add_povm(&mut self, layout: &PovmLayout, a: u8, bob: Option<u8>, c: f64) {
        let bob_word = bob.map_or_else(Word::identity, Word::bob);
        if layout.dropped == Some(a) {
            return;
        }
        if a == layout.eliminated {
            self.add(bob_word.clone(), c);
            for &o in &layout.explicit {
                self.add(Word::alice(AliceLetter::Povm(o)).times(&bob_word).expect("commuting"), -c);
            }
        } else {
            self.add(Word::alice(AliceLetter::Povm(a)).times(&bob_word).expect("commuting"), c);
        }
    }
}

fn objective_form(f: &BellFunctional, layout: &PovmLayout) -> MomentForm {
    let mut form = MomentForm::default();
    for x in 0..BINARY_SETTINGS {
        for y in 0..BOB_SETTINGS {
            let g = f.correlator[x][y];
            if g == 0.0 {
                continue;
            }
            // E = 4<A B> - 2<A> - 2<B> + 1
            let a = Word::alice(AliceLetter::Binary(x as u8));
            let b = Word::bob(y as u8);
            form.add(a.times(&b).expect("commuting"), 4.0 * g);
            form.add(a, -2.0 * g);
            form.add(b, -2.0 * g);
            form.constant += g;
        }
    }
    for y in 0..BOB_SETTINGS {
        for a in 0..POVM_OUTCOMES {
            let plus = f.effective_penalty(y, a, 0);
            let minus = f.effective_penalty(y, a, 1);
            // -k c+ <Pi B> - k c- (<Pi> - <Pi B>)
            if plus != minus {
                form.add_povm(layout, a as u8, Some(y as u8), -(plus - minus));
            }
            if minus != 0.0 {
                form.add_povm(layout, a as u8, None, -minus);
            }
        }
    }
    form
}

/// Builds the relaxation on the full operator set.
pub fn build_moment_problem(f: &BellFunctional, level: Level, restriction: Restriction) -> Result<MomentProblem> {
    build_moment_problem_with(f, level, restriction, &LetterSet::full())
}

pub fn build_moment_problem_with(
    f: &BellFunctional,
    level: Level,
    restriction: Restriction,
    letters: &LetterSet,
) -> Result<MomentProblem> {
    let layout = PovmLayout::new(restriction)?;
    let basis = MonomialBasis::new(level, letters, restriction)?;
    let n = basis.len();
    let mut index: HashMap<Word, usize> = HashMap::new();
    let mut variables: Vec<Word> = Vec::new();
    let mut entries: Vec<(usize, usize, Option<usize>)> = Vec::new();
    for j in 0..n {
        for i in 0..=j {
            let Some(w) = basis.words[i].adjoint().times(&basis.words[j]) else {
                continue;
            };
            if w.is_identity() {
                entries.push((i, j, None));
                continue;
            }
            let w = w.canonical();
            let v = *index.entry(w.clone()).or_insert_with(|| {
                variables.push(w);
                variables.len() - 1
            });
            entries.push((i, j, Some(v)));
        }
    }
    let form = objective_form(f, &layout);
    let mut c = vec![0.0; variables.len()];
    for (w, coeff) in &form.terms {
        if *coeff == 0.0 {
            continue;
        }
        let v = index.get(w).ok_or_else(|| NpaError::MissingMoment(w.to_string()))?;
        c[*v] += coeff;
    }
    let mut sdp = SdpProblem::new(vec![n], c);
    for (i, j, v) in entries {
        match v {
            None => sdp.f0.push(0, i, j, 1.0),
            Some(v) => sdp.fi[v].push(0, i, j, 1.0),
        }
    }
    Ok(MomentProblem { level, restriction, basis, variables, sdp, offset: form.constant })
}

impl MomentProblem {
    pub fn order(&self) -> usize {
        self.basis.len()
    }

    pub fn manifest(&self) -> NpaManifest {
        NpaManifest {
            level: self.level,
            restriction: self.restriction,
            order: self.order(),
            variables: self.variables.len(),
            basis: self.basis.words.iter().map(Word::to_string).collect(),
        }
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<NpaSolution> {
        let s = solve_sdp(&self.sdp, opts)?;
        if s.status != SdpStatus::Optimal {
            return Err(NpaError::NotSolved(s.status));
        }
        Ok(NpaSolution {
            bound: s.dual + self.offset,
            primal: s.primal + self.offset,
            status: s.status,
            iterations: s.iterations,
        })
    }
}

/// Upper bound on the quantum value of `f`.
pub fn quantum_upper_bound(f: &BellFunctional, level: Level) -> Result<f64> {
    Ok(build_moment_problem(f, level, Restriction::None)?.solve(&SdpOptions::default())?.bound)
}

/// Upper bound over strategies whose four-outcome setting has at most three
/// outcomes: the largest of the four drop-one-outcome relaxations, together
/// with the (zero-based) outcome that attains it.
pub fn three_outcome_bound(f: &BellFunctional, level: Level) -> Result<(f64, usize)> {
    let solve = |j: usize| -> Result<f64> {
        Ok(build_moment_problem(f, level, Restriction::DropOutcome(j))?.solve(&SdpOptions::default())?.bound)
    };
    #[cfg(feature = "parallel")]
    let values: Vec<Result<f64>> = {
        use rayon::prelude::*;
        (0..POVM_OUTCOMES).into_par_iter().map(solve).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<Result<f64>> = (0..POVM_OUTCOMES).map(solve).collect();
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > best.0 {
            best = (v, j);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{basis_ket, c, sigma_dot, BlochVector, Operator};
    use crate::scenario::{functional_by_name, BuiltinFunctional};

    const Q: f64 = 6.928_203_230_275_509;

    #[test]
    fn basis_sizes() {
        let el = BellFunctional::elegant();
        let opt = functional_by_name("optimized").unwrap();
        assert_eq!(build_moment_problem(&el, Level::One, Restriction::None).unwrap().order(), 11);
        assert_eq!(build_moment_problem(&el, Level::OneAB, Restriction::None).unwrap().order(), 35);
        assert_eq!(build_moment_problem(&opt, Level::One, Restriction::DropOutcome(0)).unwrap().order(), 10);
        assert_eq!(build_moment_problem(&opt, Level::Two, Restriction::None).unwrap().order(), 71);
        assert!(matches!(
            build_moment_problem(&opt, Level::Three, Restriction::None),
            Err(NpaError::TooLarge(_))
        ));
        assert!(matches!(build_moment_problem(&opt, Level::One, Restriction::DropOutcome(4)), Err(NpaError::BadOutcome(4))));
    }

    #[test]
    fn level_parsing() {
        assert_eq!("1ab".parse::<Level>().unwrap(), Level::OneAB);
        assert_eq!("1+AB".parse::<Level>().unwrap(), Level::OneAB);
        assert_eq!("2".parse::<Level>().unwrap(), Level::Two);
        assert!(matches!("4".parse::<Level>(), Err(NpaError::UnknownLevel(_))));
    }

    #[test]
    fn word_reduction() {
        let p = |a| Word::alice(AliceLetter::Povm(a));
        let a1 = Word::alice(AliceLetter::Binary(0));
        assert_eq!(p(0).times(&p(0)).unwrap(), p(0));
        assert!(p(0).times(&p(1)).is_none());
        let w = a1.times(&p(0)).unwrap().times(&a1).unwrap();
        assert_eq!(w.len(), 3);
        let b = Word::bob(2);
        assert_eq!(b.times(&a1).unwrap(), a1.times(&b).unwrap());
        let x = a1.times(&p(1)).unwrap();
        assert_eq!(x.clone().canonical(), x.adjoint().canonical());
        assert_eq!(w.to_string(), "A1 P1 A1");
    }

    #[test]
    fn chsh_is_tsirelson() {
        let f = BellFunctional::chsh();
        let letters = LetterSet::used_by(&f);
        assert_eq!(letters.binary, vec![0, 1]);
        assert!(!letters.povm);
        let p = build_moment_problem_with(&f, Level::One, Restriction::None, &letters).unwrap();
        assert_eq!(p.order(), 5);
        let s = p.solve(&SdpOptions::default()).unwrap();
        assert!((s.bound - 2.0 * 2f64.sqrt()).abs() < 1e-5, "{}", s.bound);
    }

    #[test]
    fn elegant_is_tight_at_1ab() {
        let b = quantum_upper_bound(&BellFunctional::elegant(), Level::OneAB).unwrap();
        assert!((b - Q).abs() < 1e-4, "{b}");
    }

    #[test]
    fn zero_functional() {
        let z = BellFunctional::zero();
        assert!(quantum_upper_bound(&z, Level::One).unwrap().abs() < 1e-6);
        assert!(three_outcome_bound(&z, Level::One).unwrap().0.abs() < 1e-6);
    }

    #[test]
    fn three_outcome_irrelevant_without_penalty() {
        let el = builtin_elegant_k0();
        let q = quantum_upper_bound(&el, Level::OneAB).unwrap();
        let (t, _) = three_outcome_bound(&el, Level::OneAB).unwrap();
        assert!((q - t).abs() < 1e-5);
    }

    fn builtin_elegant_k0() -> BellFunctional {
        crate::scenario::builtin_functional(BuiltinFunctional::Modified(0.0))
    }

    /// Numerical moments of an explicit projective strategy on |psi>.
    struct Explicit {
        alice: HashMap<AliceLetter, Operator>,
        bob: Vec<Operator>,
        psi: nalgebra::DVector<crate::qmath::C64>,
    }

    impl Explicit {
        fn moment(&self, w: &Word) -> f64 {
            let mut a = Operator::identity(2);
            for l in &w.alice {
                a = &a * &self.alice[l];
            }
            let mut b = Operator::identity(2);
            for y in &w.bob {
                b = &b * &self.bob[*y as usize];
            }
            let op = a.kron(&b);
            (self.psi.adjoint() * op.matrix() * &self.psi)[(0, 0)].re
        }
    }

    #[test]
    fn explicit_strategy_moments_are_consistent() {
        // Three-outcome projective strategy in a qubit: Pi_1 = |0><0|, Pi_2 = |1><1|, Pi_3 = Pi_4 = 0.
        let proj = |v: BlochVector| (&Operator::identity(2) + &sigma_dot(v)).scale(0.5);
        let mut alice = HashMap::new();
        alice.insert(AliceLetter::Binary(0), proj(BlochVector::new(1., 0., 0.)));
        alice.insert(AliceLetter::Binary(1), proj(BlochVector::new(0., 0.6, 0.8)));
        alice.insert(AliceLetter::Binary(2), proj(BlochVector::new(0., 0., 1.)));
        alice.insert(AliceLetter::Povm(0), Operator::projector(&basis_ket(2, 0)));
        alice.insert(AliceLetter::Povm(1), Operator::projector(&basis_ket(2, 1)));
        alice.insert(AliceLetter::Povm(2), Operator::zeros(2));
        let s3 = 1.0 / 3f64.sqrt();
        let bob = [
            BlochVector::new(s3, -s3, s3),
            BlochVector::new(0.3, 0.4, (1.0f64 - 0.25).sqrt()),
            BlochVector::new(-1., 0., 0.),
            BlochVector::new(0., 1., 0.),
        ]
        .map(proj)
        .to_vec();
        let mut psi = nalgebra::DVector::from_element(4, c(0., 0.));
        psi[0] = c(0.8, 0.);
        psi[3] = c(0.36, 0.48);
        let ex = Explicit { alice, bob, psi };

        let f = functional_by_name("optimized").unwrap();
        let p = build_moment_problem(&f, Level::Two, Restriction::None).unwrap();
        // every moment-matrix entry agrees with its variable
        let values: Vec<f64> = p.variables.iter().map(|w| ex.moment(w)).collect();
        let g = p.sdp.affine_map(&values);
        for i in 0..p.order() {
            for j in 0..p.order() {
                let direct = match p.basis.words[i].adjoint().times(&p.basis.words[j]) {
                    Some(w) => ex.moment(&w),
                    None => 0.0,
                };
                assert!((g[0][(i, j)] - direct).abs() < 1e-12, "({i},{j})");
            }
        }
        assert!(g[0].symmetric_eigenvalues().min() > -1e-10);

        // objective reproduces the Bell value of the explicit strategy
        let obj: f64 = p.sdp.c.iter().zip(&values).map(|(c, v)| c * v).sum::<f64>() + p.offset;
        let mut direct = 0.0;
        let sign_proj = |o: &Operator| &o.scale(2.0) - &Operator::identity(2);
        for x in 0..3 {
            for y in 0..4 {
                let ax = sign_proj(&ex.alice[&AliceLetter::Binary(x as u8)]);
                let by = sign_proj(&ex.bob[y]);
                let e = (ex.psi.adjoint() * ax.kron(&by).matrix() * &ex.psi)[(0, 0)].re;
                direct += f.correlator[x][y] * e;
            }
        }
        for y in 0..4 {
            for a in 0..4 {
                let pa = if a < 3 { ex.alice[&AliceLetter::Povm(a as u8)].clone() } else {
                    let mut r = Operator::identity(2);
                    for o in 0..3 {
                        r = &r - &ex.alice[&AliceLetter::Povm(o)];
                    }
                    r
                };
                for b in 0..2 {
                    let eb = if b == 0 { ex.bob[y].clone() } else { &Operator::identity(2) - &ex.bob[y] };
                    let pr = (ex.psi.adjoint() * pa.kron(&eb).matrix() * &ex.psi)[(0, 0)].re;
                    direct -= f.effective_penalty(y, a, b) * pr;
                }
            }
        }
        assert!((obj - direct).abs() < 1e-12);
    }
}
