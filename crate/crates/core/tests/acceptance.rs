//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured quantities, then asserts.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sic_certify::expsim::{accidental_rate, accidental_total, estimate_table, simulate_counts, ExperimentConfig};
use sic_certify::npa::{build_moment_problem, build_moment_problem_with, three_outcome_bound, LetterSet, Level, Restriction};
use sic_certify::pipeline::{Certifier, RunConfig};
use sic_certify::qmath::{born_joint, fidelity, phi_plus, paulis, werner, BlochVector, Operator};
use sic_certify::scenario::{
    binary_effect, correlator, eval_functional, functional_by_name, ideal_table, local_bound, reference_setup,
    BellFunctional, CorrelationTable, SettingId, ELEGANT_SIGNS,
};
use sic_certify::sdpcore::{check_certificate, solve_sdp, SdpOptions, SdpProblem};
use sic_certify::tomo::{bloch_fidelity_tol, conditioned_reconstructions, invert_sic, two_qubit_tomography, FrequencyTable};

const ROOT3: f64 = 1.732_050_807_568_877_2;

fn report(n: u32, pass: bool, detail: String, elapsed: Duration) {
    println!("criterion {n}: {} - {detail} [{:.2?}]", if pass { "PASS" } else { "FAIL" }, elapsed);
    assert!(pass, "criterion {n} failed: {detail}");
}

fn penalty_sum(t: &CorrelationTable) -> f64 {
    (0..4).map(|i| t.probabilities(SettingId::Povm { y: i })[i][0]).sum()
}

#[test]
fn criterion_01_ideal_value() {
    let start = Instant::now();
    let t = ideal_table(&reference_setup()).unwrap();
    let v = eval_functional(&functional_by_name("elegant").unwrap(), &t).unwrap().value;
    let p = penalty_sum(&t);
    let elapsed = start.elapsed();
    let pass = (v - 4.0 * ROOT3).abs() < 1e-9 && p.abs() < 1e-12 && elapsed < Duration::from_secs(1);
    report(1, pass, format!("elegant = {v:.12} (4 sqrt 3 = {:.12}), penalty sum = {p:.1e}", 4.0 * ROOT3), elapsed);
}

#[test]
fn criterion_02_local_bound() {
    let start = Instant::now();
    let b = local_bound(&functional_by_name("elegant").unwrap());
    let elapsed = start.elapsed();
    report(2, b.value == 6.0 && elapsed < Duration::from_secs(1), format!("local bound = {}", b.value), elapsed);
}

#[test]
fn criterion_03_golden_correlators() {
    let start = Instant::now();
    let t = ideal_table(&reference_setup()).unwrap();
    let mut worst: f64 = 0.0;
    for x in 0..3 {
        for y in 0..4 {
            let e = correlator(&t, x, y).unwrap().value;
            worst = worst.max((e - ELEGANT_SIGNS[x][y] / ROOT3).abs());
        }
    }
    let measured = [
        [0.596, 0.570, -0.579, -0.587],
        [0.570, -0.630, 0.575, -0.536],
        [0.557, -0.549, -0.575, 0.571],
    ];
    let data = CorrelationTable::from_correlators(measured, Some([[0.002; 4]; 3]));
    let est = eval_functional(&functional_by_name("elegant").unwrap(), &data).unwrap();
    let pass = worst < 1e-12 && (est.value - 6.894).abs() < 0.002;
    report(
        3,
        pass,
        format!("max theory deviation {worst:.1e}, measured elegant = {:.4} +- {:.4}", est.value, est.sigma.unwrap()),
        start.elapsed(),
    );
}

fn certified_solve(p: &SdpProblem) -> (f64, bool, String) {
    let s = solve_sdp(p, &SdpOptions::default()).unwrap();
    let c = check_certificate(p, &s);
    let ok = c.gap <= 1e-7 && c.primal_min_eigenvalue >= -1e-7 && c.dual_min_eigenvalue >= -1e-7;
    (s.dual, ok, format!("gap {:.1e}, min eig {:.1e}/{:.1e}", c.gap, c.primal_min_eigenvalue, c.dual_min_eigenvalue))
}

#[test]
fn criterion_04_npa_sanity() {
    let start = Instant::now();
    let chsh = BellFunctional::chsh();
    let p = build_moment_problem_with(&chsh, Level::One, Restriction::None, &LetterSet::used_by(&chsh)).unwrap();
    let chsh_bound = p.solve(&SdpOptions::default()).unwrap().bound;
    let elegant = build_moment_problem(&functional_by_name("elegant").unwrap(), Level::OneAB, Restriction::None).unwrap();
    let elegant_bound = elegant.solve(&SdpOptions::default()).unwrap().bound;
    let elapsed = start.elapsed();
    let pass = (chsh_bound - 2.0 * 2f64.sqrt()).abs() < 1e-5
        && (elegant_bound - 6.9282).abs() < 1e-3
        && elapsed < Duration::from_secs(30);
    report(4, pass, format!("CHSH level 1 = {chsh_bound:.7}, elegant level 1+AB = {elegant_bound:.6}"), elapsed);
}

#[test]
fn criterion_05_certification_gap() {
    let start = Instant::now();
    let f = functional_by_name("optimized").unwrap();
    let (bound, dropped) = three_outcome_bound(&f, Level::Two).unwrap();
    let ideal = eval_functional(&f, &ideal_table(&reference_setup()).unwrap()).unwrap().value;
    let elapsed = start.elapsed();
    let pass = (6.8782..6.928).contains(&bound) && ideal - bound >= 0.03 && elapsed < Duration::from_secs(600);
    report(
        5,
        pass,
        format!("three-outcome bound {bound:.5} (outcome {} dropped), ideal value {ideal:.5}, gap {:.5}", dropped + 1, ideal - bound),
        elapsed,
    );
}

#[test]
fn criterion_06_end_to_end_significance() {
    let start = Instant::now();
    let cfg = RunConfig { seed: 2024, ..Default::default() };
    let certifier = Certifier::new();
    let one = certifier.run(&cfg).unwrap().report;
    let sweep = certifier.sweep(&cfg, 0..100).unwrap();
    let strong = sweep.iter().filter(|r| r.significance.is_some_and(|s| s > 5.0)).count();
    let elapsed = start.elapsed();
    let pass = (6.85..=6.96).contains(&one.value)
        && (one.sigma / 0.007 - 1.0).abs() <= 0.5
        && strong >= 90
        && elapsed < Duration::from_secs(300);
    report(
        6,
        pass,
        format!(
            "value {:.4} +- {:.4}, bound {:.4}, significance {:.2}; {strong}/100 seeds above 5 sigma",
            one.value,
            one.sigma,
            one.bound,
            one.significance.unwrap_or(f64::NAN)
        ),
        elapsed,
    );
}

#[test]
fn criterion_07_error_model() {
    let start = Instant::now();
    let setup = reference_setup();
    let t = estimate_table(&simulate_counts(&ExperimentConfig { seed: 7, ..Default::default() }, &setup).unwrap()).unwrap();
    let sigmas: Vec<f64> = (0..3).flat_map(|x| (0..4).map(move |y| (x, y))).map(|(x, y)| correlator(&t, x, y).unwrap().sigma.unwrap()).collect();
    let sigma_ok = sigmas.iter().all(|s| (s / 0.002 - 1.0).abs() <= 0.3);
    let penalty_sigma: Vec<f64> = (0..4).map(|i| t.entry_sigma(SettingId::Povm { y: i }, i, 0).unwrap()).collect();
    let penalty_ok = penalty_sigma.iter().all(|s| (3e-5..3e-4).contains(s));
    let total = accidental_total(9000.0, 9000.0, 1.6e-9, 30.0);
    let rate = accidental_rate(9000.0, 9000.0, 1.6e-9, 30.0);
    let acc_ok = (total - 0.1296).abs() < 1e-15 && (rate - 4.32e-3).abs() < 1e-17;
    let (lo, hi) = sigmas.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
    report(
        7,
        sigma_ok && penalty_ok && acc_ok,
        format!(
            "sigma(E) in [{lo:.5}, {hi:.5}], penalty sigma {:.1e}..{:.1e}, accidentals {total} counts ({rate:e} /s)",
            penalty_sigma.iter().cloned().fold(f64::INFINITY, f64::min),
            penalty_sigma.iter().cloned().fold(0.0, f64::max)
        ),
        start.elapsed(),
    );
}

#[test]
fn criterion_08_tomography_identities() {
    let start = Instant::now();
    let setup = reference_setup();
    let frame = setup.povm_directions;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let r = loop {
            let v = BlochVector::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() <= 1.0 {
                break v;
            }
        };
        let p = frame.map(|n| (1.0 + r.dot(n)) / 4.0);
        let s = invert_sic(&FrequencyTable::sic(p, None), &frame).unwrap();
        worst = worst.max(s.bloch.distance(r));
    }
    let counts = simulate_counts(&ExperimentConfig { seed: 8, ..Default::default() }, &setup).unwrap();
    let rec = conditioned_reconstructions(&counts, &frame, false, false).unwrap();
    let min_f = rec.iter().map(|c| c.fidelity).fold(1.0, f64::min);
    let row1 = bloch_fidelity_tol(BlochVector::new(0.561, 0.601, 0.570), BlochVector::new(0.544, 0.508, 0.668), 1e-3).unwrap();
    let pass = worst < 1e-12 && min_f > 0.995 && (row1 - 0.995).abs() <= 0.001;
    report(
        8,
        pass,
        format!("SIC inversion error {worst:.1e}, min conditioned fidelity {min_f:.5}, printed row-1 fidelity {row1:.4}"),
        start.elapsed(),
    );
}

fn pauli_frequencies(rho: &Operator) -> FrequencyTable {
    let s = paulis();
    let mut f = [[[[0.0; 2]; 2]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    f[i][j][a][b] = born_joint(rho, &binary_effect(&s[i], a), &binary_effect(&s[j], b)).unwrap();
                }
            }
        }
    }
    FrequencyTable::two_qubit(f, None)
}

#[test]
fn criterion_09_two_qubit_tomography() {
    let start = Instant::now();
    let ideal = fidelity(&two_qubit_tomography(&pauli_frequencies(&phi_plus()), false).unwrap(), &phi_plus()).unwrap();
    let w = fidelity(&two_qubit_tomography(&pauli_frequencies(&werner(0.9947)), false).unwrap(), &phi_plus()).unwrap();
    let pass = (ideal - 1.0).abs() < 1e-9 && (w - 0.996).abs() < 1e-3;
    report(9, pass, format!("ideal fidelity {ideal:.12}, Werner(0.9947) fidelity {w:.5}"), start.elapsed());
}

#[test]
fn criterion_10_solver_certificates() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let chsh = BellFunctional::chsh();
    problems.push(("CHSH level 1", build_moment_problem_with(&chsh, Level::One, Restriction::None, &LetterSet::used_by(&chsh)).unwrap()));
    problems.push(("elegant level 1+AB", build_moment_problem(&functional_by_name("elegant").unwrap(), Level::OneAB, Restriction::None).unwrap()));
    let f = functional_by_name("optimized").unwrap();
    let names = ["drop 1", "drop 2", "drop 3", "drop 4"];
    for (j, name) in names.iter().enumerate() {
        problems.push((name, build_moment_problem(&f, Level::Two, Restriction::DropOutcome(j)).unwrap()));
    }
    let mut details = Vec::new();
    let mut pass = true;
    for (name, p) in &problems {
        let (_, ok, d) = certified_solve(&p.sdp);
        pass &= ok;
        details.push(format!("{name}: {d}"));
    }
    report(10, pass, details.join("; "), start.elapsed());
}
