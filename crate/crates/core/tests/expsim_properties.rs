use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sic_certify::expsim::{
    dark_coincidence_probability, estimate_table, measured_direction, perturbed_direction, simulate_counts,
    waveplate_angles, ExperimentConfig,
};
use sic_certify::qmath::{born_joint, operator_from_bloch, werner, BlochVector};
use sic_certify::scenario::{correlator, reference_setup, werner_table, SettingId};

fn noiseless(cfg: ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig { motor_sigma: 0.0, dark_rate: 0.0, singles_rate: 0.0, ..cfg }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn jitter_matches_small_angle_model() {
    let sigma_deg: f64 = 0.02;
    let sigma = sigma_deg.to_radians();
    let setup = reference_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for target in setup.bob_directions.iter().chain(&setup.alice_directions) {
        let (h, q) = waveplate_angles(*target).unwrap();
        // Jacobian of the implemented direction in plate angle (per radian)
        let eps: f64 = 1e-4;
        let jh = (measured_direction(h + eps, q) - measured_direction(h - eps, q)).scale(0.5 / eps.to_radians());
        let jq = (measured_direction(h, q + eps) - measured_direction(h, q - eps)).scale(0.5 / eps.to_radians());
        assert!(jh.norm() <= 4.0 + 1e-6 && jq.norm() <= 4.0 + 1e-6, "{} {}", jh.norm(), jq.norm());
        let predicted = sigma * sigma * (jh.dot(jh) + jq.dot(jq));

        let draws = 100_000;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let d = perturbed_direction(*target, sigma_deg, &mut rng).unwrap();
            assert!((d.norm() - 1.0).abs() < 1e-12);
            sum_sq += d.angle_to(*target).powi(2);
        }
        let observed = sum_sq / draws as f64;
        assert!((observed / predicted - 1.0).abs() < 0.03, "observed {observed:e} predicted {predicted:e}");
    }
}

#[test]
fn pooling_shrinks_jitter_by_root_n() {
    let setup = reference_setup();
    let rho = werner(0.995);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let effects = |n: BlochVector| [operator_from_bloch(1.0, n), operator_from_bloch(1.0, -n)];
    let mut draw = || {
        let a = effects(perturbed_direction(setup.alice_directions[0], 0.02, &mut rng).unwrap());
        let b = effects(perturbed_direction(setup.bob_directions[0], 0.02, &mut rng).unwrap());
        let mut e = 0.0;
        for (i, ea) in a.iter().enumerate() {
            for (j, eb) in b.iter().enumerate() {
                let s = if i == j { 1.0 } else { -1.0 };
                e += s * born_joint(&rho, ea, eb).unwrap();
            }
        }
        e
    };
    let singles: Vec<f64> = (0..4600).map(|_| draw()).collect();
    let pooled: Vec<f64> = (0..4600).map(|_| (0..23).map(|_| draw()).sum::<f64>() / 23.0).collect();
    let ratio = mean_std(&singles).1 / mean_std(&pooled).1;
    assert!((ratio - 23f64.sqrt()).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn propagated_sigma_matches_scatter() {
    let setup = reference_setup();
    let mut values = Vec::new();
    let mut sigmas = Vec::new();
    for seed in 0..100 {
        let cfg = ExperimentConfig { seed, ..Default::default() };
        let t = estimate_table(&simulate_counts(&cfg, &setup).unwrap()).unwrap();
        let e = correlator(&t, 1, 2).unwrap();
        values.push(e.value);
        sigmas.push(e.sigma.unwrap());
    }
    let (_, scatter) = mean_std(&values);
    let (sigma, _) = mean_std(&sigmas);
    assert!((scatter / sigma - 1.0).abs() < 0.2, "scatter {scatter} propagated {sigma}");
}

#[test]
fn estimates_converge_to_werner_table() {
    let setup = reference_setup();
    let w = werner_table(&setup, 0.97).unwrap();
    let mut good = 0;
    for seed in 0..100 {
        let cfg = noiseless(ExperimentConfig { visibility: 0.97, coincidence_rate: 2e4, repetitions: 1, seed, ..Default::default() });
        let t = estimate_table(&simulate_counts(&cfg, &setup).unwrap()).unwrap();
        let mut ok = true;
        for s in SettingId::all() {
            let (pt, pw) = (t.probabilities(s), w.probabilities(s));
            for a in 0..s.alice_outcomes() {
                for b in 0..2 {
                    let sig = t.entry_sigma(s, a, b).unwrap().max(1e-12);
                    ok &= (pt[a][b] - pw[a][b]).abs() <= 4.0 * sig.max((pw[a][b] * (1.0 - pw[a][b]) / t.total(s).unwrap()).sqrt());
                }
            }
        }
        good += ok as usize;
    }
    assert!(good >= 95, "{good} of 100 runs within 4 sigma");
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let cfg = ExperimentConfig { repetitions: 3, seed: 8, ..Default::default() };
    let setup = reference_setup();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let single = pool.install(|| simulate_counts(&cfg, &setup).unwrap());
    let many = simulate_counts(&cfg, &setup).unwrap();
    assert_eq!(single, many);
}

#[test]
fn paper_scale_errors() {
    let setup = reference_setup();
    let cfg = ExperimentConfig { seed: 1, ..Default::default() };
    let t = estimate_table(&simulate_counts(&cfg, &setup).unwrap()).unwrap();
    for x in 0..3 {
        for y in 0..4 {
            let s = correlator(&t, x, y).unwrap().sigma.unwrap();
            assert!((s / 0.002 - 1.0).abs() < 0.3, "sigma(E) = {s}");
        }
    }
    for y in 0..4 {
        let s = t.entry_sigma(SettingId::Povm { y }, y, 0).unwrap();
        assert!(s > 2e-5 && s < 5e-4, "{s}");
    }
    let d = dark_coincidence_probability(cfg.singles_rate, cfg.dark_rate, cfg.window);
    assert!(d <= 1e-10);
}
