//! Nelder-Mead, see-saw lower bounds and the coefficient-gap search.

use std::io::Write;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::npa::{three_outcome_bound, Level, NpaError};
use crate::qmath::{c, operator_from_bloch, sigma_dot, BlochVector, Operator, C64};
use crate::scenario::{
    binary_effect, eval_functional, quantum_table, BellFunctional, CorrelationTable, Measurements,
    ReferenceSetup, ScenarioError, BINARY_SETTINGS, BOB_SETTINGS, POVM_OUTCOMES,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    /// Offset of the initial vertices from `x0` along each axis.
    pub initial_step: f64,
    /// Reflection.
    pub alpha: f64,
    /// Expansion.
    pub chi: f64,
    /// Contraction.
    pub gamma: f64,
    /// Shrink.
    pub sigma: f64,
    /// Stop when the spread of values and of vertices fall below these.
    pub f_tolerance: f64,
    pub x_tolerance: f64,
    pub max_evaluations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            alpha: 1.0,
            chi: 2.0,
            gamma: 0.5,
            sigma: 0.5,
            f_tolerance: 1e-12,
            x_tolerance: 1e-10,
            max_evaluations: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `objective` from `x0`. Non-finite values count as `+inf`. The
/// returned point is the best vertex seen, so `f <= objective(x0)`.
pub fn nelder_mead(mut objective: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            debug!("nelder-mead: non-finite objective rejected");
            f64::INFINITY
        }
    };
    let f0 = eval(x0, &mut evaluations);
    if n == 0 {
        return SimplexResult { x: vec![], f: f0, evaluations, converged: true };
    }
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    let mut vals = vec![f0];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        vals.push(eval(&p, &mut evaluations));
        pts.push(p);
    }
    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread_f = vals[n] - vals[0];
        let spread_x = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread_f <= opts.f_tolerance && spread_x <= opts.x_tolerance {
            converged = true;
            break;
        }
        if evaluations >= opts.max_evaluations {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (centroid[j] - pts[n][j])).collect() };
        let xr = along(opts.alpha);
        let fr = eval(&xr, &mut evaluations);
        if fr < vals[0] {
            let xe = along(opts.alpha * opts.chi);
            let fe = eval(&xe, &mut evaluations);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < vals[n] {
            let xc = along(opts.alpha * opts.gamma);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc, fc <= fr)
        } else {
            let xc = along(-opts.gamma);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc, fc < vals[n])
        };
        if accept {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = (0..n).map(|j| pts[0][j] + opts.sigma * (pts[i][j] - pts[0][j])).collect();
            vals[i] = eval(&p, &mut evaluations);
            pts[i] = p;
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("non-empty simplex");
    SimplexResult { x: pts[best].clone(), f: vals[best], evaluations, converged }
}

/// An explicit quantum strategy with local dimension `d`.
#[derive(Clone, Debug)]
pub struct Strategy {
    pub state: Operator,
    pub measurements: Measurements,
}

impl Strategy {
    pub fn from_reference(setup: &ReferenceSetup) -> Self {
        Self { state: setup.state.clone(), measurements: setup.measurements.clone() }
    }

    pub fn local_dim(&self) -> usize {
        self.measurements.bob[0].dim()
    }

    pub fn table(&self) -> Result<CorrelationTable, ScenarioError> {
        quantum_table(&self.state, &self.measurements)
    }

    /// Checks the strategy invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let d = self.local_dim();
        if !self.state.is_density() || self.state.dim() != d * d {
            return Err("state is not a two-party density operator".into());
        }
        for o in self.measurements.alice_binary.iter().chain(&self.measurements.bob) {
            if o.dim() != d || !o.is_hermitian() {
                return Err("binary observable is not Hermitian".into());
            }
            let e = o.eigen();
            if e.values.iter().any(|v| v.abs() > 1.0 + 1e-9) {
                return Err("binary observable has spectrum outside [-1, 1]".into());
            }
        }
        let diag = crate::qmath::validate_povm(&self.measurements.alice_povm).map_err(|e| e.to_string())?;
        if !diag.is_valid() {
            return Err("four-outcome measurement is not a POVM".into());
        }
        Ok(())
    }
}

fn sign_observable(k: &Operator) -> Operator {
    let e = k.hermitian_part().eigen();
    e.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
}

/// `sum_xy g A_x (x) B_y - k sum c(y,a,b) Pi_a (x) E_y^b`.
pub fn bell_operator(f: &BellFunctional, m: &Measurements) -> Operator {
    let d = m.bob[0].dim();
    let mut w = Operator::zeros(d * d);
    for x in 0..BINARY_SETTINGS {
        for y in 0..BOB_SETTINGS {
            if f.correlator[x][y] != 0.0 {
                w = &w + &m.alice_binary[x].kron(&m.bob[y]).scale(f.correlator[x][y]);
            }
        }
    }
    for y in 0..BOB_SETTINGS {
        let effects = [binary_effect(&m.bob[y], 0), binary_effect(&m.bob[y], 1)];
        for a in 0..POVM_OUTCOMES {
            for (b, e) in effects.iter().enumerate() {
                let coeff = f.effective_penalty(y, a, b);
                if coeff != 0.0 {
                    w = &w - &m.alice_povm[a].kron(e).scale(coeff);
                }
            }
        }
    }
    w
}

fn top_state(w: &Operator) -> Operator {
    let e = w.hermitian_part().eigen();
    let n = e.values.len();
    Operator::projector(&e.vector(n - 1))
}

fn expectation(w: &Operator, rho: &Operator) -> f64 {
    w.trace_product(rho)
}

/// Parameterization of the four effects; one may be pinned to zero.
#[derive(Clone, Copy, Debug)]
struct PovmParams {
    dim: usize,
    pinned: Option<usize>,
}

impl PovmParams {
    fn free(&self) -> impl Iterator<Item = usize> + '_ {
        (0..POVM_OUTCOMES).filter(move |&a| Some(a) != self.pinned)
    }

    fn per_effect(&self) -> usize {
        if self.dim == 2 {
            3
        } else {
            2 * self.dim * self.dim
        }
    }

    fn len(&self) -> usize {
        self.free().count() * self.per_effect()
    }

    fn random(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.len());
        for _ in self.free() {
            if self.dim == 2 {
                p.push(0.5);
                p.push(rng.random_range(0.0..std::f64::consts::PI));
                p.push(rng.random_range(0.0..2.0 * std::f64::consts::PI));
            } else {
                for _ in 0..self.per_effect() {
                    p.push(rng.sample::<f64, _>(StandardNormal));
                }
            }
        }
        p
    }

    /// Effects normalized as `S^{-1/2} E_a S^{-1/2}` with `S = sum E_a`.
    fn build(&self, p: &[f64]) -> Option<[Operator; POVM_OUTCOMES]> {
        let d = self.dim;
        let mut raw: Vec<Operator> = vec![Operator::zeros(d); POVM_OUTCOMES];
        for (k, a) in self.free().enumerate() {
            let q = &p[k * self.per_effect()..(k + 1) * self.per_effect()];
            raw[a] = if d == 2 {
                let (st, ct) = q[1].sin_cos();
                let (sp, cp) = q[2].sin_cos();
                operator_from_bloch(q[0].abs(), BlochVector::new(st * cp, st * sp, ct))
            } else {
                let m = DMatrix::from_fn(d, d, |i, j| c(q[2 * (i * d + j)], q[2 * (i * d + j) + 1]));
                Operator::new(m.adjoint() * m).ok()?
            };
        }
        let s = raw.iter().fold(Operator::zeros(d), |acc, e| &acc + e);
        let e = s.eigen();
        if e.values[0] < 1e-12 {
            return None;
        }
        debug!("povm projection residual {:.3e}", s.max_abs_diff(&Operator::identity(d)));
        let inv_sqrt = e.map(|v| 1.0 / v.sqrt());
        Some(std::array::from_fn(|a| (&(&inv_sqrt * &raw[a]) * &inv_sqrt).hermitian_part()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeesawRestriction {
    None,
    /// One effect of the four-outcome setting pinned to zero; every choice is tried.
    ThreeOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeesawOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_rounds: usize,
    /// Stop a restart when a full round improves by less than this.
    pub tolerance: f64,
    pub povm_simplex: SimplexOptions,
}

impl Default for SeesawOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            max_rounds: 200,
            tolerance: 1e-10,
            povm_simplex: SimplexOptions { max_evaluations: 1500, initial_step: 0.2, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    /// `eval_functional` on the exact table of `strategy`.
    pub value: f64,
    pub strategy: Strategy,
    pub restart: usize,
    pub pinned: Option<usize>,
    /// Bell value after every sub-step of the winning restart.
    pub trace: Vec<f64>,
}

fn random_observable(d: usize, rng: &mut ChaCha8Rng) -> Operator {
    if d == 2 {
        let v = BlochVector::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        return sigma_dot(v.normalized().unwrap_or(BlochVector::new(0., 0., 1.)));
    }
    let g = DMatrix::from_fn(d, d, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let q = g.qr().q();
    let signs = DVector::from_fn(d, |i, _| c(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0));
    let m: DMatrix<C64> = &q * DMatrix::from_diagonal(&signs) * q.adjoint();
    Operator::new(m).expect("square").hermitian_part()
}

fn run_restart(
    f: &BellFunctional,
    dim: usize,
    pinned: Option<usize>,
    opts: &SeesawOptions,
    stream: u64,
) -> (f64, Strategy, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let params = PovmParams { dim, pinned };
    let mut p = params.random(&mut rng);
    let povm = loop {
        match params.build(&p) {
            Some(e) => break e,
            None => p = params.random(&mut rng),
        }
    };
    let mut m = Measurements {
        alice_binary: std::array::from_fn(|_| random_observable(dim, &mut rng)),
        alice_povm: povm,
        bob: std::array::from_fn(|_| random_observable(dim, &mut rng)),
    };
    let mut rho = top_state(&bell_operator(f, &m));
    let mut value = expectation(&bell_operator(f, &m), &rho);
    let mut trace = vec![value];
    let id = Operator::identity(dim);
    for round in 0..opts.max_rounds {
        let start = value;
        // Bob
        for y in 0..BOB_SETTINGS {
            let mut o = Operator::zeros(dim);
            for x in 0..BINARY_SETTINGS {
                o = &o + &m.alice_binary[x].scale(f.correlator[x][y]);
            }
            for a in 0..POVM_OUTCOMES {
                let w = 0.5 * (f.effective_penalty(y, a, 0) - f.effective_penalty(y, a, 1));
                o = &o - &m.alice_povm[a].scale(w);
            }
            let k = (&o.kron(&id) * &rho).partial_trace_first(dim, dim).expect("dims");
            m.bob[y] = sign_observable(&k);
        }
        let w_op = bell_operator(f, &m);
        value = expectation(&w_op, &rho);
        trace.push(value);
        // Alice, binary settings
        for x in 0..BINARY_SETTINGS {
            let mut o = Operator::zeros(dim);
            for y in 0..BOB_SETTINGS {
                o = &o + &m.bob[y].scale(f.correlator[x][y]);
            }
            let k = (&id.kron(&o) * &rho).partial_trace_second(dim, dim).expect("dims");
            m.alice_binary[x] = sign_observable(&k);
        }
        value = expectation(&bell_operator(f, &m), &rho);
        trace.push(value);
        // Alice, four-outcome setting
        if f.has_penalty() {
            let l: Vec<Operator> = (0..POVM_OUTCOMES)
                .map(|a| {
                    let mut o = Operator::zeros(dim);
                    for y in 0..BOB_SETTINGS {
                        let e0 = binary_effect(&m.bob[y], 0).scale(f.effective_penalty(y, a, 0));
                        let e1 = binary_effect(&m.bob[y], 1).scale(f.effective_penalty(y, a, 1));
                        o = &(&o - &e0) - &e1;
                    }
                    (&id.kron(&o) * &rho).partial_trace_second(dim, dim).expect("dims").hermitian_part()
                })
                .collect();
            let score = |q: &[f64]| -> f64 {
                match params.build(q) {
                    Some(e) => -e.iter().zip(&l).map(|(e, l)| e.trace_product(l)).sum::<f64>(),
                    None => f64::INFINITY,
                }
            };
            let r = nelder_mead(score, &p, &opts.povm_simplex);
            p = r.x;
            m.alice_povm = params.build(&p).expect("finite optimum is buildable");
            value = expectation(&bell_operator(f, &m), &rho);
            trace.push(value);
        }
        // state
        let w_op = bell_operator(f, &m);
        rho = top_state(&w_op);
        value = expectation(&w_op, &rho);
        trace.push(value);
        if value - start < opts.tolerance {
            debug!("seesaw stream {stream}: converged after {round} rounds at {value:.10}");
            break;
        }
    }
    (value, Strategy { state: rho.hermitian_part(), measurements: m }, trace)
}

/// Best explicit strategy found by alternating optimization.
pub fn seesaw_lower_bound(
    f: &BellFunctional,
    dim: usize,
    restriction: SeesawRestriction,
    opts: &SeesawOptions,
) -> SeesawResult {
    assert!(dim >= 2, "local dimension must be at least 2");
    let pins: Vec<Option<usize>> = match restriction {
        SeesawRestriction::None => vec![None],
        SeesawRestriction::ThreeOutcome => (0..POVM_OUTCOMES).map(Some).collect(),
    };
    let jobs: Vec<(usize, Option<usize>)> =
        pins.iter().flat_map(|&p| (0..opts.restarts.max(1)).map(move |r| (r, p))).collect();
    let run = |(i, &(r, pin)): (usize, &(usize, Option<usize>))| {
        let (v, s, t) = run_restart(f, dim, pin, opts, i as u64);
        (v, s, t, r, pin)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        jobs.par_iter().enumerate().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = jobs.iter().enumerate().map(run).collect();
    let mut best: Option<(f64, Strategy, Vec<f64>, usize, Option<usize>)> = None;
    for r in results {
        if best.as_ref().is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    let (_, strategy, trace, restart, pinned) = best.expect("at least one restart");
    let value = strategy
        .table()
        .and_then(|t| eval_functional(f, &t))
        .map(|e| e.value)
        .unwrap_or(f64::NEG_INFINITY);
    SeesawResult { value, strategy, restart, pinned, trace }
}

/// One logged step of the coefficient search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapRecord {
    pub iteration: usize,
    pub eval: f64,
    pub bound: f64,
    pub gap: f64,
}

impl GapRecord {
    pub fn new(iteration: usize, eval: f64, bound: f64) -> Self {
        Self { iteration, eval, bound, gap: eval - bound }
    }
}

pub fn write_gap_trace<W: Write>(trace: &[GapRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in trace {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapOptions {
    /// Relaxation level inside the search loop.
    pub level: Level,
    /// Level for the final re-scoring of the winner.
    pub rescore_level: Option<Level>,
    pub simplex: SimplexOptions,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            level: Level::OneAB,
            rescore_level: Some(Level::Two),
            simplex: SimplexOptions { max_evaluations: 2000, initial_step: 0.05, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug)]
pub struct GapResult {
    pub functional: BellFunctional,
    /// Improving iterates, gauge-fixed.
    pub trace: Vec<GapRecord>,
    pub evaluations: usize,
    /// The winner scored at `rescore_level`.
    pub rescored: Option<GapRecord>,
}

/// Rescales so that the mean `|gamma_xy|` is one.
pub fn gauge_fix(f: &BellFunctional) -> BellFunctional {
    let s = f.correlator_scale();
    if s > 0.0 {
        f.scaled(1.0 / s)
    } else {
        f.clone()
    }
}

/// `eval_functional(f, data) - three_outcome_bound(f, level)`.
pub fn certification_gap(f: &BellFunctional, data: &CorrelationTable, level: Level) -> Result<GapRecord, NpaError> {
    let eval = eval_functional(f, data).map(|e| e.value).unwrap_or(f64::NAN);
    let (bound, _) = three_outcome_bound(f, level)?;
    Ok(GapRecord::new(0, eval, bound))
}

/// Nelder-Mead over the 12 + 32 coefficients (with `k` fixed) maximizing
/// the certification gap on `data`.
pub fn optimize_gap(
    start: &BellFunctional,
    data: &CorrelationTable,
    k: f64,
    opts: &GapOptions,
) -> Result<GapResult, NpaError> {
    let mut start = start.clone();
    start.k = k;
    let start = gauge_fix(&start);
    let mut trace: Vec<GapRecord> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut count = 0usize;
    let mut failure: Option<NpaError> = None;
    let objective = |p: &[f64]| -> f64 {
        count += 1;
        let f = gauge_fix(&BellFunctional::from_params(p, k));
        match certification_gap(&f, data, opts.level) {
            Ok(r) => {
                if r.gap > best {
                    best = r.gap;
                    trace.push(GapRecord { iteration: count, ..r });
                }
                -r.gap
            }
            Err(e) => {
                warn!("bound failed during coefficient search: {e}");
                if count == 1 {
                    failure = Some(e);
                }
                f64::INFINITY
            }
        }
    };
    let r = nelder_mead(objective, &start.to_params(), &opts.simplex);
    if let Some(e) = failure {
        return Err(e);
    }
    let functional = gauge_fix(&BellFunctional::from_params(&r.x, k));
    let rescored = match opts.rescore_level {
        Some(level) => Some(certification_gap(&functional, data, level)?),
        None => None,
    };
    Ok(GapResult { functional, trace, evaluations: r.evaluations, rescored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{functional_by_name, ideal_table, reference_setup};

    #[test]
    fn nm_quadratic() {
        let r = nelder_mead(|x| (x[0] - 1.0).powi(2), &[5.0], &SimplexOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn nm_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &SimplexOptions::default());
        assert!(r.f < 1e-8, "{}", r.f);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nm_already_optimal() {
        let r = nelder_mead(|x| x[0].abs(), &[0.0], &SimplexOptions::default());
        assert_eq!(r.f, 0.0);
        assert_eq!(r.x, vec![0.0]);
    }

    #[test]
    fn nm_rejects_non_finite() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let r = nelder_mead(f, &[0.0], &SimplexOptions::default());
        assert!(r.f.is_finite());
        assert!(r.x[0] <= 0.5 && r.x[0] > 0.49);
    }

    #[test]
    fn nm_respects_budget() {
        let opts = SimplexOptions { max_evaluations: 20, ..Default::default() };
        let r = nelder_mead(|x| x.iter().map(|v| v * v).sum(), &[3.0, 4.0, 5.0], &opts);
        assert!(r.evaluations <= 20 + 4);
        assert!(!r.converged);
    }

    #[test]
    fn bell_operator_matches_table() {
        let setup = reference_setup();
        let f = functional_by_name("optimized").unwrap();
        let w = bell_operator(&f, &setup.measurements);
        let direct = eval_functional(&f, &ideal_table(&setup).unwrap()).unwrap().value;
        assert!((w.trace_product(&setup.state) - direct).abs() < 1e-12);
        assert!(Strategy::from_reference(&setup).validate().is_ok());
    }

    #[test]
    fn seesaw_elegant_reaches_maximum() {
        let opts = SeesawOptions { restarts: 4, seed: 7, ..Default::default() };
        let r = seesaw_lower_bound(&BellFunctional::elegant(), 2, SeesawRestriction::None, &opts);
        assert!(r.value >= 6.928 - 1e-3, "{}", r.value);
        assert!(r.strategy.validate().is_ok());
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn seesaw_optimized_beats_reference() {
        let setup = reference_setup();
        let f = functional_by_name("optimized").unwrap();
        let ideal = eval_functional(&f, &ideal_table(&setup).unwrap()).unwrap().value;
        let opts = SeesawOptions { restarts: 6, seed: 1, ..Default::default() };
        let r = seesaw_lower_bound(&f, 2, SeesawRestriction::None, &opts);
        assert!(r.value >= ideal - 1e-3, "{} vs {ideal}", r.value);
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn seesaw_is_deterministic() {
        let opts = SeesawOptions { restarts: 2, seed: 3, max_rounds: 5, ..Default::default() };
        let f = functional_by_name("optimized").unwrap();
        let a = seesaw_lower_bound(&f, 2, SeesawRestriction::None, &opts);
        let b = seesaw_lower_bound(&f, 2, SeesawRestriction::None, &opts);
        assert_eq!(a.value, b.value);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn seesaw_three_outcome_pins_an_effect() {
        let opts = SeesawOptions { restarts: 2, seed: 3, ..Default::default() };
        let f = functional_by_name("optimized").unwrap();
        let r = seesaw_lower_bound(&f, 2, SeesawRestriction::ThreeOutcome, &opts);
        let j = r.pinned.unwrap();
        assert!(r.strategy.measurements.alice_povm[j].max_abs_diff(&Operator::zeros(2)) < 1e-12);
        assert!(r.strategy.validate().is_ok());
    }

    #[test]
    fn seesaw_qutrit_runs() {
        let opts = SeesawOptions { restarts: 1, seed: 2, max_rounds: 20, ..Default::default() };
        let r = seesaw_lower_bound(&BellFunctional::elegant(), 3, SeesawRestriction::None, &opts);
        assert!(r.value > 6.0);
        assert!(r.strategy.validate().is_ok());
    }

    #[test]
    fn gap_record_arithmetic() {
        let r = GapRecord::new(0, 6.960, 6.8782);
        assert!((r.gap - 0.0818).abs() < 1e-12);
        let mut buf = Vec::new();
        write_gap_trace(&[r], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,eval,bound,gap\n0,6.96,6.8782,"));
    }

    #[test]
    fn gauge_fixing() {
        let f = functional_by_name("optimized").unwrap().scaled(2.5);
        let g = gauge_fix(&f);
        assert!((g.correlator_scale() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimize_gap_is_monotone() {
        let data = ideal_table(&reference_setup()).unwrap();
        let start = crate::scenario::builtin_functional(crate::scenario::BuiltinFunctional::Modified(3.0));
        let opts = GapOptions {
            level: Level::One,
            rescore_level: None,
            simplex: SimplexOptions { max_evaluations: 40, initial_step: 0.05, ..Default::default() },
        };
        let r = optimize_gap(&start, &data, 3.0, &opts).unwrap();
        let first = r.trace.first().unwrap();
        assert_eq!(first.iteration, 1);
        for w in r.trace.windows(2) {
            assert!(w[1].gap > w[0].gap);
        }
        let last = r.trace.last().unwrap().gap;
        let end = certification_gap(&r.functional, &data, Level::One).unwrap().gap;
        assert!((end - last).abs() < 1e-6);
        assert!(end >= first.gap - 1e-9);
    }
}
