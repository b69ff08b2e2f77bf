//! Acceptance suite, one check per numbered criterion.
//!
//! Prints one `PASS`/`FAIL` line per criterion and exits nonzero if any
//! fails. Numeric arguments select a subset, for example
//! `cargo test -p sonata-harness --test acceptance -- 2 7`.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sonata_core::consensus::{
    consensus_error, network_constants, push_sum_step, track_average, tracking_disagreement, ConsensusState,
};
use sonata_core::graph::{build_metropolis_weights, build_push_sum_weights, GraphModel, GraphSequence};
use sonata_core::metrics::best_response_gap_bound;
use sonata_core::problems::{
    make_distributed_pca, make_sparse_regression, ConstraintSet, PcaSource, ProblemInstance, RegKind,
    Regularizer, SmoothLocalCost, SparseRegressionParams,
};
use sonata_core::sonata::bound::{constant_step_bound, StepBoundParams};
use sonata_core::sonata::direct::{
    add_opt_step, aug_dgm_step, diging_step, next_l_step, AddOptState, TrackingState,
};
use sonata_core::sonata::lyapunov::{LyapunovConstants, LyapunovSample, LyapunovTracker};
use sonata_core::sonata::{
    apply_preset, initial_state, run_with_observer, sonata_iteration, AlgorithmConfig, Mixing, Preset,
    RunOptions, StepRule, StepSizeSchedule, WeightBuilder,
};
use sonata_core::surrogates::{
    closed_form, solve_subproblem_generic, subproblem_conditioning, InnerSolverParams, SurrogateKind,
    SurrogateSpec,
};
use sonata_harness::experiment::messages_to_reach;
use sonata_harness::presets::preset;
use sonata_harness::simulate;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

const CRITERIA: [(usize, &str, Check); 11] = [
    (1, "push-sum invariants", push_sum_invariants),
    (2, "push-sum consensus rate", push_sum_consensus_rate),
    (3, "gradient tracking", gradient_tracking),
    (4, "regularizer DC decompositions", regularizer_tables),
    (5, "closed-form subproblems", closed_form_subproblems),
    (6, "special-case equivalences", special_case_equivalences),
    (7, "asymptotic convergence", asymptotic_convergence),
    (8, "sublinear rate", sublinear_rate),
    (9, "distributed PCA", distributed_pca),
    (10, "sparse regression communication cost", sparse_regression_cost),
    (11, "Lyapunov descent", lyapunov_descent),
];

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2}: {verdict} {name}: {} ({:.1?})",
            result.detail,
            start.elapsed()
        );
        if !result.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec(r: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| scale * r.sample::<f64, _>(StandardNormal))
}

fn normal_vecs(r: &mut ChaCha8Rng, num: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..num).map(|_| normal_vec(r, dim, 1.0)).collect()
}

fn weighted_sum(state: &ConsensusState) -> DVector<f64> {
    state.x.iter().zip(state.phi.iter()).map(|(x, p)| x * *p).sum()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1: push-sum keeps sum(phi) = I, phi within its bounds, and the weighted sum.
fn push_sum_invariants() -> Outcome {
    const NUM: usize = 10;
    const DIM: usize = 3;
    const SEEDS: u64 = 10;
    const ITERS: usize = 5000;
    const TOL: f64 = 1e-9;
    const TIME_LIMIT: f64 = 10.0;
    let start = Instant::now();
    let (mut mass_err, mut sum_err) = (0.0_f64, 0.0_f64);
    let (mut kappa, mut phi_min, mut phi_max) = (1.0_f64, f64::INFINITY, 0.0_f64);
    for seed in 0..SEEDS {
        let seq = GraphSequence::new(GraphModel::RingPlusRandom, seed, NUM, 1);
        let x0 = normal_vecs(&mut rng(seed), NUM, DIM);
        let mut state = ConsensusState::new(x0.clone(), x0);
        let s0 = weighted_sum(&state);
        for n in 0..ITERS {
            let a = build_push_sum_weights(&seq.snapshot(n).unwrap());
            kappa = kappa.min(a.kappa);
            state = push_sum_step(&state, &a, None).unwrap();
            mass_err = mass_err.max((state.phi.sum() - NUM as f64).abs());
            sum_err = sum_err.max((weighted_sum(&state) - &s0).amax() / s0.amax().max(1.0));
            phi_min = phi_min.min(state.phi.min());
            phi_max = phi_max.max(state.phi.max());
        }
    }
    let elapsed = secs(start.elapsed());
    let net = network_constants(NUM, 1, kappa, false).unwrap();
    let bounded = phi_min >= net.phi_lb && phi_max <= net.phi_ub;
    outcome(
        mass_err <= TOL && sum_err <= TOL && bounded && elapsed < TIME_LIMIT,
        format!(
            "|sum phi - I| <= {mass_err:.1e}, weighted-sum drift {sum_err:.1e} (tol {TOL:.0e}); \
             phi in [{phi_min:.3}, {phi_max:.3}] within [{:.1e}, {:.1}]; {elapsed:.2}s for {SEEDS} runs (limit {TIME_LIMIT}s)",
            net.phi_lb, net.phi_ub
        ),
    )
}

// 2: unperturbed push-sum reaches consensus geometrically under the envelope.
fn push_sum_consensus_rate() -> Outcome {
    const NUM: usize = 30;
    const DIM: usize = 5;
    const SEEDS: u64 = 5;
    const ITERS: usize = 2000;
    const TARGET: f64 = 1e-10;
    const TIME_LIMIT: f64 = 5.0;
    let mut pass = true;
    let (mut worst_first, mut worst_ratio, mut worst_time) = (0usize, 0.0_f64, 0.0_f64);
    for seed in 0..SEEDS {
        let start = Instant::now();
        let seq = GraphSequence::new(GraphModel::RingPlusRandom, seed, NUM, 1);
        let x0 = normal_vecs(&mut rng(100 + seed), NUM, DIM);
        let mut state = ConsensusState::new(x0.clone(), x0);
        let mut errors = vec![consensus_error(&state)];
        let mut kappa = 1.0_f64;
        for n in 0..ITERS {
            let a = build_push_sum_weights(&seq.snapshot(n).unwrap());
            kappa = kappa.min(a.kappa);
            state = push_sum_step(&state, &a, None).unwrap();
            errors.push(consensus_error(&state));
        }
        worst_time = worst_time.max(secs(start.elapsed()));
        let net = network_constants(NUM, 1, kappa, false).unwrap();
        let e0 = errors[0];
        let ratio = errors
            .iter()
            .enumerate()
            .map(|(n, e)| e / (net.envelope(n) * e0))
            .fold(0.0, f64::max);
        worst_ratio = worst_ratio.max(ratio);
        match errors.iter().position(|&e| e <= TARGET) {
            Some(n) => worst_first = worst_first.max(n),
            None => pass = false,
        }
    }
    pass &= worst_ratio <= 1.0 && worst_time < TIME_LIMIT;
    outcome(
        pass,
        format!(
            "error <= {TARGET:.0e} by iteration {worst_first} (limit {ITERS}); max error/envelope {worst_ratio:.2e}; \
             slowest run {worst_time:.2}s (limit {TIME_LIMIT}s)"
        ),
    )
}

// 3: the perturbed push-sum tracks a frozen average and a decaying signal.
fn gradient_tracking() -> Outcome {
    const NUM: usize = 10;
    const DIM: usize = 50;
    const ITERS: usize = 2000;
    const TARGET: f64 = 1e-10;
    const BURN_IN: usize = 200;
    let p = desk_regression(3);
    let seq = GraphSequence::new(GraphModel::RingPlusRandom, 3, NUM, 1);
    let x = p.initial_point(3);
    let grads: Vec<DVector<f64>> = p.costs.iter().zip(&x).map(|(c, xi)| c.grad(xi)).collect();
    let frozen = track_average(&|_| grads.clone(), &seq, ITERS).unwrap();
    let first = frozen.iter().position(|&e| e <= TARGET);

    let v = normal_vecs(&mut rng(33), NUM, DIM);
    let decaying = track_average(
        &|n| v.iter().map(|vi| vi / (n as f64 + 1.0)).collect(),
        &seq,
        ITERS,
    )
    .unwrap();
    let rises = |e: &[f64]| (BURN_IN..ITERS).filter(|&n| e[n + 1] > e[n]).count();
    let varying_rises = rises(&decaying);
    // same signal on the fixed slot-0 digraph, reported for context only
    let fixed = GraphSequence::new(GraphModel::StaticStronglyConnected(None), 3, NUM, 1);
    let fixed_rises = rises(
        &track_average(&|n| v.iter().map(|vi| vi / (n as f64 + 1.0)).collect(), &fixed, ITERS).unwrap(),
    );
    outcome(
        first.is_some() && varying_rises == 0,
        format!(
            "frozen gradients: error {:.1e} at iteration {} (target {TARGET:.0e} within {ITERS}); \
             v/(n+1) signal: {varying_rises} increases after burn-in {BURN_IN}, error {:.1e} -> {:.1e} \
             (fixed digraph: {fixed_rises} increases)",
            first.map_or(frozen[ITERS], |n| frozen[n]),
            first.map_or("never".to_string(), |n| n.to_string()),
            decaying[BURN_IN],
            decaying[ITERS]
        ),
    )
}

/// Closed forms of `g`, `eta` and `dg_minus / dt`, written out from the
/// regularizer table independently of the library.
struct TableEntry {
    kind: RegKind,
    g: fn(f64, f64) -> f64,
    eta: fn(f64) -> f64,
    dg_minus: fn(f64, f64) -> f64,
}

const SCAD_A: f64 = 3.7;
const LP_EPS: f64 = 1e-4;
const LP_P: f64 = -1.0;

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn table() -> [TableEntry; 5] {
    [
        TableEntry {
            kind: RegKind::Exp,
            g: |x, th| 1.0 - (-th * x.abs()).exp(),
            eta: |th| th,
            dg_minus: |x, th| sgn(x) * th * (1.0 - (-th * x.abs()).exp()),
        },
        TableEntry {
            kind: RegKind::LpPlus,
            g: |x, th| (x.abs() + LP_EPS).powf(1.0 / th),
            eta: |th| LP_EPS.powf(1.0 / th - 1.0) / th,
            dg_minus: |x, th| {
                sgn(x) / th * (LP_EPS.powf(1.0 / th - 1.0) - (x.abs() + LP_EPS).powf(1.0 / th - 1.0))
            },
        },
        TableEntry {
            kind: RegKind::LpMinus,
            g: |x, th| 1.0 - (th * x.abs() + 1.0).powf(LP_P),
            eta: |th| -LP_P * th,
            dg_minus: |x, th| -sgn(x) * LP_P * th * (1.0 - (1.0 + th * x.abs()).powf(LP_P - 1.0)),
        },
        TableEntry {
            kind: RegKind::Scad,
            g: |x, th| {
                let a = x.abs();
                if a <= 1.0 / th {
                    2.0 * th * a / (SCAD_A + 1.0)
                } else if a <= SCAD_A / th {
                    (-th * th * a * a + 2.0 * SCAD_A * th * a - 1.0) / (SCAD_A * SCAD_A - 1.0)
                } else {
                    1.0
                }
            },
            eta: |th| 2.0 * th / (SCAD_A + 1.0),
            dg_minus: |x, th| {
                let a = x.abs();
                if a <= 1.0 / th {
                    0.0
                } else if a <= SCAD_A / th {
                    sgn(x) * 2.0 * th * (th * a - 1.0) / (SCAD_A * SCAD_A - 1.0)
                } else {
                    sgn(x) * 2.0 * th / (SCAD_A + 1.0)
                }
            },
        },
        TableEntry {
            kind: RegKind::Log,
            g: |x, th| (1.0 + th * x.abs()).ln() / (1.0 + th).ln(),
            eta: |th| th / (1.0 + th).ln(),
            dg_minus: |x, th| sgn(x) * th * th * x.abs() / ((1.0 + th).ln() * (1.0 + th * x.abs())),
        },
    ]
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 60)
}

// 4: library regularizers match the table, satisfy g = eta |x| - g_minus,
// have the tabulated derivative and approach the l0 count as theta grows.
fn regularizer_tables() -> Outcome {
    const THETA: f64 = 2.0;
    const LAMBDA: f64 = 1.0;
    const POINTS: usize = 1000;
    const RANGE: f64 = 3.0;
    const VALUE_TOL: f64 = 1e-12;
    const QUAD_TOL: f64 = 1e-10;
    const FD_STEP: f64 = 1e-6;
    const FD_TOL: f64 = 1e-6;
    // central differences skip the kink at 0 and the SCAD knots
    const FD_EXCLUSION: f64 = 1e-2;
    const THETA_LARGE: f64 = 1e6;
    const LIMIT_TOL: f64 = 1e-3;
    let mut pass = true;
    let mut notes = Vec::new();
    for entry in table() {
        let reg = Regularizer::new(entry.kind, THETA, LAMBDA).unwrap();
        let mut r = rng(4);
        let (mut value_err, mut dc_err, mut quad_err, mut deriv_err, mut fd_err) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        let eta_err = (reg.eta() - (entry.eta)(THETA)).abs();
        for _ in 0..POINTS {
            let x: f64 = r.random_range(-RANGE..RANGE);
            let oracle = (entry.g)(x, THETA);
            value_err = value_err.max((reg.g(x) - oracle).abs());
            let parts = reg.dc_parts(&DVector::from_element(1, x));
            dc_err = dc_err.max((parts.gplus - parts.gminus - LAMBDA * oracle).abs());
            let gminus = integrate(&|t| (entry.dg_minus)(t, THETA), 0.0, x.abs(), 1e-14);
            // g(x) - g(0) = eta |x| - int_0^|x| dg_minus; LpPlus has g(0) != 0
            let rise = oracle - (entry.g)(0.0, THETA);
            quad_err = quad_err.max(((entry.eta)(THETA) * x.abs() - gminus - rise).abs());
            deriv_err = deriv_err.max((reg.dg_minus(x) - (entry.dg_minus)(x, THETA)).abs());
            let near_knot = entry.kind == RegKind::Scad
                && [1.0 / THETA, SCAD_A / THETA].iter().any(|k| (x.abs() - k).abs() < FD_EXCLUSION);
            if x.abs() >= FD_EXCLUSION && !near_knot {
                let gm = |t: f64| reg.eta() * t.abs() - reg.g(t);
                let fd = (gm(x + FD_STEP) - gm(x - FD_STEP)) / (2.0 * FD_STEP);
                fd_err = fd_err.max((fd - reg.dg_minus(x)).abs());
            }
        }
        let large = Regularizer::new(entry.kind, THETA_LARGE, LAMBDA).unwrap();
        let limit_ok = (large.g(1.0) - 1.0).abs() <= LIMIT_TOL && large.g(0.0).abs() <= LIMIT_TOL;
        let ok = value_err <= VALUE_TOL
            && eta_err <= VALUE_TOL
            && dc_err <= VALUE_TOL
            && quad_err <= QUAD_TOL
            && deriv_err <= VALUE_TOL
            && fd_err <= FD_TOL
            && limit_ok;
        pass &= ok;
        if !ok {
            notes.push(format!(
                "{:?}: value {value_err:.1e}, eta {eta_err:.1e}, dc {dc_err:.1e}, quadrature {quad_err:.1e}, \
                 dg- {deriv_err:.1e}, fd {fd_err:.1e}, theta={THETA_LARGE:.0e} g(0)={:.6} g(1)={:.6}",
                entry.kind,
                large.g(0.0),
                large.g(1.0)
            ));
        }
    }
    let detail = if notes.is_empty() {
        format!(
            "5 kinds x {POINTS} points: table values and DC identity to {VALUE_TOL:.0e}, quadrature to {QUAD_TOL:.0e}, \
             finite differences to {FD_TOL:.0e}, theta={THETA_LARGE:.0e} limit within {LIMIT_TOL:.0e}"
        )
    } else {
        notes.join("; ")
    };
    outcome(pass, detail)
}

fn desk_regression(seed: u64) -> ProblemInstance {
    desk_regression_with(seed, 10, 50, 5, Regularizer::new(RegKind::Log, 2.0, 0.1).unwrap())
}

fn desk_regression_with(seed: u64, num: usize, dim: usize, rows: usize, reg: Regularizer) -> ProblemInstance {
    let params = SparseRegressionParams {
        num_agents: num,
        dim,
        rows_per_agent: rows,
        noise_sigma: 0.1f64.sqrt(),
        sparsity: 0.8,
    };
    make_sparse_regression(&params, seed, reg).unwrap()
}

// 5: closed forms agree with the generic inner solver.
fn closed_form_subproblems() -> Outcome {
    const CASES: u64 = 200;
    const TOL: f64 = 1e-8;
    const NUM: usize = 5;
    const DIM: usize = 20;
    let inner = InnerSolverParams {
        tolerance: 1e-12,
        max_iters: 1_000_000,
        ..InnerSolverParams::default()
    };
    let forms: [(&str, fn(u64) -> (ProblemInstance, SurrogateSpec)); 3] = [
        ("x - y", |seed| {
            let p = desk_regression_with(seed, NUM, DIM, 5, Regularizer::none());
            (p, SurrogateSpec::new(SurrogateKind::Linearization, NUM as f64))
        }),
        ("soft threshold", |seed| {
            let reg = Regularizer::new(RegKind::Log, 2.0, 0.1).unwrap();
            let p = desk_regression_with(seed, NUM, DIM, 5, reg);
            (p, SurrogateSpec::new(SurrogateKind::Linearization, 1.5))
        }),
        ("ball projection", |seed| {
            let src = PcaSource::Synthetic {
                rows_per_agent: 5,
                dim: DIM,
                covariance_seed: seed,
            };
            let p = make_distributed_pca(NUM, &src, seed).unwrap();
            (p, SurrogateSpec::new(SurrogateKind::Linearization, 1.0))
        }),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, build) in forms {
        let mut worst = 0.0_f64;
        for case in 0..CASES {
            let (p, spec) = build(case);
            let mut r = rng(500 + case);
            let i = case as usize % NUM;
            let x = normal_vec(&mut r, DIM, 0.5);
            let y = normal_vec(&mut r, DIM, 1.0);
            let closed = closed_form(&spec, &p, i, &x, &y).expect("linearized model has a closed form");
            let generic = solve_subproblem_generic(&spec, &p, i, &x, &y, &inner).unwrap();
            worst = worst.max((closed - generic.z).amax());
        }
        pass &= worst <= TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    outcome(
        pass,
        format!("max gap over {CASES} instances each: {} (tol {TOL:.0e})", parts.join(", ")),
    )
}

fn max_gap(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

// 6: the general iteration reproduces the named special cases.
fn special_case_equivalences() -> Outcome {
    const NUM: usize = 6;
    const ITERS: usize = 100;
    const ALPHA: f64 = 0.02;
    const TOL: f64 = 1e-12;
    const AUG_ITERS: usize = 3000;
    const AUG_TRACK_TOL: f64 = 1e-9;
    const AUG_LIMIT_TOL: f64 = 1e-6;
    let problem = |seed| desk_regression_with(seed, NUM, 5, 4, Regularizer::none());
    let start = |seed: u64| normal_vecs(&mut rng(600 + seed), NUM, 5);
    let schedule = StepSizeSchedule::new(StepRule::Constant(ALPHA));
    let alphas = [ALPHA; NUM];
    let (mut next_l, mut diging, mut add_opt, mut ds, mut push) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for seed in 0..5 {
        let p = problem(seed);
        let undirected = GraphSequence::new(GraphModel::StaticUndirected(None), seed, NUM, 1);
        let directed = GraphSequence::new(GraphModel::StaticStronglyConnected(None), seed, NUM, 1);
        let varying = GraphSequence::new(GraphModel::RingPlusRandom, seed, NUM, 1);

        // NEXT-L (ATC) and DIGing (CAA) on Metropolis weights
        for (preset, mixing) in [(Preset::NextL, Mixing::Atc), (Preset::DiGing, Mixing::Caa)] {
            let cfg = apply_preset(preset, NUM, schedule.clone());
            let mut s = initial_state(&p, start(seed)).unwrap();
            let mut t = TrackingState::new(&p, start(seed));
            let mut d = t.clone();
            for n in 0..ITERS {
                let a = cfg.weights.build(&undirected.snapshot(n).unwrap()).unwrap();
                s = sonata_iteration(&s, &cfg, &p, &a, &alphas).unwrap();
                t = next_l_step(&a.entries, &p, &t, ALPHA, mixing);
                if mixing == Mixing::Atc {
                    next_l = next_l.max(max_gap(&s.x, &t.x)).max(max_gap(&s.y, &t.y));
                } else {
                    d = diging_step(&a.entries, &p, &d, ALPHA);
                    diging = diging.max(max_gap(&s.x, &t.x)).max(max_gap(&s.x, &d.x));
                }
            }
        }

        // SONATA-L on doubly stochastic weights is NEXT-L
        let mut cfg = apply_preset(Preset::SonataL, NUM, schedule.clone());
        cfg.weights = WeightBuilder::Metropolis;
        cfg.preset = None;
        let next = apply_preset(Preset::NextL, NUM, schedule.clone());
        let mut s = initial_state(&p, start(seed)).unwrap();
        let mut t = s.clone();
        for n in 0..ITERS {
            let a = cfg.weights.build(&undirected.snapshot(n).unwrap()).unwrap();
            s = sonata_iteration(&s, &cfg, &p, &a, &alphas).unwrap();
            t = sonata_iteration(&t, &next, &p, &a, &alphas).unwrap();
            ds = ds.max(max_gap(&s.x, &t.x));
        }

        // ADD-OPT is CAA SONATA-L with push-sum weights
        let cfg = apply_preset(Preset::AddOpt, NUM, schedule.clone());
        let mut s = initial_state(&p, start(seed)).unwrap();
        let mut r = AddOptState::new(&p, start(seed));
        for n in 0..ITERS {
            let a = cfg.weights.build(&directed.snapshot(n).unwrap()).unwrap();
            s = sonata_iteration(&s, &cfg, &p, &a, &alphas).unwrap();
            r = add_opt_step(&a.entries, &p, &r, ALPHA);
            add_opt = add_opt.max(max_gap(&s.x, &r.x()));
        }

        // Push-DIGing shares the ATC push-sum layout of SONATA-L
        let a_cfg = apply_preset(Preset::SonataL, NUM, schedule.clone());
        let b_cfg = apply_preset(Preset::PushDiGing, NUM, schedule.clone());
        let mut s = initial_state(&p, start(seed)).unwrap();
        let mut t = s.clone();
        for n in 0..ITERS {
            let a = a_cfg.weights.build(&varying.snapshot(n).unwrap()).unwrap();
            s = sonata_iteration(&s, &a_cfg, &p, &a, &alphas).unwrap();
            t = sonata_iteration(&t, &b_cfg, &p, &a, &alphas).unwrap();
            push = push.max(max_gap(&s.x, &t.x));
        }
    }

    // Aug-DGM mixes its tracker after the gradient change: same tracked
    // average and same limit as ATC NEXT-L
    let p = problem(4);
    let seq = GraphSequence::new(GraphModel::StaticUndirected(None), 4, NUM, 1);
    let cfg = apply_preset(Preset::AugDgm, NUM, schedule);
    let mut s = initial_state(&p, start(4)).unwrap();
    let mut r = TrackingState::new(&p, start(4));
    let mut track = 0.0_f64;
    for n in 0..AUG_ITERS {
        let a = cfg.weights.build(&seq.snapshot(n).unwrap()).unwrap();
        s = sonata_iteration(&s, &cfg, &p, &a, &alphas).unwrap();
        r = aug_dgm_step(&a.entries, &p, &r, &alphas);
        let ybar: DVector<f64> = r.y.iter().sum::<DVector<f64>>() / NUM as f64;
        let gbar: DVector<f64> =
            p.costs.iter().zip(&r.x).map(|(c, x)| c.grad(x)).sum::<DVector<f64>>() / NUM as f64;
        track = track.max((ybar - gbar).amax());
    }
    let aug_limit = max_gap(&s.x, &r.x);

    let pass = [next_l, diging, add_opt, ds, push].iter().all(|&g| g <= TOL)
        && track <= AUG_TRACK_TOL
        && aug_limit <= AUG_LIMIT_TOL;
    outcome(
        pass,
        format!(
            "max iterate gaps: NEXT-L {next_l:.1e}, DIGing {diging:.1e}, ADD-OPT {add_opt:.1e}, \
             SONATA-L on doubly stochastic {ds:.1e}, Push-DIGing {push:.1e} (tol {TOL:.0e}); \
             Aug-DGM tracked average {track:.1e} (tol {AUG_TRACK_TOL:.0e}), limit gap {aug_limit:.1e} after {AUG_ITERS} \
             (tol {AUG_LIMIT_TOL:.0e})"
        ),
    )
}

/// Settings shared by the convergence criteria on the sparse regression
/// desk instance.
const DESK_SEED: u64 = 1;
const TAU: f64 = 1.5;
const ALPHA0: f64 = 0.5;
const MU: f64 = 0.01;

fn desk_kinds() -> [(&'static str, SurrogateKind); 2] {
    [
        ("SONATA-L", SurrogateKind::Linearization),
        ("SONATA-PL", SurrogateKind::PartialLinearization),
    ]
}

// 7: M reaches 1e-8, with the best-response consistency bound holding along
// the way.
fn asymptotic_convergence() -> Outcome {
    const ITERS: usize = 5000;
    const TARGET: f64 = 1e-8;
    const CHECK_EVERY: usize = 50;
    const ROUNDING: f64 = 1e-9;
    const TIME_LIMIT: f64 = 60.0;
    let p = desk_regression(DESK_SEED);
    let seq = GraphSequence::new(GraphModel::RingPlusRandom, DESK_SEED, 10, 1);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, kind) in desk_kinds() {
        let spec = SurrogateSpec::new(kind, TAU);
        let cfg = AlgorithmConfig::new(
            spec.clone(),
            StepSizeSchedule::new(StepRule::DiminishingRecursive { alpha0: ALPHA0, mu: MU }),
        );
        let mut opts = RunOptions::new(ITERS, DESK_SEED);
        opts.log_every = 10;
        let (mut checked, mut violated, mut non_finite) = (0usize, 0usize, 0usize);
        let mut worst = 0.0_f64;
        let mut check_time = Duration::ZERO;
        let start = Instant::now();
        let records = run_with_observer(&p, &cfg, &seq, &opts, &mut |v| {
            if v.n % CHECK_EVERY != 0 {
                return;
            }
            let t = Instant::now();
            let e_x = consensus_error(v.state);
            let e_y = tracking_disagreement(v.state);
            for i in 0..p.num_agents() {
                let xi = &v.state.x[i];
                let exact_y = p.smooth_grad(xi) / p.num_agents() as f64;
                let (oracle, slack) = subproblem_with_slack(&spec, &p, i, xi, &exact_y, &v.state.y[i]);
                let gap = (&oracle - &v.x_tilde[i]).norm();
                let bound = best_response_gap_bound(&p, TAU, e_x, e_y) + slack + ROUNDING * (1.0 + oracle.norm());
                checked += 1;
                if !(gap.is_finite() && bound.is_finite()) {
                    non_finite += 1;
                } else if gap > bound {
                    violated += 1;
                    worst = worst.max(gap / bound);
                }
            }
            check_time += t.elapsed();
        })
        .unwrap();
        let run_time = secs(start.elapsed() - check_time);
        let min_m = records.iter().map(|r| r.m).fold(f64::INFINITY, f64::min);
        let reached = records.iter().find(|r| r.m <= TARGET).map(|r| r.iter);
        let last = records.last().unwrap();
        let ok = reached.is_some() && violated == 0 && run_time < TIME_LIMIT;
        pass &= ok;
        parts.push(format!(
            "{name}: M <= {TARGET:.0e} at {}, min M {min_m:.2e}, final M {:.2e}; consistency bound violated {violated}/{checked} \
             (worst ratio {worst:.2}), not evaluable {non_finite}; run {run_time:.1}s (limit {TIME_LIMIT}s)",
            reached.map_or("never".to_string(), |n| format!("iteration {n}")),
            last.m
        ));
    }
    outcome(pass, parts.join("; "))
}

/// Best response at `x` with tracker `exact_y`, plus the inner-solver error
/// allowance on it and on the iterate computed with `tracker_y`.
fn subproblem_with_slack(
    spec: &SurrogateSpec,
    p: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    exact_y: &DVector<f64>,
    tracker_y: &DVector<f64>,
) -> (DVector<f64>, f64) {
    if let Some(z) = closed_form(spec, p, i, x, exact_y) {
        return (z, 0.0);
    }
    let (mu, lip) = subproblem_conditioning(spec, p, i);
    let oracle = solve_subproblem_generic(spec, p, i, x, exact_y, &spec.inner).unwrap();
    let iterate = solve_subproblem_generic(spec, p, i, x, tracker_y, &spec.inner).unwrap();
    let slack = oracle.error_bound(mu, lip) + iterate.error_bound(mu, lip);
    (oracle.z, slack)
}

// 8: with a constant step at the bound, min_{k <= n} M^k decays like 1/n.
fn sublinear_rate() -> Outcome {
    const DIM: usize = 41;
    const ITERS: usize = 300_000;
    const LOG_EVERY: usize = 500;
    const FIT_FROM: usize = 30_000;
    const SLOPE_RANGE: (f64, f64) = (-1.25, -0.75);
    const SIGMA: f64 = 0.5;
    // Hessian spectrum of F log-spaced over [1e-5, 1], split unevenly
    // between the two agents
    let lambda: Vec<f64> = (0..DIM)
        .map(|k| 10f64.powf(-5.0 + 5.0 * k as f64 / (DIM - 1) as f64))
        .collect();
    let costs = (0..2)
        .map(|i| {
            let diag = DVector::from_fn(DIM, |k, _| {
                let share = if (k + i) % 2 == 0 { 0.3 } else { 0.7 };
                (share * lambda[k] / 2.0).sqrt()
            });
            SmoothLocalCost::least_squares(DMatrix::from_diagonal(&diag), DVector::zeros(DIM)).unwrap()
        })
        .collect();
    let p = ProblemInstance::new(costs, Regularizer::none(), ConstraintSet::FullSpace).unwrap();
    let seq = GraphSequence::new(GraphModel::StaticUndirected(None), 0, 2, 1);
    let weights = build_metropolis_weights(&seq.snapshot(0).unwrap()).unwrap();
    let spec = SurrogateSpec::new(SurrogateKind::Linearization, p.lipschitz_max());
    let net = network_constants(2, 1, weights.kappa, true).unwrap();
    let bp = StepBoundParams::from_problem(&p, &spec, net, SIGMA).unwrap();
    let alpha = constant_step_bound(&bp);
    let mut cfg = AlgorithmConfig::new(spec, StepSizeSchedule::new(StepRule::Constant(alpha)));
    cfg.weights = WeightBuilder::Metropolis;
    // consensual start whose error spreads evenly over the spectrum
    let x0 = DVector::from_fn(DIM, |k, _| lambda[k].powf(-0.5));
    let mut opts = RunOptions::new(ITERS, 0);
    opts.log_every = LOG_EVERY;
    opts.x0 = Some(vec![x0; 2]);
    let records = run_with_observer(&p, &cfg, &seq, &opts, &mut |_| {}).unwrap();
    let mut best = f64::INFINITY;
    let mut pts = Vec::new();
    for r in &records {
        best = best.min(r.m);
        if r.iter >= FIT_FROM {
            pts.push(((r.iter as f64).log10(), best.log10()));
        }
    }
    let slope = fit_slope(&pts);
    outcome(
        slope >= SLOPE_RANGE.0 && slope <= SLOPE_RANGE.1,
        format!(
            "alpha = {alpha:.3e} (bound), log-log slope of min M over n in [{FIT_FROM}, {ITERS}] = {slope:.3} \
             (accepted [{}, {}]), min M {best:.2e}",
            SLOPE_RANGE.0, SLOPE_RANGE.1
        ),
    )
}

/// Least-squares slope of `y` on `x`.
fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

// 9: SONATA recovers the leading eigenvector; gradient projection does not
// within the horizon.
fn distributed_pca() -> Outcome {
    const SONATA_TARGET: f64 = 1e-6;
    const BASELINE_FLOOR: f64 = 1e-4;
    let cfg = preset("dpca_synthetic_desk").unwrap().unwrap();
    let summary = simulate(&cfg).unwrap();
    let nmse = |r: &sonata_core::sonata::TraceRecord| r.nmse.unwrap_or(f64::NAN);
    let sonata = &summary.method("sonata-l").unwrap().trials;
    let gp = &summary.method("gradient-projection").unwrap().trials;
    let hits: Vec<Option<usize>> = sonata
        .iter()
        .map(|t| t.iter().find(|r| nmse(r) <= SONATA_TARGET).map(|r| r.iter))
        .collect();
    let gp_min = gp
        .iter()
        .flat_map(|t| t.iter().map(nmse))
        .fold(f64::INFINITY, f64::min);
    let all_hit = hits.iter().all(Option::is_some);
    let latest = hits.iter().flatten().max().copied();
    outcome(
        all_hit && gp_min > BASELINE_FLOOR,
        format!(
            "SONATA-L NMSE <= {SONATA_TARGET:.0e} in {}/{} trials, latest at iteration {} (limit {}); \
             gradient projection min NMSE {gp_min:.2e} (must stay above {BASELINE_FLOOR:.0e})",
            hits.iter().flatten().count(),
            hits.len(),
            latest.map_or("-".to_string(), |n| n.to_string()),
            cfg.n_iters
        ),
    )
}

// 10: messages to reach J <= 1e-2 order SONATA-PL <= SONATA-L < subgradient push.
fn sparse_regression_cost() -> Outcome {
    const THRESHOLD: f64 = 1e-2;
    let cfg = preset("sparse_regression_log_desk").unwrap().unwrap();
    let summary = simulate(&cfg).unwrap();
    let cost = |name: &str| {
        let trials = &summary.method(name).unwrap().trials;
        let total: f64 = trials
            .iter()
            .map(|t| messages_to_reach(t, THRESHOLD).map_or(f64::INFINITY, |m| m as f64))
            .sum();
        let min_j = trials
            .iter()
            .flat_map(|t| t.iter().map(|r| r.j))
            .fold(f64::INFINITY, f64::min);
        (total / trials.len() as f64, min_j)
    };
    let (pl, pl_j) = cost("sonata-pl");
    let (l, l_j) = cost("sonata-l");
    let (sgp, sgp_j) = cost("subgradient-push");
    outcome(
        pl <= l && l < sgp,
        format!(
            "mean messages to J <= {THRESHOLD:.0e} over {} trials: SONATA-PL {pl:.3e}, SONATA-L {l:.3e}, \
             subgradient push {sgp:.3e}; best J reached {pl_j:.2e} / {l_j:.2e} / {sgp_j:.2e}",
            cfg.trials
        ),
    )
}

// 11: V^{n + b_bar} <= V^n along a run with a constant step under the bound.
fn lyapunov_descent() -> Outcome {
    const ITERS: usize = 3000;
    const SIGMA: f64 = 0.5;
    const STEP_FRACTION: f64 = 0.99;
    const TOL: f64 = 1e-9;
    let p = desk_regression(DESK_SEED);
    let seq = GraphSequence::new(GraphModel::StaticUndirected(None), DESK_SEED, 10, 1);
    let kappa = build_metropolis_weights(&seq.snapshot(0).unwrap()).unwrap().kappa;
    let net = network_constants(10, 1, kappa, true).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, kind) in desk_kinds() {
        let spec = SurrogateSpec::new(kind, TAU);
        let bp = StepBoundParams::from_problem(&p, &spec, net.clone(), SIGMA).unwrap();
        let alpha = STEP_FRACTION * constant_step_bound(&bp);
        let mut tracker = LyapunovTracker::new(LyapunovConstants::new(&bp).unwrap());
        let mut cfg = AlgorithmConfig::new(spec, StepSizeSchedule::new(StepRule::Constant(alpha)));
        cfg.weights = WeightBuilder::Metropolis;
        let opts = RunOptions::new(ITERS, DESK_SEED);
        run_with_observer(&p, &cfg, &seq, &opts, &mut |v| {
            tracker.push(LyapunovSample::from_state(&p, v.state, v.x_tilde, v.alphas[0]));
        })
        .unwrap();
        let violations = tracker.descent_violations(TOL).unwrap();
        let b = tracker.constants.b_bar;
        let blocks = ITERS / b - 1;
        let v0 = tracker.value(0).unwrap();
        let v_end = tracker.value((blocks) * b).unwrap();
        pass &= violations.is_empty();
        parts.push(format!(
            "{name}: alpha {alpha:.3e}, b_bar {b}, {} violations in {blocks} blocks, V {v0:.6e} -> {v_end:.6e}",
            violations.len()
        ));
    }
    outcome(pass, format!("{} (tol {TOL:.0e})", parts.join("; ")))
}
