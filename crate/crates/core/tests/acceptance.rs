//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its headline numbers. Run with `cargo test --test acceptance`.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::dvector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use pacsynth::abstraction::{
    build_frequentist_mdp, build_imdp, build_states_actions, unique_interval_count,
    ConfidenceMode, ConfidenceReport,
};
use pacsynth::harness::models::builtin_model;
use pacsynth::harness::{monte_carlo, offline_plan, NoiseSampler, SeededRng};
use pacsynth::imdp::{
    improved_synthesis, inner_extreme, robust_value_iteration, BoundSide, Horizon, Imdp,
    ImdpAction, ImdpMeta, Row, Sense, TimeVaryingPolicy,
};
use pacsynth::linsys::GroupedSystem;
use pacsynth::scenario::{
    hoeffding_interval, interval, p_low, p_up, IntervalTable, ProbInterval, TableCache,
};

fn check(criterion: &str, started: Instant, detail: String) {
    println!(
        "ACCEPTANCE {criterion}: PASS ({:.2} s) {detail}",
        started.elapsed().as_secs_f64()
    );
}

/// Criterion 1: printed interval triple at N = 100, beta = 0.01.
#[test]
fn criterion_01_interval_triple() {
    let t = Instant::now();
    let cases = [
        (66usize, 0.174, 0.538),
        (82, 0.063, 0.363),
        (58, 0.239, 0.617),
    ];
    for (n_out, low, up) in cases {
        let iv = interval(100, 0.01, n_out).unwrap();
        assert!(
            (iv.low - low).abs() <= 1e-3,
            "n_out={n_out}: low {} vs {low}",
            iv.low
        );
        assert!(
            (iv.up - up).abs() <= 1e-3,
            "n_out={n_out}: up {} vs {up}",
            iv.up
        );
    }
    assert!(t.elapsed().as_secs_f64() < 1.0, "runtime budget exceeded");
    check("01 interval-triple", t, "three printed intervals within 1e-3".into());
}

/// Criterion 2: tail special cases are exact.
#[test]
fn criterion_02_special_cases() {
    let t = Instant::now();
    for n in [1usize, 10, 1000] {
        for beta in [1e-3, 1e-9] {
            assert_eq!(p_low(n, beta, n, 1e-9).unwrap(), 0.0);
            assert_eq!(p_up(n, beta, 0, 1e-9).unwrap(), 1.0);
        }
    }
    check("02 special-cases", t, "p_low(N,b,N)=0 and p_up(N,b,0)=1 exactly".into());
}

/// Criterion 3: statistical coverage of the PAC interval at the true
/// probability 0.25 (uniform noise on [-4,4], region [-1,1]).
#[test]
fn criterion_03_coverage() {
    let t = Instant::now();
    let n = 100;
    let beta = 0.1;
    let trials = 1000;
    let table = IntervalTable::build(n, beta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(314159);
    let mut covered = 0;
    for _ in 0..trials {
        let n_in = (0..n)
            .filter(|_| {
                let w: f64 = rng.random_range(-4.0..4.0);
                (-1.0..1.0).contains(&w)
            })
            .count();
        let iv = table.row(n - n_in).unwrap();
        if iv.contains(0.25) {
            covered += 1;
        }
    }
    let fraction = covered as f64 / trials as f64;
    let bound = 0.9 - 3.0 * (0.9f64 * 0.1 / trials as f64).sqrt();
    assert!(
        fraction >= bound,
        "coverage {fraction} below {bound} over {trials} trials"
    );
    assert!(t.elapsed().as_secs_f64() < 30.0, "runtime budget exceeded");
    check(
        "03 coverage",
        t,
        format!("coverage {fraction:.3} >= {bound:.3} (target 0.9, 1000 trials)"),
    );
}

/// Criterion 4: tightness crossover against the Hoeffding baseline at
/// N = 800, beta = 1e-9.
#[test]
fn criterion_04_crossover() {
    let t = Instant::now();
    let n = 800;
    let beta = 1e-9;
    let width = |n_out: usize| interval(n, beta, n_out).unwrap().width();
    let hwidth = |n_out: usize| hoeffding_interval(n, beta, n - n_out).unwrap().width();
    assert!(width(0) < hwidth(0), "scenario not tighter at n_out=0");
    assert!(width(n) < hwidth(n), "scenario not tighter at n_out=N");
    assert!(
        hwidth(n / 2) < width(n / 2),
        "hoeffding not tighter at n_out=N/2"
    );
    assert!(t.elapsed().as_secs_f64() < 1.0, "runtime budget exceeded");
    check(
        "04 crossover",
        t,
        format!(
            "widths at 0/400/800: scenario {:.4}/{:.4}/{:.4}, hoeffding {:.4}/{:.4}/{:.4}",
            width(0),
            width(n / 2),
            width(n),
            hwidth(0),
            hwidth(n / 2),
            hwidth(n)
        ),
    );
}

fn random_feasible_row(rng: &mut ChaCha8Rng, m: usize, nv: usize) -> (Row, Vec<f64>) {
    loop {
        let states = {
            let mut s: Vec<usize> = (0..nv).collect();
            s.shuffle(rng);
            let mut s = s[..m].to_vec();
            s.sort_unstable();
            s
        };
        let lows: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
        let scale = rng.random_range(0.1..0.99) / lows.iter().sum::<f64>();
        let mut row = Row::new();
        let mut sum_up = 0.0;
        for (i, &s) in states.iter().enumerate() {
            let low = lows[i] * scale;
            let up = (low + rng.random_range(0.0..0.8)).min(1.0);
            sum_up += up;
            row.push((s, ProbInterval::new(low, up)));
        }
        if sum_up >= 1.0 + 1e-6 {
            // duplicate values now and then to exercise tie-breaking
            let mut values: Vec<f64> = (0..nv).map(|_| rng.random_range(0.0..1.0)).collect();
            if rng.random_bool(0.3) {
                values[1] = values[0];
            }
            return (row, values);
        }
    }
}

/// Exact LP referee for the robust inner problem: enumerate every vertex
/// of the interval simplex (all coordinates at a bound except at most one).
fn lp_oracle(row: &Row, values: &[f64], sense: Sense) -> f64 {
    let m = row.len();
    let mut best = match sense {
        Sense::Min => f64::INFINITY,
        Sense::Max => f64::NEG_INFINITY,
    };
    for free in 0..m {
        for mask in 0..(1u32 << (m - 1)) {
            let mut p = vec![0.0; m];
            let mut used = 0.0;
            let mut bit = 0;
            for i in 0..m {
                if i == free {
                    continue;
                }
                p[i] = if mask & (1 << bit) != 0 {
                    row[i].1.up
                } else {
                    row[i].1.low
                };
                used += p[i];
                bit += 1;
            }
            let rest = 1.0 - used;
            if rest < row[free].1.low - 1e-12 || rest > row[free].1.up + 1e-12 {
                continue;
            }
            p[free] = rest;
            let e: f64 = row.iter().zip(&p).map(|(&(s, _), &pi)| pi * values[s]).sum();
            best = match sense {
                Sense::Min => best.min(e),
                Sense::Max => best.max(e),
            };
        }
    }
    best
}

/// Criterion 5: robust Bellman inner problem equals the LP referee on
/// 10^4 random rows with up to 8 successors.
#[test]
fn criterion_05_inner_problem_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(271828);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let m = rng.random_range(1..=8);
        let (row, values) = random_feasible_row(&mut rng, m, 12);
        for sense in [Sense::Min, Sense::Max] {
            let (e, w) = inner_extreme(&row, &values, sense).unwrap();
            let oracle = lp_oracle(&row, &values, sense);
            let err = (e - oracle).abs();
            worst = worst.max(err);
            assert!(err <= 1e-9, "inner problem off by {err}");
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12, "witness sums to {total}");
        }
    }
    assert!(t.elapsed().as_secs_f64() < 60.0, "runtime budget exceeded");
    check(
        "05 inner-oracle",
        t,
        format!("10^4 rows, both senses, worst |error| = {worst:.2e}"),
    );
}

/// Criterion 6: one-zone thermal model size against the published table:
/// 381 states and 1,511 choices.
#[test]
fn criterion_06_model_size() {
    let t = Instant::now();
    let spec = builtin_model("bas1").unwrap();
    let gsys = GroupedSystem::group_steps(&spec.system, spec.group).unwrap();
    let skeleton = build_states_actions(&spec.partition, &gsys).unwrap();
    assert_eq!(skeleton.num_states(), 381, "state count");
    assert!(t.elapsed().as_secs_f64() < 10.0, "runtime budget exceeded");
    // The published choice count is 1,511. From the benchmark matrices as
    // printed (4 decimals) the exact-containment build gives 1,503; the
    // count is sensitive at the 4th decimal of the dynamics, so the
    // published value is not reproducible from the printed data. Asserted
    // as published; see the test output when it fails.
    assert_eq!(
        skeleton.num_choices(),
        1_511,
        "choice count from the printed 4-decimal matrices (enabled pairs + absorbing self-loop); \
         published value 1,511 requires the authors' full-precision model"
    );
    check(
        "06 model-size",
        t,
        format!(
            "states {} choices {}",
            skeleton.num_states(),
            skeleton.num_choices()
        ),
    );
}

/// Criterion 6 (optional slow part): full drone grid. States reproduce by
/// construction; the published choice count additionally depends on grid
/// data the benchmark source does not print, so it is reported, not
/// asserted.
#[test]
#[ignore = "slow optional check; run with --ignored"]
fn criterion_06_optional_uav_full() {
    let t = Instant::now();
    let spec = builtin_model("uav").unwrap();
    let gsys = GroupedSystem::group_steps(&spec.system, spec.group).unwrap();
    let skeleton = build_states_actions(&spec.partition, &gsys).unwrap();
    assert_eq!(skeleton.num_states(), 25_516, "state count");
    println!(
        "uav full grid: states {} choices {} (published: 25,516 / 1,228,749)",
        skeleton.num_states(),
        skeleton.num_choices()
    );
    check("06-optional uav-size", t, format!("choices {}", skeleton.num_choices()));
}

/// Criterion 7: confidence arithmetic for the orbital-rendezvous grid.
#[test]
fn criterion_07_confidence_arithmetic() {
    let t = Instant::now();
    let spec = builtin_model("satellite").unwrap();
    let beta = ConfidenceReport::beta_for_alpha(
        0.05,
        ConfidenceMode::Symmetric,
        &spec.partition,
        spec.partition.num_cells(),
    );
    let unique = unique_interval_count(
        ConfidenceMode::Symmetric,
        &spec.partition,
        spec.partition.num_cells(),
    );
    assert_eq!(unique, 21 * 45 * 9 * 9 * 9 * 9 + 158_125);
    assert!(
        (beta - 7.86e-9).abs() <= 0.01 * 7.86e-9,
        "beta {beta} not within 1% of 7.86e-9"
    );
    check("07 confidence", t, format!("beta = {beta:.4e} (7.86e-9 within 1%)"));
}

/// Criterion 8: end-to-end soundness at desk scale. 200 repetitions of the
/// 2-D double-integrator reach-avoid problem; each certifies a lower bound
/// from N = 100 samples (alpha <= 0.05) and measures the true closed-loop
/// rate with 10^4 Monte Carlo runs. The certificate may exceed the rate
/// (after 3-standard-error slack) in at most 10% of repetitions, and the
/// non-robust point-estimate baseline must violate at least as often.
#[test]
fn criterion_08_end_to_end_soundness() {
    let t = Instant::now();
    let spec = builtin_model("dintegrator").unwrap();
    let gsys = GroupedSystem::group_steps(&spec.system, spec.group).unwrap();
    let skeleton = build_states_actions(&spec.partition, &gsys).unwrap();
    let s_init = match spec.partition.locate(&spec.x0) {
        pacsynth::geometry::RegionId::Cell(c) => c,
        _ => panic!("x0 outside the domain"),
    };
    let horizon = 8usize; // grouped steps
    let n = 100usize;
    let beta = spec.beta();
    assert!(
        beta * unique_interval_count(ConfidenceMode::Symmetric, &spec.partition, skeleton.actions.len()) as f64
            <= 0.05 + 1e-12
    );
    let table = IntervalTable::build(n, beta).unwrap();
    let reps = 200usize;
    let mc_runs = 10_000usize;
    let master = 777u64;

    let mut interval_violations = 0usize;
    let mut freq_violations = 0usize;
    let mut cert_sum = 0.0;
    let mut rate_sum = 0.0;
    for rep in 0..reps {
        let mut sampler = NoiseSampler::new(&spec.noise, 2).unwrap();
        let mut rng = SeededRng::seed_from_u64(master);
        rng.set_stream(rep as u64 + 1);
        let samples = sampler.draw_batch(n, &gsys, &mut rng).unwrap();

        let (imdp, _) = build_imdp(
            &skeleton,
            &spec.partition,
            &samples,
            &table,
            ConfidenceMode::Symmetric,
            s_init,
        )
        .unwrap();
        let (values, policy) =
            robust_value_iteration(&imdp, Horizon::Finite(horizon), BoundSide::Lower, 1e-9);
        let cert = values[s_init];

        let mdp = build_frequentist_mdp(&skeleton, &spec.partition, &samples, s_init).unwrap();
        let (fvalues, fpolicy) =
            robust_value_iteration(&mdp, Horizon::Finite(horizon), BoundSide::Lower, 1e-9);
        let fcert = fvalues[s_init];

        let mc_seed = master ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mc = monte_carlo(
            &gsys,
            &spec.partition,
            &policy,
            &spec.x0,
            horizon,
            &spec.noise,
            mc_runs,
            mc_seed,
        )
        .unwrap();
        if mc.rate < cert - 3.0 * mc.std_err {
            interval_violations += 1;
        }
        let fmc = monte_carlo(
            &gsys,
            &spec.partition,
            &fpolicy,
            &spec.x0,
            horizon,
            &spec.noise,
            mc_runs,
            mc_seed.wrapping_add(1),
        )
        .unwrap();
        if fmc.rate < fcert - 3.0 * fmc.std_err {
            freq_violations += 1;
        }
        cert_sum += cert;
        rate_sum += mc.rate;
    }
    assert!(
        interval_violations <= reps / 10,
        "interval certificates violated {interval_violations}/{reps} times"
    );
    assert!(
        freq_violations >= interval_violations,
        "frequentist violated {freq_violations} < interval {interval_violations}"
    );
    assert!(t.elapsed().as_secs_f64() < 900.0, "runtime budget exceeded");
    check(
        "08 end-to-end",
        t,
        format!(
            "interval violations {interval_violations}/{reps}, frequentist {freq_violations}/{reps}; \
             mean certified {:.3}, mean empirical {:.3}",
            cert_sum / reps as f64,
            rate_sum / reps as f64
        ),
    );
}

/// The four-state illustration of the aggregation scheme: a goal state,
/// two intermediate states with tight goal intervals, and a critical state.
fn aggregation_toy() -> Imdp {
    let iv = |low, up| ProbInterval::new(low, up);
    Imdp::new(
        4,
        1,
        vec![true, false, false, false],
        vec![false, false, false, true],
        None,
        vec![
            ImdpAction {
                id: 0,
                enabled_in: vec![1],
                row: Arc::new(vec![(0, iv(0.92, 0.95)), (2, iv(0.05, 0.08))]),
            },
            ImdpAction {
                id: 1,
                enabled_in: vec![2],
                row: Arc::new(vec![(0, iv(0.80, 0.85)), (1, iv(0.15, 0.20))]),
            },
            ImdpAction {
                id: 2,
                enabled_in: vec![3],
                row: Arc::new(vec![(2, iv(0.5, 0.6)), (3, iv(0.4, 0.5))]),
            },
        ],
        ImdpMeta::default(),
    )
    .unwrap()
}

/// Criterion 9: the aggregation scheme is a sound under-approximation,
/// exact once the bins separate every distinct value.
#[test]
fn criterion_09_aggregation_soundness() {
    let t = Instant::now();

    // toy model, K = 2: distinct values stay >= 0.08 apart, so rho = 100
    // (more bins than distinct values) is lossless
    let toy = aggregation_toy();
    let k = 2;
    let (exact, _) = robust_value_iteration(&toy, Horizon::Finite(k), BoundSide::Lower, 1e-9);
    for rho in [2usize, 10, 100] {
        let (agg, _, _) = improved_synthesis(&toy, k, rho).unwrap();
        for s in 0..4 {
            assert!(
                agg[s] <= exact[s] + 1e-12,
                "toy rho={rho}: {} > {} at state {s}",
                agg[s],
                exact[s]
            );
        }
        if rho == 100 {
            for s in 0..4 {
                assert!(
                    (agg[s] - exact[s]).abs() <= 1e-12,
                    "toy rho=100 should be lossless, state {s}: {} vs {}",
                    agg[s],
                    exact[s]
                );
            }
        }
    }

    // 2-D desk model
    let spec = builtin_model("dintegrator").unwrap();
    let gsys = GroupedSystem::group_steps(&spec.system, spec.group).unwrap();
    let skeleton = build_states_actions(&spec.partition, &gsys).unwrap();
    let s_init = match spec.partition.locate(&spec.x0) {
        pacsynth::geometry::RegionId::Cell(c) => c,
        _ => unreachable!(),
    };
    let n = 200;
    let table = IntervalTable::build(n, spec.beta()).unwrap();
    let mut sampler = NoiseSampler::new(&spec.noise, 2).unwrap();
    let mut rng = SeededRng::seed_from_u64(4242);
    rng.set_stream(1);
    let samples = sampler.draw_batch(n, &gsys, &mut rng).unwrap();
    let (m, _) = build_imdp(
        &skeleton,
        &spec.partition,
        &samples,
        &table,
        ConfidenceMode::Symmetric,
        s_init,
    )
    .unwrap();
    let k = 8;
    let (exact, _) = robust_value_iteration(&m, Horizon::Finite(k), BoundSide::Lower, 1e-9);
    for rho in [2usize, 10, 100] {
        let (agg, _, _) = improved_synthesis(&m, k, rho).unwrap();
        for s in 0..m.num_states() {
            assert!(
                agg[s] <= exact[s] + 1e-12,
                "desk rho={rho}: {} > {} at state {s}",
                agg[s],
                exact[s]
            );
        }
    }
    // lossless once bins separate all distinct values at every depth
    let mut min_gap = f64::INFINITY;
    for depth in 1..=k {
        let (v, _) = robust_value_iteration(&m, Horizon::Finite(depth), BoundSide::Lower, 1e-9);
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in sorted.windows(2) {
            let gap = pair[1] - pair[0];
            if gap > 1e-12 {
                min_gap = min_gap.min(gap);
            }
        }
    }
    let rho_star = (1.0 / min_gap).ceil() as usize + 1;
    let (agg, _, _) = improved_synthesis(&m, k, rho_star).unwrap();
    for s in 0..m.num_states() {
        assert!(
            (agg[s] - exact[s]).abs() <= 1e-9,
            "desk rho*={rho_star} should be lossless at state {s}: {} vs {}",
            agg[s],
            exact[s]
        );
    }
    assert!(t.elapsed().as_secs_f64() < 60.0, "runtime budget exceeded");
    check(
        "09 aggregation",
        t,
        format!("sound for rho in {{2,10,100}}; lossless at rho* = {rho_star} (min gap {min_gap:.2e})"),
    );
}

/// Criterion 10: certified lower bounds grow with the horizon on the
/// one-zone thermal model, saturating by K = 16.
#[test]
fn criterion_10_horizon_monotonicity() {
    let t = Instant::now();
    let spec = builtin_model("bas1").unwrap();
    let gsys = GroupedSystem::group_steps(&spec.system, spec.group).unwrap();
    let skeleton = build_states_actions(&spec.partition, &gsys).unwrap();
    let s_init = match spec.partition.locate(&spec.x0) {
        pacsynth::geometry::RegionId::Cell(c) => c,
        _ => unreachable!(),
    };
    let n = 1600;
    let beta = 0.01;
    let table = IntervalTable::build(n, beta).unwrap();
    let mut sampler = NoiseSampler::new(&spec.noise, 2).unwrap();
    let mut rng = SeededRng::seed_from_u64(99);
    rng.set_stream(1);
    let samples = sampler.draw_batch(n, &gsys, &mut rng).unwrap();
    let (m, _) = build_imdp(
        &skeleton,
        &spec.partition,
        &samples,
        &table,
        ConfidenceMode::Symmetric,
        s_init,
    )
    .unwrap();

    let mut values = Vec::new();
    for k in [4usize, 8, 16] {
        let (v, _) = robust_value_iteration(&m, Horizon::Finite(k), BoundSide::Lower, 1e-9);
        values.push(v[s_init]);
    }
    let (v_inf, _) = robust_value_iteration(&m, Horizon::Infinite, BoundSide::Lower, 1e-6);
    values.push(v_inf[s_init]);

    for pair in values.windows(2) {
        assert!(
            pair[1] >= pair[0] - 1e-9,
            "lower bound decreased along the horizon: {values:?}"
        );
    }
    let gap = values[3] - values[2];
    assert!(
        gap <= 0.05,
        "K=16 vs infinite-horizon gap {gap} exceeds 0.05 ({values:?})"
    );
    assert!(t.elapsed().as_secs_f64() < 120.0, "runtime budget exceeded");
    check(
        "10 horizon",
        t,
        format!(
            "Pr_low at K=4/8/16/inf: {:.4}/{:.4}/{:.4}/{:.4} (gap {:.4})",
            values[0], values[1], values[2], values[3], gap
        ),
    );
}

/// Supporting check used by the soundness criterion: a full offline run on
/// the desk model certifies and its policy simulates consistently.
#[test]
fn offline_loop_on_desk_model_is_consistent() {
    let t = Instant::now();
    let mut spec = builtin_model("dintegrator").unwrap();
    spec.eta = 0.1;
    let cache = TableCache::new();
    let out = offline_plan(&spec, &cache, 5).unwrap();
    assert_eq!(out.report.verdict, pacsynth::harness::Verdict::Certified);
    let policy = out.policy.as_ref().unwrap();
    assert!(matches!(policy, TimeVaryingPolicy::Finite(_)));
    let mc = monte_carlo(
        &out.gsys,
        &spec.partition,
        policy,
        &spec.x0,
        8,
        &spec.noise,
        2000,
        5,
    )
    .unwrap();
    let last = out.report.iterations.last().unwrap();
    assert!(
        mc.rate >= last.pr_low_init - 3.0 * mc.std_err - 0.02,
        "empirical {} far below certified {}",
        mc.rate,
        last.pr_low_init
    );
    check(
        "supporting offline-loop",
        t,
        format!("certified {:.3}, empirical {:.3}", last.pr_low_init, mc.rate),
    );
}
