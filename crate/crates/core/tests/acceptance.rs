//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! values. Failures are reported, not hidden; set `MVT_ACCEPTANCE_STRICT=1`
//! to also turn them into a non-zero exit status.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mvt::analysis::{
    self, hill_climb_study, paired_one_sided_p, LabeledPlay, StudyGrid, StudyModel,
};
use mvt::blip::{GaussianPosterior, Observation, Reward};
use mvt::cli::{commands, GlobalArgs};
use mvt::features::{Context, FeatureMap, FeatureVector, Layout, ModelKind, TemplateSpec};
use mvt::policy::{exhaustive_argmax, hill_climb, is_local_optimum, ArgmaxMode, HillClimbConfig};
use mvt::seed;
use mvt::simulator::{
    self, run_experiment, Algorithm, AlgorithmSpec, ExperimentOptions, ExperimentResult, SimConfig,
};
use mvt::snapshot::Snapshot;

const SEED: u64 = 20_240_601;

const KINDS: [ModelKind; 5] = [
    ModelKind::Mvt1,
    ModelKind::Mvt2,
    ModelKind::Mvt2c,
    ModelKind::Mvt3,
    ModelKind::NdMab,
];

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

fn uniform(d: usize, n: usize) -> TemplateSpec {
    TemplateSpec::uniform(d, n).unwrap()
}

fn experiment(
    spec: TemplateSpec,
    a2: f64,
    ac: f64,
    horizon: usize,
    reps: usize,
    algos: &[Algorithm],
) -> ExperimentResult {
    let mut cfg = SimConfig::new(spec);
    cfg.alpha1 = 1.0;
    cfg.alpha2 = a2;
    cfg.alphac = ac;
    cfg.horizon = horizon;
    cfg.repetitions = reps;
    cfg.seed = SEED;
    cfg.algorithms = algos
        .iter()
        .map(|&a| AlgorithmSpec::exhaustive(a))
        .collect();
    run_experiment(&cfg, &ExperimentOptions::default()).unwrap()
}

fn finals(r: &ExperimentResult, a: Algorithm) -> Vec<f64> {
    r.get(a).unwrap().final_local_regrets()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// 1. Single-feature ADF update against quadrature posterior moments.
fn adf_matches_quadrature() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for i in 0..13 {
        let mu = -3.0 + 0.5 * i as f64;
        for j in 0..10 {
            let var = 0.01 * 100f64.powf(j as f64 / 9.0);
            for reward in [Reward::Success, Reward::Failure] {
                let post = GaussianPosterior::from_parts(vec![mu], vec![var]).unwrap();
                let obs = Observation::new(FeatureVector::new(vec![0], 1).unwrap(), reward);
                let up = post.updated(&obs).unwrap();
                let (m, v) = common::probit_posterior_moments(mu, var, reward.sign());
                let em = (up.means()[0] - m).abs() / m.abs().max(var.sqrt());
                let ev = (up.variances()[0] - v).abs() / v;
                worst = worst.max(em).max(ev);
                points += 1;
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{points} points, worst relative error {worst:.2e} (tol 1e-8)"),
    )
}

/// 2. Hill climbing with S=5, K=18 on sampled MVT2 weights.
fn hill_climb_finds_argmax() -> Outcome {
    let spec = uniform(3, 8);
    let map = FeatureMap::new(ModelKind::Mvt2, &spec).unwrap();
    let prior = GaussianPosterior::prior(map.dim());
    let cfg = HillClimbConfig::new(5, 18, true).unwrap();
    let mut hits = 0;
    let mut local = 0;
    let n = 100;
    for i in 0..n {
        let mut rng = seed::stream(SEED, "acceptance-hill-climb", i);
        let w = prior.sample_weights(&mut rng);
        let (_, best) = exhaustive_argmax(w.values(), &map, None, 1000).unwrap();
        let (layout, trace) = hill_climb(w.values(), &map, None, &cfg, &mut rng);
        if trace.score >= best - 1e-12 * best.abs().max(1.0) {
            hits += 1;
        }
        if is_local_optimum(w.values(), &map, &layout, None, 1e-12) {
            local += 1;
        }
    }
    let rate = hits as f64 / n as f64;
    outcome(
        rate >= 0.85 && local == n,
        format!("exhaustive argmax in {hits}/{n} (need >= 85%), local optimum in {local}/{n}"),
    )
}

/// 3. Trained-model hill-climb study: 10 environments, 100 climbs each.
fn trained_model_study() -> Outcome {
    let spec = uniform(3, 8);
    let mut cfg = SimConfig::new(spec.clone());
    cfg.alpha2 = 1.0;
    cfg.horizon = 100_000;
    cfg.repetitions = 10;
    cfg.seed = SEED;
    cfg.algorithms = vec![AlgorithmSpec {
        algorithm: Algorithm::Mvt2,
        argmax: ArgmaxMode::HillClimb(HillClimbConfig::for_spec(&spec)),
    }];
    let runs: Vec<_> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| simulator::train_run(&cfg, rep, 0).unwrap())
        .collect();
    let map = FeatureMap::new(ModelKind::Mvt2, &spec).unwrap();
    let models: Vec<StudyModel> = runs
        .iter()
        .map(|r| StudyModel {
            weights: r.learner.posteriors()[0].means(),
            map: &map,
            truth: &r.truth,
            optimum: &r.optimum,
        })
        .collect();
    let grid = StudyGrid {
        max_steps: vec![18],
        restarts: vec![1],
        trials: 1000,
        early_stop: true,
    };
    let s = hill_climb_study(&models, &grid, seed::derive_seed(SEED, "study", 0)).unwrap()[0];
    let steps_ok = (4.0..=9.0).contains(&s.mean_steps);
    let p_ok = (0.25..=0.45).contains(&s.p_global);
    let regret_ok = s.mean_regret_converged * 2.0 <= s.mean_regret_random;
    outcome(
        steps_ok && p_ok && regret_ok,
        format!(
            "steps {:.2} ± {:.2} [4,9] {}; p_global {:.3} [0.25,0.45] {}; regret random {:.4} -> converged {:.4} (factor {:.1}) {}",
            s.mean_steps,
            s.sd_steps,
            ok(steps_ok),
            s.p_global,
            ok(p_ok),
            s.mean_regret_random,
            s.mean_regret_converged,
            s.mean_regret_random / s.mean_regret_converged,
            ok(regret_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISS"
    }
}

/// 4. Interaction-strength ordering of MVT1 and MVT2.
fn interaction_ordering() -> Outcome {
    let algos = [Algorithm::Mvt1, Algorithm::Mvt2];
    let strong = experiment(uniform(3, 8), 2.0, 0.0, 50_000, 10, &algos);
    let (m1, m2) = (
        finals(&strong, Algorithm::Mvt1),
        finals(&strong, Algorithm::Mvt2),
    );
    let diffs: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| a - b).collect();
    let p = paired_one_sided_p(&diffs);
    let none = experiment(uniform(3, 8), 0.0, 0.0, 50_000, 10, &algos);
    let (n1, n2) = (
        mean(&finals(&none, Algorithm::Mvt1)),
        mean(&finals(&none, Algorithm::Mvt2)),
    );
    let strong_ok = p < 0.05;
    let none_ok = n1 <= n2;
    outcome(
        strong_ok && none_ok,
        format!(
            "α2=2: MVT1 {:.4} vs MVT2 {:.4}, one-sided p {:.4} {}; α2=0: MVT1 {:.4} <= MVT2 {:.4} {}",
            mean(&m1),
            mean(&m2),
            p,
            ok(strong_ok),
            n1,
            n2,
            ok(none_ok)
        ),
    )
}

/// 5. Regret degradation from N=2 to N=8.
fn layout_space_degradation() -> Outcome {
    let algos = [Algorithm::Mvt2, Algorithm::NdMab];
    let small = experiment(uniform(3, 2), 1.0, 0.0, 50_000, 10, &algos);
    let large = experiment(uniform(3, 8), 1.0, 0.0, 50_000, 10, &algos);
    let deg = |a| mean(&finals(&large, a)) - mean(&finals(&small, a));
    let (nd, mvt2) = (deg(Algorithm::NdMab), deg(Algorithm::Mvt2));
    // expected-gap degradation is reported alongside; it carries no reward noise
    let gaps = |r: &ExperimentResult, a| {
        mean(
            &r.get(a)
                .unwrap()
                .repetitions
                .iter()
                .map(|x| x.final_gap)
                .collect::<Vec<_>>(),
        )
    };
    let gap_deg = |a| gaps(&large, a) - gaps(&small, a);
    outcome(
        nd > mvt2,
        format!(
            "degradation ND_MAB {nd:.4} vs MVT2 {mvt2:.4}; expected-gap degradation ND_MAB {:.4} vs MVT2 {:.4}",
            gap_deg(Algorithm::NdMab),
            gap_deg(Algorithm::Mvt2)
        ),
    )
}

/// 6. Context crossover.
fn context_crossover() -> Outcome {
    let spec = TemplateSpec::new(vec![4, 4, 4], vec![4]).unwrap();
    let algos = [Algorithm::Mvt2, Algorithm::Mvt2c];
    let at = |ac: f64| {
        let r = experiment(spec.clone(), 1.0, ac, 50_000, 10, &algos);
        let (a, c) = (finals(&r, Algorithm::Mvt2), finals(&r, Algorithm::Mvt2c));
        let diffs: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x - y).collect();
        (mean(&a), mean(&c), paired_one_sided_p(&diffs))
    };
    let (s2, s2c, sp) = at(2.0);
    let (z2, z2c, zp) = at(0.0);
    let strong_ok = s2c < s2;
    let absent_ok = !(z2c < z2 && zp < 0.05);
    outcome(
        strong_ok && absent_ok,
        format!(
            "αc=2: MVT2c {s2c:.4} < MVT2 {s2:.4} (p {sp:.4}) {}; αc=0: MVT2c {z2c:.4} vs MVT2 {z2:.4} (p {zp:.4}) {}",
            ok(strong_ok),
            ok(absent_ok)
        ),
    )
}

fn synthetic_log(alpha2: f64, t: usize, index: u64) -> Vec<LabeledPlay> {
    let spec = uniform(3, 8);
    let mut cfg = SimConfig::new(spec.clone());
    cfg.alpha2 = alpha2;
    let mut rng = seed::stream(SEED, &format!("lrt-{alpha2}"), index);
    let truth = simulator::make_truth(&cfg, &mut rng).unwrap();
    (0..t)
        .map(|_| {
            let layout = Layout(
                spec.widgets()
                    .iter()
                    .map(|&n| rng.random_range(0..n))
                    .collect(),
            );
            let context = Context(Vec::new());
            let reward = simulator::step(&truth, &layout, &context, &mut rng);
            LabeledPlay {
                layout,
                context,
                reward,
            }
        })
        .collect()
}

fn rejection_rate(alpha2: f64, datasets: u64, t: usize) -> f64 {
    let spec = uniform(3, 8);
    let rejected: usize = (0..datasets)
        .into_par_iter()
        .map(|i| {
            let data = synthetic_log(alpha2, t, i);
            let r = analysis::compare_models(
                ModelKind::Mvt1,
                ModelKind::Mvt2,
                &spec,
                &data,
                analysis::DEFAULT_LRT_PASSES,
            )
            .unwrap();
            usize::from(r.p_value < 0.05)
        })
        .sum();
    rejected as f64 / datasets as f64
}

/// 7. LRT size and power.
fn lrt_calibration() -> Outcome {
    let size = rejection_rate(0.0, 200, 20_000);
    let power = rejection_rate(2.0, 100, 20_000);
    let size_ok = (0.01..=0.12).contains(&size);
    let power_ok = power >= 0.8;
    outcome(
        size_ok && power_ok,
        format!(
            "α2=0 rejection {size:.3} over 200 logs [0.01,0.12] {}; α2=2 power {power:.2} over 100 logs (>= 0.8) {}",
            ok(size_ok),
            ok(power_ok)
        ),
    )
}

fn random_spec(rng: &mut ChaCha8Rng) -> TemplateSpec {
    let d = rng.random_range(1..=4);
    let widgets = (0..d).map(|_| rng.random_range(1..=4)).collect();
    let l = rng.random_range(1..=2);
    let context = (0..l).map(|_| rng.random_range(1..=3)).collect();
    TemplateSpec::new(widgets, context).unwrap()
}

/// 8. Property suite.
fn properties() -> Outcome {
    let mut failures = Vec::new();

    // expected per-step regret is non-negative for every algorithm
    let spec = TemplateSpec::new(vec![3, 2, 3], vec![2]).unwrap();
    let mut cfg = SimConfig::new(spec.clone());
    cfg.alpha2 = 1.0;
    cfg.alphac = 1.0;
    cfg.horizon = 3000;
    cfg.batch_period = 100;
    cfg.seed = SEED;
    let mut negative = 0;
    let mut steps = 0;
    cfg.algorithms = Algorithm::ALL
        .iter()
        .map(|&a| AlgorithmSpec::exhaustive(a))
        .collect();
    for slot in 0..Algorithm::ALL.len() {
        let run = simulator::train_run(&cfg, 0, slot).unwrap();
        for s in &run.history.records {
            steps += 1;
            if s.gap() < 0.0 {
                negative += 1;
            }
        }
    }
    if negative > 0 {
        failures.push(format!(
            "{negative}/{steps} steps with negative expected regret"
        ));
    }

    // ADF updates never increase a variance
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let map = FeatureMap::new(ModelKind::Mvt2c, &spec).unwrap();
    let mut post = GaussianPosterior::prior(map.dim());
    let mut increases = 0;
    for _ in 0..2000 {
        let layout = Layout(
            spec.widgets()
                .iter()
                .map(|&n| rng.random_range(0..n))
                .collect(),
        );
        let ctx = Context(vec![rng.random_range(0..2)]);
        let obs = Observation::new(
            map.build(&layout, Some(&ctx)).unwrap(),
            Reward::from_bool(rng.random()),
        );
        let next = post.updated(&obs).unwrap();
        increases += next
            .variances()
            .iter()
            .zip(post.variances())
            .filter(|(a, b)| a > b)
            .count();
        post = next;
    }
    if increases > 0 {
        failures.push(format!("{increases} variance increases"));
    }

    // every restart ends at least as high as it starts
    let big = uniform(4, 6);
    let map = FeatureMap::new(ModelKind::Mvt3, &big).unwrap();
    let mut descents = 0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..map.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let cfg = HillClimbConfig::new(3, rng.random_range(1..30), rng.random()).unwrap();
        let (layout, trace) = hill_climb(&w, &map, None, &cfg, &mut rng);
        descents += trace
            .restarts
            .iter()
            .filter(|r| r.final_score < r.initial_score)
            .count();
        if (map.score(&w, &layout, None) - trace.score).abs() > 1e-9 {
            descents += 1;
        }
    }
    if descents > 0 {
        failures.push(format!("{descents} non-monotone climbs"));
    }

    // index <-> descriptor bijection
    let mut broken = 0;
    for _ in 0..50 {
        let s = random_spec(&mut rng);
        for kind in KINDS {
            let Ok(map) = FeatureMap::new(kind, &s) else {
                broken += 1;
                continue;
            };
            for i in 0..map.dim() {
                let back = map.descriptor_of(i).and_then(|d| map.index_of(&d));
                if back != Ok(i) {
                    broken += 1;
                }
            }
            if map.descriptor_of(map.dim()).is_ok() {
                broken += 1;
            }
        }
    }
    if broken > 0 {
        failures.push(format!("{broken} bijection violations"));
    }

    // byte-identical reruns of simulate
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "[template]\nwidgets = [3, 3]\ncontext = [2]\n\n[environment]\nalpha2 = 1.0\nalphac = 1.0\nseed = 9\n\n[run]\nhorizon = 4000\nbatch_period = 200\nrepetitions = 3\nalgorithms = [\"MVT1\", \"MVT2c:hill-climb\", \"D_MABS\"]\nwindow = 500\n\n[output]\nhistory = true\nobservations = true\n",
    )
    .unwrap();
    let run_into = |name: &str, jobs: usize| {
        let out = dir.path().join(name);
        let g = GlobalArgs {
            out_dir: Some(out.clone()),
            jobs,
            ..GlobalArgs::default()
        };
        commands::simulate(&config, &g).unwrap();
        out
    };
    let (a, b) = (run_into("a", 1), run_into("b", 0));
    let differing = compare_dirs(&a, &b);
    if differing > 0 {
        failures.push(format!("{differing} artifacts differ between reruns"));
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!(
            "regret >= 0 on {steps} steps, no variance increase, monotone climbs, bijection on 50 specs x 5 kinds, identical reruns"
        )
    } else {
        failures.join("; ")
    };
    outcome(pass, detail)
}

fn compare_dirs(a: &Path, b: &Path) -> usize {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut differing = 0;
    for n in &names {
        if std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).ok().unwrap_or_default() {
            differing += 1;
        }
    }
    differing + std::fs::read_dir(b).unwrap().count().abs_diff(names.len())
}

/// 9. Select latency on the 48-layout snapshot.
fn select_latency() -> Outcome {
    let spec = TemplateSpec::new(vec![2, 3, 2, 2, 2], vec![]).unwrap();
    let algo = AlgorithmSpec {
        algorithm: Algorithm::Mvt2,
        argmax: ArgmaxMode::HillClimb(HillClimbConfig::new(5, 18, true).unwrap()),
    };
    let mut cfg = SimConfig::new(spec.clone());
    cfg.alpha2 = 1.0;
    cfg.horizon = 20_000;
    cfg.seed = SEED;
    cfg.algorithms = vec![algo];
    let run = simulator::train_run(&cfg, 0, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.snap");
    Snapshot::from_learner(algo, &spec, &run.learner)
        .save(&path)
        .unwrap();

    let mut times: Vec<Duration> = (0..1000u64)
        .map(|i| {
            let t = Instant::now();
            let out = commands::select(&path, None, i).unwrap();
            let dt = t.elapsed();
            assert!(out.starts_with("layout: "));
            dt
        })
        .collect();
    times.sort();
    let median = times[times.len() / 2];
    outcome(
        median < Duration::from_millis(10),
        format!(
            "median {:.3} ms over 1000 calls (p99 {:.3} ms)",
            ms(median),
            ms(times[989])
        ),
    )
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("single-feature ADF vs quadrature", adf_matches_quadrature),
        ("hill climb S=5 K=18 finds argmax", hill_climb_finds_argmax),
        ("trained-model hill-climb study", trained_model_study),
        ("interaction ordering MVT1/MVT2", interaction_ordering),
        ("layout-space degradation", layout_space_degradation),
        ("context crossover MVT2c/MVT2", context_crossover),
        ("LRT size and power", lrt_calibration),
        ("property suite", properties),
        ("select latency", select_latency),
    ];
    // numeric arguments select criteria by number; none runs all
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {}. {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 && std::env::var_os("MVT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
