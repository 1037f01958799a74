//! Command implementations. Each returns the text for standard output and
//! writes its artifacts atomically.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{self, HillClimbStudy, LabeledPlay, StudyModel};
use crate::blip::Reward;
use crate::features::{Context, FeatureMap, Layout, TemplateSpec};
use crate::policy::{self, ArgmaxMode, SelectionTrace};
use crate::seed;
use crate::simulator::{
    self, AlgorithmSpec, ExperimentOptions, ExperimentResult, Learner, SimConfig,
};
use crate::snapshot::Snapshot;

use super::config::{self, Experiment};
use super::csv::{self as table, Table};
use super::{CliError, GlobalArgs, SweepParameter};

pub const SUMMARY_SCHEMA: &str = "mvt-summary/1";
pub const REPETITIONS_SCHEMA: &str = "mvt-repetitions/1";
pub const CURVES_SCHEMA: &str = "mvt-curves/1";
pub const HISTORY_SCHEMA: &str = "mvt-history/1";
pub const OBSERVATIONS_SCHEMA: &str = "mvt-observations/1";
pub const SWEEP_SCHEMA: &str = "mvt-sweep/1";
pub const STUDY_SCHEMA: &str = "mvt-hillclimb-study/1";
pub const LRT_SCHEMA: &str = "mvt-lrt/1";
pub const SELECTION_SCHEMA: &str = "mvt-selection/1";

/// Algorithm label used in artifacts: the name, plus the argmax mode when it
/// is not exhaustive.
pub fn label(a: &AlgorithmSpec) -> String {
    match a.argmax {
        ArgmaxMode::Exhaustive => a.algorithm.name().to_string(),
        ArgmaxMode::HillClimb(_) => format!("{}:hill-climb", a.algorithm.name()),
    }
}

fn load_experiment(path: &Path, g: &GlobalArgs) -> Result<Experiment, CliError> {
    let mut e = config::load(path)?;
    if let Some(seed) = g.seed {
        e.sim.seed = seed;
    }
    Ok(e)
}

fn out_dir(e: &Experiment, g: &GlobalArgs) -> Result<PathBuf, CliError> {
    let dir = g
        .out_dir
        .clone()
        .or_else(|| e.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|err| CliError::io(format!("{}: {err}", dir.display())))?;
    Ok(dir)
}

fn experiment(
    e: &Experiment,
    g: &GlobalArgs,
    keep_history: bool,
) -> Result<ExperimentResult, CliError> {
    let opts = ExperimentOptions {
        jobs: g.jobs,
        keep_history,
        curve_stride: e.curve_stride,
    };
    Ok(simulator::run_experiment(&e.sim, &opts)?)
}

fn layout_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn one_based(values: &[usize]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(|v| (v + 1).to_string())
}

pub fn simulate(config: &Path, g: &GlobalArgs) -> Result<String, CliError> {
    let e = load_experiment(config, g)?;
    let dir = out_dir(&e, g)?;
    let keep = e.output.history || e.output.observations;
    let result = experiment(&e, g, keep)?;
    let spec = &e.sim.spec;

    let mut summary = Table::new(
        SUMMARY_SCHEMA,
        &[
            "algorithm",
            "repetitions",
            "mean_final_local_regret",
            "stderr",
            "mean_final_gap",
            "mean_regret",
        ],
    );
    let mut reps = Table::new(
        REPETITIONS_SCHEMA,
        &[
            "algorithm",
            "repetition",
            "final_local_regret",
            "final_gap",
            "regret",
        ],
    );
    let mut curves = Table::new(
        CURVES_SCHEMA,
        &[
            "experiment_id",
            "algorithm",
            "repetition",
            "t",
            "local_regret",
            "regret",
        ],
    );
    let widget_cols = layout_columns("widget", spec.widget_count());
    let ctx_cols = layout_columns("ctx", spec.context_dims());
    let mut history_header = vec!["algorithm".to_string(), "repetition".into(), "t".into()];
    history_header.extend(widget_cols.iter().cloned());
    history_header.extend(ctx_cols.iter().cloned());
    history_header.extend([
        "reward".into(),
        "expected_chosen".into(),
        "expected_optimal".into(),
    ]);
    let history_header: Vec<&str> = history_header.iter().map(String::as_str).collect();
    let mut history = Table::new(HISTORY_SCHEMA, &history_header);

    let experiment_id = format!("seed{}", e.sim.seed);
    let mut stdout = format!(
        "{:<20} {:>12} {:>12}\n",
        "algorithm", "final_local", "stderr"
    );
    for a in &result.algorithms {
        let name = label(&a.algorithm);
        let (mean, se) = a.summary();
        let n = a.repetitions.len() as f64;
        let gap = a.repetitions.iter().map(|r| r.final_gap).sum::<f64>() / n;
        let regret = a.repetitions.iter().map(|r| r.regret).sum::<f64>() / n;
        summary.row([
            name.clone(),
            a.repetitions.len().to_string(),
            mean.to_string(),
            se.to_string(),
            gap.to_string(),
            regret.to_string(),
        ]);
        stdout.push_str(&format!("{name:<20} {mean:>12.6} {se:>12.6}\n"));
        for r in &a.repetitions {
            let rep = r.repetition + 1;
            reps.row([
                name.clone(),
                rep.to_string(),
                r.final_local_regret.to_string(),
                r.final_gap.to_string(),
                r.regret.to_string(),
            ]);
            for p in &r.curve {
                curves.row([
                    experiment_id.clone(),
                    name.clone(),
                    rep.to_string(),
                    p.t.to_string(),
                    p.local_regret.to_string(),
                    p.regret.to_string(),
                ]);
            }
            let Some(h) = &r.history else { continue };
            if e.output.history {
                for s in &h.records {
                    let mut row = vec![name.clone(), rep.to_string(), s.t.to_string()];
                    row.extend(one_based(&s.layout.0));
                    row.extend(one_based(&s.context.0));
                    row.push(format!("{}", s.reward.value()));
                    row.push(s.expected_chosen.to_string());
                    row.push(s.expected_optimal.to_string());
                    history.row(row);
                }
            }
            if e.output.observations {
                let obs = observation_log(
                    spec,
                    h.records
                        .iter()
                        .map(|s| (s.t, &s.layout, &s.context, s.reward)),
                );
                let file = format!("observations_{}_{rep}.csv", name.replace(':', "-"));
                obs.write(&dir.join(file))?;
            }
        }
    }
    summary.write(&dir.join("summary.csv"))?;
    reps.write(&dir.join("repetitions.csv"))?;
    if e.output.curves {
        curves.write(&dir.join("curves.csv"))?;
    }
    if e.output.history {
        history.write(&dir.join("history.csv"))?;
    }
    Ok(stdout)
}

/// Observation log in the format [`lrt`] reads.
pub fn observation_log<'a, I>(spec: &TemplateSpec, plays: I) -> Table
where
    I: IntoIterator<Item = (usize, &'a Layout, &'a Context, Reward)>,
{
    let mut header = vec!["t".to_string()];
    header.extend(layout_columns("widget", spec.widget_count()));
    header.extend(layout_columns("ctx", spec.context_dims()));
    header.push("reward".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(OBSERVATIONS_SCHEMA, &header);
    for (step, layout, ctx, reward) in plays {
        let mut row = vec![step.to_string()];
        row.extend(one_based(&layout.0));
        row.extend(one_based(&ctx.0));
        row.push(format!("{}", reward.value()));
        t.row(row);
    }
    t
}

fn swept(sim: &SimConfig, parameter: SweepParameter, value: f64) -> Result<SimConfig, CliError> {
    let mut cfg = sim.clone();
    match parameter {
        SweepParameter::Alpha2 => cfg.alpha2 = value,
        SweepParameter::Alphac => cfg.alphac = value,
        SweepParameter::N => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(CliError::config(format!(
                    "--values: N must be a positive integer, got {value}"
                )));
            }
            let widgets = vec![value as usize; sim.spec.widget_count()];
            cfg.spec = TemplateSpec::new(widgets, sim.spec.context().to_vec())
                .map_err(|e| CliError::config(format!("--values: N = {value}: {e}")))?;
        }
    }
    cfg.validate()
        .map_err(|e| CliError::config(format!("--values: {} = {value}: {e}", parameter.name())))?;
    Ok(cfg)
}

pub fn sweep(
    config: &Path,
    parameter: SweepParameter,
    values: &[f64],
    g: &GlobalArgs,
) -> Result<String, CliError> {
    let mut e = load_experiment(config, g)?;
    let dir = out_dir(&e, g)?;
    let base = e.sim.clone();
    let mut t = Table::new(
        SWEEP_SCHEMA,
        &[
            "algorithm",
            "parameter",
            "value",
            "mean_regret",
            "stderr",
            "repetitions",
        ],
    );
    let mut stdout = String::new();
    for &v in values {
        e.sim = swept(&base, parameter, v)?;
        let result = experiment(&e, g, false)?;
        for a in &result.algorithms {
            let (mean, se) = a.summary();
            let name = label(&a.algorithm);
            stdout.push_str(&format!(
                "{}={v} {name:<20} {mean:.6} ± {se:.6}\n",
                parameter.name()
            ));
            t.row([
                name,
                parameter.name().to_string(),
                v.to_string(),
                mean.to_string(),
                se.to_string(),
                a.repetitions.len().to_string(),
            ]);
        }
    }
    t.write(&dir.join(format!("sweep_{}.csv", parameter.name())))?;
    Ok(stdout)
}

/// Trains one model per repetition on its own environment, then pools the
/// study trials across the trained models.
pub fn study(e: &Experiment, jobs: usize) -> Result<Vec<HillClimbStudy>, CliError> {
    let slot = e
        .sim
        .algorithms
        .iter()
        .position(|a| a.algorithm.model_kind().is_some())
        .ok_or_else(|| {
            CliError::config("run.algorithms: the study needs a joint-model algorithm")
        })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|err| CliError::runtime(err.to_string()))?;
    pool.install(|| {
        let runs = (0..e.sim.repetitions)
            .into_par_iter()
            .map(|rep| simulator::train_run(&e.sim, rep, slot))
            .collect::<crate::Result<Vec<_>>>()?;
        let maps: Vec<FeatureMap> = runs
            .iter()
            .map(|r| match &r.learner {
                Learner::Joint { map, .. } => map.clone(),
                _ => unreachable!("joint slot"),
            })
            .collect();
        let models: Vec<StudyModel> = runs
            .iter()
            .zip(&maps)
            .map(|(r, map)| StudyModel {
                weights: r.learner.posteriors()[0].means(),
                map,
                truth: &r.truth,
                optimum: &r.optimum,
            })
            .collect();
        analysis::hill_climb_study(&models, &e.study, seed::derive_seed(e.sim.seed, "study", 0))
    })
    .map_err(CliError::from)
}

pub fn hillclimb_study(config: &Path, g: &GlobalArgs) -> Result<String, CliError> {
    let e = load_experiment(config, g)?;
    let dir = out_dir(&e, g)?;
    let rows = study(&e, g.jobs)?;
    let header: Vec<&str> = HillClimbStudy::CSV_HEADER.split(',').collect();
    let mut t = Table::new(STUDY_SCHEMA, &header);
    for r in &rows {
        t.row(r.csv_row().split(','));
    }
    t.write(&dir.join("hillclimb_study.csv"))?;
    Ok(t.as_str().to_string())
}

/// Parses an observation log into labelled plays. Errors carry row numbers.
pub fn read_observations(path: &Path, spec: &TemplateSpec) -> Result<Vec<LabeledPlay>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let (header, rows) = table::read(&text);
    let d = spec.widget_count();
    let l = spec.context_dims();
    let mut expected = vec!["t".to_string()];
    expected.extend(layout_columns("widget", d));
    expected.extend(layout_columns("ctx", l));
    expected.push("reward".into());
    match header {
        None => return Ok(Vec::new()),
        Some(h) if h != expected => {
            return Err(CliError::config(format!(
                "{}: header must be {:?}, got {h:?}",
                path.display(),
                expected.join(",")
            )))
        }
        Some(_) => {}
    }
    let bad =
        |line: usize, msg: String| CliError::config(format!("{}:{line}: {msg}", path.display()));
    let mut plays = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        if fields.len() != expected.len() {
            return Err(bad(
                line,
                format!("expected {} fields, got {}", expected.len(), fields.len()),
            ));
        }
        fields[0].parse::<u64>().map_err(|_| {
            bad(
                line,
                format!("t: not a non-negative integer: {:?}", fields[0]),
            )
        })?;
        let value = |col: usize, card: usize| -> Result<usize, CliError> {
            let v: usize = fields[col].parse().map_err(|_| {
                bad(
                    line,
                    format!("{}: not an integer: {:?}", expected[col], fields[col]),
                )
            })?;
            if v < 1 || v > card {
                return Err(bad(
                    line,
                    format!("{}: {v} is outside 1..={card}", expected[col]),
                ));
            }
            Ok(v - 1)
        };
        let layout = (0..d)
            .map(|i| value(1 + i, spec.widgets()[i]))
            .collect::<Result<Vec<_>, _>>()?;
        let context = (0..l)
            .map(|j| value(1 + d + j, spec.context()[j]))
            .collect::<Result<Vec<_>, _>>()?;
        let reward = match fields[1 + d + l].as_str() {
            "1" => Reward::Success,
            "0" => Reward::Failure,
            other => return Err(bad(line, format!("reward: expected 0 or 1, got {other:?}"))),
        };
        plays.push(LabeledPlay {
            layout: Layout(layout),
            context: Context(context),
            reward,
        });
    }
    Ok(plays)
}

pub fn lrt(
    data: &Path,
    spec: &TemplateSpec,
    restricted: &str,
    full: &str,
    passes: usize,
    g: &GlobalArgs,
) -> Result<String, CliError> {
    let kind = |flag: &str, name: &str| {
        simulator::Algorithm::parse(name)
            .and_then(|a| a.model_kind())
            .ok_or_else(|| CliError::config(format!("--{flag}: {name:?} is not a joint model")))
    };
    let small = kind("restricted", restricted)?;
    let big = kind("full", full)?;
    let plays = read_observations(data, spec)?;
    let r = analysis::compare_models(small, big, spec, &plays, passes)
        .map_err(|e| CliError::config(e.to_string()))?;
    let mut t = Table::new(LRT_SCHEMA, &["comparison", "statistic", "df", "p_value"]);
    t.row([
        format!("{} vs {}", big.name(), small.name()),
        r.statistic.to_string(),
        r.df.to_string(),
        r.p_value.to_string(),
    ]);
    if let Some(dir) = &g.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        t.write(&dir.join("lrt.csv"))?;
    }
    Ok(t.as_str().to_string())
}

pub fn snapshot_save(config: &Path, output: &Path, g: &GlobalArgs) -> Result<String, CliError> {
    let e = load_experiment(config, g)?;
    let run = simulator::train_run(&e.sim, 0, 0)?;
    let snap = Snapshot::from_learner(e.sim.algorithms[0], &e.sim.spec, &run.learner);
    snap.save(output)?;
    Ok(describe(&snap))
}

pub fn snapshot_load(path: &Path) -> Result<String, CliError> {
    Ok(describe(&Snapshot::load(path)?))
}

fn describe(s: &Snapshot) -> String {
    let mut out = format!(
        "algorithm: {}\nwidgets: {:?}\ncontext: {:?}\n",
        label(&s.algorithm),
        s.spec.widgets(),
        s.spec.context()
    );
    if let ArgmaxMode::HillClimb(c) = s.algorithm.argmax {
        out.push_str(&format!(
            "restarts: {}\nmax_steps: {}\n",
            c.restarts, c.max_steps
        ));
    }
    for (k, p) in s.kinds.iter().zip(&s.posteriors) {
        out.push_str(&format!("posterior {}: {} weights\n", k.name(), p.dim()));
    }
    out
}

/// Selection against a decoded snapshot. The trace is present for joint
/// models only.
pub fn select_from(
    snap: &Snapshot,
    context: &Context,
    seed: u64,
) -> Result<(Layout, Option<SelectionTrace>), CliError> {
    let spec = &snap.spec;
    spec.validate_context(context)
        .map_err(|e| CliError::config(format!("--context: {e}")))?;
    let mut rng = seed::stream(seed, "select", 0);
    let learner = snap.learner()?;
    match &learner {
        Learner::Joint {
            map,
            posterior,
            argmax,
        } => {
            let ctx = map.kind().uses_context().then_some(context);
            let (layout, trace) = policy::thompson_select(posterior, map, ctx, argmax, &mut rng)?;
            Ok((layout, Some(trace)))
        }
        other => Ok((other.select(context, &mut rng)?, None)),
    }
}

pub fn select(snapshot: &Path, context: Option<&[usize]>, seed: u64) -> Result<String, CliError> {
    let snap = Snapshot::load(snapshot)?;
    let values = context.unwrap_or(&[]);
    if values.contains(&0) {
        return Err(CliError::config("--context: values are one-based"));
    }
    let ctx = Context(values.iter().map(|v| v - 1).collect());
    let (layout, trace) = select_from(&snap, &ctx, seed)?;
    let mut out = format!("layout: {layout}\n");
    if let Some(trace) = trace {
        out.push_str(&format!(
            "# schema: {SELECTION_SCHEMA}\n{}\n{}\n",
            SelectionTrace::CSV_HEADER,
            trace.csv_row()
        ));
    }
    Ok(out)
}
