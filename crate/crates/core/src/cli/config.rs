//! Experiment files: TOML with `[template]`, `[environment]`, `[run]`,
//! `[output]` and `[study]` sections. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::StudyGrid;
use crate::features::TemplateSpec;
use crate::policy::{ArgmaxMode, HillClimbConfig};
use crate::simulator::{Algorithm, AlgorithmSpec, SimConfig, DEFAULT_WINDOW};

use super::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub template: TemplateSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub study: StudySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSection {
    pub widgets: Vec<i64>,
    #[serde(default)]
    pub context: Vec<i64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alphac: f64,
    pub seed: u64,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 0.0,
            alphac: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub horizon: i64,
    pub batch_period: i64,
    pub repetitions: i64,
    /// Names such as `"MVT2"`, optionally suffixed `:exhaustive` or
    /// `:hill-climb` to override `argmax` for that entry.
    pub algorithms: Vec<String>,
    /// `"exhaustive"` or `"hill-climb"`.
    pub argmax: String,
    pub restarts: Option<i64>,
    pub max_steps: Option<i64>,
    pub early_stop: bool,
    pub window: i64,
    pub curve_stride: Option<i64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: 250_000,
            batch_period: 1000,
            repetitions: 15,
            algorithms: vec!["MVT2".into()],
            argmax: "exhaustive".into(),
            restarts: None,
            max_steps: None,
            early_stop: true,
            window: DEFAULT_WINDOW as i64,
            curve_stride: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    /// Per-step history of every run.
    pub history: bool,
    /// Moving-window regret curves.
    pub curves: bool,
    /// One observation log per run, in the format `lrt` reads.
    pub observations: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            history: false,
            curves: true,
            observations: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub k_grid: Vec<i64>,
    pub s_grid: Vec<i64>,
    pub trials: i64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            k_grid: vec![1, 2, 3, 4, 6, 8, 10, 12, 15, 18],
            s_grid: vec![1],
            trials: 1000,
        }
    }
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sim: SimConfig,
    pub output: OutputSection,
    pub curve_stride: usize,
    pub study: StudyGrid,
}

/// Source text plus origin, for line-anchored diagnostics.
pub struct Source<'a> {
    pub path: &'a Path,
    pub text: &'a str,
}

impl Source<'_> {
    /// Line of `key` inside `[section]`, falling back to the section header.
    fn line_of(&self, section: &str, key: Option<&str>) -> Option<usize> {
        let header = format!("[{section}]");
        let mut in_section = false;
        let mut header_line = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                in_section = line.split('#').next().map(str::trim) == Some(header.as_str());
                if in_section {
                    header_line = Some(i + 1);
                }
                continue;
            }
            if let (true, Some(key)) = (in_section, key) {
                if let Some((lhs, _)) = line.split_once('=') {
                    if lhs.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        header_line
    }

    pub fn field_error(&self, field: &str, msg: impl std::fmt::Display) -> CliError {
        let (section, key) = match field.split_once('.') {
            Some((s, k)) => (s, Some(k.split(['[', '.']).next().unwrap_or(k))),
            None => (field, None),
        };
        let line = self.line_of(section, key).unwrap_or(1);
        CliError::config(format!("{}:{line}: {field}: {msg}", self.path.display()))
    }
}

pub fn parse(path: &Path, text: &str) -> Result<Experiment, CliError> {
    let src = Source { path, text };
    let file: ExperimentFile = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(1);
        CliError::config(format!("{}:{line}: {}", path.display(), e.message()))
    })?;
    validate(&src, file)
}

pub fn load(path: &Path) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse(path, &text)
}

fn positive(src: &Source, field: &str, v: i64) -> Result<usize, CliError> {
    if v <= 0 {
        return Err(src.field_error(field, format!("must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn dims(src: &Source, field: &str, v: &[i64]) -> Result<Vec<usize>, CliError> {
    v.iter()
        .enumerate()
        .map(|(i, &d)| {
            if d < 1 {
                Err(src.field_error(
                    &format!("{field}[{i}]"),
                    format!("must be at least 1, got {d}"),
                ))
            } else {
                Ok(d as usize)
            }
        })
        .collect()
}

fn argmax_mode(
    src: &Source,
    field: &str,
    name: &str,
    run: &RunSection,
    spec: &TemplateSpec,
) -> Result<ArgmaxMode, CliError> {
    match name {
        "exhaustive" => Ok(ArgmaxMode::Exhaustive),
        "hill-climb" => {
            let d = HillClimbConfig::for_spec(spec);
            let restarts = match run.restarts {
                Some(s) => positive(src, "run.restarts", s)?,
                None => d.restarts,
            };
            let max_steps = match run.max_steps {
                Some(k) => positive(src, "run.max_steps", k)?,
                None => d.max_steps,
            };
            HillClimbConfig::new(restarts, max_steps, run.early_stop)
                .map(ArgmaxMode::HillClimb)
                .map_err(|e| src.field_error(field, e))
        }
        other => Err(src.field_error(
            field,
            format!("unknown argmax mode {other:?} (expected \"exhaustive\" or \"hill-climb\")"),
        )),
    }
}

fn validate(src: &Source, f: ExperimentFile) -> Result<Experiment, CliError> {
    let widgets = dims(src, "template.widgets", &f.template.widgets)?;
    let context = dims(src, "template.context", &f.template.context)?;
    let spec =
        TemplateSpec::new(widgets, context).map_err(|e| src.field_error("template.widgets", e))?;

    let env = &f.environment;
    for (field, a) in [
        ("environment.alpha1", env.alpha1),
        ("environment.alpha2", env.alpha2),
        ("environment.alphac", env.alphac),
    ] {
        if !(a.is_finite() && a >= 0.0) {
            return Err(src.field_error(field, format!("must be finite and non-negative, got {a}")));
        }
    }
    if env.alphac > 0.0 && spec.context_dims() == 0 {
        return Err(src.field_error(
            "environment.alphac",
            "a positive value requires at least one context dimension in template.context",
        ));
    }

    let run = &f.run;
    let horizon = positive(src, "run.horizon", run.horizon)?;
    let batch_period = positive(src, "run.batch_period", run.batch_period)?;
    let repetitions = positive(src, "run.repetitions", run.repetitions)?;
    let window = positive(src, "run.window", run.window)?;
    let curve_stride = match run.curve_stride {
        Some(s) => positive(src, "run.curve_stride", s)?,
        None => window,
    };
    let default_mode = argmax_mode(src, "run.argmax", &run.argmax, run, &spec)?;
    if run.algorithms.is_empty() {
        return Err(src.field_error("run.algorithms", "at least one algorithm is required"));
    }
    let mut algorithms = Vec::with_capacity(run.algorithms.len());
    for (i, entry) in run.algorithms.iter().enumerate() {
        let field = format!("run.algorithms[{i}]");
        let (name, mode) = match entry.split_once(':') {
            Some((n, m)) => (n, argmax_mode(src, &field, m, run, &spec)?),
            None => (entry.as_str(), default_mode),
        };
        let algorithm = Algorithm::parse(name).ok_or_else(|| {
            let known: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
            src.field_error(
                &field,
                format!("unknown algorithm {name:?} (known: {})", known.join(", ")),
            )
        })?;
        if let Some(kind) = algorithm.model_kind() {
            kind.check_compatible(&spec)
                .map_err(|e| src.field_error(&field, e))?;
        }
        if mode == ArgmaxMode::Exhaustive && algorithm.model_kind().is_some() {
            let cap = crate::features::DEFAULT_ENUMERATION_CAP;
            if spec.layout_count() > cap {
                return Err(src.field_error(
                    &field,
                    format!(
                        "{} layouts exceed the exhaustive cap of {cap}; use \"hill-climb\"",
                        spec.layout_count()
                    ),
                ));
            }
        }
        algorithms.push(AlgorithmSpec {
            algorithm,
            argmax: mode,
        });
    }

    let study = &f.study;
    let mut k_grid = Vec::with_capacity(study.k_grid.len());
    for (i, &k) in study.k_grid.iter().enumerate() {
        k_grid.push(positive(src, &format!("study.k_grid[{i}]"), k)?);
    }
    let mut s_grid = Vec::with_capacity(study.s_grid.len());
    for (i, &s) in study.s_grid.iter().enumerate() {
        s_grid.push(positive(src, &format!("study.s_grid[{i}]"), s)?);
    }
    let trials = positive(src, "study.trials", study.trials)?;

    let sim = SimConfig {
        spec,
        alpha1: env.alpha1,
        alpha2: env.alpha2,
        alphac: env.alphac,
        horizon,
        batch_period,
        repetitions,
        seed: env.seed,
        algorithms,
        window,
    };
    sim.validate().map_err(|e| src.field_error("run", e))?;
    Ok(Experiment {
        sim,
        output: f.output,
        curve_stride,
        study: StudyGrid {
            max_steps: k_grid,
            restarts: s_grid,
            trials,
            early_stop: run.early_stop,
        },
    })
}
