//! Post-hoc statistics: likelihood-ratio tests between nested interaction
//! orders, convergence and normalized-success metrics, and hill-climbing
//! quality studies on trained models.

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::gamma_ur;

use crate::blip::{log_likelihood, GaussianPosterior, Observation, Reward};
use crate::error::{Error, Result};
use crate::features::{
    free_parameter_count, Context, FeatureMap, Layout, ModelKind, TemplateSpec,
    DEFAULT_ENUMERATION_CAP,
};
use crate::policy::{exhaustive_argmax, hill_climb, HillClimbConfig};
use crate::seed;
use crate::simulator::{true_expected_reward, OptimumTable, SimulationTruth};

/// Default number of sequential training passes for [`fit_for_lrt`].
pub const DEFAULT_LRT_PASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Upper tail `P(χ²_df > x)`.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0)
}

/// Likelihood-ratio test of a restricted model nested in a full one.
///
/// The statistic `2 (ll_full - ll_restricted)` is clamped at zero; a
/// negative value larger than `1e-6 · max(1, |ll_full|)` means the models
/// were not nested (or not fitted) and is rejected.
pub fn lrt(ll_restricted: f64, ll_full: f64, df: usize) -> Result<LrtResult> {
    if df == 0 {
        return Err(Error::InvalidArgument("LRT needs df >= 1".into()));
    }
    if !(ll_restricted.is_finite() && ll_full.is_finite()) {
        return Err(Error::InvalidArgument(
            "log-likelihoods must be finite".into(),
        ));
    }
    let raw = 2.0 * (ll_full - ll_restricted);
    let tol = 1e-6 * ll_full.abs().max(1.0);
    if raw < -tol {
        return Err(Error::InvalidArgument(format!(
            "negative LRT statistic {raw}: full model fits worse than the restricted one"
        )));
    }
    let statistic = raw.max(0.0);
    Ok(LrtResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    })
}

/// A layout shown under a context, with its observed reward.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPlay {
    pub layout: Layout,
    pub context: Context,
    pub reward: Reward,
}

/// Encodes plays for one model kind.
pub fn observations_for(map: &FeatureMap, data: &[LabeledPlay]) -> Result<Vec<Observation>> {
    let uses_ctx = map.kind().uses_context();
    data.iter()
        .map(|p| {
            Ok(Observation::new(
                map.build(&p.layout, uses_ctx.then_some(&p.context))?,
                p.reward,
            ))
        })
        .collect()
}

/// Trains a fresh posterior with `passes` sequential sweeps over the data
/// and returns it.
pub fn fit_posterior(
    map: &FeatureMap,
    data: &[LabeledPlay],
    passes: usize,
) -> Result<GaussianPosterior> {
    let obs = observations_for(map, data)?;
    let mut post = GaussianPosterior::prior(map.dim());
    for _ in 0..passes {
        post.batch_update(&obs)?;
    }
    Ok(post)
}

/// Log-likelihood of the data at the posterior means after `passes`
/// training sweeps.
pub fn fit_for_lrt(
    kind: ModelKind,
    spec: &TemplateSpec,
    data: &[LabeledPlay],
    passes: usize,
) -> Result<f64> {
    if passes == 0 {
        return Err(Error::InvalidArgument("passes must be positive".into()));
    }
    let map = FeatureMap::new(kind, spec)?;
    let post = fit_posterior(&map, data, passes)?;
    let obs = observations_for(&map, data)?;
    Ok(log_likelihood(post.means(), &obs))
}

/// Fits both models and tests the restricted one against the full one.
/// Degrees of freedom are the difference in identifiable parameters.
pub fn compare_models(
    restricted: ModelKind,
    full: ModelKind,
    spec: &TemplateSpec,
    data: &[LabeledPlay],
    passes: usize,
) -> Result<LrtResult> {
    let small = free_parameter_count(restricted, spec)?;
    let big = free_parameter_count(full, spec)?;
    if big <= small {
        return Err(Error::InvalidArgument(format!(
            "{full} does not extend {restricted}"
        )));
    }
    let ll_small = fit_for_lrt(restricted, spec, data, passes)?;
    let ll_big = fit_for_lrt(full, spec, data, passes)?;
    lrt(ll_small, ll_big, big - small)
}

/// Fraction of plays equal to the modal layout, per consecutive
/// non-overlapping window (a trailing partial window is dropped).
pub fn convergence_series(plays: &[Layout], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > plays.len() {
        return Err(Error::EmptyWindow(format!(
            "window {window} for {} plays",
            plays.len()
        )));
    }
    Ok(plays
        .chunks_exact(window)
        .map(|chunk| {
            let mut counts = std::collections::HashMap::new();
            for l in chunk {
                *counts.entry(l).or_insert(0usize) += 1;
            }
            *counts.values().max().expect("non-empty window") as f64 / window as f64
        })
        .collect())
}

/// Lift over a reference rate: `rate / reference - 1`.
pub fn normalized_success(rate: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reference rate must be positive, got {reference}"
        )));
    }
    Ok(rate / reference - 1.0)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// One-sided paired t-test p-value for `H1: mean(diffs) > 0`.
pub fn paired_one_sided_p(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    if n < 2 {
        return 1.0;
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return if mean > 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    1.0 - dist.cdf(t)
}

/// Grid of hill-climbing budgets to study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyGrid {
    pub max_steps: Vec<usize>,
    pub restarts: Vec<usize>,
    pub trials: usize,
    pub early_stop: bool,
}

/// Summary of hill climbing at one `(K, S)` grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillClimbStudy {
    pub max_steps: usize,
    pub restarts: usize,
    pub trials: usize,
    /// Widget-steps per restart.
    pub mean_steps: f64,
    pub sd_steps: f64,
    /// Sweeps per restart.
    pub mean_sweeps: f64,
    /// Fraction of trials returning the model's exhaustive optimum.
    pub p_global: f64,
    /// Truth regret of the first restart's random starting layout.
    pub mean_regret_random: f64,
    /// Truth regret of the returned layout.
    pub mean_regret_converged: f64,
}

impl HillClimbStudy {
    pub const CSV_HEADER: &'static str =
        "K,S,trials,mean_steps,sd_steps,mean_sweeps,p_global,regret_random,regret_converged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.max_steps,
            self.restarts,
            self.trials,
            self.mean_steps,
            self.sd_steps,
            self.mean_sweeps,
            self.p_global,
            self.mean_regret_random,
            self.mean_regret_converged
        )
    }
}

struct TrialOutcome {
    steps: Vec<f64>,
    sweeps: Vec<f64>,
    global: bool,
    regret_random: f64,
    regret_converged: f64,
}

/// One trained model and the environment it was trained on.
#[derive(Debug, Clone, Copy)]
pub struct StudyModel<'a> {
    pub weights: &'a [f64],
    pub map: &'a FeatureMap,
    pub truth: &'a SimulationTruth,
    pub optimum: &'a OptimumTable,
}

/// Runs `trials` hill climbs per grid point on fixed model weights, scoring
/// global-optimum hits against the exhaustive argmax of the same weights and
/// regret against the truth. Trial `i` uses model `i % models.len()`;
/// contexts are drawn uniformly per trial.
pub fn hill_climb_study(
    models: &[StudyModel<'_>],
    grid: &StudyGrid,
    root_seed: u64,
) -> Result<Vec<HillClimbStudy>> {
    if grid.trials == 0 {
        return Err(Error::InvalidArgument(
            "study needs at least one trial".into(),
        ));
    }
    if models.is_empty() {
        return Err(Error::InvalidArgument(
            "study needs at least one model".into(),
        ));
    }
    let model_best: Vec<Vec<f64>> = models
        .iter()
        .map(|m| {
            let uses_ctx = m.map.kind().uses_context();
            crate::features::enumerate_contexts(m.map.spec())
                .map(|ctx| {
                    exhaustive_argmax(
                        m.weights,
                        m.map,
                        uses_ctx.then_some(&ctx),
                        DEFAULT_ENUMERATION_CAP,
                    )
                    .map(|(_, s)| s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (si, &s) in grid.restarts.iter().enumerate() {
        for (ki, &k) in grid.max_steps.iter().enumerate() {
            let cfg = HillClimbConfig::new(s, k, grid.early_stop)?;
            let point = ((si as u64) << 40) | ((ki as u64) << 20);
            let trials: Vec<TrialOutcome> = (0..grid.trials)
                .into_par_iter()
                .map(|trial| {
                    let m = &models[trial % models.len()];
                    let spec = m.map.spec();
                    let mut rng = seed::stream(root_seed, "hill-climb-study", point | trial as u64);
                    let ctx = Context(
                        spec.context()
                            .iter()
                            .map(|&g| rng.random_range(0..g))
                            .collect(),
                    );
                    let model_ctx = m.map.kind().uses_context().then_some(&ctx);
                    let (layout, trace) = hill_climb(m.weights, m.map, model_ctx, &cfg, &mut rng);
                    let best = model_best[trial % models.len()][spec.context_flat_index(&ctx)];
                    let opt = m.optimum.get(m.truth.spec(), &ctx).1;
                    TrialOutcome {
                        steps: trace.restarts.iter().map(|r| r.steps as f64).collect(),
                        sweeps: trace.restarts.iter().map(|r| r.sweeps as f64).collect(),
                        global: trace.score >= best - 1e-9 * best.abs().max(1.0),
                        regret_random: opt
                            - true_expected_reward(m.truth, &trace.restarts[0].initial, &ctx),
                        regret_converged: opt - true_expected_reward(m.truth, &layout, &ctx),
                    }
                })
                .collect();
            let steps: Vec<f64> = trials
                .iter()
                .flat_map(|t| t.steps.iter().copied())
                .collect();
            let sweeps: Vec<f64> = trials
                .iter()
                .flat_map(|t| t.sweeps.iter().copied())
                .collect();
            let n = trials.len() as f64;
            let mean_steps = steps.iter().sum::<f64>() / steps.len() as f64;
            let sd_steps = (steps.iter().map(|x| (x - mean_steps).powi(2)).sum::<f64>()
                / (steps.len().max(2) - 1) as f64)
                .sqrt();
            out.push(HillClimbStudy {
                max_steps: k,
                restarts: s,
                trials: grid.trials,
                mean_steps,
                sd_steps,
                mean_sweeps: sweeps.iter().sum::<f64>() / sweeps.len() as f64,
                p_global: trials.iter().filter(|t| t.global).count() as f64 / n,
                mean_regret_random: trials.iter().map(|t| t.regret_random).sum::<f64>() / n,
                mean_regret_converged: trials.iter().map(|t| t.regret_converged).sum::<f64>() / n,
            });
        }
    }
    Ok(out)
}
