//! Layout selection: Thompson sampling with an exhaustive or hill-climbing
//! argmax, and the independent per-widget rule used by D-MABs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::blip::{GaussianPosterior, WeightSample};
use crate::error::{Error, Result};
use crate::features::{
    enumerate_layouts_capped, Context, FeatureMap, Layout, ModelKind, TemplateSpec,
    DEFAULT_ENUMERATION_CAP,
};

/// Restarts `S` and per-restart widget-step budget `K` for hill climbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HillClimbConfig {
    pub restarts: usize,
    pub max_steps: usize,
    pub early_stop: bool,
}

impl HillClimbConfig {
    pub fn new(restarts: usize, max_steps: usize, early_stop: bool) -> Result<Self> {
        if restarts == 0 || max_steps == 0 {
            return Err(Error::InvalidArgument(
                "hill climbing needs at least one restart and one step".into(),
            ));
        }
        Ok(Self {
            restarts,
            max_steps,
            early_stop,
        })
    }

    /// `S = 5`, `K = 6·D`, early stopping on.
    pub fn for_spec(spec: &TemplateSpec) -> Self {
        Self {
            restarts: 5,
            max_steps: 6 * spec.widget_count(),
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgmaxMode {
    Exhaustive,
    HillClimb(HillClimbConfig),
}

/// Per-restart record of a hill climb.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub initial: Layout,
    pub initial_score: f64,
    pub final_score: f64,
    /// Widget-optimization steps executed.
    pub steps: usize,
    /// Sweeps started (each sweep is one random permutation of the widgets).
    pub sweeps: usize,
    /// A complete sweep changed nothing.
    pub converged: bool,
}

/// What a selection did.
///
/// Two evaluation counts are kept because counting conventions differ on
/// whether the incumbent content is re-scored at each step: `evaluations`
/// counts every candidate including the incumbent (`1 + Σ N_i` per
/// restart), `new_evaluations` counts only layouts that differ from the
/// incumbent (`1 + Σ (N_i - 1)` per restart).
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub layout: Layout,
    pub score: f64,
    pub evaluations: u64,
    pub new_evaluations: u64,
    pub restarts: Vec<RestartTrace>,
    pub reached_global: Option<bool>,
}

impl SelectionTrace {
    /// Total widget-steps over all restarts.
    pub fn steps(&self) -> usize {
        self.restarts.iter().map(|r| r.steps).sum()
    }

    /// Compares against the exhaustive optimum when the layout space is at
    /// most `cap`; leaves `reached_global` unset otherwise.
    pub fn check_global(
        &mut self,
        weights: &[f64],
        map: &FeatureMap,
        context: Option<&Context>,
        cap: u64,
    ) {
        self.reached_global = exhaustive_argmax(weights, map, context, cap)
            .ok()
            .map(|(_, best)| self.score >= best - 1e-9 * best.abs().max(1.0));
    }

    pub const CSV_HEADER: &'static str = "layout,score,evaluations,steps,reached_global";

    /// `layout,score,evaluations,steps,reached_global` with the layout
    /// one-based and space-separated.
    pub fn csv_row(&self) -> String {
        let layout = self
            .layout
            .0
            .iter()
            .map(|c| (c + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let global = match self.reached_global {
            Some(true) => "true",
            Some(false) => "false",
            None => "",
        };
        format!(
            "{layout},{:?},{},{},{global}",
            self.score,
            self.evaluations,
            self.steps()
        )
    }
}

/// Sampled-weight score `B_{A,X}ᵀ w̃` of one layout.
pub fn score(
    sample: &WeightSample,
    map: &FeatureMap,
    layout: &Layout,
    context: Option<&Context>,
) -> f64 {
    map.score(sample.values(), layout, context)
}

fn random_layout<R: Rng + ?Sized>(spec: &TemplateSpec, rng: &mut R) -> Layout {
    Layout(
        spec.widgets()
            .iter()
            .map(|&n| rng.random_range(0..n))
            .collect(),
    )
}

/// Exact maximizer over the whole layout space; ties go to the
/// lexicographically smallest layout. Returns the layout and its score.
pub fn exhaustive_argmax(
    weights: &[f64],
    map: &FeatureMap,
    context: Option<&Context>,
    cap: u64,
) -> Result<(Layout, f64)> {
    let mut best: Option<(Layout, f64)> = None;
    for layout in enumerate_layouts_capped(map.spec(), cap)? {
        let s = map.score(weights, &layout, context);
        match &best {
            Some((_, b)) if s <= *b => {}
            _ => best = Some((layout, s)),
        }
    }
    Ok(best.expect("layout space is never empty"))
}

/// Greedy single-widget ascent with random restarts.
///
/// Each restart starts from a uniformly random layout and performs up to
/// `K` steps. Steps are grouped in sweeps, each a fresh random permutation of
/// the widgets; a step sets its widget to the content with the highest score
/// given the rest of the layout, keeping the incumbent on ties and otherwise
/// the lowest content index. With `early_stop`, a sweep that changes nothing
/// ends the restart. The best final layout across restarts is returned, the
/// earliest restart winning ties.
pub fn hill_climb<R: Rng + ?Sized>(
    weights: &[f64],
    map: &FeatureMap,
    context: Option<&Context>,
    cfg: &HillClimbConfig,
    rng: &mut R,
) -> (Layout, SelectionTrace) {
    let spec = map.spec();
    let d = spec.widget_count();
    let n = spec.widgets();
    let mut order: Vec<usize> = (0..d).collect();
    let mut restarts = Vec::with_capacity(cfg.restarts);
    let mut evaluations = 0u64;
    let mut new_evaluations = 0u64;
    let mut best: Option<(Layout, f64)> = None;

    for _ in 0..cfg.restarts {
        let mut layout = random_layout(spec, rng);
        let initial = layout.clone();
        let initial_score = map.score(weights, &layout, context);
        evaluations += 1;
        new_evaluations += 1;
        let mut steps = 0;
        let mut sweeps = 0;
        let mut converged = false;

        'climb: while steps < cfg.max_steps {
            order.shuffle(rng);
            sweeps += 1;
            let mut changed = false;
            for &widget in &order {
                if steps == cfg.max_steps {
                    break 'climb;
                }
                steps += 1;
                let incumbent = layout.0[widget];
                let mut best_content = incumbent;
                let mut best_contrib =
                    map.contribution(weights, &layout, context, widget, incumbent);
                for content in 0..n[widget] {
                    if content == incumbent {
                        continue;
                    }
                    let c = map.contribution(weights, &layout, context, widget, content);
                    if c > best_contrib {
                        best_contrib = c;
                        best_content = content;
                    }
                }
                evaluations += n[widget] as u64;
                new_evaluations += n[widget] as u64 - 1;
                if best_content != incumbent {
                    layout.0[widget] = best_content;
                    changed = true;
                }
            }
            if !changed {
                converged = true;
                if cfg.early_stop {
                    break;
                }
            }
        }

        let final_score = map.score(weights, &layout, context);
        restarts.push(RestartTrace {
            initial,
            initial_score,
            final_score,
            steps,
            sweeps,
            converged,
        });
        match &best {
            Some((_, b)) if final_score <= *b => {}
            _ => best = Some((layout, final_score)),
        }
    }

    let (layout, score) = best.expect("at least one restart");
    let trace = SelectionTrace {
        layout: layout.clone(),
        score,
        evaluations,
        new_evaluations,
        restarts,
        reached_global: None,
    };
    (layout, trace)
}

/// Runs the configured argmax on point weights.
pub fn argmax<R: Rng + ?Sized>(
    weights: &[f64],
    map: &FeatureMap,
    context: Option<&Context>,
    mode: &ArgmaxMode,
    rng: &mut R,
) -> Result<(Layout, SelectionTrace)> {
    match mode {
        ArgmaxMode::Exhaustive => {
            let (layout, score) =
                exhaustive_argmax(weights, map, context, DEFAULT_ENUMERATION_CAP)?;
            let count = map.spec().layout_count();
            Ok((
                layout.clone(),
                SelectionTrace {
                    layout,
                    score,
                    evaluations: count,
                    new_evaluations: count,
                    restarts: Vec::new(),
                    reached_global: Some(true),
                },
            ))
        }
        ArgmaxMode::HillClimb(cfg) => Ok(hill_climb(weights, map, context, cfg, rng)),
    }
}

/// One Thompson step: sample weights, then maximize the sampled score.
pub fn thompson_select<R: Rng + ?Sized>(
    posterior: &GaussianPosterior,
    map: &FeatureMap,
    context: Option<&Context>,
    mode: &ArgmaxMode,
    rng: &mut R,
) -> Result<(Layout, SelectionTrace)> {
    if posterior.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: posterior.dim(),
        });
    }
    let sample = posterior.sample_weights(rng);
    argmax(sample.values(), map, context, mode, rng)
}

/// Independent Thompson draws per widget, one posterior per widget with
/// `1 + N_i` weights.
pub fn dmabs_select<R: Rng + ?Sized>(
    posteriors: &[GaussianPosterior],
    spec: &TemplateSpec,
    rng: &mut R,
) -> Result<Layout> {
    if posteriors.len() != spec.widget_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.widget_count(),
            got: posteriors.len(),
        });
    }
    let mut choices = Vec::with_capacity(posteriors.len());
    for (i, post) in posteriors.iter().enumerate() {
        let map = FeatureMap::new(ModelKind::DMabs(i), spec)?;
        if post.dim() != map.dim() {
            return Err(Error::DimensionMismatch {
                expected: map.dim(),
                got: post.dim(),
            });
        }
        let sample = post.sample_weights(rng);
        let w = sample.values();
        // bias is shared by every content of this widget
        let mut best = 0;
        for c in 1..spec.widgets()[i] {
            if w[1 + c] > w[1 + best] {
                best = c;
            }
        }
        choices.push(best);
    }
    Ok(Layout(choices))
}

/// Whether no single-widget change improves the score by more than `tol`,
/// checked by full rescoring.
pub fn is_local_optimum(
    weights: &[f64],
    map: &FeatureMap,
    layout: &Layout,
    context: Option<&Context>,
    tol: f64,
) -> bool {
    let base = map.score(weights, layout, context);
    let mut probe = layout.clone();
    for (w, &n) in map.spec().widgets().iter().enumerate() {
        for c in 0..n {
            probe.0[w] = c;
            if map.score(weights, &probe, context) > base + tol {
                return false;
            }
        }
        probe.0[w] = layout.0[w];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{parameter_count, WeightDescriptor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_weights(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn zero_sample_scores_zero_and_ties_to_first_layout() {
        let spec = TemplateSpec::uniform(3, 4).unwrap();
        let map = FeatureMap::new(ModelKind::Mvt2, &spec).unwrap();
        let zero = WeightSample(vec![0.0; map.dim()]);
        assert_eq!(score(&zero, &map, &Layout(vec![2, 1, 3]), None), 0.0);
        let (l, s) = exhaustive_argmax(zero.values(), &map, None, 1_000).unwrap();
        assert_eq!(l, Layout(vec![0, 0, 0]));
        assert_eq!(s, 0.0);
    }

    #[test]
    fn mvt1_score_is_sum_of_chosen_contents() {
        let spec = TemplateSpec::uniform(3, 3).unwrap();
        let map = FeatureMap::new(ModelKind::Mvt1, &spec).unwrap();
        let mut w = vec![0.0; map.dim()];
        for i in 0..3 {
            for c in 0..3 {
                let idx = map
                    .index_of(&WeightDescriptor::FirstOrder {
                        widget: i,
                        content: c,
                    })
                    .unwrap();
                w[idx] = (10 * i + c) as f64;
            }
        }
        let s = map.score(&w, &Layout(vec![2, 0, 1]), None);
        assert_eq!(s, 2.0 + 10.0 + 21.0);
    }

    #[test]
    fn single_widget_hill_climb_is_exhaustive() {
        let spec = TemplateSpec::uniform(1, 7).unwrap();
        let map = FeatureMap::new(ModelKind::Mvt2, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let w = normal_weights(map.dim(), &mut rng);
            let (best, _) = exhaustive_argmax(&w, &map, None, 100).unwrap();
            let cfg = HillClimbConfig::new(1, 1, true).unwrap();
            let (hc, _) = hill_climb(&w, &map, None, &cfg, &mut rng);
            assert_eq!(hc, best);
        }
    }

    #[test]
    fn separable_model_reaches_global_with_one_restart() {
        let spec = TemplateSpec::new(vec![5, 3, 6, 4], vec![]).unwrap();
        let map = FeatureMap::new(ModelKind::Mvt1, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let w = normal_weights(map.dim(), &mut rng);
            let (best, _) = exhaustive_argmax(&w, &map, None, 10_000).unwrap();
            let cfg = HillClimbConfig::new(1, spec.widget_count(), true).unwrap();
            let (hc, _) = hill_climb(&w, &map, None, &cfg, &mut rng);
            assert_eq!(hc, best);
        }
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let spec = TemplateSpec::uniform(3, 8).unwrap();
        let map = FeatureMap::new(ModelKind::Mvt2, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let w = normal_weights(map.dim(), &mut rng);
            let (l, s) = exhaustive_argmax(&w, &map, None, 1_000).unwrap();
            // brute force via independent feature construction
            let mut best = f64::NEG_INFINITY;
            let mut best_layout = None;
            for a in 0..8 {
                for b in 0..8 {
                    for c in 0..8 {
                        let layout = Layout(vec![a, b, c]);
                        let f = map.build(&layout, None).unwrap();
                        let v: f64 = f.indices().iter().map(|&i| w[i]).sum();
                        if v > best {
                            best = v;
                            best_layout = Some(layout);
                        }
                    }
                }
            }
            assert_eq!(Some(l), best_layout);
            assert!((s - best).abs() < 1e-12);
        }
    }

    #[test]
    fn hill_climb_trace_invariants() {
        let spec = TemplateSpec::uniform(4, 5).unwrap();
        let map = FeatureMap::new(ModelKind::Mvt2, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let w = normal_weights(map.dim(), &mut rng);
            let cfg = HillClimbConfig::new(3, 16, true).unwrap();
            let (layout, trace) = hill_climb(&w, &map, None, &cfg, &mut rng);
            assert!(trace.evaluations <= (cfg.restarts * cfg.max_steps * 5 + cfg.restarts) as u64);
            for r in &trace.restarts {
                assert!(r.final_score >= r.initial_score - 1e-12);
                assert!(r.steps <= cfg.max_steps);
            }
            if trace.restarts.iter().all(|r| r.converged) {
                assert!(is_local_optimum(&w, &map, &layout, None, 1e-9));
            }
            let best = trace
                .restarts
                .iter()
                .map(|r| r.final_score)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(trace.score, best);
        }
    }

    #[test]
    fn zero_variance_thompson_is_argmax_of_means() {
        let spec = TemplateSpec::uniform(3, 4).unwrap();
        let map = FeatureMap::new(ModelKind::Mvt2, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let means = normal_weights(map.dim(), &mut rng);
        let post = GaussianPosterior::from_parts(means.clone(), vec![0.0; map.dim()]).unwrap();
        let (best, _) = exhaustive_argmax(&means, &map, None, 1_000).unwrap();
        for seed in 0..20 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (l, _) =
                thompson_select(&post, &map, None, &ArgmaxMode::Exhaustive, &mut r).unwrap();
            assert_eq!(l, best);
        }
    }

    #[test]
    fn two_arm_thompson_is_symmetric() {
        let spec = TemplateSpec::uniform(1, 2).unwrap();
        let map = FeatureMap::new(ModelKind::NdMab, &spec).unwrap();
        let post = GaussianPosterior::prior(map.dim());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let first = (0..n)
            .filter(|_| {
                thompson_select(&post, &map, None, &ArgmaxMode::Exhaustive, &mut rng)
                    .unwrap()
                    .0
                     .0[0]
                    == 0
            })
            .count();
        let p = first as f64 / n as f64;
        assert!((p - 0.5).abs() < 0.02, "{p}");
    }

    #[test]
    fn dmabs_selection() {
        let spec = TemplateSpec::uniform(2, 2).unwrap();
        let prior: Vec<_> = (0..2)
            .map(|i| GaussianPosterior::prior(parameter_count(ModelKind::DMabs(i), &spec).unwrap()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            let l = dmabs_select(&prior, &spec, &mut rng).unwrap();
            counts[spec.flat_index(&l)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.03, "{counts:?}");
        }

        let fixed = vec![
            GaussianPosterior::from_parts(vec![0.0, 0.1, 0.5], vec![0.0; 3]).unwrap(),
            GaussianPosterior::from_parts(vec![0.0, 0.9, -0.5], vec![0.0; 3]).unwrap(),
        ];
        assert_eq!(
            dmabs_select(&fixed, &spec, &mut rng).unwrap(),
            Layout(vec![1, 0])
        );
        assert!(dmabs_select(&fixed[..1], &spec, &mut rng).is_err());
    }

    #[test]
    fn trace_csv_row() {
        let trace = SelectionTrace {
            layout: Layout(vec![0, 2]),
            score: 1.5,
            evaluations: 9,
            new_evaluations: 7,
            restarts: vec![],
            reached_global: Some(true),
        };
        assert_eq!(trace.csv_row(), "1 3,1.5,9,0,true");
    }
}
