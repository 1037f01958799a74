//! Synthetic reward environments, the delayed-feedback bandit loop and the
//! regret metrics computed from its history.
//!
//! Rewards use the probit of a scaled linear model over the MVT2c feature
//! blocks (MVT2 when the template has no context):
//! `score = (w0 + α1 Σ w1 + α2 Σ w2 + αc (Σ wc + Σ w1c)) / β` with every
//! weight drawn `N(0, 1)`. Regret is on the probability scale, with a
//! realized reward coded 1 for success and 0 for failure.
//!
//! Each repetition owns three streams derived from the root seed: contexts,
//! reward draws and policy randomness. Context and reward streams do not
//! depend on the algorithm, so all algorithms of one repetition face the same
//! context sequence and the same uniform draws behind their rewards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::blip::{GaussianPosterior, Observation, Reward};
use crate::error::{Error, Result};
use crate::features::{
    enumerate_contexts, parameter_count, Context, FeatureMap, Layout, ModelKind, TemplateSpec,
    WeightDescriptor, DEFAULT_ENUMERATION_CAP,
};
use crate::normal;
use crate::policy::{self, ArgmaxMode};
use crate::seed;

/// Default moving-window length for local regret.
pub const DEFAULT_WINDOW: usize = 2500;

/// Learning algorithms (plus a uniformly random reference policy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mvt1,
    Mvt2,
    Mvt2c,
    Mvt3,
    NdMab,
    DMabs,
    Uniform,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Mvt1,
        Algorithm::Mvt2,
        Algorithm::Mvt2c,
        Algorithm::Mvt3,
        Algorithm::NdMab,
        Algorithm::DMabs,
        Algorithm::Uniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Mvt1 => "MVT1",
            Algorithm::Mvt2 => "MVT2",
            Algorithm::Mvt2c => "MVT2c",
            Algorithm::Mvt3 => "MVT3",
            Algorithm::NdMab => "ND_MAB",
            Algorithm::DMabs => "D_MABS",
            Algorithm::Uniform => "UNIFORM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s))
    }

    /// The joint model kind, for algorithms that train a single posterior.
    pub fn model_kind(&self) -> Option<ModelKind> {
        match self {
            Algorithm::Mvt1 => Some(ModelKind::Mvt1),
            Algorithm::Mvt2 => Some(ModelKind::Mvt2),
            Algorithm::Mvt2c => Some(ModelKind::Mvt2c),
            Algorithm::Mvt3 => Some(ModelKind::Mvt3),
            Algorithm::NdMab => Some(ModelKind::NdMab),
            Algorithm::DMabs | Algorithm::Uniform => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    pub algorithm: Algorithm,
    pub argmax: ArgmaxMode,
}

impl AlgorithmSpec {
    pub fn exhaustive(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            argmax: ArgmaxMode::Exhaustive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: TemplateSpec,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alphac: f64,
    pub horizon: usize,
    pub batch_period: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub algorithms: Vec<AlgorithmSpec>,
    pub window: usize,
}

impl SimConfig {
    /// D = 3, N = 8, α1 = 1, no interactions or context, T = 250 000,
    /// batches of 1000, 15 repetitions.
    pub fn new(spec: TemplateSpec) -> Self {
        Self {
            spec,
            alpha1: 1.0,
            alpha2: 0.0,
            alphac: 0.0,
            horizon: 250_000,
            batch_period: 1000,
            repetitions: 15,
            seed: 0,
            algorithms: vec![AlgorithmSpec::exhaustive(Algorithm::Mvt2)],
            window: DEFAULT_WINDOW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alphac", self.alphac),
        ] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        if self.alphac > 0.0 && self.spec.context_dims() == 0 {
            return Err(Error::InvalidArgument(
                "alphac > 0 requires at least one context dimension".into(),
            ));
        }
        if self.batch_period == 0 {
            return Err(Error::InvalidArgument(
                "batch_period must be positive".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument(
                "repetitions must be positive".into(),
            ));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be positive".into()));
        }
        for a in &self.algorithms {
            if let Some(kind) = a.algorithm.model_kind() {
                kind.check_compatible(&self.spec)?;
            }
        }
        Ok(())
    }
}

/// Hidden ground truth of one simulated environment.
#[derive(Debug, Clone)]
pub struct SimulationTruth {
    map: FeatureMap,
    raw: Vec<f64>,
    effective: Vec<f64>,
    beta: f64,
    alphas: (f64, f64, f64),
}

/// `β = sqrt(1 + α1²·D + α2²·C(D,2) + αc²·L + αc²·D·L)`: the standard
/// deviation, over weight draws, of the unscaled score of any layout.
pub fn beta_for(spec: &TemplateSpec, alpha1: f64, alpha2: f64, alphac: f64) -> f64 {
    let d = spec.widget_count() as f64;
    let l = spec.context_dims() as f64;
    (1.0 + alpha1 * alpha1 * d
        + alpha2 * alpha2 * d * (d - 1.0) / 2.0
        + alphac * alphac * l
        + alphac * alphac * d * l)
        .sqrt()
}

impl SimulationTruth {
    /// Truth from explicit raw weights (length of the MVT2c/MVT2 map).
    pub fn from_weights(
        spec: &TemplateSpec,
        raw: Vec<f64>,
        alpha1: f64,
        alpha2: f64,
        alphac: f64,
    ) -> Result<Self> {
        let kind = if spec.context_dims() > 0 {
            ModelKind::Mvt2c
        } else {
            ModelKind::Mvt2
        };
        let map = FeatureMap::new(kind, spec)?;
        if raw.len() != map.dim() {
            return Err(Error::DimensionMismatch {
                expected: map.dim(),
                got: raw.len(),
            });
        }
        let beta = beta_for(spec, alpha1, alpha2, alphac);
        let effective = raw
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let scale = match map.descriptor_of(i).expect("index below dim") {
                    WeightDescriptor::Bias => 1.0,
                    WeightDescriptor::FirstOrder { .. } => alpha1,
                    WeightDescriptor::Pairwise { .. } => alpha2,
                    WeightDescriptor::ContextMain { .. }
                    | WeightDescriptor::ContentContext { .. } => alphac,
                    WeightDescriptor::ThirdOrder { .. } | WeightDescriptor::LayoutId(_) => {
                        unreachable!("truth map has no such block")
                    }
                };
                scale * w / beta
            })
            .collect();
        Ok(Self {
            map,
            raw,
            effective,
            beta,
            alphas: (alpha1, alpha2, alphac),
        })
    }

    pub fn spec(&self) -> &TemplateSpec {
        self.map.spec()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alphas(&self) -> (f64, f64, f64) {
        self.alphas
    }

    pub fn raw_weights(&self) -> &[f64] {
        &self.raw
    }

    /// Weights already multiplied by their α and divided by β, indexed by
    /// [`SimulationTruth::map`].
    pub fn effective_weights(&self) -> &[f64] {
        &self.effective
    }

    pub fn map(&self) -> &FeatureMap {
        &self.map
    }

    fn context_arg<'a>(&self, context: &'a Context) -> Option<&'a Context> {
        (self.spec().context_dims() > 0).then_some(context)
    }

    pub fn scaled_score(&self, layout: &Layout, context: &Context) -> f64 {
        self.map
            .score(&self.effective, layout, self.context_arg(context))
    }
}

/// Draws a truth with i.i.d. `N(0, 1)` weights.
pub fn make_truth<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<SimulationTruth> {
    let kind = if cfg.spec.context_dims() > 0 {
        ModelKind::Mvt2c
    } else {
        ModelKind::Mvt2
    };
    let dim = parameter_count(kind, &cfg.spec)?;
    let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    SimulationTruth::from_weights(&cfg.spec, raw, cfg.alpha1, cfg.alpha2, cfg.alphac)
}

/// `E[R | layout, context] = Φ(scaled score)`.
pub fn true_expected_reward(truth: &SimulationTruth, layout: &Layout, context: &Context) -> f64 {
    normal::cdf(truth.scaled_score(layout, context))
}

/// Bernoulli draw of the reward.
pub fn step<R: Rng + ?Sized>(
    truth: &SimulationTruth,
    layout: &Layout,
    context: &Context,
    rng: &mut R,
) -> Reward {
    let u: f64 = rng.random();
    Reward::from_bool(u < true_expected_reward(truth, layout, context))
}

/// Optimal layout and its expected reward for every context.
#[derive(Debug, Clone)]
pub struct OptimumTable {
    entries: Vec<(Layout, f64)>,
}

impl OptimumTable {
    pub fn new(truth: &SimulationTruth) -> Result<Self> {
        let spec = truth.spec();
        let entries = enumerate_contexts(spec)
            .map(|ctx| {
                let (layout, s) = policy::exhaustive_argmax(
                    truth.effective_weights(),
                    truth.map(),
                    truth.context_arg(&ctx),
                    DEFAULT_ENUMERATION_CAP,
                )?;
                Ok((layout, normal::cdf(s)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn get(&self, spec: &TemplateSpec, context: &Context) -> &(Layout, f64) {
        &self.entries[spec.context_flat_index(context)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// One-based time step.
    pub t: usize,
    pub context: Context,
    pub layout: Layout,
    pub reward: Reward,
    pub expected_chosen: f64,
    pub expected_optimal: f64,
}

impl StepRecord {
    /// `E[R | A*, X] - R` on the probability scale.
    pub fn regret(&self) -> f64 {
        self.expected_optimal - self.reward.value()
    }

    /// `E[R | A*, X] - E[R | A, X]`, never negative.
    pub fn gap(&self) -> f64 {
        self.expected_optimal - self.expected_chosen
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<StepRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn layouts(&self) -> Vec<Layout> {
        self.records.iter().map(|r| r.layout.clone()).collect()
    }
}

/// `(1/T) Σ (E[R | A*_t, X_t] - R_t)`; zero for an empty history.
pub fn regret(h: &History) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    h.records.iter().map(StepRecord::regret).sum::<f64>() / h.len() as f64
}

/// Regret averaged over the inclusive one-based window `[t0, t1]`.
pub fn local_regret(h: &History, t0: usize, t1: usize) -> Result<f64> {
    if t0 == 0 || t0 > t1 || t1 > h.len() {
        return Err(Error::EmptyWindow(format!(
            "[{t0}, {t1}] for a history of length {}",
            h.len()
        )));
    }
    let sum: f64 = h.records[t0 - 1..t1].iter().map(StepRecord::regret).sum();
    Ok(sum / (1 + t1 - t0) as f64)
}

/// Mean expected gap over the inclusive window `[t0, t1]`.
pub fn local_gap(h: &History, t0: usize, t1: usize) -> Result<f64> {
    if t0 == 0 || t0 > t1 || t1 > h.len() {
        return Err(Error::EmptyWindow(format!(
            "[{t0}, {t1}] for a history of length {}",
            h.len()
        )));
    }
    let sum: f64 = h.records[t0 - 1..t1].iter().map(StepRecord::gap).sum();
    Ok(sum / (1 + t1 - t0) as f64)
}

/// Labelled play retained between batch trainings.
#[derive(Debug, Clone)]
struct Pending {
    layout: Layout,
    context: Context,
    reward: Reward,
}

/// Policy state for one algorithm run.
#[derive(Debug, Clone)]
pub enum Learner {
    Joint {
        map: FeatureMap,
        posterior: GaussianPosterior,
        argmax: ArgmaxMode,
    },
    DMabs {
        maps: Vec<FeatureMap>,
        posteriors: Vec<GaussianPosterior>,
    },
    Uniform {
        spec: TemplateSpec,
    },
}

impl Learner {
    /// Fresh prior for the algorithm.
    pub fn new(algo: &AlgorithmSpec, spec: &TemplateSpec) -> Result<Self> {
        Ok(match algo.algorithm {
            Algorithm::DMabs => {
                let maps = (0..spec.widget_count())
                    .map(|i| FeatureMap::new(ModelKind::DMabs(i), spec))
                    .collect::<Result<Vec<_>>>()?;
                let posteriors = maps
                    .iter()
                    .map(|m| GaussianPosterior::prior(m.dim()))
                    .collect();
                Learner::DMabs { maps, posteriors }
            }
            Algorithm::Uniform => Learner::Uniform { spec: spec.clone() },
            other => {
                let kind = other.model_kind().expect("joint algorithm");
                let map = FeatureMap::new(kind, spec)?;
                let posterior = GaussianPosterior::prior(map.dim());
                Learner::Joint {
                    map,
                    posterior,
                    argmax: algo.argmax,
                }
            }
        })
    }

    /// Rebuilds a learner around existing posteriors, one per model in the
    /// order of [`Learner::posteriors`].
    pub fn from_posteriors(
        algo: &AlgorithmSpec,
        spec: &TemplateSpec,
        posteriors: Vec<GaussianPosterior>,
    ) -> Result<Self> {
        let mut learner = Self::new(algo, spec)?;
        let expected = learner.posteriors().len();
        if posteriors.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: posteriors.len(),
            });
        }
        match &mut learner {
            Learner::Joint { map, posterior, .. } => {
                let p = posteriors.into_iter().next().expect("one posterior");
                if p.dim() != map.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: map.dim(),
                        got: p.dim(),
                    });
                }
                *posterior = p;
            }
            Learner::DMabs {
                maps,
                posteriors: slots,
            } => {
                for ((map, slot), p) in maps.iter().zip(slots.iter_mut()).zip(posteriors) {
                    if p.dim() != map.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: map.dim(),
                            got: p.dim(),
                        });
                    }
                    *slot = p;
                }
            }
            Learner::Uniform { .. } => {}
        }
        Ok(learner)
    }

    /// Model kind of each posterior, aligned with [`Learner::posteriors`].
    pub fn kinds(&self) -> Vec<ModelKind> {
        match self {
            Learner::Joint { map, .. } => vec![map.kind()],
            Learner::DMabs { maps, .. } => maps.iter().map(|m| m.kind()).collect(),
            Learner::Uniform { .. } => Vec::new(),
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, context: &Context, rng: &mut R) -> Result<Layout> {
        match self {
            Learner::Joint {
                map,
                posterior,
                argmax,
            } => {
                let ctx = map.kind().uses_context().then_some(context);
                Ok(policy::thompson_select(posterior, map, ctx, argmax, rng)?.0)
            }
            Learner::DMabs { maps, posteriors } => {
                policy::dmabs_select(posteriors, maps[0].spec(), rng)
            }
            Learner::Uniform { spec } => Ok(Layout(
                spec.widgets()
                    .iter()
                    .map(|&n| rng.random_range(0..n))
                    .collect(),
            )),
        }
    }

    /// Folds a batch of labelled plays into the posterior(s).
    fn train(&mut self, batch: &[Pending]) -> Result<()> {
        match self {
            Learner::Joint { map, posterior, .. } => {
                let uses_ctx = map.kind().uses_context();
                for p in batch {
                    let f = map.build(&p.layout, uses_ctx.then_some(&p.context))?;
                    posterior.update(&Observation::new(f, p.reward))?;
                }
            }
            Learner::DMabs { maps, posteriors } => {
                for p in batch {
                    for (map, post) in maps.iter().zip(posteriors.iter_mut()) {
                        let f = map.build(&p.layout, None)?;
                        post.update(&Observation::new(f, p.reward))?;
                    }
                }
            }
            Learner::Uniform { .. } => {}
        }
        Ok(())
    }

    /// Posterior snapshots held by the learner (empty for the random policy).
    pub fn posteriors(&self) -> Vec<&GaussianPosterior> {
        match self {
            Learner::Joint { posterior, .. } => vec![posterior],
            Learner::DMabs { posteriors, .. } => posteriors.iter().collect(),
            Learner::Uniform { .. } => Vec::new(),
        }
    }
}

/// Independent random streams of one run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub context: ChaCha8Rng,
    pub reward: ChaCha8Rng,
    pub policy: ChaCha8Rng,
}

impl RunStreams {
    /// Streams for repetition `rep` of algorithm slot `algo`; context and
    /// reward streams are shared by every algorithm of the repetition.
    pub fn derive(root: u64, rep: usize, algo: usize) -> Self {
        Self {
            context: seed::stream(root, "context", rep as u64),
            reward: seed::stream(root, "reward", rep as u64),
            policy: seed::stream(root, "policy", ((rep as u64) << 16) | algo as u64),
        }
    }
}

fn random_context<R: Rng + ?Sized>(spec: &TemplateSpec, rng: &mut R) -> Context {
    Context(
        spec.context()
            .iter()
            .map(|&g| rng.random_range(0..g))
            .collect(),
    )
}

/// Bandit loop with batch training every `batch_period` steps.
pub fn run_loop(
    cfg: &SimConfig,
    truth: &SimulationTruth,
    optimum: &OptimumTable,
    learner: &mut Learner,
    streams: &mut RunStreams,
) -> Result<History> {
    let spec = truth.spec();
    let mut records = Vec::with_capacity(cfg.horizon);
    let mut pending = Vec::with_capacity(cfg.batch_period);
    for t in 1..=cfg.horizon {
        let context = random_context(spec, &mut streams.context);
        let layout = learner.select(&context, &mut streams.policy)?;
        let expected_chosen = true_expected_reward(truth, &layout, &context);
        let expected_optimal = optimum.get(spec, &context).1;
        let reward = step(truth, &layout, &context, &mut streams.reward);
        records.push(StepRecord {
            t,
            context: context.clone(),
            layout: layout.clone(),
            reward,
            expected_chosen,
            expected_optimal,
        });
        pending.push(Pending {
            layout,
            context,
            reward,
        });
        if t % cfg.batch_period == 0 {
            learner.train(&pending)?;
            pending.clear();
        }
    }
    Ok(History { records })
}

/// One point of a regret curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: usize,
    /// Local regret over the trailing window ending at `t`.
    pub local_regret: f64,
    /// Regret over `[1, t]`.
    pub regret: f64,
}

/// Local and cumulative regret sampled every `stride` steps (and at the
/// final step).
pub fn regret_curve(h: &History, window: usize, stride: usize) -> Vec<CurvePoint> {
    let mut prefix = Vec::with_capacity(h.len() + 1);
    prefix.push(0.0);
    for r in &h.records {
        prefix.push(prefix.last().unwrap() + r.regret());
    }
    let stride = stride.max(1);
    let mut ts: Vec<usize> = (stride..=h.len()).step_by(stride).collect();
    if !h.is_empty() && ts.last() != Some(&h.len()) {
        ts.push(h.len());
    }
    ts.into_iter()
        .map(|t| {
            let t0 = t.saturating_sub(window) + 1;
            CurvePoint {
                t,
                local_regret: (prefix[t] - prefix[t0 - 1]) / (1 + t - t0) as f64,
                regret: prefix[t] / t as f64,
            }
        })
        .collect()
}

/// Outcome of one algorithm on one repetition.
#[derive(Debug, Clone)]
pub struct RepetitionResult {
    pub repetition: usize,
    /// Local regret over the final window.
    pub final_local_regret: f64,
    /// Mean expected gap over the final window.
    pub final_gap: f64,
    pub regret: f64,
    pub curve: Vec<CurvePoint>,
    pub history: Option<History>,
}

#[derive(Debug, Clone)]
pub struct AlgorithmResult {
    pub algorithm: AlgorithmSpec,
    pub repetitions: Vec<RepetitionResult>,
}

impl AlgorithmResult {
    pub fn final_local_regrets(&self) -> Vec<f64> {
        self.repetitions
            .iter()
            .map(|r| r.final_local_regret)
            .collect()
    }

    /// Mean and standard error of the final local regret across repetitions.
    pub fn summary(&self) -> (f64, f64) {
        mean_and_stderr(&self.final_local_regrets())
    }
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub algorithms: Vec<AlgorithmResult>,
}

impl ExperimentResult {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmResult> {
        self.algorithms
            .iter()
            .find(|a| a.algorithm.algorithm == algorithm)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExperimentOptions {
    /// Worker threads for repetitions (0 = all cores).
    pub jobs: usize,
    pub keep_history: bool,
    pub curve_stride: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            jobs: 0,
            keep_history: false,
            curve_stride: DEFAULT_WINDOW,
        }
    }
}

/// One trained run: the environment of repetition `rep` and the learner of
/// algorithm slot `slot` after `horizon` steps.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub truth: SimulationTruth,
    pub optimum: OptimumTable,
    pub learner: Learner,
    pub history: History,
}

/// Environment of repetition `rep`; identical for every algorithm slot.
pub fn environment(cfg: &SimConfig, rep: usize) -> Result<(SimulationTruth, OptimumTable)> {
    let mut truth_rng = seed::stream(cfg.seed, "truth", rep as u64);
    let truth = make_truth(cfg, &mut truth_rng)?;
    let optimum = OptimumTable::new(&truth)?;
    Ok((truth, optimum))
}

/// Trains algorithm slot `slot` on repetition `rep`, exactly as
/// [`run_experiment`] does.
pub fn train_run(cfg: &SimConfig, rep: usize, slot: usize) -> Result<TrainedRun> {
    cfg.validate()?;
    let algo = cfg
        .algorithms
        .get(slot)
        .ok_or_else(|| Error::InvalidArgument(format!("no algorithm in slot {slot}")))?;
    let (truth, optimum) = environment(cfg, rep)?;
    let mut learner = Learner::new(algo, &cfg.spec)?;
    let mut streams = RunStreams::derive(cfg.seed, rep, slot);
    let history = run_loop(cfg, &truth, &optimum, &mut learner, &mut streams)?;
    Ok(TrainedRun {
        truth,
        optimum,
        learner,
        history,
    })
}

fn run_repetition(
    cfg: &SimConfig,
    rep: usize,
    opts: &ExperimentOptions,
) -> Result<Vec<RepetitionResult>> {
    let (truth, optimum) = environment(cfg, rep)?;
    cfg.algorithms
        .iter()
        .enumerate()
        .map(|(slot, algo)| {
            let mut learner = Learner::new(algo, &cfg.spec)?;
            let mut streams = RunStreams::derive(cfg.seed, rep, slot);
            let h = run_loop(cfg, &truth, &optimum, &mut learner, &mut streams)?;
            let (final_local_regret, final_gap) = if h.is_empty() {
                (0.0, 0.0)
            } else {
                let t0 = h.len().saturating_sub(cfg.window) + 1;
                (local_regret(&h, t0, h.len())?, local_gap(&h, t0, h.len())?)
            };
            Ok(RepetitionResult {
                repetition: rep,
                final_local_regret,
                final_gap,
                regret: regret(&h),
                curve: regret_curve(&h, cfg.window, opts.curve_stride),
                history: opts.keep_history.then_some(h),
            })
        })
        .collect()
}

/// Runs every algorithm on every repetition. Repetitions are independent and
/// run in parallel; results are identical for any `jobs` value.
pub fn run_experiment(cfg: &SimConfig, opts: &ExperimentOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<RepetitionResult>> = pool.install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| run_repetition(cfg, rep, opts))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut algorithms: Vec<AlgorithmResult> = cfg
        .algorithms
        .iter()
        .map(|a| AlgorithmResult {
            algorithm: *a,
            repetitions: Vec::with_capacity(cfg.repetitions),
        })
        .collect();
    for rep in per_rep {
        for (slot, r) in rep.into_iter().enumerate() {
            algorithms[slot].repetitions.push(r);
        }
    }
    Ok(ExperimentResult { algorithms })
}
