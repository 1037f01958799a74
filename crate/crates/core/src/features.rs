//! Layout and context domain, and the sparse indicator encoding of
//! (model kind, layout, context) into weight indices.
//!
//! Contents and context values are stored zero-based. Everything that crosses
//! a process boundary (CSV, CLI arguments, `Display`) is one-based.
//!
//! Weight indices are laid out in contiguous blocks, always in this order:
//! bias, first-order by `(widget, content)`, pairwise by `(j, k, a, b)`,
//! third-order by `(j, k, m, a, b, c)`, context main effects by `(dim, value)`
//! and content-context interactions by `(widget, dim, content, value)`.
//! Only the blocks that exist for the model kind are present. Because every
//! block holds exactly one active weight for a given layout, a feature vector
//! built block by block is already strictly increasing.

use std::fmt;

use crate::error::{Error, Result};

/// Hard ceiling on layout and parameter counts.
pub const MAX_COUNT: u64 = 1 << 32;

/// Default cap for exhaustive enumeration of the layout space.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Page template: per-widget variation counts and per-dimension context
/// cardinalities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TemplateSpec {
    widgets: Vec<usize>,
    context: Vec<usize>,
}

impl TemplateSpec {
    pub fn new(widgets: Vec<usize>, context: Vec<usize>) -> Result<Self> {
        if widgets.is_empty() {
            return Err(Error::InvalidTemplate(
                "at least one widget is required".into(),
            ));
        }
        if let Some(i) = widgets.iter().position(|&n| n == 0) {
            return Err(Error::InvalidTemplate(format!(
                "widget {} has zero variations",
                i + 1
            )));
        }
        if let Some(l) = context.iter().position(|&g| g == 0) {
            return Err(Error::InvalidTemplate(format!(
                "context dimension {} has zero values",
                l + 1
            )));
        }
        let spec = Self { widgets, context };
        let count = spec
            .checked_layout_count()
            .ok_or_else(|| Error::TooLarge("layout count overflows u64".into()))?;
        if count > MAX_COUNT {
            return Err(Error::TooLarge(format!(
                "{count} layouts exceeds the limit of 2^32"
            )));
        }
        Ok(spec)
    }

    /// `D` widgets with `n` variations each and no context.
    pub fn uniform(widgets: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; widgets], Vec::new())
    }

    pub fn widgets(&self) -> &[usize] {
        &self.widgets
    }

    pub fn context(&self) -> &[usize] {
        &self.context
    }

    pub fn widget_count(&self) -> usize {
        self.widgets.len()
    }

    pub fn context_dims(&self) -> usize {
        self.context.len()
    }

    pub fn max_variations(&self) -> usize {
        self.widgets.iter().copied().max().unwrap_or(0)
    }

    fn checked_layout_count(&self) -> Option<u64> {
        self.widgets
            .iter()
            .try_fold(1u64, |acc, &n| acc.checked_mul(n as u64))
    }

    /// `Π N_i`; bounded by [`MAX_COUNT`] at construction.
    pub fn layout_count(&self) -> u64 {
        self.checked_layout_count()
            .expect("validated at construction")
    }

    /// `Π G_l` (1 when there is no context).
    pub fn context_count(&self) -> u64 {
        self.context
            .iter()
            .fold(1u64, |acc, &g| acc.saturating_mul(g as u64))
    }

    pub fn validate_layout(&self, layout: &Layout) -> Result<()> {
        if layout.0.len() != self.widgets.len() {
            return Err(Error::InvalidLayout(format!(
                "expected {} widgets, got {}",
                self.widgets.len(),
                layout.0.len()
            )));
        }
        for (i, (&c, &n)) in layout.0.iter().zip(&self.widgets).enumerate() {
            if c >= n {
                return Err(Error::InvalidLayout(format!(
                    "widget {} content {} outside 1..={}",
                    i + 1,
                    c + 1,
                    n
                )));
            }
        }
        Ok(())
    }

    pub fn validate_context(&self, context: &Context) -> Result<()> {
        if context.0.len() != self.context.len() {
            return Err(Error::InvalidContext(format!(
                "expected {} context values, got {}",
                self.context.len(),
                context.0.len()
            )));
        }
        for (l, (&g, &card)) in context.0.iter().zip(&self.context).enumerate() {
            if g >= card {
                return Err(Error::InvalidContext(format!(
                    "context dimension {} value {} outside 1..={}",
                    l + 1,
                    g + 1,
                    card
                )));
            }
        }
        Ok(())
    }

    /// Mixed-radix index of a layout in lexicographic order.
    pub fn flat_index(&self, layout: &Layout) -> usize {
        layout
            .0
            .iter()
            .zip(&self.widgets)
            .fold(0usize, |acc, (&c, &n)| acc * n + c)
    }

    pub fn layout_from_flat(&self, mut flat: usize) -> Layout {
        let mut choices = vec![0; self.widgets.len()];
        for (slot, &n) in choices.iter_mut().zip(&self.widgets).rev() {
            *slot = flat % n;
            flat /= n;
        }
        Layout(choices)
    }

    /// Mixed-radix index of a context value tuple.
    pub fn context_flat_index(&self, context: &Context) -> usize {
        context
            .0
            .iter()
            .zip(&self.context)
            .fold(0usize, |acc, (&g, &card)| acc * card + g)
    }

    pub fn context_from_flat(&self, mut flat: usize) -> Context {
        let mut values = vec![0; self.context.len()];
        for (slot, &g) in values.iter_mut().zip(&self.context).rev() {
            *slot = flat % g;
            flat /= g;
        }
        Context(values)
    }

    /// Same template with the context dimensions removed.
    pub fn without_context(&self) -> Self {
        Self {
            widgets: self.widgets.clone(),
            context: Vec::new(),
        }
    }
}

/// One content choice per widget (zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Layout(pub Vec<usize>);

impl Layout {
    pub fn choices(&self) -> &[usize] {
        &self.0
    }

    /// Parses a comma-separated one-based layout such as `2,1,1`.
    pub fn parse_one_based(s: &str) -> Result<Self> {
        parse_one_based(s)
            .map(Layout)
            .map_err(|e| Error::InvalidLayout(format!("{s:?}: {e}")))
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_one_based(f, &self.0)
    }
}

/// One categorical value per context dimension (zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Context(pub Vec<usize>);

impl Context {
    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn parse_one_based(s: &str) -> Result<Self> {
        if s.trim().is_empty() {
            return Ok(Context(Vec::new()));
        }
        parse_one_based(s)
            .map(Context)
            .map_err(|e| Error::InvalidContext(format!("{s:?}: {e}")))
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_one_based(f, &self.0)
    }
}

fn parse_one_based(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|part| {
            let v: usize = part
                .trim()
                .parse()
                .map_err(|_| format!("{part:?} is not a positive integer"))?;
            v.checked_sub(1)
                .ok_or_else(|| "values are one-based".to_string())
        })
        .collect()
}

fn write_one_based(f: &mut fmt::Formatter<'_>, values: &[usize]) -> fmt::Result {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{}", v + 1)?;
    }
    Ok(())
}

/// Model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Bias plus first-order content effects.
    Mvt1,
    /// MVT1 plus pairwise content interactions.
    Mvt2,
    /// MVT2 plus context main effects and content-context interactions.
    Mvt2c,
    /// MVT2 plus three-way content interactions.
    Mvt3,
    /// One weight per distinct layout.
    NdMab,
    /// Bias plus first-order effects of a single widget.
    DMabs(usize),
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            ModelKind::Mvt1 => "MVT1".into(),
            ModelKind::Mvt2 => "MVT2".into(),
            ModelKind::Mvt2c => "MVT2c".into(),
            ModelKind::Mvt3 => "MVT3".into(),
            ModelKind::NdMab => "ND_MAB".into(),
            ModelKind::DMabs(i) => format!("D_MABS[{}]", i + 1),
        }
    }

    pub fn uses_context(&self) -> bool {
        matches!(self, ModelKind::Mvt2c)
    }

    pub fn check_compatible(&self, spec: &TemplateSpec) -> Result<()> {
        match *self {
            ModelKind::Mvt2c if spec.context_dims() == 0 => Err(Error::IncompatibleKind {
                kind: self.name(),
                reason: "requires at least one context dimension".into(),
            }),
            ModelKind::DMabs(i) if i >= spec.widget_count() => Err(Error::IncompatibleKind {
                kind: self.name(),
                reason: format!("template has only {} widgets", spec.widget_count()),
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Identity of a single weight. Widget, content and context fields are
/// zero-based; `Pairwise` and `ThirdOrder` keep their widgets strictly
/// increasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightDescriptor {
    Bias,
    FirstOrder {
        widget: usize,
        content: usize,
    },
    Pairwise {
        first: (usize, usize),
        second: (usize, usize),
    },
    ThirdOrder {
        terms: [(usize, usize); 3],
    },
    ContextMain {
        dim: usize,
        value: usize,
    },
    ContentContext {
        widget: usize,
        content: usize,
        dim: usize,
        value: usize,
    },
    LayoutId(usize),
}

/// Sparse binary feature vector: strictly increasing active indices, each
/// standing for a feature value of 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    indices: Vec<usize>,
    dim: usize,
}

impl FeatureVector {
    /// Sorts and validates arbitrary indices.
    pub fn new(mut indices: Vec<usize>, dim: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate feature index {}",
                w[0]
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::IndexOutOfRange { index: last, dim });
            }
        }
        Ok(Self { indices, dim })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Exact weight count `M` for a model kind on a template.
pub fn parameter_count(kind: ModelKind, spec: &TemplateSpec) -> Result<usize> {
    kind.check_compatible(spec)?;
    let n: Vec<u128> = spec.widgets().iter().map(|&x| x as u128).collect();
    let g: Vec<u128> = spec.context().iter().map(|&x| x as u128).collect();
    let first: u128 = 1 + n.iter().sum::<u128>();
    let pairs: u128 = pair_products(&n);
    let total = match kind {
        ModelKind::Mvt1 => first,
        ModelKind::Mvt2 => first + pairs,
        ModelKind::Mvt2c => {
            first + pairs + g.iter().sum::<u128>() + n.iter().sum::<u128>() * g.iter().sum::<u128>()
        }
        ModelKind::Mvt3 => first + pairs + triple_products(&n),
        ModelKind::NdMab => n.iter().product(),
        ModelKind::DMabs(i) => 1 + n[i],
    };
    if total > MAX_COUNT as u128 {
        return Err(Error::TooLarge(format!(
            "{kind} needs {total} weights, above the limit of 2^32"
        )));
    }
    Ok(total as usize)
}

/// Number of identifiable parameters of the indicator encoding: the rank of
/// the design over all layouts and contexts. Each block of indicators sums to
/// a lower-order indicator, so only `(N - 1)`-style levels are free.
pub fn free_parameter_count(kind: ModelKind, spec: &TemplateSpec) -> Result<usize> {
    parameter_count(kind, spec)?;
    let n: Vec<u128> = spec.widgets().iter().map(|&x| x as u128 - 1).collect();
    let g: Vec<u128> = spec.context().iter().map(|&x| x as u128 - 1).collect();
    let first: u128 = 1 + n.iter().sum::<u128>();
    let total = match kind {
        ModelKind::Mvt1 => first,
        ModelKind::Mvt2 => first + pair_products(&n),
        ModelKind::Mvt2c => {
            first
                + pair_products(&n)
                + g.iter().sum::<u128>()
                + n.iter().sum::<u128>() * g.iter().sum::<u128>()
        }
        ModelKind::Mvt3 => first + pair_products(&n) + triple_products(&n),
        ModelKind::NdMab => spec.layout_count() as u128,
        ModelKind::DMabs(i) => 1 + n[i],
    };
    Ok(total as usize)
}

fn pair_products(n: &[u128]) -> u128 {
    let mut s = 0;
    for j in 0..n.len() {
        for k in j + 1..n.len() {
            s += n[j] * n[k];
        }
    }
    s
}

fn triple_products(n: &[u128]) -> u128 {
    let mut s = 0;
    for j in 0..n.len() {
        for k in j + 1..n.len() {
            for m in k + 1..n.len() {
                s += n[j] * n[k] * n[m];
            }
        }
    }
    s
}

/// Precomputed block offsets for one (model kind, template) pair.
///
/// All scoring in the crate goes through this map so that the incremental
/// rescoring of hill climbing and the full feature build agree on indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kind: ModelKind,
    spec: TemplateSpec,
    dim: usize,
    first: Vec<usize>,
    // flat D×D, valid for j < k
    pair: Vec<usize>,
    // flat D×D×D, valid for j < k < m
    triple: Vec<usize>,
    ctx_main: Vec<usize>,
    // flat D×L
    ctx_content: Vec<usize>,
}

impl FeatureMap {
    pub fn new(kind: ModelKind, spec: &TemplateSpec) -> Result<Self> {
        let expected = parameter_count(kind, spec)?;
        let d = spec.widget_count();
        let l = spec.context_dims();
        let n = spec.widgets();
        let mut map = Self {
            kind,
            spec: spec.clone(),
            dim: 0,
            first: Vec::new(),
            pair: Vec::new(),
            triple: Vec::new(),
            ctx_main: Vec::new(),
            ctx_content: Vec::new(),
        };
        let mut next = 0usize;
        match kind {
            ModelKind::NdMab => next = spec.layout_count() as usize,
            ModelKind::DMabs(_) => next = expected,
            _ => {
                next += 1;
                for &ni in n {
                    map.first.push(next);
                    next += ni;
                }
                if matches!(kind, ModelKind::Mvt2 | ModelKind::Mvt2c | ModelKind::Mvt3) {
                    map.pair = vec![usize::MAX; d * d];
                    for j in 0..d {
                        for k in j + 1..d {
                            map.pair[j * d + k] = next;
                            next += n[j] * n[k];
                        }
                    }
                }
                if kind == ModelKind::Mvt3 {
                    map.triple = vec![usize::MAX; d * d * d];
                    for j in 0..d {
                        for k in j + 1..d {
                            for m in k + 1..d {
                                map.triple[(j * d + k) * d + m] = next;
                                next += n[j] * n[k] * n[m];
                            }
                        }
                    }
                }
                if kind == ModelKind::Mvt2c {
                    let g = spec.context();
                    for &gl in g {
                        map.ctx_main.push(next);
                        next += gl;
                    }
                    map.ctx_content = vec![usize::MAX; d * l];
                    for m in 0..d {
                        for nn in 0..l {
                            map.ctx_content[m * l + nn] = next;
                            next += n[m] * g[nn];
                        }
                    }
                }
            }
        }
        debug_assert_eq!(next, expected);
        map.dim = next;
        Ok(map)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn spec(&self) -> &TemplateSpec {
        &self.spec
    }

    /// Total weight count `M`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of active indices in every feature vector of this map.
    pub fn active_count(&self) -> usize {
        let d = self.spec.widget_count();
        let l = self.spec.context_dims();
        match self.kind {
            ModelKind::Mvt1 => 1 + d,
            ModelKind::Mvt2 => 1 + d + d * d.saturating_sub(1) / 2,
            ModelKind::Mvt2c => 1 + d + d * d.saturating_sub(1) / 2 + l + d * l,
            ModelKind::Mvt3 => {
                1 + d
                    + d * d.saturating_sub(1) / 2
                    + d * d.saturating_sub(1) * d.saturating_sub(2) / 6
            }
            ModelKind::NdMab => 1,
            ModelKind::DMabs(_) => 2,
        }
    }

    #[inline]
    fn pair_index(&self, j: usize, a: usize, k: usize, b: usize) -> usize {
        let d = self.spec.widget_count();
        self.pair[j * d + k] + a * self.spec.widgets[k] + b
    }

    #[inline]
    fn triple_index(&self, terms: [(usize, usize); 3]) -> usize {
        let d = self.spec.widget_count();
        let n = &self.spec.widgets;
        let [(j, a), (k, b), (m, c)] = terms;
        self.triple[(j * d + k) * d + m] + (a * n[k] + b) * n[m] + c
    }

    #[inline]
    fn ctx_content_index(&self, m: usize, j: usize, dim: usize, g: usize) -> usize {
        let l = self.spec.context_dims();
        self.ctx_content[m * l + dim] + j * self.spec.context[dim] + g
    }

    /// Validated feature construction. A context must be supplied exactly
    /// when the model kind uses it.
    pub fn build(&self, layout: &Layout, context: Option<&Context>) -> Result<FeatureVector> {
        self.spec.validate_layout(layout)?;
        match (self.kind.uses_context(), context) {
            (true, Some(ctx)) => self.spec.validate_context(ctx)?,
            (true, None) => {
                return Err(Error::InvalidContext(format!(
                    "{} requires a context",
                    self.kind
                )))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidContext(format!(
                    "{} does not take a context",
                    self.kind
                )))
            }
            (false, None) => {}
        }
        let mut indices = Vec::with_capacity(self.active_count());
        self.for_each_active(layout, context, |i| indices.push(i));
        Ok(FeatureVector {
            indices,
            dim: self.dim,
        })
    }

    /// Calls `f` for every active index in canonical (increasing) order.
    /// Inputs are assumed valid; context is ignored by non-contextual kinds.
    pub fn for_each_active(
        &self,
        layout: &Layout,
        context: Option<&Context>,
        mut f: impl FnMut(usize),
    ) {
        let a = &layout.0;
        let d = a.len();
        match self.kind {
            ModelKind::NdMab => f(self.spec.flat_index(layout)),
            ModelKind::DMabs(i) => {
                f(0);
                f(1 + a[i]);
            }
            _ => {
                f(0);
                for i in 0..d {
                    f(self.first[i] + a[i]);
                }
                if !self.pair.is_empty() {
                    for j in 0..d {
                        for k in j + 1..d {
                            f(self.pair_index(j, a[j], k, a[k]));
                        }
                    }
                }
                if !self.triple.is_empty() {
                    for j in 0..d {
                        for k in j + 1..d {
                            for m in k + 1..d {
                                f(self.triple_index([(j, a[j]), (k, a[k]), (m, a[m])]));
                            }
                        }
                    }
                }
                if self.kind == ModelKind::Mvt2c {
                    let x = &context.expect("MVT2c scoring requires a context").0;
                    for (dim, &g) in x.iter().enumerate() {
                        f(self.ctx_main[dim] + g);
                    }
                    for (m, &j) in a.iter().enumerate() {
                        for (dim, &g) in x.iter().enumerate() {
                            f(self.ctx_content_index(m, j, dim, g));
                        }
                    }
                }
            }
        }
    }

    /// `Σ weights[i]` over the active indices of `(layout, context)`.
    pub fn score(&self, weights: &[f64], layout: &Layout, context: Option<&Context>) -> f64 {
        let mut s = 0.0;
        self.for_each_active(layout, context, |i| s += weights[i]);
        s
    }

    /// Sum of every weight that mentions `widget` when it holds `content`,
    /// all other widgets fixed at `layout`. For any layout,
    /// `score(A with widget←c) = score(A) - contribution(A, widget, A[widget]) + contribution(A, widget, c)`,
    /// and computing it touches `O(D + L)` weights for MVT kinds.
    pub fn contribution(
        &self,
        weights: &[f64],
        layout: &Layout,
        context: Option<&Context>,
        widget: usize,
        content: usize,
    ) -> f64 {
        let a = &layout.0;
        let d = a.len();
        match self.kind {
            ModelKind::NdMab => {
                let n = &self.spec.widgets;
                let flat = a.iter().enumerate().fold(0usize, |acc, (i, &c)| {
                    acc * n[i] + if i == widget { content } else { c }
                });
                weights[flat]
            }
            ModelKind::DMabs(i) => {
                if i == widget {
                    weights[1 + content]
                } else {
                    0.0
                }
            }
            _ => {
                let mut s = weights[self.first[widget] + content];
                if !self.pair.is_empty() {
                    for (k, &ak) in a.iter().enumerate() {
                        if k < widget {
                            s += weights[self.pair_index(k, ak, widget, content)];
                        } else if k > widget {
                            s += weights[self.pair_index(widget, content, k, ak)];
                        }
                    }
                }
                if !self.triple.is_empty() {
                    for j in 0..d {
                        for k in j + 1..d {
                            if j == widget || k == widget {
                                continue;
                            }
                            let mut terms = [(widget, content), (j, a[j]), (k, a[k])];
                            terms.sort_unstable();
                            s += weights[self.triple_index(terms)];
                        }
                    }
                }
                if self.kind == ModelKind::Mvt2c {
                    let x = &context.expect("MVT2c scoring requires a context").0;
                    for (dim, &g) in x.iter().enumerate() {
                        s += weights[self.ctx_content_index(widget, content, dim, g)];
                    }
                }
                s
            }
        }
    }

    fn kind_error(&self, reason: impl Into<String>) -> Error {
        Error::InvalidDescriptor {
            kind: self.kind.name(),
            reason: reason.into(),
        }
    }

    fn check_content(&self, widget: usize, content: usize) -> Result<()> {
        let d = self.spec.widget_count();
        if widget >= d {
            return Err(self.kind_error(format!("widget {widget} out of range")));
        }
        if content >= self.spec.widgets[widget] {
            return Err(self.kind_error(format!(
                "content {content} out of range for widget {widget}"
            )));
        }
        Ok(())
    }

    fn check_value(&self, dim: usize, value: usize) -> Result<()> {
        if dim >= self.spec.context_dims() || value >= self.spec.context[dim] {
            return Err(self.kind_error(format!("context ({dim}, {value}) out of range")));
        }
        Ok(())
    }

    pub fn index_of(&self, desc: &WeightDescriptor) -> Result<usize> {
        use WeightDescriptor::*;
        let is_mvt = matches!(
            self.kind,
            ModelKind::Mvt1 | ModelKind::Mvt2 | ModelKind::Mvt2c | ModelKind::Mvt3
        );
        match *desc {
            Bias if is_mvt || matches!(self.kind, ModelKind::DMabs(_)) => Ok(0),
            FirstOrder { widget, content } => {
                self.check_content(widget, content)?;
                match self.kind {
                    ModelKind::DMabs(i) if i == widget => Ok(1 + content),
                    _ if is_mvt => Ok(self.first[widget] + content),
                    _ => Err(self.kind_error("first-order weight not in this model")),
                }
            }
            Pairwise {
                first: (j, a),
                second: (k, b),
            } if !self.pair.is_empty() => {
                self.check_content(j, a)?;
                self.check_content(k, b)?;
                if j >= k {
                    return Err(self.kind_error("pairwise widgets must be strictly increasing"));
                }
                Ok(self.pair_index(j, a, k, b))
            }
            ThirdOrder { terms } if !self.triple.is_empty() => {
                for &(w, c) in &terms {
                    self.check_content(w, c)?;
                }
                if !(terms[0].0 < terms[1].0 && terms[1].0 < terms[2].0) {
                    return Err(self.kind_error("third-order widgets must be strictly increasing"));
                }
                Ok(self.triple_index(terms))
            }
            ContextMain { dim, value } if self.kind == ModelKind::Mvt2c => {
                self.check_value(dim, value)?;
                Ok(self.ctx_main[dim] + value)
            }
            ContentContext {
                widget,
                content,
                dim,
                value,
            } if self.kind == ModelKind::Mvt2c => {
                self.check_content(widget, content)?;
                self.check_value(dim, value)?;
                Ok(self.ctx_content_index(widget, content, dim, value))
            }
            LayoutId(flat) if self.kind == ModelKind::NdMab => {
                if flat >= self.dim {
                    return Err(self.kind_error(format!("layout id {flat} out of range")));
                }
                Ok(flat)
            }
            _ => Err(self.kind_error(format!("{desc:?} is not a weight of this model"))),
        }
    }

    pub fn descriptor_of(&self, index: usize) -> Result<WeightDescriptor> {
        use WeightDescriptor::*;
        if index >= self.dim {
            return Err(Error::IndexOutOfRange {
                index,
                dim: self.dim,
            });
        }
        let n = &self.spec.widgets;
        let d = n.len();
        match self.kind {
            ModelKind::NdMab => return Ok(LayoutId(index)),
            ModelKind::DMabs(i) => {
                return Ok(if index == 0 {
                    Bias
                } else {
                    FirstOrder {
                        widget: i,
                        content: index - 1,
                    }
                })
            }
            _ => {}
        }
        if index == 0 {
            return Ok(Bias);
        }
        for (i, &off) in self.first.iter().enumerate() {
            if index < off + n[i] {
                return Ok(FirstOrder {
                    widget: i,
                    content: index - off,
                });
            }
        }
        if !self.pair.is_empty() {
            for j in 0..d {
                for k in j + 1..d {
                    let off = self.pair[j * d + k];
                    if index >= off && index < off + n[j] * n[k] {
                        let r = index - off;
                        return Ok(Pairwise {
                            first: (j, r / n[k]),
                            second: (k, r % n[k]),
                        });
                    }
                }
            }
        }
        if !self.triple.is_empty() {
            for j in 0..d {
                for k in j + 1..d {
                    for m in k + 1..d {
                        let off = self.triple[(j * d + k) * d + m];
                        if index >= off && index < off + n[j] * n[k] * n[m] {
                            let r = index - off;
                            let c = r % n[m];
                            let b = (r / n[m]) % n[k];
                            let a = r / (n[m] * n[k]);
                            return Ok(ThirdOrder {
                                terms: [(j, a), (k, b), (m, c)],
                            });
                        }
                    }
                }
            }
        }
        let g = &self.spec.context;
        for (dim, &off) in self.ctx_main.iter().enumerate() {
            if index >= off && index < off + g[dim] {
                return Ok(ContextMain {
                    dim,
                    value: index - off,
                });
            }
        }
        let l = g.len();
        for m in 0..d {
            for dim in 0..l {
                let off = self.ctx_content[m * l + dim];
                if index >= off && index < off + n[m] * g[dim] {
                    let r = index - off;
                    return Ok(ContentContext {
                        widget: m,
                        content: r / g[dim],
                        dim,
                        value: r % g[dim],
                    });
                }
            }
        }
        unreachable!("index {index} below dim {} but in no block", self.dim)
    }
}

/// Convenience wrapper over [`FeatureMap::build`].
pub fn build_features(
    kind: ModelKind,
    spec: &TemplateSpec,
    layout: &Layout,
    context: Option<&Context>,
) -> Result<FeatureVector> {
    FeatureMap::new(kind, spec)?.build(layout, context)
}

/// Lexicographic iterator over every layout (last widget varies fastest).
#[derive(Debug, Clone)]
pub struct Layouts {
    widgets: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for Layouts {
    type Item = Layout;

    fn next(&mut self) -> Option<Layout> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut i = succ.len();
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            succ[i] += 1;
            if succ[i] < self.widgets[i] {
                advanced = true;
                break;
            }
            succ[i] = 0;
        }
        if advanced {
            self.next = Some(succ);
        }
        Some(Layout(current))
    }
}

pub fn enumerate_layouts(spec: &TemplateSpec) -> Result<Layouts> {
    enumerate_layouts_capped(spec, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_layouts_capped(spec: &TemplateSpec, cap: u64) -> Result<Layouts> {
    let count = spec.layout_count();
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    Ok(Layouts {
        widgets: spec.widgets().to_vec(),
        next: Some(vec![0; spec.widget_count()]),
    })
}

/// Every context tuple in lexicographic order (a single empty context when
/// `L = 0`).
pub fn enumerate_contexts(spec: &TemplateSpec) -> impl Iterator<Item = Context> + '_ {
    (0..spec.context_count() as usize).map(move |f| spec.context_from_flat(f))
}
