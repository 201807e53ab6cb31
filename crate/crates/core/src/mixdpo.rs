//! Mix-Policy DPO over a tabular softmax policy.
//!
//! The policy assigns one row of logits per context (a post) over a shared
//! query vocabulary. Preference pairs come in two pools: on-policy pairs
//! where both completions are the model's own generations, and off-policy
//! pairs where the preferred completion is a ground-truth query the model
//! missed. Training batches mix the two pools at a fixed off-policy fraction.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{normalize_query, Post};

pub const PAIRS_FORMAT: &str = "rttp-pairs";
pub const POLICY_FORMAT: &str = "rttp-policy";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DpoError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("no training data")]
    NoTrainingData,
    #[error("policy shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid DPO parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid training input: {0}")]
    InvalidInput(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_err(what: &'static str, detail: impl ToString) -> DpoError {
    DpoError::Format {
        what,
        detail: detail.to_string(),
    }
}

/// Softmax policy with one logit row per context.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    contexts: Vec<String>,
    vocabulary: Vec<String>,
    logits: Vec<f64>,
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

fn row_entropy(row: &[f64]) -> f64 {
    let lse = log_sum_exp(row);
    -row.iter()
        .map(|z| {
            let lp = z - lse;
            lp.exp() * lp
        })
        .sum::<f64>()
}

impl TabularPolicy {
    pub fn uniform(contexts: Vec<String>, vocabulary: Vec<String>) -> Result<Self, DpoError> {
        let n = contexts.len() * vocabulary.len();
        Self::from_logits(contexts, vocabulary, vec![0.0; n])
    }

    pub fn from_logits(contexts: Vec<String>, vocabulary: Vec<String>, logits: Vec<f64>) -> Result<Self, DpoError> {
        if vocabulary.is_empty() {
            return Err(DpoError::ShapeMismatch("vocabulary is empty".into()));
        }
        if logits.len() != contexts.len() * vocabulary.len() {
            return Err(DpoError::ShapeMismatch(format!(
                "{} logits for {} contexts x {} vocabulary entries",
                logits.len(),
                contexts.len(),
                vocabulary.len()
            )));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(DpoError::InvalidInput("non-finite logit".into()));
        }
        Ok(Self {
            contexts,
            vocabulary,
            logits,
        })
    }

    pub fn contexts(&self) -> &[String] {
        &self.contexts
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn row(&self, context: usize) -> &[f64] {
        let v = self.vocab_size();
        &self.logits[context * v..(context + 1) * v]
    }

    pub fn row_mut(&mut self, context: usize) -> &mut [f64] {
        let v = self.vocab_size();
        &mut self.logits[context * v..(context + 1) * v]
    }

    pub fn log_prob(&self, context: usize, entry: usize) -> f64 {
        let row = self.row(context);
        row[entry] - log_sum_exp(row)
    }

    pub fn probs(&self, context: usize) -> Vec<f64> {
        let row = self.row(context);
        let lse = log_sum_exp(row);
        row.iter().map(|z| (z - lse).exp()).collect()
    }

    /// Shannon entropy of the context's distribution, in nats.
    pub fn entropy(&self, context: usize) -> f64 {
        row_entropy(self.row(context))
    }

    pub fn same_shape(&self, other: &Self) -> Result<(), DpoError> {
        if self.contexts != other.contexts || self.vocabulary != other.vocabulary {
            return Err(DpoError::ShapeMismatch(
                "policies differ in contexts or vocabulary".into(),
            ));
        }
        Ok(())
    }

    fn check_pair(&self, pair: &PreferencePair) -> Result<(), DpoError> {
        let v = self.vocab_size();
        if pair.context >= self.n_contexts() || pair.win >= v || pair.lose >= v {
            return Err(DpoError::InvalidInput(format!("pair {pair:?} out of range")));
        }
        if pair.win == pair.lose {
            return Err(DpoError::InvalidInput(format!("pair {pair:?} has win == lose")));
        }
        Ok(())
    }

    /// Writes a JSON header line followed by one JSON array of logits per context.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DpoError> {
        let header = PolicyHeader {
            format: POLICY_FORMAT.into(),
            version: FORMAT_VERSION,
            contexts: self.contexts.clone(),
            vocabulary: self.vocabulary.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
        for c in 0..self.n_contexts() {
            serde_json::to_writer(&mut w, self.row(c)).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, DpoError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or_else(|| format_err("policy", "empty file"))??;
        let header: PolicyHeader = serde_json::from_str(&header_line).map_err(|e| format_err("policy header", e))?;
        if header.format != POLICY_FORMAT || header.version != FORMAT_VERSION {
            return Err(format_err(
                "policy header",
                format!("unsupported {} v{}", header.format, header.version),
            ));
        }
        let mut logits = Vec::with_capacity(header.contexts.len() * header.vocabulary.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = serde_json::from_str(&line).map_err(|e| format_err("policy row", e))?;
            if row.len() != header.vocabulary.len() {
                return Err(format_err("policy row", format!("{} entries", row.len())));
            }
            logits.extend(row);
        }
        Self::from_logits(header.contexts, header.vocabulary, logits)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyHeader {
    format: String,
    version: u32,
    contexts: Vec<String>,
    vocabulary: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    OnPolicy,
    OffPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferencePair {
    pub context: usize,
    pub win: usize,
    pub lose: usize,
    pub policy_kind: PolicyKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPool {
    pub on_policy: Vec<PreferencePair>,
    pub off_policy: Vec<PreferencePair>,
}

impl PairPool {
    pub fn len(&self) -> usize {
        self.on_policy.len() + self.off_policy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &PreferencePair> {
        self.on_policy.iter().chain(&self.off_policy)
    }

    fn push(&mut self, pair: PreferencePair) {
        match pair.policy_kind {
            PolicyKind::OnPolicy => self.on_policy.push(pair),
            PolicyKind::OffPolicy => self.off_policy.push(pair),
        }
    }
}

/// Pairs together with the index spaces they refer to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairDataset {
    pub contexts: Vec<String>,
    pub vocabulary: Vec<String>,
    pub pool: PairPool,
    /// Posts with no generations, for which no negative exists.
    pub skipped: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PairsHeader {
    format: String,
    version: u32,
    contexts: Vec<String>,
    vocabulary: Vec<String>,
    skipped: usize,
}

impl PairDataset {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DpoError> {
        let header = PairsHeader {
            format: PAIRS_FORMAT.into(),
            version: FORMAT_VERSION,
            contexts: self.contexts.clone(),
            vocabulary: self.vocabulary.clone(),
            skipped: self.skipped,
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
        for p in self.pool.iter() {
            serde_json::to_writer(&mut w, p).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, DpoError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or_else(|| format_err("pairs", "empty file"))??;
        let header: PairsHeader = serde_json::from_str(&header_line).map_err(|e| format_err("pairs header", e))?;
        if header.format != PAIRS_FORMAT || header.version != FORMAT_VERSION {
            return Err(format_err(
                "pairs header",
                format!("unsupported {} v{}", header.format, header.version),
            ));
        }
        let mut pool = PairPool::default();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: PreferencePair = serde_json::from_str(&line).map_err(|e| format_err("pair", e))?;
            if pair.context >= header.contexts.len()
                || pair.win >= header.vocabulary.len()
                || pair.lose >= header.vocabulary.len()
                || pair.win == pair.lose
            {
                return Err(format_err("pair", format!("{pair:?} out of range")));
            }
            pool.push(pair);
        }
        Ok(Self {
            contexts: header.contexts,
            vocabulary: header.vocabulary,
            pool,
            skipped: header.skipped,
        })
    }
}

#[derive(Default)]
struct Interner {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn intern(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        self.items.push(s.to_string());
        self.index.insert(s.to_string(), self.items.len() - 1);
        self.items.len() - 1
    }
}

/// Builds on- and off-policy pairs from ground truth and ranked generations.
///
/// When a ground-truth query is among the top `k` generations, the highest
/// ranked match is preferred over each non-matching top-`k` generation.
/// Otherwise each ground-truth query is preferred over the top-1 generation.
/// Posts with no generations are skipped.
pub fn build_pairs(
    posts: &[Post],
    generations: &HashMap<String, Vec<String>>,
    k: usize,
) -> Result<PairDataset, DpoError> {
    if k == 0 {
        return Err(DpoError::InvalidParameter("k must be >= 1".into()));
    }
    let mut contexts = Interner::default();
    let mut vocab = Interner::default();
    let mut pool = PairPool::default();
    let mut skipped = 0;

    for post in posts {
        let truth: Vec<String> = post
            .ground_truth_queries
            .iter()
            .map(|q| normalize_query(q))
            .filter(|q| !q.is_empty())
            .collect();
        if truth.is_empty() {
            return Err(DpoError::InvalidInput(format!(
                "post {} has no ground-truth query",
                post.post_id
            )));
        }
        let mut top: Vec<String> = Vec::new();
        for g in generations.get(&post.post_id).into_iter().flatten() {
            let g = normalize_query(g);
            if !g.is_empty() && !top.contains(&g) {
                top.push(g);
            }
        }
        top.truncate(k);
        if top.is_empty() {
            skipped += 1;
            continue;
        }

        let ctx = contexts.intern(&post.post_id);
        let ids: Vec<usize> = top.iter().map(|g| vocab.intern(g)).collect();
        match top.iter().position(|g| truth.contains(g)) {
            Some(best) => {
                for (i, g) in top.iter().enumerate() {
                    if !truth.contains(g) {
                        pool.push(PreferencePair {
                            context: ctx,
                            win: ids[best],
                            lose: ids[i],
                            policy_kind: PolicyKind::OnPolicy,
                        });
                    }
                }
            }
            None => {
                for q in &truth {
                    pool.push(PreferencePair {
                        context: ctx,
                        win: vocab.intern(q),
                        lose: ids[0],
                        policy_kind: PolicyKind::OffPolicy,
                    });
                }
            }
        }
    }

    Ok(PairDataset {
        contexts: contexts.items,
        vocabulary: vocab.items,
        pool,
        skipped,
    })
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bracketed log-ratio difference. Within one row the softmax normalizers
/// cancel, so `ln π(w) - ln π(l) = z_w - z_l` exactly.
fn implicit_margin(theta: &TabularPolicy, reference: &TabularPolicy, p: &PreferencePair) -> f64 {
    let t = theta.row(p.context);
    let r = reference.row(p.context);
    (t[p.win] - r[p.win]) - (t[p.lose] - r[p.lose])
}

/// `-ln σ(β [(ln πθ(w|x) - ln πref(w|x)) - (ln πθ(l|x) - ln πref(l|x))])`.
pub fn dpo_loss(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    pair: &PreferencePair,
    beta: f64,
) -> Result<f64, DpoError> {
    theta.same_shape(reference)?;
    theta.check_pair(pair)?;
    Ok(softplus(-beta * implicit_margin(theta, reference, pair)))
}

pub fn mean_loss(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    batch: &[PreferencePair],
    beta: f64,
) -> Result<f64, DpoError> {
    if batch.is_empty() {
        return Err(DpoError::EmptyBatch);
    }
    let mut total = 0.0;
    for p in batch {
        total += dpo_loss(theta, reference, p, beta)?;
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of the mean batch loss with respect to the logits of `theta`.
///
/// For a pair with `s = σ(-βΔ)` the row gradient is
/// `-βs (onehot(win) - π) + βs (onehot(lose) - π)`; the `π` terms cancel,
/// leaving nonzero entries only at `win` and `lose`.
pub fn dpo_grad(
    theta: &TabularPolicy,
    reference: &TabularPolicy,
    batch: &[PreferencePair],
    beta: f64,
) -> Result<Vec<f64>, DpoError> {
    if batch.is_empty() {
        return Err(DpoError::EmptyBatch);
    }
    theta.same_shape(reference)?;
    let v = theta.vocab_size();
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; theta.logits.len()];
    for p in batch {
        theta.check_pair(p)?;
        let s = sigmoid(-beta * implicit_margin(theta, reference, p));
        let g = beta * s * scale;
        grad[p.context * v + p.win] -= g;
        grad[p.context * v + p.lose] += g;
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoConfig {
    pub beta: f64,
    /// Probability that a batch slot draws from the off-policy pool.
    pub off_policy_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Use the starting policy of each retraining round as the reference
    /// instead of the original checkpoint.
    pub refresh_reference: bool,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            off_policy_fraction: 0.1,
            // each sampled pair moves its logit gap by about lr * beta / batch_size
            learning_rate: 100.0,
            batch_size: 32,
            seed: 0,
            refresh_reference: false,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<(), DpoError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(DpoError::InvalidParameter(format!("beta {} must be > 0", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.off_policy_fraction) {
            return Err(DpoError::InvalidParameter(format!(
                "off_policy_fraction {} not in [0, 1]",
                self.off_policy_fraction
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(DpoError::InvalidParameter(format!(
                "learning_rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(DpoError::InvalidParameter("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draws `cfg.batch_size` pairs; each slot is off-policy with probability
/// `cfg.off_policy_fraction`, then uniform with replacement within its pool.
/// If one pool is empty every slot comes from the other.
pub fn sample_mixed_batch<R: rand::Rng + ?Sized>(
    pool: &PairPool,
    cfg: &DpoConfig,
    rng: &mut R,
) -> Result<Vec<PreferencePair>, DpoError> {
    let (on, off) = (&pool.on_policy, &pool.off_policy);
    if on.is_empty() && off.is_empty() {
        return Err(DpoError::NoTrainingData);
    }
    let fraction = if off.is_empty() {
        log::warn!("off-policy pool empty; sampling on-policy only");
        0.0
    } else if on.is_empty() {
        log::warn!("on-policy pool empty; sampling off-policy only");
        1.0
    } else {
        cfg.off_policy_fraction
    };
    Ok((0..cfg.batch_size)
        .map(|_| {
            let source = if rng.random_bool(fraction) { off } else { on };
            source[rng.random_range(0..source.len())]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    /// Mean batch loss after the update.
    pub loss: f64,
    /// Mean of `ln π(win) - ln π(lose)` over the batch after the update.
    pub margin: f64,
    pub mean_entropy: f64,
    pub off_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: TabularPolicy,
    pub metrics: Vec<StepMetrics>,
}

fn mean_entropy(policy: &TabularPolicy) -> f64 {
    if policy.n_contexts() == 0 {
        return 0.0;
    }
    (0..policy.n_contexts()).map(|c| policy.entropy(c)).sum::<f64>() / policy.n_contexts() as f64
}

/// Plain gradient descent on mixed batches for `steps` steps. With
/// `refresh_reference` set, `initial` serves as the reference and
/// `reference` is only checked for shape.
pub fn train(
    initial: &TabularPolicy,
    reference: &TabularPolicy,
    pool: &PairPool,
    cfg: &DpoConfig,
    steps: usize,
) -> Result<TrainOutcome, DpoError> {
    cfg.validate()?;
    if steps == 0 {
        return Err(DpoError::InvalidParameter("steps must be >= 1".into()));
    }
    initial.same_shape(reference)?;
    let reference = if cfg.refresh_reference { initial } else { reference };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = initial.clone();
    let mut metrics = Vec::with_capacity(steps);

    for step in 1..=steps {
        let batch = sample_mixed_batch(pool, cfg, &mut rng)?;
        let grad = dpo_grad(&policy, reference, &batch, cfg.beta)?;
        for (z, g) in policy.logits.iter_mut().zip(&grad) {
            *z -= cfg.learning_rate * g;
        }
        let margin = batch
            .iter()
            .map(|p| policy.log_prob(p.context, p.win) - policy.log_prob(p.context, p.lose))
            .sum::<f64>()
            / batch.len() as f64;
        let off = batch.iter().filter(|p| p.policy_kind == PolicyKind::OffPolicy).count();
        metrics.push(StepMetrics {
            step,
            loss: mean_loss(&policy, reference, &batch, cfg.beta)?,
            margin,
            mean_entropy: mean_entropy(&policy),
            off_fraction: off as f64 / batch.len() as f64,
        });
    }
    Ok(TrainOutcome { policy, metrics })
}

/// Writes `step,loss,margin,mean_entropy,off_fraction` rows with a header.
pub fn write_metrics_csv<W: Write>(w: W, metrics: &[StepMetrics]) -> Result<(), DpoError> {
    let mut out = csv::Writer::from_writer(w);
    for m in metrics {
        out.serialize(m).map_err(|e| format_err("metrics", e))?;
    }
    out.flush()?;
    Ok(())
}

/// Fraction of pairs whose preferred completion is more probable than the
/// rejected one under `policy`.
pub fn pairs_won(policy: &TabularPolicy, pairs: &[PreferencePair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let won = pairs
        .iter()
        .filter(|p| {
            let row = policy.row(p.context);
            row[p.win] > row[p.lose]
        })
        .count();
    won as f64 / pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSqueeze {
    pub context: String,
    pub entropy_before: f64,
    pub entropy_after: f64,
    /// Probability mass outside the most likely entry.
    pub off_top_mass_before: f64,
    pub off_top_mass_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeReport {
    pub contexts: Vec<ContextSqueeze>,
    pub mean_entropy_before: f64,
    pub mean_entropy_after: f64,
    pub mean_off_top_mass_before: f64,
    pub mean_off_top_mass_after: f64,
}

fn off_top_mass(policy: &TabularPolicy, context: usize) -> f64 {
    1.0 - policy.probs(context).into_iter().fold(0.0, f64::max)
}

/// Per-context entropy and off-top-1 mass before and after training.
pub fn squeeze_diagnostic(
    before: &TabularPolicy,
    after: &TabularPolicy,
    eval_contexts: &[usize],
) -> Result<SqueezeReport, DpoError> {
    before.same_shape(after)?;
    if let Some(&bad) = eval_contexts.iter().find(|&&c| c >= before.n_contexts()) {
        return Err(DpoError::InvalidInput(format!("context {bad} out of range")));
    }
    let contexts: Vec<ContextSqueeze> = eval_contexts
        .iter()
        .map(|&c| ContextSqueeze {
            context: before.contexts[c].clone(),
            entropy_before: before.entropy(c),
            entropy_after: after.entropy(c),
            off_top_mass_before: off_top_mass(before, c),
            off_top_mass_after: off_top_mass(after, c),
        })
        .collect();
    let mean = |f: fn(&ContextSqueeze) -> f64| {
        if contexts.is_empty() {
            0.0
        } else {
            contexts.iter().map(f).sum::<f64>() / contexts.len() as f64
        }
    };
    Ok(SqueezeReport {
        mean_entropy_before: mean(|c| c.entropy_before),
        mean_entropy_after: mean(|c| c.entropy_after),
        mean_off_top_mass_before: mean(|c| c.off_top_mass_before),
        mean_off_top_mass_after: mean(|c| c.off_top_mass_after),
        contexts,
    })
}

/// Parameters of a randomly drawn pair pool for controlled experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPoolConfig {
    pub seed: u64,
    pub n_contexts: usize,
    pub vocab_size: usize,
    /// Standard deviation of the initial logits.
    pub logit_scale: f64,
    /// Queries generated per context (the top-k of the initial policy).
    pub k: usize,
    /// Probability that a context's ground truth lies inside its top-k.
    pub hit_rate: f64,
}

impl Default for SyntheticPoolConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_contexts: 200,
            vocab_size: 50,
            logit_scale: 1.5,
            k: 3,
            hit_rate: 0.7,
        }
    }
}

/// Draws an initial policy with Gaussian logits, takes its top-k per
/// context as the generations, plants one ground-truth query per context
/// (inside the top-k with probability `hit_rate`, otherwise outside it),
/// and builds pairs with [`build_pairs`]. Returns the dataset and the
/// initial policy laid out over the dataset's index spaces.
pub fn synthetic_dataset(cfg: &SyntheticPoolConfig) -> Result<(PairDataset, TabularPolicy), DpoError> {
    if cfg.n_contexts == 0 || cfg.vocab_size <= cfg.k || cfg.k == 0 {
        return Err(DpoError::InvalidParameter(
            "need contexts >= 1 and vocab_size > k >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.hit_rate) {
        return Err(DpoError::InvalidParameter(format!("hit_rate {}", cfg.hit_rate)));
    }
    let normal = Normal::new(0.0, cfg.logit_scale).map_err(|e| DpoError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words: Vec<String> = (0..cfg.vocab_size).map(|i| format!("query {i:03}")).collect();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_contexts);
    let mut posts = Vec::with_capacity(cfg.n_contexts);
    let mut generations = HashMap::new();
    for c in 0..cfg.n_contexts {
        let row: Vec<f64> = (0..cfg.vocab_size).map(|_| normal.sample(&mut rng)).collect();
        let mut order: Vec<usize> = (0..cfg.vocab_size).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let truth = if rng.random_bool(cfg.hit_rate) {
            order[rng.random_range(0..cfg.k)]
        } else {
            order[rng.random_range(cfg.k..cfg.vocab_size)]
        };
        let post_id = format!("ctx{c:04}");
        generations.insert(
            post_id.clone(),
            order[..cfg.k].iter().map(|&i| words[i].clone()).collect::<Vec<_>>(),
        );
        posts.push(Post {
            post_id,
            creator_id: "synthetic".into(),
            title: String::new(),
            body: String::new(),
            created_at: 1,
            ground_truth_queries: [words[truth].clone()].into_iter().collect(),
        });
        rows.push(row);
    }

    let mut dataset = build_pairs(&posts, &generations, cfg.k)?;
    // carry every vocabulary word so rows are complete distributions
    let mut vocab = Interner::default();
    for w in &dataset.vocabulary {
        vocab.intern(w);
    }
    for w in &words {
        vocab.intern(w);
    }
    dataset.vocabulary = vocab.items;
    let word_index: HashMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let context_row: HashMap<&str, usize> = posts.iter().enumerate().map(|(i, p)| (p.post_id.as_str(), i)).collect();
    let mut logits = Vec::with_capacity(dataset.contexts.len() * dataset.vocabulary.len());
    for ctx in &dataset.contexts {
        let row = &rows[context_row[ctx.as_str()]];
        logits.extend(dataset.vocabulary.iter().map(|w| row[word_index[w.as_str()]]));
    }
    let policy = TabularPolicy::from_logits(dataset.contexts.clone(), dataset.vocabulary.clone(), logits)?;
    Ok((dataset, policy))
}

/// Initial policy for a dataset built from real generations: generated
/// queries get logit `peak / rank`, everything else 0.
pub fn policy_from_rankings(
    dataset: &PairDataset,
    generations: &HashMap<String, Vec<String>>,
    peak: f64,
) -> Result<TabularPolicy, DpoError> {
    let mut policy = TabularPolicy::uniform(dataset.contexts.clone(), dataset.vocabulary.clone())?;
    let index: HashMap<&str, usize> = dataset
        .vocabulary
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    for (c, ctx) in dataset.contexts.iter().enumerate() {
        let row = policy.row_mut(c);
        for (rank, q) in generations.get(ctx).into_iter().flatten().enumerate() {
            if let Some(&i) = index.get(normalize_query(q).as_str()) {
                if row[i] == 0.0 {
                    row[i] = peak / (rank + 1) as f64;
                }
            }
        }
    }
    Ok(policy)
}
