//! Central finite-difference verification of [`backprop_step`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backprop::{backprop_step, regularized_step_loss, Gradients, Regularization};
use crate::error::{Error, Result};
use crate::math::{derive_seed, softmax, DenseVector};
use crate::models::{Activation, Architecture, Dims, JordanFeed, RnnParameters, StepContext};

/// Relative error with a floor on the denominator so that entries whose
/// gradient is (numerically) zero compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub dims: Dims,
    pub bidirectional: bool,
    pub activation: Activation,
    pub jordan_feed: JordanFeed,
    pub reg: Regularization,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            dims: Dims {
                vocab: 7,
                labels: 3,
                emb_dim: 3,
                hidden: 4,
                window: 1,
                context: 2,
            },
            bidirectional: false,
            activation: Activation::Sigmoid,
            jordan_feed: JordanFeed::Distribution,
            reg: Regularization {
                lambda: 0.01,
                embeddings: false,
            },
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub block: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub blocks: Vec<BlockError>,
}

/// Builds a random model and context and compares analytic gradients with
/// central differences on up to `n_sampled` entries of every block.
pub fn grad_check(arch: Architecture, config: &GradCheckConfig, n_sampled: usize, eps: f64) -> Result<GradCheckReport> {
    let mut params = RnnParameters::new(arch, config.dims, config.bidirectional, config.seed);
    params.activation = config.activation;
    params.jordan_feed = config.jordan_feed;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 77));
    // non-zero biases so their gradients are exercised away from the origin
    for b in params
        .hidden_bias
        .as_mut_slice()
        .iter_mut()
        .chain(params.output_bias.as_mut_slice())
    {
        *b = rng.gen_range(-0.5..0.5);
    }
    let ctx = random_context(&params, &mut rng)?;
    let gold = rng.gen_range(0..config.dims.labels);
    check_context(&mut params, &ctx, gold, config.reg, n_sampled, eps, config.seed)
}

/// A well-formed context for `params` with random histories (and futures
/// for a bidirectional stage).
pub fn random_context(params: &RnnParameters, rng: &mut impl Rng) -> Result<StepContext> {
    let d = params.dims;
    let c = d.context;
    let mut ids = |n: usize, bound: usize| (0..n).map(|_| rng.gen_range(0..bound)).collect::<Vec<_>>();
    let word_window = ids(d.window_len(), d.vocab);
    let prev_labels = ids(c, d.labels);
    let future_labels = ids(c, d.labels);
    let mut vectors = |n: usize| -> Result<Vec<DenseVector>> {
        (0..n)
            .map(|_| {
                let v: DenseVector = (0..d.hidden)
                    .map(|_| rng.gen_range(0.0..1.0))
                    .collect::<Vec<_>>()
                    .into();
                Ok(v)
            })
            .collect()
    };
    let prev_hiddens = vectors(c)?;
    let future_hiddens = vectors(c)?;
    let mut dists = |n: usize| -> Result<Vec<DenseVector>> {
        (0..n)
            .map(|_| {
                softmax(
                    &(0..d.labels)
                        .map(|_| rng.gen_range(-2.0..2.0))
                        .collect::<Vec<_>>()
                        .into(),
                )
            })
            .collect()
    };
    let prev_outputs = dists(c)?;
    let future_outputs = dists(c)?;

    let arch = params.arch;
    let mut ctx = StepContext {
        word_window,
        ..Default::default()
    };
    if arch.uses_label_embeddings() {
        ctx.prev_labels = prev_labels;
        ctx.future_labels = params.bidirectional.then_some(future_labels);
    }
    if arch.uses_hidden_history() {
        ctx.prev_hiddens = prev_hiddens;
        ctx.future_hiddens = params.bidirectional.then_some(future_hiddens);
    }
    if arch.uses_output_history() {
        ctx.prev_outputs = prev_outputs;
        ctx.future_outputs = params.bidirectional.then_some(future_outputs);
    }
    Ok(ctx)
}

/// Checks the gradients of `params` at one given context.
pub fn check_context(
    params: &mut RnnParameters,
    ctx: &StepContext,
    gold: usize,
    reg: Regularization,
    n_sampled: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::InvalidInput(format!("epsilon {eps} must lie in (0, 1e-3]")));
    }
    let analytic = backprop_step(params, ctx, gold, reg)?.grads;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 78));

    let mut blocks = Vec::new();
    let mut sizes = Vec::new();
    params.for_each_slice(|name, s| sizes.push((name, s.len())));
    for (name, len) in sizes {
        let candidates: Vec<usize> = candidate_entries(params, ctx, name, len);
        let picked: Vec<usize> = if candidates.len() <= n_sampled {
            candidates
        } else {
            rand::seq::index::sample(&mut rng, candidates.len(), n_sampled)
                .into_iter()
                .map(|i| candidates[i])
                .collect()
        };
        let mut worst: f64 = 0.0;
        for &idx in &picked {
            let original = get_entry(params, name, idx);
            set_entry(params, name, idx, original + eps);
            let plus = regularized_step_loss(params, ctx, gold, reg)?;
            set_entry(params, name, idx, original - eps);
            let minus = regularized_step_loss(params, ctx, gold, reg)?;
            set_entry(params, name, idx, original);
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic_entry(&analytic, params.dims.emb_dim, name, idx);
            worst = worst.max(relative_error(a, numeric));
        }
        blocks.push(BlockError {
            block: name,
            checked: picked.len(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, blocks })
}

/// Embedding blocks: the rows read at this step plus one unread row, whose
/// gradient must be zero. Dense blocks: everything.
fn candidate_entries(params: &RnnParameters, ctx: &StepContext, name: &str, len: usize) -> Vec<usize> {
    let (rows, n_rows) = match name {
        "word_emb" => (ctx.touched_word_rows(), params.dims.vocab),
        "label_emb" => (ctx.touched_label_rows(), params.dims.labels),
        _ => return (0..len).collect(),
    };
    let d = params.dims.emb_dim;
    let mut rows = rows;
    if let Some(unread) = (0..n_rows).find(|r| !rows.contains(r)) {
        rows.push(unread);
    }
    rows.iter().flat_map(|&r| r * d..(r + 1) * d).collect()
}

fn get_entry(params: &RnnParameters, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    params.for_each_slice(|n, s| {
        if n == name {
            out = s[idx];
        }
    });
    out
}

fn set_entry(params: &mut RnnParameters, name: &str, idx: usize, value: f64) {
    params.for_each_slice_mut(|n, s| {
        if n == name {
            s[idx] = value;
        }
    });
}

fn analytic_entry(g: &Gradients, d: usize, name: &str, idx: usize) -> f64 {
    let sparse = |rows: &[(usize, Vec<f64>)]| {
        rows.iter()
            .find(|(r, _)| *r == idx / d)
            .map_or(0.0, |(_, v)| v[idx % d])
    };
    match name {
        "word_emb" => sparse(&g.word_rows),
        "label_emb" => sparse(&g.label_rows),
        "H" => g.h.as_slice()[idx],
        "hidden_bias" => g.hidden_bias[idx],
        "R" => g.r.as_ref().map_or(f64::NAN, |r| r.as_slice()[idx]),
        "O" => g.o.as_slice()[idx],
        "output_bias" => g.output_bias[idx],
        _ => f64::NAN,
    }
}
