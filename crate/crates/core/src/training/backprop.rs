//! Per-step loss and its exact gradients.
//!
//! Histories (previous hidden states, previous outputs, future context) are
//! inputs to the step, not functions of the parameters: gradients stop at the
//! current position.

use crate::error::{Error, Result};
use crate::math::{DenseMatrix, DenseVector};
use crate::models::{RnnParameters, StepContext, StepTrace};

/// Smallest probability passed to the logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

/// L2 settings for the per-step cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub lambda: f64,
    /// Also decay the embedding rows read at this step.
    pub embeddings: bool,
}

impl Regularization {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            embeddings: false,
        }
    }
}

/// Gradients of one step. Embedding gradients are sparse: one entry per
/// distinct row read at the step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub h: DenseMatrix,
    pub hidden_bias: DenseVector,
    pub r: Option<DenseMatrix>,
    pub o: DenseMatrix,
    pub output_bias: DenseVector,
    pub word_rows: Vec<(usize, Vec<f64>)>,
    pub label_rows: Vec<(usize, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(params: &RnnParameters) -> Self {
        Self {
            h: DenseMatrix::zeros(params.h.rows(), params.h.cols()),
            hidden_bias: DenseVector::zeros(params.hidden_bias.len()),
            r: params.r.as_ref().map(|r| DenseMatrix::zeros(r.rows(), r.cols())),
            o: DenseMatrix::zeros(params.o.rows(), params.o.cols()),
            output_bias: DenseVector::zeros(params.output_bias.len()),
            word_rows: Vec::new(),
            label_rows: Vec::new(),
        }
    }

    /// Gradient of the L2 term alone over the dense layers.
    pub fn l2_only(params: &RnnParameters, lambda: f64) -> Self {
        let mut g = Self::zeros_like(params);
        add_scaled(g.h.as_mut_slice(), params.h.as_slice(), lambda);
        add_scaled(g.hidden_bias.as_mut_slice(), params.hidden_bias.as_slice(), lambda);
        add_scaled(g.o.as_mut_slice(), params.o.as_slice(), lambda);
        add_scaled(g.output_bias.as_mut_slice(), params.output_bias.as_slice(), lambda);
        if let (Some(gr), Some(r)) = (&mut g.r, &params.r) {
            add_scaled(gr.as_mut_slice(), r.as_slice(), lambda);
        }
        g
    }

    pub fn word_row(&self, id: usize) -> Option<&[f64]> {
        self.word_rows.iter().find(|(i, _)| *i == id).map(|(_, g)| g.as_slice())
    }

    pub fn label_row(&self, id: usize) -> Option<&[f64]> {
        self.label_rows
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, g)| g.as_slice())
    }
}

fn add_scaled(acc: &mut [f64], x: &[f64], scale: f64) {
    if scale == 0.0 {
        return;
    }
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += scale * v;
    }
}

fn accumulate_row(rows: &mut Vec<(usize, Vec<f64>)>, id: usize, grad: &[f64]) {
    match rows.iter_mut().find(|(i, _)| *i == id) {
        Some((_, acc)) => acc.iter_mut().zip(grad).for_each(|(a, g)| *a += g),
        None => rows.push((id, grad.to_vec())),
    }
}

/// `−log y[gold] + (λ/2)·‖H, R, O, biases‖²`.
pub fn step_loss(y: &DenseVector, gold: usize, params: &RnnParameters, lambda: f64) -> f64 {
    cross_entropy(y, gold) + 0.5 * lambda * params.dense_sum_of_squares()
}

pub fn cross_entropy(y: &DenseVector, gold: usize) -> f64 {
    -y[gold].max(PROB_FLOOR).ln()
}

fn embedding_penalty(params: &RnnParameters, ctx: &StepContext) -> f64 {
    let mut total = 0.0;
    for id in ctx.touched_word_rows() {
        total += params.word_emb.row(id).iter().map(|x| x * x).sum::<f64>();
    }
    if let Some(table) = &params.label_emb {
        for id in ctx.touched_label_rows() {
            total += table.row(id).iter().map(|x| x * x).sum::<f64>();
        }
    }
    total
}

/// Full per-step cost, recomputed from scratch; the function the gradients differentiate.
pub fn regularized_step_loss(
    params: &RnnParameters,
    ctx: &StepContext,
    gold: usize,
    reg: Regularization,
) -> Result<f64> {
    check_gold(params, gold)?;
    let trace = params.step(ctx)?;
    let mut loss = step_loss(&trace.output, gold, params, reg.lambda);
    if reg.embeddings {
        loss += 0.5 * reg.lambda * embedding_penalty(params, ctx);
    }
    Ok(loss)
}

fn check_gold(params: &RnnParameters, gold: usize) -> Result<()> {
    if gold >= params.dims.labels {
        return Err(Error::OutOfRange {
            what: "label set",
            index: gold,
            size: params.dims.labels,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StepGradients {
    /// Cross-entropy part of the loss.
    pub cross_entropy: f64,
    pub grads: Gradients,
    pub trace: StepTrace,
}

/// Forward step plus exact gradients of the per-step cost.
pub fn backprop_step(
    params: &RnnParameters,
    ctx: &StepContext,
    gold: usize,
    reg: Regularization,
) -> Result<StepGradients> {
    check_gold(params, gold)?;
    let trace = params.step(ctx)?;
    let dims = &params.dims;
    let lambda = reg.lambda;

    let mut d_logits = trace.output.clone();
    d_logits.as_mut_slice()[gold] -= 1.0;

    let mut grads = Gradients::zeros_like(params);
    grads.o.add_outer(trace.hidden.as_slice(), d_logits.as_slice());
    add_scaled(grads.o.as_mut_slice(), params.o.as_slice(), lambda);
    grads.output_bias = d_logits.clone();
    add_scaled(grads.output_bias.as_mut_slice(), params.output_bias.as_slice(), lambda);

    let mut d_hidden = vec![0.0; dims.hidden];
    params.o.accumulate_right_product(d_logits.as_slice(), &mut d_hidden);
    for (d, &h) in d_hidden.iter_mut().zip(trace.hidden.as_slice()) {
        *d *= params.activation.derivative_from_output(h);
    }

    grads.h.add_outer(&trace.input, &d_hidden);
    add_scaled(grads.h.as_mut_slice(), params.h.as_slice(), lambda);
    grads.hidden_bias = d_hidden.clone().into();
    add_scaled(grads.hidden_bias.as_mut_slice(), params.hidden_bias.as_slice(), lambda);
    if let (Some(gr), Some(r)) = (&mut grads.r, &params.r) {
        gr.add_outer(&trace.recurrent, &d_hidden);
        add_scaled(gr.as_mut_slice(), r.as_slice(), lambda);
    }

    let mut d_input = vec![0.0; trace.input.len()];
    params.h.accumulate_right_product(&d_hidden, &mut d_input);
    let d = dims.emb_dim;
    let mut blocks = d_input.chunks_exact(d);
    for &id in &ctx.word_window {
        accumulate_row(&mut grads.word_rows, id, blocks.next().expect("layout checked by step"));
    }
    if params.arch.uses_label_embeddings() {
        let future = ctx.future_labels.iter().flatten();
        for &id in ctx.prev_labels.iter().chain(future) {
            accumulate_row(
                &mut grads.label_rows,
                id,
                blocks.next().expect("layout checked by step"),
            );
        }
    }
    if reg.embeddings && lambda != 0.0 {
        for (id, g) in &mut grads.word_rows {
            add_scaled(g, params.word_emb.row(*id), lambda);
        }
        if let Some(table) = &params.label_emb {
            for (id, g) in &mut grads.label_rows {
                add_scaled(g, table.row(*id), lambda);
            }
        }
    }

    Ok(StepGradients {
        cross_entropy: cross_entropy(&trace.output, gold),
        grads,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_context, Architecture, Dims, SequenceRun};
    use approx::assert_relative_eq;

    fn dims() -> Dims {
        Dims {
            vocab: 7,
            labels: 4,
            emb_dim: 3,
            hidden: 4,
            window: 1,
            context: 2,
        }
    }

    #[test]
    fn loss_examples() {
        let p = RnnParameters::zeros(Architecture::IRnn, dims(), false);
        let uniform: DenseVector = vec![0.25; 4].into();
        assert_relative_eq!(step_loss(&uniform, 2, &p, 0.0), 4f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(4f64.ln(), 1.3863, epsilon = 1e-4);
        assert_eq!(step_loss(&DenseVector::one_hot(4, 1), 1, &p, 0.0), 0.0);

        let mut q = p.clone();
        // sum of squares 10 spread over H
        q.h.as_mut_slice()[0] = 3.0;
        q.h.as_mut_slice()[1] = 1.0;
        let penalty = step_loss(&DenseVector::one_hot(4, 1), 1, &q, 0.003);
        assert_relative_eq!(penalty, 0.015, epsilon = 1e-15);
        assert_eq!(cross_entropy(&DenseVector::zeros(4), 0), -(PROB_FLOOR.ln()));
    }

    #[test]
    fn gradients_vanish_at_the_optimum() {
        // A huge output bias for the gold label makes y[gold] == 1 in floating point.
        let mut p = RnnParameters::new(Architecture::Jordan, dims(), false, 1);
        p.output_bias = vec![0.0, 0.0, 800.0, 0.0].into();
        let ctx = build_context(
            &p,
            &[3, 4, 5],
            1,
            &SequenceRun {
                labels: vec![3],
                hiddens: vec![],
                outputs: vec![DenseVector::one_hot(4, 3)],
            },
            None,
        );
        let g = backprop_step(&p, &ctx, 2, Regularization::new(0.0)).unwrap();
        assert_eq!(g.cross_entropy, 0.0);
        assert!(g.grads.h.as_slice().iter().all(|&x| x == 0.0));
        assert!(g.grads.o.as_slice().iter().all(|&x| x == 0.0));
        assert!(g.grads.r.unwrap().as_slice().iter().all(|&x| x == 0.0));
        assert!(g.grads.word_rows.iter().all(|(_, r)| r.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn untouched_rows_have_no_gradient() {
        let p = RnnParameters::new(Architecture::IRnn, dims(), false, 1);
        let ctx = build_context(&p, &[3, 4], 0, &SequenceRun::default(), None);
        let g = backprop_step(
            &p,
            &ctx,
            3,
            Regularization {
                lambda: 0.1,
                embeddings: true,
            },
        )
        .unwrap();
        assert!(g.grads.word_row(6).is_none());
        assert!(g.grads.word_row(3).is_some());
        assert!(g.grads.label_row(3).is_none());
        assert!(g.grads.label_row(crate::data::BOS_LABEL_ID).is_some());
    }

    #[test]
    fn repeated_rows_accumulate() {
        let p = RnnParameters::new(Architecture::Elman, dims(), false, 1);
        // single-word sequence: the window reads <pad> twice
        let ctx = build_context(&p, &[5], 0, &SequenceRun::default(), None);
        let g = backprop_step(&p, &ctx, 1, Regularization::new(0.0)).unwrap();
        assert_eq!(g.grads.word_rows.len(), 2);
    }

    #[test]
    fn rejects_bad_gold() {
        let p = RnnParameters::new(Architecture::Elman, dims(), false, 1);
        let ctx = build_context(&p, &[5], 0, &SequenceRun::default(), None);
        assert!(backprop_step(&p, &ctx, 4, Regularization::new(0.0)).is_err());
    }
}
